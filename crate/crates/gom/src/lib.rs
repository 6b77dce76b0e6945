//! Mixed-membership estimation for categorical response data under the Grade
//! of Membership model.
//!
//! The crate fits per-subject membership scores and per-item parameters by
//! spectral decompositions of a regularized Laplacian of the response matrix,
//! hunts pure subjects through simplex and cone geometry, selects the number
//! of latent classes by maximizing fuzzy modularity of `R R'`, and ships a
//! reproducible simulation harness for sweeping the regularizer, the sparsity
//! level, and the data size.

pub mod data;
pub mod error;
pub mod estimators;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod modularity;
pub mod simulation;
pub mod vertex;

pub use data::{
    validate_response_matrix, EstimationResult, IngestedMatrix, ItemParams,
    MembershipMatrix, Method, RealMatrix, ResponseData, ResponseMatrix,
};
pub use error::{GomError, Result};
pub use estimators::{
    fit, fit_crsc, fit_srm, fit_srsc, fit_ssc, item_params, memberships_from_weights,
    FitConfig, Tau,
};
pub use linalg::{
    default_tau, regularized_laplacian, row_normalize, scale_rows, solve_k_by_k,
    truncated_svd, LaplacianPair, SvdFactors,
};
pub use metrics::{
    accuracy_rate, hamming_error, purity_proportions, relative_error, AlignedError,
};
pub use modularity::{
    adjacency, fuzzy_modularity, fuzzy_modularity_from_data, select_k, ModularityCurve,
};
pub use simulation::{
    derive_seed, run_experiment, sample_gom, ExperimentConfig, ExperimentTable,
    GomInstance, GomSampler, Grid, MixedRecipe,
};
pub use vertex::{one_class_hyperplane, successive_projection, svm_cone, Geometry, IndexSet};
