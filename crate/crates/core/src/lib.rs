//! Loopless variance-reduced optimizers for composite finite-sum problems.
//!
//! Two methods over `P(x) = (1/n) Σ φ_i(aᵢᵀx) + ψ(x)` with the elastic-net
//! regularizer: a non-accelerated variance-reduced method and its
//! accelerated (momentum) variant, both replacing the classical inner loop
//! with a per-iteration coin flip that refreshes the anchored reference
//! gradient. Batches come from four interchangeable sampling schemes with
//! closed-form expected-smoothness bounds per scheme, importance marginals
//! that minimize them, and a sparse lazy-update execution path that
//! reproduces the dense trajectory at batch-support cost.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod lazy;
pub mod problem;
pub mod record;
pub mod reference;
pub mod sampling;
pub mod smoothness;
pub mod solver;

pub use data::{parse_libsvm, synthetic_problem_data, SyntheticSpec};
pub use error::{Error, Result};
pub use experiment::{
    build_problem, build_sampler_and_profile, run_experiment, Algo, DataSource, ExperimentConfig,
    SamplingKind,
};
pub use lazy::{
    delayed_update, delayed_update_pair, delayed_update_pair_ridge, LazyLKatyushaSolver,
    LazyLSvrgSolver, RidgePairParams, WorkCounters,
};
pub use problem::{CompositeProblem, DesignMatrix, GradTable, Loss};
pub use record::{RunRecord, RunRow};
pub use reference::{reference_optimum, ReferenceOptimum};
pub use sampling::{
    build_group_sampling, enumerate_outcomes, verify_weight_identity, BatchEntry, DrawnBatch,
    Sampler, SamplerSpec,
};
pub use smoothness::{
    bounds_beta, bounds_eso, bounds_group, bounds_independent, bounds_tau_nice,
    bounds_with_replacement, importance_marginals, importance_marginals_practical, BoundSource,
    ImportanceMarginals, SmoothnessProfile,
};
pub use solver::{
    estimator, lkatyusha_schedule, lsvrg_schedule, run, Budget, LKatyushaConfig, LKatyushaSolver,
    LKatyushaState, LSvrgConfig, LSvrgSolver, LSvrgState, Optimizer, Regime,
};
