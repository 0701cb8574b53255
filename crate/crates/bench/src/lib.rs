//! Shared fixtures for the criterion benches.

use loopless::{CompositeProblem, Loss, SyntheticSpec};

/// Sparse logistic instance with elastic net, sized for step benchmarks.
pub fn sparse_instance(n: usize, d: usize, density: f64) -> CompositeProblem {
    let spec = SyntheticSpec::new(n, d, density, 42);
    let (data, labels) = loopless::synthetic_problem_data(&spec).expect("valid spec");
    CompositeProblem::new(data, labels, Loss::Logistic, 1e-4, 1e-3).expect("valid problem")
}
