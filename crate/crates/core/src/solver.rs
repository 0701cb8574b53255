//! Dense reference implementations of the two loopless variance-reduced
//! methods, their schedule rules, and the shared run driver.
//!
//! Both methods keep a reference point `w` with a cached gradient table and
//! refresh it after the iterate update with probability `p` (one coin flip
//! per iteration, drawn after the batch). The refreshed reference is the
//! pre-update iterate.

use rand::Rng;

use crate::error::{Error, Result};
use crate::problem::{CompositeProblem, GradTable};
use crate::sampling::{DrawnBatch, Sampler};
use crate::smoothness::SmoothnessProfile;

const SCHEDULE_SLACK: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    StronglyConvex,
    Convex,
    Nonconvex,
}

/// Step size and refresh probability for the non-accelerated method.
#[derive(Clone, Copy, Debug)]
pub struct LSvrgConfig {
    pub step_size: f64,
    pub refresh_prob: f64,
    pub regime: Regime,
}

impl LSvrgConfig {
    /// Validates the step size against the regime's admissible range.
    pub fn checked(
        step_size: f64,
        refresh_prob: f64,
        regime: Regime,
        profile: &SmoothnessProfile,
        problem: &CompositeProblem,
    ) -> Result<Self> {
        if step_size <= 0.0 {
            return Err(Error::NonPositiveStep(step_size));
        }
        if !(refresh_prob > 0.0 && refresh_prob <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "refresh probability {refresh_prob} outside (0, 1]"
            )));
        }
        let cap = match regime {
            Regime::StronglyConvex => 1.0 / (6.0 * profile.l1),
            Regime::Convex => convex_step_cap(profile.l1, problem.l_f())?,
            Regime::Nonconvex => {
                nonconvex_step_cap(problem.l_f(), profile.l3, refresh_prob)?
            }
        };
        if step_size > cap + SCHEDULE_SLACK {
            return Err(Error::InvalidConfig(format!(
                "step size {step_size} exceeds the admissible {cap} for {regime:?}"
            )));
        }
        Ok(Self {
            step_size,
            refresh_prob,
            regime,
        })
    }

    /// No validation; used by test oracles that drive the step directly.
    pub fn unchecked(step_size: f64, refresh_prob: f64, regime: Regime) -> Self {
        Self {
            step_size,
            refresh_prob,
            regime,
        }
    }
}

fn convex_step_cap(l1: f64, l_f: f64) -> Result<f64> {
    if l1 <= 0.0 && l_f <= 0.0 {
        return Err(Error::InvalidConfig(
            "convex schedule needs a positive smoothness bound".into(),
        ));
    }
    let mut cap = f64::INFINITY;
    if l1 > 0.0 {
        cap = cap.min(1.0 / (8.0 * l1));
    }
    if l_f > 0.0 {
        cap = cap.min(1.0 / (6.0 * l_f));
    }
    Ok(cap)
}

fn nonconvex_step_cap(l_f: f64, l3: f64, p: f64) -> Result<f64> {
    if l_f <= 0.0 {
        return Err(Error::InvalidConfig(
            "nonconvex schedule needs a positive smoothness constant".into(),
        ));
    }
    let mut cap = 1.0 / (4.0 * l_f);
    if l3 > 0.0 {
        cap = cap.min((p * p / (36.0 * l_f * l3)).cbrt());
        cap = cap.min((p / (6.0 * l3)).sqrt());
    }
    Ok(cap)
}

/// Guarantee-backed step size: `1/(6·l1)` under strong convexity,
/// `min{1/(8·l1), 1/(6·L_f)}` in the merely convex case, and the nonconvex
/// upper bound otherwise.
pub fn lsvrg_schedule(
    profile: &SmoothnessProfile,
    problem: &CompositeProblem,
    regime: Regime,
    refresh_prob: f64,
) -> Result<LSvrgConfig> {
    let step_size = match regime {
        Regime::StronglyConvex => {
            if profile.l1 <= 0.0 {
                return Err(Error::InvalidConfig(
                    "strongly convex schedule needs l1 > 0".into(),
                ));
            }
            1.0 / (6.0 * profile.l1)
        }
        Regime::Convex => convex_step_cap(profile.l1, problem.l_f())?,
        Regime::Nonconvex => nonconvex_step_cap(problem.l_f(), profile.l3, refresh_prob)?,
    };
    LSvrgConfig::checked(step_size, refresh_prob, regime, profile, problem)
}

/// Momentum weights and derived scalars for the accelerated method.
#[derive(Clone, Copy, Debug)]
pub struct LKatyushaConfig {
    pub theta1: f64,
    pub theta2: f64,
    /// `η = 1/(3θ₁)`.
    pub step_size: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    /// `L = max{l2, L_f}`.
    pub big_l: f64,
    pub refresh_prob: f64,
    pub mu: f64,
}

impl LKatyushaConfig {
    pub fn theta3(&self) -> f64 {
        1.0 - self.theta1 - self.theta2
    }

    pub fn sigma(&self) -> f64 {
        self.mu / self.big_l
    }

    /// Assembles a config from explicit momentum weights, for oracles.
    pub fn unchecked(
        theta1: f64,
        theta2: f64,
        big_l: f64,
        mu_f: f64,
        mu_psi: f64,
        refresh_prob: f64,
    ) -> Self {
        Self {
            theta1,
            theta2,
            step_size: 1.0 / (3.0 * theta1),
            sigma1: mu_f / big_l,
            sigma2: mu_psi / big_l,
            big_l,
            refresh_prob,
            mu: mu_f + mu_psi,
        }
    }
}

/// Parameter rule from the algorithm preamble. Requires `μ = μ_f + μ_ψ > 0`.
pub fn lkatyusha_schedule(
    profile: &SmoothnessProfile,
    problem: &CompositeProblem,
    refresh_prob: f64,
) -> Result<LKatyushaConfig> {
    let mu = problem.mu();
    if mu <= 0.0 {
        return Err(Error::InvalidConfig(
            "accelerated schedule needs mu_f + mu_psi > 0".into(),
        ));
    }
    if !(refresh_prob > 0.0 && refresh_prob <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "refresh probability {refresh_prob} outside (0, 1]"
        )));
    }
    let l2 = profile.l2;
    let l_f = problem.l_f();
    let big_l = l2.max(l_f);
    if big_l <= 0.0 {
        return Err(Error::InvalidConfig(
            "accelerated schedule needs a positive smoothness constant".into(),
        ));
    }
    let theta2 = l2 / (2.0 * big_l);
    let theta1 = if l_f <= l2 / refresh_prob {
        ((mu / (l2 * refresh_prob)).sqrt() * theta2).min(theta2)
    } else {
        (mu / l_f).sqrt().min(refresh_prob / 2.0)
    };
    if theta1.is_nan() || theta1 <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "degenerate momentum weight theta1 = {theta1}"
        )));
    }
    debug_assert!(theta1 + theta2 <= 1.0 + 1e-12);
    Ok(LKatyushaConfig {
        theta1,
        theta2,
        step_size: 1.0 / (3.0 * theta1),
        sigma1: problem.mu_f() / big_l,
        sigma2: problem.mu_psi() / big_l,
        big_l,
        refresh_prob,
        mu,
    })
}

/// Variance-reduced search direction
/// `g = (1/n) Σ_{i ∈ S} m_i θ_i (∇f_i(x) − ∇f_i(w)) + (1/n) G(w) e`.
/// The correction touches only the coordinates in the batch rows' supports;
/// an empty batch degenerates to the anchored full gradient.
pub fn estimator(
    problem: &CompositeProblem,
    x: &[f64],
    table: &GradTable,
    batch: &DrawnBatch,
) -> Vec<f64> {
    let mut g = table.aggregate().to_vec();
    let inv_n = 1.0 / problem.n() as f64;
    for e in &batch.entries {
        let delta = problem.component_derivative(e.index, x) - table.derivative(e.index);
        let scale = e.multiplicity as f64 * e.weight * inv_n * delta;
        for &(j, a) in problem.data().row(e.index) {
            g[j] += scale * a;
        }
    }
    g
}

/// Iterate, reference point, and cached reference gradients.
#[derive(Clone, Debug)]
pub struct LSvrgState {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub table: GradTable,
    pub iterations: u64,
    pub refreshes: u64,
}

impl LSvrgState {
    pub fn new(problem: &CompositeProblem, x0: Vec<f64>) -> Self {
        let table = GradTable::new(problem, &x0);
        Self {
            w: x0.clone(),
            x: x0,
            table,
            iterations: 0,
            refreshes: 0,
        }
    }

    /// One iteration: proximal step along the estimator, then an optional
    /// reference refresh to the pre-update iterate.
    pub fn step(
        &mut self,
        problem: &CompositeProblem,
        config: &LSvrgConfig,
        batch: &DrawnBatch,
        refresh: bool,
    ) {
        let eta = config.step_size;
        let g = estimator(problem, &self.x, &self.table, batch);
        if refresh {
            let previous = self.x.clone();
            for (xj, gj) in self.x.iter_mut().zip(&g) {
                *xj = problem.prox_scalar(eta, *xj - eta * gj);
            }
            self.w = previous;
            self.table = GradTable::new(problem, &self.w);
            self.refreshes += 1;
        } else {
            for (xj, gj) in self.x.iter_mut().zip(&g) {
                *xj = problem.prox_scalar(eta, *xj - eta * gj);
            }
        }
        self.iterations += 1;
    }
}

/// Momentum iterates `y`, `z`, reference `w`; the combined point is derived.
#[derive(Clone, Debug)]
pub struct LKatyushaState {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub table: GradTable,
    pub iterations: u64,
    pub refreshes: u64,
}

impl LKatyushaState {
    pub fn new(problem: &CompositeProblem, x0: Vec<f64>) -> Self {
        let table = GradTable::new(problem, &x0);
        Self {
            y: x0.clone(),
            z: x0.clone(),
            w: x0,
            table,
            iterations: 0,
            refreshes: 0,
        }
    }

    /// `x = θ₁ z + θ₂ w + (1 − θ₁ − θ₂) y`.
    pub fn combined_iterate(&self, config: &LKatyushaConfig) -> Vec<f64> {
        let theta3 = config.theta3();
        (0..self.y.len())
            .map(|j| config.theta1 * self.z[j] + config.theta2 * self.w[j] + theta3 * self.y[j])
            .collect()
    }

    pub fn step(
        &mut self,
        problem: &CompositeProblem,
        config: &LKatyushaConfig,
        batch: &DrawnBatch,
        refresh: bool,
    ) {
        let xk = self.combined_iterate(config);
        let g = estimator(problem, &xk, &self.table, batch);
        let eta = config.step_size;
        let denom = 1.0 + eta * config.sigma1;
        let prox_step = eta / (denom * config.big_l);
        for j in 0..self.z.len() {
            let v = (eta * config.sigma1 * xk[j] + self.z[j] - eta / config.big_l * g[j]) / denom;
            let z_next = problem.prox_scalar(prox_step, v);
            self.y[j] = xk[j] + config.theta1 * (z_next - self.z[j]);
            self.z[j] = z_next;
        }
        if refresh {
            self.w = xk;
            self.table = GradTable::new(problem, &self.w);
            self.refreshes += 1;
        }
        self.iterations += 1;
    }
}

/// Anything the run driver can push forward: the two dense solvers and their
/// lazy counterparts.
pub trait Optimizer {
    fn step(&mut self, problem: &CompositeProblem, batch: &DrawnBatch, refresh: bool);
    /// The iterate metrics are reported on (lazy solvers materialize first).
    fn iterate(&mut self) -> Vec<f64>;
    fn refreshes(&self) -> u64;
    fn refresh_prob(&self) -> f64;
}

/// Dense non-accelerated solver bundled with its config.
pub struct LSvrgSolver {
    pub config: LSvrgConfig,
    pub state: LSvrgState,
}

impl LSvrgSolver {
    pub fn new(problem: &CompositeProblem, config: LSvrgConfig, x0: Vec<f64>) -> Self {
        Self {
            config,
            state: LSvrgState::new(problem, x0),
        }
    }
}

impl Optimizer for LSvrgSolver {
    fn step(&mut self, problem: &CompositeProblem, batch: &DrawnBatch, refresh: bool) {
        self.state.step(problem, &self.config, batch, refresh);
    }

    fn iterate(&mut self) -> Vec<f64> {
        self.state.x.clone()
    }

    fn refreshes(&self) -> u64 {
        self.state.refreshes
    }

    fn refresh_prob(&self) -> f64 {
        self.config.refresh_prob
    }
}

/// Dense accelerated solver bundled with its config.
pub struct LKatyushaSolver {
    pub config: LKatyushaConfig,
    pub state: LKatyushaState,
}

impl LKatyushaSolver {
    pub fn new(problem: &CompositeProblem, config: LKatyushaConfig, x0: Vec<f64>) -> Self {
        Self {
            config,
            state: LKatyushaState::new(problem, x0),
        }
    }
}

impl Optimizer for LKatyushaSolver {
    fn step(&mut self, problem: &CompositeProblem, batch: &DrawnBatch, refresh: bool) {
        self.state.step(problem, &self.config, batch, refresh);
    }

    fn iterate(&mut self) -> Vec<f64> {
        self.state.y.clone()
    }

    fn refreshes(&self) -> u64 {
        self.state.refreshes
    }

    fn refresh_prob(&self) -> f64 {
        self.config.refresh_prob
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Budget {
    Iterations(u64),
    /// Stop once the epoch counter reaches this value. One epoch equals `n`
    /// component-gradient evaluations; the initial reference build counts as
    /// the first.
    Epochs(f64),
}

/// Drives a solver: per iteration one batch draw then one refresh coin, in
/// that order. `record` fires at iteration 0, every `cadence` iterations,
/// and at the final iterate. The epoch counter advances by `τ/n` per
/// iteration plus one per reference refresh.
pub fn run<S: Optimizer + ?Sized, R: Rng>(
    problem: &CompositeProblem,
    sampler: &mut Sampler,
    solver: &mut S,
    budget: Budget,
    cadence: u64,
    rng: &mut R,
    mut record: impl FnMut(u64, f64, u64, &[f64]),
) {
    let tau = sampler.spec().expected_size();
    let n = problem.n() as f64;
    let epoch_of = |k: u64, refreshes: u64| 1.0 + k as f64 * tau / n + refreshes as f64;

    let snapshot = solver.iterate();
    record(0, epoch_of(0, solver.refreshes()), solver.refreshes(), &snapshot);

    let mut k: u64 = 0;
    loop {
        let done = match budget {
            Budget::Iterations(limit) => k >= limit,
            Budget::Epochs(limit) => epoch_of(k, solver.refreshes()) >= limit,
        };
        if done {
            break;
        }
        let batch = sampler.draw(rng);
        let refresh = rng.gen::<f64>() < solver.refresh_prob();
        solver.step(problem, &batch, refresh);
        k += 1;
        if cadence > 0 && k.is_multiple_of(cadence) {
            let snapshot = solver.iterate();
            record(k, epoch_of(k, solver.refreshes()), solver.refreshes(), &snapshot);
        }
    }
    if k > 0 && (cadence == 0 || !k.is_multiple_of(cadence)) {
        let snapshot = solver.iterate();
        record(k, epoch_of(k, solver.refreshes()), solver.refreshes(), &snapshot);
    }
}
