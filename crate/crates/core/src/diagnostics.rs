//! Lyapunov probes: exact one-step expectations over enumerable samplers,
//! used as executable forms of the convergence guarantees at desk scale.
//! Test machinery only; nothing here runs in the solver hot path.

use crate::error::{Error, Result};
use crate::problem::{CompositeProblem, GradTable};
use crate::sampling::{enumerate_outcomes, SamplerSpec};
use crate::solver::{estimator, LKatyushaConfig, LSvrgConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeKind {
    /// Strongly convex, non-accelerated: distance plus anchored variance.
    StronglyConvex,
    /// Strongly convex, accelerated: weighted `z`-distance plus objective gaps.
    Accelerated,
    /// Convex, non-accelerated: scaled distance plus anchored variance.
    Convex,
    /// Nonconvex, smooth: objective plus anchor distance.
    Nonconvex,
}

/// State shapes the probes evaluate on.
pub enum ProbeState<'a> {
    /// Non-accelerated solvers: iterate and reference.
    Anchored { x: &'a [f64], w: &'a [f64] },
    /// Accelerated solver: momentum pair and reference.
    Momentum {
        y: &'a [f64],
        z: &'a [f64],
        w: &'a [f64],
    },
}

/// One guarantee's Lyapunov function with all coefficients derived from the
/// solver configuration; the reference point comes from a high-accuracy
/// deterministic solve.
pub struct ContractionProbe {
    kind: ProbeKind,
    x_star: Vec<f64>,
    p_star: f64,
    star_derivs: Vec<f64>,
    eta: f64,
    p: f64,
    mu: f64,
    mu_psi: f64,
    theta1: f64,
    theta2: f64,
    big_l: f64,
    sigma: f64,
    sigma1: f64,
    q: f64,
    alpha: f64,
}

/// The proof's internal discount `q`, case by case: `2/3` when the binding
/// momentum branch saturates, otherwise one minus a third of the saturating
/// ratio.
pub fn momentum_discount(mu: f64, l2: f64, l_f: f64, p: f64) -> f64 {
    if l_f <= l2 / p {
        if mu / (l2 * p) >= 1.0 {
            2.0 / 3.0
        } else {
            1.0 - (mu / (l2 * p)).sqrt() / 3.0
        }
    } else if (mu / l_f).sqrt() >= p / 2.0 {
        2.0 / 3.0
    } else {
        1.0 - 2.0 / (3.0 * p) * (mu / l_f).sqrt()
    }
}

impl ContractionProbe {
    pub fn strongly_convex(
        problem: &CompositeProblem,
        config: &LSvrgConfig,
        x_star: Vec<f64>,
    ) -> Self {
        let star_derivs = derivatives_at(problem, &x_star);
        Self {
            kind: ProbeKind::StronglyConvex,
            p_star: 0.0,
            star_derivs,
            eta: config.step_size,
            p: config.refresh_prob,
            mu: problem.mu(),
            mu_psi: problem.mu_psi(),
            theta1: 0.0,
            theta2: 0.0,
            big_l: 0.0,
            sigma: 0.0,
            sigma1: 0.0,
            q: 0.0,
            alpha: 0.0,
            x_star,
        }
    }

    pub fn accelerated(
        problem: &CompositeProblem,
        config: &LKatyushaConfig,
        l2_bound: f64,
        x_star: Vec<f64>,
        p_star: f64,
    ) -> Self {
        let star_derivs = derivatives_at(problem, &x_star);
        Self {
            kind: ProbeKind::Accelerated,
            p_star,
            star_derivs,
            eta: config.step_size,
            p: config.refresh_prob,
            mu: config.mu,
            mu_psi: problem.mu_psi(),
            theta1: config.theta1,
            theta2: config.theta2,
            big_l: config.big_l,
            sigma: config.sigma(),
            sigma1: config.sigma1,
            q: momentum_discount(config.mu, l2_bound, problem.l_f(), config.refresh_prob),
            alpha: 0.0,
            x_star,
        }
    }

    pub fn convex(
        problem: &CompositeProblem,
        config: &LSvrgConfig,
        x_star: Vec<f64>,
        p_star: f64,
    ) -> Self {
        let star_derivs = derivatives_at(problem, &x_star);
        let eta = config.step_size;
        let p = config.refresh_prob;
        Self {
            kind: ProbeKind::Convex,
            p_star,
            star_derivs,
            eta,
            p,
            mu: problem.mu(),
            mu_psi: problem.mu_psi(),
            theta1: 0.0,
            theta2: 0.0,
            big_l: 0.0,
            sigma: 0.0,
            sigma1: 0.0,
            q: 0.0,
            alpha: 6.0 * eta / (5.0 * p),
            x_star,
        }
    }

    /// Requires `ψ ≡ 0`; `l3` is the centered-variance bound of the sampler.
    pub fn nonconvex(problem: &CompositeProblem, config: &LSvrgConfig, l3: f64) -> Result<Self> {
        if problem.lambda1() != 0.0 || problem.lambda2() != 0.0 {
            return Err(Error::InvalidConfig(
                "the nonconvex probe needs an unregularized objective".into(),
            ));
        }
        let eta = config.step_size;
        let p = config.refresh_prob;
        Ok(Self {
            kind: ProbeKind::Nonconvex,
            p_star: 0.0,
            star_derivs: Vec::new(),
            eta,
            p,
            mu: 0.0,
            mu_psi: 0.0,
            theta1: 0.0,
            theta2: 0.0,
            big_l: 0.0,
            sigma: 0.0,
            sigma1: 0.0,
            q: 0.0,
            alpha: 3.0 * eta * eta * problem.l_f() * l3 / p,
            x_star: Vec::new(),
        })
    }

    pub fn kind(&self) -> ProbeKind {
        self.kind
    }

    pub fn discount(&self) -> f64 {
        self.q
    }

    /// The Lyapunov value at the given state; expectations over the sampler
    /// are computed by exhaustive enumeration.
    pub fn lyapunov_value(
        &self,
        problem: &CompositeProblem,
        spec: &SamplerSpec,
        state: &ProbeState,
    ) -> Result<f64> {
        match (self.kind, state) {
            (ProbeKind::StronglyConvex, ProbeState::Anchored { x, w }) => {
                Ok(dist_sq(x, &self.x_star) + self.anchored_coeff() * self.variance_at(problem, spec, w)?)
            }
            (ProbeKind::Convex, ProbeState::Anchored { x, w }) => {
                Ok(dist_sq(x, &self.x_star) / (2.0 * self.eta)
                    + self.alpha * self.variance_at(problem, spec, w)?)
            }
            (ProbeKind::Nonconvex, ProbeState::Anchored { x, w }) => {
                Ok(problem.loss_value(x) + self.alpha * dist_sq(x, w))
            }
            (ProbeKind::Accelerated, ProbeState::Momentum { y, z, w }) => {
                let zc = self.big_l * (1.0 + self.eta * self.sigma) / (2.0 * self.eta);
                let yc = (problem.objective(y) - self.p_star) / self.theta1;
                let wc = self.theta2 / (self.p * self.q * self.theta1)
                    * (problem.objective(w) - self.p_star);
                Ok(zc * dist_sq(z, &self.x_star) + yc + wc)
            }
            _ => Err(Error::InvalidConfig(
                "probe kind does not match the state shape".into(),
            )),
        }
    }

    /// Exact conditional expectation of the Lyapunov value after one step,
    /// enumerating batch outcomes and folding the refresh coin analytically.
    /// For the convex probe the expected objective gap of the new iterate is
    /// included, matching the displayed per-step inequality.
    pub fn expected_one_step(
        &self,
        problem: &CompositeProblem,
        spec: &SamplerSpec,
        state: &ProbeState,
    ) -> Result<f64> {
        let outcomes = enumerate_outcomes(spec)?;
        match (self.kind, state) {
            (ProbeKind::StronglyConvex, ProbeState::Anchored { x, w }) => {
                let table = GradTable::new(problem, w);
                let mut e_dist = 0.0;
                for (batch, prob) in &outcomes {
                    if *prob == 0.0 {
                        continue;
                    }
                    let g = estimator(problem, x, &table, batch);
                    let x_next = prox_step(problem, x, &g, self.eta);
                    e_dist += prob * dist_sq(&x_next, &self.x_star);
                }
                let e_var = self.p * self.variance_at(problem, spec, x)?
                    + (1.0 - self.p) * self.variance_at(problem, spec, w)?;
                Ok(e_dist + self.anchored_coeff() * e_var)
            }
            (ProbeKind::Convex, ProbeState::Anchored { x, w }) => {
                let table = GradTable::new(problem, w);
                let mut e_dist = 0.0;
                let mut e_gap = 0.0;
                for (batch, prob) in &outcomes {
                    if *prob == 0.0 {
                        continue;
                    }
                    let g = estimator(problem, x, &table, batch);
                    let x_next = prox_step(problem, x, &g, self.eta);
                    e_dist += prob * dist_sq(&x_next, &self.x_star);
                    e_gap += prob * (problem.objective(&x_next) - self.p_star);
                }
                let e_var = self.p * self.variance_at(problem, spec, x)?
                    + (1.0 - self.p) * self.variance_at(problem, spec, w)?;
                Ok(e_dist / (2.0 * self.eta) + self.alpha * e_var + e_gap)
            }
            (ProbeKind::Nonconvex, ProbeState::Anchored { x, w }) => {
                let table = GradTable::new(problem, w);
                let mut acc = 0.0;
                for (batch, prob) in &outcomes {
                    if *prob == 0.0 {
                        continue;
                    }
                    let g = estimator(problem, x, &table, batch);
                    let x_next: Vec<f64> = x
                        .iter()
                        .zip(&g)
                        .map(|(xj, gj)| xj - self.eta * gj)
                        .collect();
                    let anchor = self.p * dist_sq(&x_next, x) + (1.0 - self.p) * dist_sq(&x_next, w);
                    acc += prob * (problem.loss_value(&x_next) + self.alpha * anchor);
                }
                Ok(acc)
            }
            (ProbeKind::Accelerated, ProbeState::Momentum { y, z, w }) => {
                let table = GradTable::new(problem, w);
                let theta3 = 1.0 - self.theta1 - self.theta2;
                let xk: Vec<f64> = (0..y.len())
                    .map(|j| self.theta1 * z[j] + self.theta2 * w[j] + theta3 * y[j])
                    .collect();
                let zc = self.big_l * (1.0 + self.eta * self.sigma) / (2.0 * self.eta);
                let denom = 1.0 + self.eta * self.sigma1;
                let prox_weight = self.eta / (denom * self.big_l);
                let mut acc = 0.0;
                for (batch, prob) in &outcomes {
                    if *prob == 0.0 {
                        continue;
                    }
                    let g = estimator(problem, &xk, &table, batch);
                    let mut z_next = vec![0.0; z.len()];
                    let mut y_next = vec![0.0; y.len()];
                    for j in 0..z.len() {
                        let v = (self.eta * self.sigma1 * xk[j] + z[j]
                            - self.eta / self.big_l * g[j])
                            / denom;
                        z_next[j] = problem.prox_scalar(prox_weight, v);
                        y_next[j] = xk[j] + self.theta1 * (z_next[j] - z[j]);
                    }
                    acc += prob
                        * (zc * dist_sq(&z_next, &self.x_star)
                            + (problem.objective(&y_next) - self.p_star) / self.theta1);
                }
                let w_coeff = self.theta2 / (self.p * self.q * self.theta1);
                let e_w = (1.0 - self.p) * (problem.objective(w) - self.p_star)
                    + self.p * (problem.objective(&xk) - self.p_star);
                Ok(acc + w_coeff * e_w)
            }
            _ => Err(Error::InvalidConfig(
                "probe kind does not match the state shape".into(),
            )),
        }
    }

    /// Right-hand side of the guarantee's per-step inequality at this state.
    pub fn one_step_bound(
        &self,
        problem: &CompositeProblem,
        spec: &SamplerSpec,
        state: &ProbeState,
    ) -> Result<f64> {
        match (self.kind, state) {
            (ProbeKind::StronglyConvex, _) => {
                let value = self.lyapunov_value(problem, spec, state)?;
                let rate_dist = 1.0 - self.eta * self.mu / (1.0 + self.eta * self.mu_psi);
                let rate_var = 1.0 - self.p / 2.0;
                Ok(rate_dist.max(rate_var) * value)
            }
            (ProbeKind::Accelerated, ProbeState::Momentum { y, z, w }) => {
                let zc = self.big_l * (1.0 + self.eta * self.sigma) / (2.0 * self.eta);
                let z_part = zc * dist_sq(z, &self.x_star) / (1.0 + self.eta * self.sigma);
                let y_gap = (problem.objective(y) - self.p_star) / self.theta1;
                let y_part = (1.0 - (self.theta1 + self.theta2 - self.theta2 / self.q)) * y_gap;
                let w_gap = self.theta2 / (self.p * self.q * self.theta1)
                    * (problem.objective(w) - self.p_star);
                let w_part = (1.0 - self.p * (1.0 - self.q)) * w_gap;
                Ok(z_part + y_part + w_part)
            }
            (ProbeKind::Convex, ProbeState::Anchored { x, .. }) => {
                let value = self.lyapunov_value(problem, spec, state)?;
                Ok(value + 0.6 * (problem.objective(x) - self.p_star))
            }
            (ProbeKind::Nonconvex, ProbeState::Anchored { x, .. }) => {
                let value = self.lyapunov_value(problem, spec, state)?;
                let g = problem.full_gradient(x)?;
                let g_sq: f64 = g.iter().map(|v| v * v).sum();
                Ok(value - self.eta / 4.0 * g_sq)
            }
            _ => Err(Error::InvalidConfig(
                "probe kind does not match the state shape".into(),
            )),
        }
    }

    /// `(4η²/p)/(1 + ημ_ψ)`, the anchored-variance weight of the strongly
    /// convex Lyapunov function.
    fn anchored_coeff(&self) -> f64 {
        4.0 * self.eta * self.eta / (self.p * (1.0 + self.eta * self.mu_psi))
    }

    /// `E_S ‖(1/n)(G(v) − G(x*)) θ_S I_S e‖²` by enumeration.
    fn variance_at(
        &self,
        problem: &CompositeProblem,
        spec: &SamplerSpec,
        v: &[f64],
    ) -> Result<f64> {
        let derivs = derivatives_at(problem, v);
        expected_anchored_sq(problem, spec, &derivs, &self.star_derivs)
    }
}

fn derivatives_at(problem: &CompositeProblem, v: &[f64]) -> Vec<f64> {
    (0..problem.n())
        .map(|i| problem.component_derivative(i, v))
        .collect()
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn prox_step(problem: &CompositeProblem, x: &[f64], g: &[f64], eta: f64) -> Vec<f64> {
    x.iter()
        .zip(g)
        .map(|(xj, gj)| problem.prox_scalar(eta, xj - eta * gj))
        .collect()
}

/// `E_S ‖(1/n) Σ_{i∈S} m_i θ_i (da_i − db_i) aᵢ‖²` over enumerated batches.
pub fn expected_anchored_sq(
    problem: &CompositeProblem,
    spec: &SamplerSpec,
    derivs_a: &[f64],
    derivs_b: &[f64],
) -> Result<f64> {
    let outcomes = enumerate_outcomes(spec)?;
    let inv_n = 1.0 / problem.n() as f64;
    let mut scratch = vec![0.0; problem.d()];
    let mut touched = Vec::new();
    let mut acc = 0.0;
    for (batch, prob) in &outcomes {
        if *prob == 0.0 {
            continue;
        }
        for e in &batch.entries {
            let scale =
                e.multiplicity as f64 * e.weight * inv_n * (derivs_a[e.index] - derivs_b[e.index]);
            for &(j, a) in problem.data().row(e.index) {
                if scratch[j] == 0.0 {
                    touched.push(j);
                }
                scratch[j] += scale * a;
            }
        }
        let norm_sq: f64 = touched.iter().map(|&j| scratch[j] * scratch[j]).sum();
        acc += prob * norm_sq;
        for &j in &touched {
            scratch[j] = 0.0;
        }
        touched.clear();
    }
    Ok(acc)
}

/// Centered second moment
/// `E_S ‖(1/n)(G(x) − G(y)) (θ_S I_S − I) e‖²` over enumerated batches,
/// computed outcome by outcome against the exact mean.
pub fn expected_centered_sq(
    problem: &CompositeProblem,
    spec: &SamplerSpec,
    derivs_a: &[f64],
    derivs_b: &[f64],
) -> Result<f64> {
    let outcomes = enumerate_outcomes(spec)?;
    let n = problem.n();
    let inv_n = 1.0 / n as f64;
    let mut mean = vec![0.0; problem.d()];
    for i in 0..n {
        let s = (derivs_a[i] - derivs_b[i]) * inv_n;
        for &(j, a) in problem.data().row(i) {
            mean[j] += s * a;
        }
    }
    let mut dense = vec![0.0; problem.d()];
    let mut acc = 0.0;
    for (batch, prob) in &outcomes {
        if *prob == 0.0 {
            continue;
        }
        dense.iter_mut().for_each(|v| *v = 0.0);
        for e in &batch.entries {
            let scale =
                e.multiplicity as f64 * e.weight * inv_n * (derivs_a[e.index] - derivs_b[e.index]);
            for &(j, a) in problem.data().row(e.index) {
                dense[j] += scale * a;
            }
        }
        let norm_sq: f64 = dense
            .iter()
            .zip(&mean)
            .map(|(v, m)| (v - m) * (v - m))
            .sum();
        acc += prob * norm_sq;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{DesignMatrix, Loss};
    use crate::reference::reference_optimum;
    use crate::smoothness::bounds_tau_nice;
    use crate::solver::{lsvrg_schedule, Regime};

    fn quadratic_problem() -> CompositeProblem {
        let data = DesignMatrix::from_rows(
            2,
            vec![vec![(0, 1.0), (1, 0.5)], vec![(1, 1.5)], vec![(0, -0.75)]],
        )
        .unwrap();
        CompositeProblem::new(data, vec![0.5, -1.0, 0.25], Loss::Squared, 0.0, 0.5).unwrap()
    }

    #[test]
    fn lyapunov_vanishes_at_the_optimum() {
        let p = quadratic_problem();
        let opt = reference_optimum(&p, 1e-13, 200_000);
        let spec = SamplerSpec::tau_nice(3, 1).unwrap();
        let profile = bounds_tau_nice(p.l_i(), p.l_f(), 1).unwrap();
        let cfg = lsvrg_schedule(&profile, &p, Regime::StronglyConvex, 1.0 / 3.0).unwrap();
        let probe = ContractionProbe::strongly_convex(&p, &cfg, opt.x.clone());
        let state = ProbeState::Anchored {
            x: &opt.x,
            w: &opt.x,
        };
        let value = probe.lyapunov_value(&p, &spec, &state).unwrap();
        assert!(value.abs() < 1e-20);
    }

    #[test]
    fn nonconvex_lyapunov_reduces_to_objective_on_anchor() {
        let data = DesignMatrix::from_rows(1, vec![vec![(0, 1.0)]]).unwrap();
        let p = CompositeProblem::new(data, vec![1.0], Loss::SigmoidSquared, 0.0, 0.0).unwrap();
        let cfg = LSvrgConfig::unchecked(0.1, 0.5, Regime::Nonconvex);
        let probe = ContractionProbe::nonconvex(&p, &cfg, 1.0).unwrap();
        let spec = SamplerSpec::tau_nice(1, 1).unwrap();
        let x = vec![0.3];
        let state = ProbeState::Anchored { x: &x, w: &x };
        let value = probe.lyapunov_value(&p, &spec, &state).unwrap();
        assert!((value - p.loss_value(&x)).abs() < 1e-15);
    }

    #[test]
    fn momentum_lyapunov_vanishes_at_the_optimum() {
        let p = quadratic_problem();
        let opt = reference_optimum(&p, 1e-13, 200_000);
        let spec = SamplerSpec::tau_nice(3, 1).unwrap();
        let profile = bounds_tau_nice(p.l_i(), p.l_f(), 1).unwrap();
        let cfg = crate::solver::lkatyusha_schedule(&profile, &p, 0.5).unwrap();
        let probe =
            ContractionProbe::accelerated(&p, &cfg, profile.l2, opt.x.clone(), opt.objective);
        let state = ProbeState::Momentum {
            y: &opt.x,
            z: &opt.x,
            w: &opt.x,
        };
        let value = probe.lyapunov_value(&p, &spec, &state).unwrap();
        assert!(value.abs() < 1e-18, "value {value}");
    }

    #[test]
    fn deterministic_spec_one_step_equals_direct_evaluation() {
        // full batch with p = 1: a single outcome, so the expectation is the
        // Lyapunov value of the deterministically stepped state
        let p = quadratic_problem();
        let opt = reference_optimum(&p, 1e-13, 200_000);
        let spec = SamplerSpec::tau_nice(3, 3).unwrap();
        let profile = bounds_tau_nice(p.l_i(), p.l_f(), 3).unwrap();
        let cfg = lsvrg_schedule(&profile, &p, Regime::StronglyConvex, 1.0).unwrap();
        let probe = ContractionProbe::strongly_convex(&p, &cfg, opt.x.clone());
        let x = vec![0.5, -0.25];
        let w = vec![0.1, 0.4];
        let state = ProbeState::Anchored { x: &x, w: &w };
        let expected = probe.expected_one_step(&p, &spec, &state).unwrap();

        let table = GradTable::new(&p, &w);
        let batch = enumerate_outcomes(&spec).unwrap().remove(0).0;
        let g = estimator(&p, &x, &table, &batch);
        let x_next: Vec<f64> = x
            .iter()
            .zip(&g)
            .map(|(xj, gj)| p.prox_scalar(cfg.step_size, xj - cfg.step_size * gj))
            .collect();
        let next_state = ProbeState::Anchored { x: &x_next, w: &x };
        let direct = probe.lyapunov_value(&p, &spec, &next_state).unwrap();
        assert!((expected - direct).abs() <= 1e-12 * direct.max(1.0));
    }

    #[test]
    fn strongly_convex_probe_contracts_at_random_states() {
        use rand::{Rng, SeedableRng};
        let p = quadratic_problem();
        let opt = reference_optimum(&p, 1e-13, 200_000);
        let spec = SamplerSpec::tau_nice(3, 1).unwrap();
        let profile = bounds_tau_nice(p.l_i(), p.l_f(), 1).unwrap();
        let cfg = lsvrg_schedule(&profile, &p, Regime::StronglyConvex, 1.0 / 3.0).unwrap();
        let probe = ContractionProbe::strongly_convex(&p, &cfg, opt.x.clone());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..5 {
            let x: Vec<f64> = opt.x.iter().map(|v| v + rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = opt.x.iter().map(|v| v + rng.gen_range(-1.0..1.0)).collect();
            let state = ProbeState::Anchored { x: &x, w: &w };
            let lhs = probe.expected_one_step(&p, &spec, &state).unwrap();
            let rhs = probe.one_step_bound(&p, &spec, &state).unwrap();
            assert!(lhs <= rhs + 1e-10 * (1.0 + rhs.abs()), "{lhs} > {rhs}");
        }
    }
}
