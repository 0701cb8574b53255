//! Sparse execution path: coordinates untouched by recent batches are
//! fast-forwarded in closed form when a batch finally needs them, so the
//! per-iteration cost is proportional to the batch support instead of `d`.
//!
//! Between reference refreshes the search direction at an untouched
//! coordinate is the constant anchored gradient entry, which makes the
//! coordinate recursion autonomous: a geometric decay toward a fixed point,
//! pieced together at sign crossings of the soft threshold. All closed forms
//! here are validated against naive per-step simulation; that oracle, not
//! any printed pseudocode, is the contract.

use crate::error::{Error, Result};
use crate::problem::{prox_elastic_net, CompositeProblem, GradTable};
use crate::sampling::DrawnBatch;
use crate::solver::{LKatyushaConfig, LSvrgConfig, Optimizer};

/// Coordinate-work instrumentation. Batch-driven work is the amortized
/// per-iteration cost; flush work covers reference refreshes and explicit
/// full materializations.
#[derive(Clone, Copy, Debug, Default)]
pub struct WorkCounters {
    /// Materializations and scalar steps triggered by batch supports.
    pub lazy_coord_ops: u64,
    /// Coordinate work spent on full flushes (refreshes, snapshots).
    pub flush_coord_ops: u64,
    /// Total nonzeros across all drawn batch rows.
    pub batch_nnz: u64,
}

/// Fast-forwards one coordinate of the proximal recursion
/// `x ← prox_η(x − η u)` with constant drift `u` from iteration `t0` to
/// `t1`, in `O(log(t1 − t0))` per sign crossing.
pub fn delayed_update(
    t0: u64,
    t1: u64,
    drift: f64,
    x: f64,
    eta: f64,
    lambda1: f64,
    lambda2: f64,
) -> Result<f64> {
    delayed_update_with_depth(t0, t1, drift, x, eta, lambda1, lambda2).map(|(x, _)| x)
}

/// As [`delayed_update`], also reporting the sign-crossing recursion depth.
pub fn delayed_update_with_depth(
    t0: u64,
    t1: u64,
    drift: f64,
    x: f64,
    eta: f64,
    lambda1: f64,
    lambda2: f64,
) -> Result<(f64, u32)> {
    if t1 < t0 {
        return Err(Error::InvalidConfig(format!(
            "delayed update needs t1 >= t0, got {t0} > {t1}"
        )));
    }
    if lambda2 <= 0.0 {
        return Err(Error::LazyUnavailable(
            "closed-form updates divide by lambda2; use the dense path".into(),
        ));
    }
    if eta <= 0.0 {
        return Err(Error::NonPositiveStep(eta));
    }
    if lambda1 < 0.0 {
        return Err(Error::InvalidConfig("lambda1 must be nonnegative".into()));
    }
    let mut depth = 0;
    let out = scalar_forward(t0, t1, drift, x, eta, lambda1, lambda2, &mut depth);
    Ok((out, depth))
}

/// Geometric decay factor `(1 + η λ₂)^{−steps}`.
fn decay(steps: u64, eta: f64, lambda2: f64) -> f64 {
    if steps > i32::MAX as u64 {
        0.0
    } else {
        (1.0 + eta * lambda2).powi(-(steps as i32))
    }
}

/// Closed form while the iterate stays on one side: `α(x + h) − h` with
/// `h = (u ± λ₁)/λ₂` (`+` on the nonnegative limb, `−` on the nonpositive).
fn limb(x: f64, h: f64, steps: u64, eta: f64, lambda2: f64) -> f64 {
    decay(steps, eta, lambda2) * (x + h) - h
}

#[allow(clippy::too_many_arguments)]
fn scalar_forward(
    t0: u64,
    t1: u64,
    u: f64,
    x: f64,
    eta: f64,
    l1: f64,
    l2: f64,
    depth: &mut u32,
) -> f64 {
    if t1 == t0 {
        return x;
    }
    let steps = t1 - t0;
    if l1 == 0.0 {
        // pure shrinkage is a single affine law on the whole line
        return limb(x, u / l2, steps, eta, l2);
    }
    if x == 0.0 {
        return if u < -l1 {
            limb(x, (u + l1) / l2, steps, eta, l2)
        } else if u > l1 {
            limb(x, (u - l1) / l2, steps, eta, l2)
        } else {
            // |u| <= lambda1 keeps the coordinate pinned at zero
            0.0
        };
    }
    if x < 0.0 {
        return -scalar_forward(t0, t1, -u, -x, eta, l1, l2, depth);
    }
    let h = (u + l1) / l2;
    if u + l1 <= 0.0 {
        // fixed point is nonnegative, no crossing
        return limb(x, h, steps, eta, l2);
    }
    // decaying toward a negative fixed point: continuous crossing time of
    // zero solves alpha(t)·(x + h) = h
    let rate = (1.0 + eta * l2).ln();
    let crossing = t0 as f64 + ((l2 * x + l1 + u) / (l1 + u)).ln() / rate;
    debug_assert!(!crossing.is_nan());
    if crossing >= t1 as f64 {
        return limb(x, h, steps, eta, l2);
    }
    // fast-forward to just before the crossing, then one exact prox step
    let before = (crossing.floor() as u64).clamp(t0, t1 - 1);
    let x_before = limb(x, h, before - t0, eta, l2);
    let x_after = prox_elastic_net(x_before - eta * u, eta, l1, l2);
    *depth += 1;
    scalar_forward(before + 1, t1, u, x_after, eta, l1, l2, depth)
}

/// `Σ_{l=1}^{s} q^l r^{s−l}` in closed form, with the degenerate `q ≈ r`
/// branch taken when the ratio is one within 1e−14.
fn cross_sum(q: f64, r: f64, steps: u64) -> f64 {
    if steps == 0 || q == 0.0 {
        return 0.0;
    }
    let s = steps.min(i32::MAX as u64) as i32;
    if (q - r).abs() <= 1e-14 * q.abs().max(r.abs()) {
        return steps as f64 * q.powi(s);
    }
    q * (q.powi(s) - r.powi(s)) / (q - r)
}

/// `Σ_{l=0}^{s−1} r^l`.
fn ones_sum(r: f64, steps: u64) -> f64 {
    let s = steps.min(i32::MAX as u64) as i32;
    if (1.0 - r).abs() <= 1e-14 {
        steps as f64
    } else {
        (1.0 - r.powi(s)) / (1.0 - r)
    }
}

/// Fast-forwards one `(y, z)` coordinate pair of the accelerated method with
/// elastic net and zero `σ₁`: `z` follows the scalar recursion at effective
/// step `η/L`, `y` accumulates the geometric combination
/// `θ₁ z⁺ + θ₂ w + (1 − θ₁ − θ₂) y`.
#[allow(clippy::too_many_arguments)]
pub fn delayed_update_pair(
    t0: u64,
    t1: u64,
    drift: f64,
    y: f64,
    z: f64,
    w: f64,
    eff_step: f64,
    lambda1: f64,
    lambda2: f64,
    theta1: f64,
    theta2: f64,
) -> Result<(f64, f64)> {
    if t1 < t0 {
        return Err(Error::InvalidConfig(format!(
            "delayed update needs t1 >= t0, got {t0} > {t1}"
        )));
    }
    if lambda2 <= 0.0 {
        return Err(Error::LazyUnavailable(
            "closed-form updates divide by lambda2; use the dense path".into(),
        ));
    }
    if eff_step <= 0.0 {
        return Err(Error::NonPositiveStep(eff_step));
    }
    if lambda1 < 0.0 {
        return Err(Error::InvalidConfig("lambda1 must be nonnegative".into()));
    }
    if !(theta1 > 0.0 && theta2 >= 0.0 && theta1 + theta2 <= 1.0 + 1e-12) {
        return Err(Error::InvalidConfig(format!(
            "momentum weights theta1 = {theta1}, theta2 = {theta2} out of range"
        )));
    }
    Ok(pair_forward(
        t0, t1, drift, y, z, w, eff_step, lambda1, lambda2, theta1, theta2,
    ))
}

/// One whole-segment combination of `y` given the geometric `z` law
/// `z^{t0+l} = q_seg^l (z0 + h) − h`.
#[allow(clippy::too_many_arguments)]
fn pair_segment_y(
    z0: f64,
    h: f64,
    q_seg: f64,
    y0: f64,
    w: f64,
    steps: u64,
    theta1: f64,
    theta2: f64,
) -> f64 {
    let theta3 = 1.0 - theta1 - theta2;
    let th3_pow = if steps > i32::MAX as u64 {
        0.0
    } else {
        theta3.powi(steps as i32)
    };
    theta1 * (z0 + h) * cross_sum(q_seg, theta3, steps)
        + (theta2 * w - theta1 * h) * ones_sum(theta3, steps)
        + th3_pow * y0
}

#[allow(clippy::too_many_arguments)]
fn pair_forward(
    t0: u64,
    t1: u64,
    u: f64,
    y: f64,
    z: f64,
    w: f64,
    s: f64,
    l1: f64,
    l2: f64,
    th1: f64,
    th2: f64,
) -> (f64, f64) {
    if t1 == t0 {
        return (y, z);
    }
    let steps = t1 - t0;
    let q = 1.0 / (1.0 + s * l2);

    let whole_segment = |h: f64, q_seg: f64, z0: f64| -> (f64, f64) {
        let z_out = if q_seg == 0.0 {
            0.0
        } else {
            limb(z0, h, steps, s, l2)
        };
        let y_out = pair_segment_y(z0, h, q_seg, y, w, steps, th1, th2);
        (y_out, z_out)
    };

    if l1 == 0.0 {
        return whole_segment(u / l2, q, z);
    }
    if z == 0.0 {
        return if u < -l1 {
            whole_segment((u + l1) / l2, q, z)
        } else if u > l1 {
            whole_segment((u - l1) / l2, q, z)
        } else {
            whole_segment(0.0, 0.0, 0.0)
        };
    }
    if z < 0.0 {
        let (ym, zm) = pair_forward(t0, t1, -u, -y, -z, -w, s, l1, l2, th1, th2);
        return (-ym, -zm);
    }
    let h = (u + l1) / l2;
    if u + l1 <= 0.0 {
        return whole_segment(h, q, z);
    }
    let rate = (1.0 + s * l2).ln();
    let crossing = t0 as f64 + ((l2 * z + l1 + u) / (l1 + u)).ln() / rate;
    debug_assert!(!crossing.is_nan());
    if crossing >= t1 as f64 {
        return whole_segment(h, q, z);
    }
    let before = (crossing.floor() as u64).clamp(t0, t1 - 1);
    let seg = before - t0;
    let z_before = limb(z, h, seg, s, l2);
    let y_before = pair_segment_y(z, h, q, y, w, seg, th1, th2);
    let z_after = prox_elastic_net(z_before - s * u, s, l1, l2);
    let y_after = th1 * z_after + th2 * w + (1.0 - th1 - th2) * y_before;
    pair_forward(before + 1, t1, u, y_after, z_after, w, s, l1, l2, th1, th2)
}

/// Scalars of the pure-ridge coordinate recursion (`λ₁ = 0`, any `σ₁ ≥ 0`).
#[derive(Clone, Copy, Debug)]
pub struct RidgePairParams {
    pub theta1: f64,
    pub theta2: f64,
    pub step_size: f64,
    pub sigma1: f64,
    pub big_l: f64,
    pub lambda2: f64,
}

impl RidgePairParams {
    pub fn from_config(config: &LKatyushaConfig, lambda2: f64) -> Self {
        Self {
            theta1: config.theta1,
            theta2: config.theta2,
            step_size: config.step_size,
            sigma1: config.sigma1,
            big_l: config.big_l,
            lambda2,
        }
    }

    /// The one-step affine map `(z, y) ← A (z, y) + b(u, w)`.
    fn transition(&self, u: f64, w: f64) -> (Mat2, [f64; 2]) {
        let th3 = 1.0 - self.theta1 - self.theta2;
        let es = self.step_size * self.sigma1;
        let denom = self.step_size * self.lambda2 + self.big_l * (1.0 + es);
        let a11 = (es * self.theta1 + 1.0) * self.big_l / denom;
        let a12 = es * th3 * self.big_l / denom;
        let b1 = (es * self.theta2 * self.big_l * w - self.step_size * u) / denom;
        let a = Mat2 {
            m: [
                [a11, a12],
                [self.theta1 * a11, th3 + self.theta1 * a12],
            ],
        };
        let b = [b1, self.theta2 * w + self.theta1 * b1];
        (a, b)
    }
}

/// Fast-forwards one `(y, z)` pair of the pure-ridge recursion through the
/// 2×2 affine law `(z, y) ← A (z, y) + b`, with `A^m` and `Σ A^s` by
/// repeated squaring.
pub fn delayed_update_pair_ridge(
    t0: u64,
    t1: u64,
    drift: f64,
    y: f64,
    z: f64,
    w: f64,
    params: &RidgePairParams,
) -> Result<(f64, f64)> {
    if t1 < t0 {
        return Err(Error::InvalidConfig(format!(
            "delayed update needs t1 >= t0, got {t0} > {t1}"
        )));
    }
    if params.big_l <= 0.0 || params.step_size <= 0.0 {
        return Err(Error::InvalidConfig(
            "ridge pair update needs positive step and smoothness scale".into(),
        ));
    }
    let (a, b) = params.transition(drift, w);
    let (pow, geom) = mat_pow_gsum(a, t1 - t0);
    let zy = pow.apply([z, y]);
    let offset = geom.apply(b);
    Ok((zy[1] + offset[1], zy[0] + offset[0]))
}

#[derive(Clone, Copy, Debug)]
struct Mat2 {
    m: [[f64; 2]; 2],
}

impl Mat2 {
    const IDENTITY: Mat2 = Mat2 {
        m: [[1.0, 0.0], [0.0, 1.0]],
    };
    const ZERO: Mat2 = Mat2 { m: [[0.0; 2]; 2] };

    fn mul(self, o: Mat2) -> Mat2 {
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.m[i][0] * o.m[0][j] + self.m[i][1] * o.m[1][j];
            }
        }
        Mat2 { m: out }
    }

    fn add(self, o: Mat2) -> Mat2 {
        Mat2 {
            m: [
                [self.m[0][0] + o.m[0][0], self.m[0][1] + o.m[0][1]],
                [self.m[1][0] + o.m[1][0], self.m[1][1] + o.m[1][1]],
            ],
        }
    }

    fn apply(self, v: [f64; 2]) -> [f64; 2] {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ]
    }
}

/// `(A^e, Σ_{s<e} A^s)` by the doubling identity
/// `Σ_{s<2m} A^s = (I + A^m) Σ_{s<m} A^s`.
fn mat_pow_gsum(a: Mat2, e: u64) -> (Mat2, Mat2) {
    if e == 0 {
        return (Mat2::IDENTITY, Mat2::ZERO);
    }
    if e.is_multiple_of(2) {
        let (p, s) = mat_pow_gsum(a, e / 2);
        (p.mul(p), s.add(p.mul(s)))
    } else {
        let (p, s) = mat_pow_gsum(a, e - 1);
        (p.mul(a), s.add(p))
    }
}

/// Sparse non-accelerated solver. Identical trajectory to the dense path
/// (same RNG order, same update rules), cost proportional to batch support.
pub struct LazyLSvrgSolver {
    pub config: LSvrgConfig,
    pub work: WorkCounters,
    x: Vec<f64>,
    w: Vec<f64>,
    last: Vec<u64>,
    table: GradTable,
    k: u64,
    refreshes: u64,
    lambda1: f64,
    lambda2: f64,
    corr: Vec<f64>,
    coords: Vec<usize>,
}

impl LazyLSvrgSolver {
    pub fn new(problem: &CompositeProblem, config: LSvrgConfig, x0: Vec<f64>) -> Result<Self> {
        if problem.lambda2() <= 0.0 {
            return Err(Error::LazyUnavailable(
                "lazy updates need lambda2 > 0; fall back to the dense solver".into(),
            ));
        }
        let d = problem.d();
        let table = GradTable::new(problem, &x0);
        Ok(Self {
            config,
            work: WorkCounters::default(),
            w: x0.clone(),
            x: x0,
            last: vec![0; d],
            table,
            k: 0,
            refreshes: 0,
            lambda1: problem.lambda1(),
            lambda2: problem.lambda2(),
            corr: vec![0.0; d],
            coords: Vec::new(),
        })
    }

    fn forward_coord(&mut self, j: usize) {
        let t0 = self.last[j];
        if t0 < self.k {
            let mut depth = 0;
            self.x[j] = scalar_forward(
                t0,
                self.k,
                self.table.aggregate()[j],
                self.x[j],
                self.config.step_size,
                self.lambda1,
                self.lambda2,
                &mut depth,
            );
            self.last[j] = self.k;
        }
    }

    fn gather_support(&mut self, problem: &CompositeProblem, batch: &DrawnBatch) {
        self.coords.clear();
        for e in &batch.entries {
            let row = problem.data().row(e.index);
            self.work.batch_nnz += row.len() as u64;
            self.coords.extend(row.iter().map(|&(j, _)| j));
        }
        self.coords.sort_unstable();
        self.coords.dedup();
    }

    fn accumulate_corrections(&mut self, problem: &CompositeProblem, batch: &DrawnBatch) {
        let inv_n = 1.0 / problem.n() as f64;
        for e in &batch.entries {
            let delta =
                problem.component_derivative(e.index, &self.x) - self.table.derivative(e.index);
            let scale = e.multiplicity as f64 * e.weight * inv_n * delta;
            for &(j, a) in problem.data().row(e.index) {
                self.corr[j] += scale * a;
            }
        }
    }

    /// Brings every coordinate up to the current iteration.
    pub fn materialize_all(&mut self) {
        for j in 0..self.x.len() {
            if self.last[j] < self.k {
                self.forward_coord(j);
                self.work.flush_coord_ops += 1;
            }
        }
    }

    /// The fully materialized iterate.
    pub fn x(&mut self) -> &[f64] {
        self.materialize_all();
        &self.x
    }

    pub fn iterations(&self) -> u64 {
        self.k
    }

    pub fn step(&mut self, problem: &CompositeProblem, batch: &DrawnBatch, refresh: bool) {
        let eta = self.config.step_size;
        self.gather_support(problem, batch);
        let coords = std::mem::take(&mut self.coords);
        for &j in &coords {
            self.forward_coord(j);
            self.work.lazy_coord_ops += 1;
        }
        self.accumulate_corrections(problem, batch);
        if refresh {
            // everyone advances to k, the pre-update iterate becomes the new
            // reference, then one explicit step with the old anchor
            for j in 0..self.x.len() {
                if self.last[j] < self.k {
                    self.forward_coord(j);
                    self.work.flush_coord_ops += 1;
                }
            }
            self.w.copy_from_slice(&self.x);
            for j in 0..self.x.len() {
                let u = self.table.aggregate()[j] + self.corr[j];
                self.x[j] = prox_elastic_net(self.x[j] - eta * u, eta, self.lambda1, self.lambda2);
                self.last[j] = self.k + 1;
                self.work.flush_coord_ops += 1;
            }
            for &j in &coords {
                self.corr[j] = 0.0;
            }
            self.table = GradTable::new(problem, &self.w);
            self.refreshes += 1;
        } else {
            for &j in &coords {
                let u = self.table.aggregate()[j] + self.corr[j];
                self.x[j] = prox_elastic_net(self.x[j] - eta * u, eta, self.lambda1, self.lambda2);
                self.last[j] = self.k + 1;
                self.corr[j] = 0.0;
                self.work.lazy_coord_ops += 1;
            }
        }
        self.coords = coords;
        self.k += 1;
    }
}

impl Optimizer for LazyLSvrgSolver {
    fn step(&mut self, problem: &CompositeProblem, batch: &DrawnBatch, refresh: bool) {
        LazyLSvrgSolver::step(self, problem, batch, refresh);
    }

    fn iterate(&mut self) -> Vec<f64> {
        self.x().to_vec()
    }

    fn refreshes(&self) -> u64 {
        self.refreshes
    }

    fn refresh_prob(&self) -> f64 {
        self.config.refresh_prob
    }
}

enum PairKind {
    /// Elastic net with `σ₁ = 0`: piecewise-geometric fast forward.
    SoftThreshold,
    /// Pure ridge: 2×2 matrix-power fast forward.
    Ridge,
}

/// Sparse accelerated solver. The combined iterate is never stored; batch
/// coordinates are derived on demand after materialization.
pub struct LazyLKatyushaSolver {
    pub config: LKatyushaConfig,
    pub work: WorkCounters,
    y: Vec<f64>,
    z: Vec<f64>,
    w: Vec<f64>,
    last: Vec<u64>,
    table: GradTable,
    k: u64,
    refreshes: u64,
    lambda1: f64,
    lambda2: f64,
    kind: PairKind,
    corr: Vec<f64>,
    combined: Vec<f64>,
    coords: Vec<usize>,
}

impl LazyLKatyushaSolver {
    pub fn new(
        problem: &CompositeProblem,
        config: LKatyushaConfig,
        x0: Vec<f64>,
    ) -> Result<Self> {
        if problem.lambda2() <= 0.0 {
            return Err(Error::LazyUnavailable(
                "lazy updates need lambda2 > 0; fall back to the dense solver".into(),
            ));
        }
        let kind = if problem.lambda1() > 0.0 {
            if config.sigma1 != 0.0 {
                return Err(Error::LazyUnavailable(
                    "soft-threshold fast forward needs sigma1 = 0".into(),
                ));
            }
            PairKind::SoftThreshold
        } else {
            PairKind::Ridge
        };
        let d = problem.d();
        let table = GradTable::new(problem, &x0);
        Ok(Self {
            config,
            work: WorkCounters::default(),
            y: x0.clone(),
            z: x0.clone(),
            w: x0,
            last: vec![0; d],
            table,
            k: 0,
            refreshes: 0,
            lambda1: problem.lambda1(),
            lambda2: problem.lambda2(),
            kind,
            corr: vec![0.0; d],
            combined: vec![0.0; d],
            coords: Vec::new(),
        })
    }

    fn forward_coord(&mut self, j: usize) {
        let t0 = self.last[j];
        if t0 >= self.k {
            return;
        }
        let u = self.table.aggregate()[j];
        let (y_new, z_new) = match self.kind {
            PairKind::SoftThreshold => pair_forward(
                t0,
                self.k,
                u,
                self.y[j],
                self.z[j],
                self.w[j],
                self.config.step_size / self.config.big_l,
                self.lambda1,
                self.lambda2,
                self.config.theta1,
                self.config.theta2,
            ),
            PairKind::Ridge => {
                let params = RidgePairParams::from_config(&self.config, self.lambda2);
                delayed_update_pair_ridge(t0, self.k, u, self.y[j], self.z[j], self.w[j], &params)
                    .expect("validated at construction")
            }
        };
        self.y[j] = y_new;
        self.z[j] = z_new;
        self.last[j] = self.k;
    }

    /// One explicit coordinate step, shared by the touched-coordinate and
    /// refresh paths; mirrors the dense update exactly.
    fn scalar_step(&mut self, j: usize, g: f64) {
        let cfg = &self.config;
        let eta = cfg.step_size;
        let denom = 1.0 + eta * cfg.sigma1;
        let prox_step = eta / (denom * cfg.big_l);
        let xk = self.combined[j];
        let v = (eta * cfg.sigma1 * xk + self.z[j] - eta / cfg.big_l * g) / denom;
        let z_next = prox_elastic_net(v, prox_step, self.lambda1, self.lambda2);
        self.y[j] = xk + cfg.theta1 * (z_next - self.z[j]);
        self.z[j] = z_next;
    }

    fn gather_support(&mut self, problem: &CompositeProblem, batch: &DrawnBatch) {
        self.coords.clear();
        for e in &batch.entries {
            let row = problem.data().row(e.index);
            self.work.batch_nnz += row.len() as u64;
            self.coords.extend(row.iter().map(|&(j, _)| j));
        }
        self.coords.sort_unstable();
        self.coords.dedup();
    }

    pub fn materialize_all(&mut self) {
        for j in 0..self.y.len() {
            if self.last[j] < self.k {
                self.forward_coord(j);
                self.work.flush_coord_ops += 1;
            }
        }
    }

    /// Fully materialized `(y, z, w)` triple.
    pub fn snapshot(&mut self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        self.materialize_all();
        (self.y.clone(), self.z.clone(), self.w.clone())
    }

    pub fn iterations(&self) -> u64 {
        self.k
    }

    pub fn step(&mut self, problem: &CompositeProblem, batch: &DrawnBatch, refresh: bool) {
        let theta3 = self.config.theta3();
        self.gather_support(problem, batch);
        let coords = std::mem::take(&mut self.coords);
        for &j in &coords {
            self.forward_coord(j);
            self.work.lazy_coord_ops += 1;
        }
        for &j in &coords {
            self.combined[j] =
                self.config.theta1 * self.z[j] + self.config.theta2 * self.w[j] + theta3 * self.y[j];
            self.work.lazy_coord_ops += 1;
        }
        let inv_n = 1.0 / problem.n() as f64;
        for e in &batch.entries {
            let margin: f64 = problem
                .data()
                .row(e.index)
                .iter()
                .map(|&(j, a)| a * self.combined[j])
                .sum();
            let delta =
                problem.derivative_from_margin(e.index, margin) - self.table.derivative(e.index);
            let scale = e.multiplicity as f64 * e.weight * inv_n * delta;
            for &(j, a) in problem.data().row(e.index) {
                self.corr[j] += scale * a;
            }
        }
        if refresh {
            for j in 0..self.y.len() {
                if self.last[j] < self.k {
                    self.forward_coord(j);
                    self.work.flush_coord_ops += 1;
                }
            }
            for j in 0..self.y.len() {
                self.combined[j] = self.config.theta1 * self.z[j]
                    + self.config.theta2 * self.w[j]
                    + theta3 * self.y[j];
            }
            for j in 0..self.y.len() {
                let g = self.table.aggregate()[j] + self.corr[j];
                self.scalar_step(j, g);
                self.last[j] = self.k + 1;
                self.work.flush_coord_ops += 1;
            }
            for &j in &coords {
                self.corr[j] = 0.0;
            }
            self.w.copy_from_slice(&self.combined);
            self.table = GradTable::new(problem, &self.w);
            self.refreshes += 1;
        } else {
            for &j in &coords {
                let g = self.table.aggregate()[j] + self.corr[j];
                self.scalar_step(j, g);
                self.last[j] = self.k + 1;
                self.corr[j] = 0.0;
                self.work.lazy_coord_ops += 1;
            }
        }
        self.coords = coords;
        self.k += 1;
    }
}

impl Optimizer for LazyLKatyushaSolver {
    fn step(&mut self, problem: &CompositeProblem, batch: &DrawnBatch, refresh: bool) {
        LazyLKatyushaSolver::step(self, problem, batch, refresh);
    }

    fn iterate(&mut self) -> Vec<f64> {
        self.materialize_all();
        self.y.clone()
    }

    fn refreshes(&self) -> u64 {
        self.refreshes
    }

    fn refresh_prob(&self) -> f64 {
        self.config.refresh_prob
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_scalar(t0: u64, t1: u64, u: f64, mut x: f64, eta: f64, l1: f64, l2: f64) -> f64 {
        for _ in t0..t1 {
            x = prox_elastic_net(x - eta * u, eta, l1, l2);
        }
        x
    }

    #[allow(clippy::too_many_arguments)]
    fn naive_pair(
        t0: u64,
        t1: u64,
        u: f64,
        mut y: f64,
        mut z: f64,
        w: f64,
        s: f64,
        l1: f64,
        l2: f64,
        th1: f64,
        th2: f64,
    ) -> (f64, f64) {
        let th3 = 1.0 - th1 - th2;
        for _ in t0..t1 {
            let z_next = prox_elastic_net(z - s * u, s, l1, l2);
            y = th1 * z_next + th2 * w + th3 * y;
            z = z_next;
        }
        (y, z)
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn zero_horizon_is_identity() {
        assert_eq!(delayed_update(5, 5, 1.0, 2.5, 0.1, 0.3, 0.7).unwrap(), 2.5);
        let (y, z) =
            delayed_update_pair(3, 3, 1.0, 0.5, -0.25, 0.1, 0.1, 0.3, 0.7, 0.4, 0.2).unwrap();
        assert_eq!((y, z), (0.5, -0.25));
    }

    #[test]
    fn pinned_at_zero_stays_zero() {
        // |u| <= lambda1 keeps the prox at the origin
        assert_eq!(delayed_update(0, 100, -1.0, 0.0, 0.5, 1.0, 1.0).unwrap(), 0.0);
        assert_eq!(delayed_update(0, 100, 0.5, 0.0, 0.5, 1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn single_step_matches_hand_prox() {
        // v = x - eta u = 3, soft(3, 1) = 2, shrink by (1 + 1) -> 1
        let x = delayed_update(0, 1, -2.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((x - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scalar_forward_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for case in 0..1000 {
            let u = rng.gen_range(-3.0..3.0);
            let x = rng.gen_range(-3.0..3.0);
            let eta = rng.gen_range(0.01..2.0);
            let l1 = if case % 5 == 0 {
                0.0
            } else {
                rng.gen_range(0.0..2.0)
            };
            let l2 = rng.gen_range(0.05..3.0);
            let horizon = rng.gen_range(1..=200u64);
            let t0 = rng.gen_range(0..50u64);
            let (fast, depth) =
                delayed_update_with_depth(t0, t0 + horizon, u, x, eta, l1, l2).unwrap();
            let slow = naive_scalar(t0, t0 + horizon, u, x, eta, l1, l2);
            assert!(
                rel_close(fast, slow, 1e-9),
                "case {case}: fast {fast} vs naive {slow}"
            );
            assert!((depth as u64) <= horizon);
            // one constant drift admits at most one sign change
            assert!(depth <= 1, "depth {depth} for case {case}");
        }
    }

    #[test]
    fn pair_reduces_to_z_recursion_when_momentum_is_total() {
        // theta1 = 1, theta2 = 0: y tracks z exactly
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let u = rng.gen_range(-2.0..2.0);
            let z = rng.gen_range(-2.0..2.0);
            let y = rng.gen_range(-2.0..2.0);
            let s = rng.gen_range(0.05..1.0);
            let l1 = rng.gen_range(0.0..1.0);
            let l2 = rng.gen_range(0.1..2.0);
            let horizon = rng.gen_range(1..=50u64);
            let (y_out, z_out) =
                delayed_update_pair(0, horizon, u, y, z, 0.3, s, l1, l2, 1.0, 0.0).unwrap();
            assert!(rel_close(y_out, z_out, 1e-12));
            let expected_z = naive_scalar(0, horizon, u, z, s, l1, l2);
            assert!(rel_close(z_out, expected_z, 1e-9));
        }
    }

    #[test]
    fn pair_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4096);
        for case in 0..1000 {
            let u = rng.gen_range(-3.0..3.0);
            let z = rng.gen_range(-3.0..3.0);
            let y = rng.gen_range(-3.0..3.0);
            let w = rng.gen_range(-3.0..3.0);
            let s = rng.gen_range(0.01..1.5);
            let l1 = if case % 4 == 0 {
                0.0
            } else {
                rng.gen_range(0.0..2.0)
            };
            let l2 = rng.gen_range(0.05..3.0);
            let th1 = rng.gen_range(0.05..1.0);
            let th2 = rng.gen_range(0.0..(1.0 - th1));
            let horizon = rng.gen_range(1..=100u64);
            let (fy, fz) =
                delayed_update_pair(0, horizon, u, y, z, w, s, l1, l2, th1, th2).unwrap();
            let (ny, nz) = naive_pair(0, horizon, u, y, z, w, s, l1, l2, th1, th2);
            assert!(
                rel_close(fz, nz, 1e-9) && rel_close(fy, ny, 1e-9),
                "case {case}: fast ({fy}, {fz}) vs naive ({ny}, {nz})"
            );
        }
    }

    fn ridge_params(rng: &mut ChaCha8Rng) -> RidgePairParams {
        let th1 = rng.gen_range(0.05..1.0);
        RidgePairParams {
            theta1: th1,
            theta2: rng.gen_range(0.0..(1.0 - th1)),
            step_size: rng.gen_range(0.05..2.0),
            sigma1: if rng.gen::<bool>() {
                0.0
            } else {
                rng.gen_range(0.0..0.5)
            },
            big_l: rng.gen_range(0.5..4.0),
            lambda2: rng.gen_range(0.01..2.0),
        }
    }

    fn naive_ridge(
        t0: u64,
        t1: u64,
        u: f64,
        mut y: f64,
        mut z: f64,
        w: f64,
        p: &RidgePairParams,
    ) -> (f64, f64) {
        let th3 = 1.0 - p.theta1 - p.theta2;
        let eta = p.step_size;
        let denom = 1.0 + eta * p.sigma1;
        for _ in t0..t1 {
            let xk = p.theta1 * z + p.theta2 * w + th3 * y;
            let v = (eta * p.sigma1 * xk + z - eta / p.big_l * u) / denom;
            let prox_step = eta / (denom * p.big_l);
            let z_next = v / (1.0 + prox_step * p.lambda2);
            y = xk + p.theta1 * (z_next - z);
            z = z_next;
        }
        (y, z)
    }

    #[test]
    fn ridge_single_step_is_dense_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..200 {
            let p = ridge_params(&mut rng);
            let (u, y, z, w) = (
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let (fy, fz) = delayed_update_pair_ridge(4, 5, u, y, z, w, &p).unwrap();
            let (ny, nz) = naive_ridge(4, 5, u, y, z, w, &p);
            assert!(rel_close(fy, ny, 1e-12) && rel_close(fz, nz, 1e-12));
        }
    }

    #[test]
    fn ridge_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8192);
        for case in 0..1000 {
            let p = ridge_params(&mut rng);
            let (u, y, z, w) = (
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            );
            let horizon = rng.gen_range(1..=100u64);
            let (fy, fz) = delayed_update_pair_ridge(0, horizon, u, y, z, w, &p).unwrap();
            let (ny, nz) = naive_ridge(0, horizon, u, y, z, w, &p);
            assert!(
                rel_close(fy, ny, 1e-9) && rel_close(fz, nz, 1e-9),
                "case {case}: fast ({fy}, {fz}) vs naive ({ny}, {nz})"
            );
        }
    }

    #[test]
    fn rejects_reversed_horizon_and_missing_ridge() {
        assert!(delayed_update(5, 4, 0.0, 0.0, 0.1, 0.0, 1.0).is_err());
        assert!(delayed_update(0, 4, 0.0, 0.0, 0.1, 0.0, 0.0).is_err());
        assert!(delayed_update_pair(0, 4, 0.0, 0.0, 0.0, 0.0, 0.1, 0.5, 0.0, 0.5, 0.25).is_err());
    }

    fn small_problem() -> CompositeProblem {
        use crate::problem::{DesignMatrix, Loss};
        let data = DesignMatrix::from_rows(
            3,
            vec![
                vec![(0, 1.0), (2, -0.5)],
                vec![(1, 0.75)],
                vec![(0, -0.25), (1, 1.5)],
                vec![(2, 2.0)],
            ],
        )
        .unwrap();
        CompositeProblem::new(
            data,
            vec![1.0, -1.0, 1.0, -1.0],
            Loss::Logistic,
            1e-3,
            1e-2,
        )
        .unwrap()
    }

    #[test]
    fn lazy_solver_rejects_missing_ridge() {
        use crate::problem::{DesignMatrix, Loss};
        let data = DesignMatrix::from_rows(1, vec![vec![(0, 1.0)]]).unwrap();
        let p = CompositeProblem::new(data, vec![1.0], Loss::Logistic, 0.0, 0.0).unwrap();
        let cfg = crate::solver::LSvrgConfig::unchecked(0.1, 0.5, crate::solver::Regime::Convex);
        assert!(LazyLSvrgSolver::new(&p, cfg, vec![0.0]).is_err());
    }

    #[test]
    fn empty_batch_still_tracks_dense_trajectory() {
        use crate::solver::{LSvrgConfig, LSvrgState, Regime};
        let p = small_problem();
        let cfg = LSvrgConfig::unchecked(0.1, 0.5, Regime::StronglyConvex);
        let x0 = vec![0.4, -0.2, 0.9];
        let mut dense = LSvrgState::new(&p, x0.clone());
        let mut lazy = LazyLSvrgSolver::new(&p, cfg, x0).unwrap();
        let empty = DrawnBatch::default();
        let single = DrawnBatch {
            entries: vec![crate::sampling::BatchEntry {
                index: 1,
                multiplicity: 1,
                weight: 4.0,
            }],
        };
        for (batch, coin) in [(&empty, false), (&single, false), (&empty, true), (&single, false)]
        {
            dense.step(&p, &cfg, batch, coin);
            LazyLSvrgSolver::step(&mut lazy, &p, batch, coin);
        }
        let lx = lazy.x().to_vec();
        for (a, b) in lx.iter().zip(&dense.x) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn materialization_is_idempotent() {
        use crate::solver::{LSvrgConfig, Regime};
        let p = small_problem();
        let cfg = LSvrgConfig::unchecked(0.05, 0.25, Regime::StronglyConvex);
        let mut lazy = LazyLSvrgSolver::new(&p, cfg, vec![0.1, 0.2, 0.3]).unwrap();
        let batch = DrawnBatch {
            entries: vec![crate::sampling::BatchEntry {
                index: 0,
                multiplicity: 1,
                weight: 4.0,
            }],
        };
        for _ in 0..7 {
            LazyLSvrgSolver::step(&mut lazy, &p, &batch, false);
        }
        let first = lazy.x().to_vec();
        let ops_after_first = lazy.work.flush_coord_ops;
        let second = lazy.x().to_vec();
        assert_eq!(first, second);
        assert_eq!(ops_after_first, lazy.work.flush_coord_ops);
    }
}
