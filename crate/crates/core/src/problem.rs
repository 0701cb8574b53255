//! Composite finite-sum objective: `P(x) = (1/n) Σ φ_i(aᵢᵀx) + ψ(x)` with
//! elastic-net regularizer `ψ(x) = (λ₂/2)‖x‖² + λ₁‖x‖₁` and sparse rows `aᵢ`.

use crate::error::{Error, Result};

/// Relative tolerance for the cached row-norm invariant.
pub const ROW_NORM_TOL: f64 = 1e-12;

/// Sparse design matrix in compressed row form. Rows are `(feature, value)`
/// pairs with strictly increasing feature indices.
#[derive(Clone, Debug)]
pub struct DesignMatrix {
    n: usize,
    d: usize,
    rows: Vec<Vec<(usize, f64)>>,
    row_norms_sq: Vec<f64>,
}

impl DesignMatrix {
    pub fn from_rows(d: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            let mut prev: Option<usize> = None;
            for &(j, _) in row {
                if j >= d {
                    return Err(Error::InvalidData(format!(
                        "row {i}: feature index {j} out of range for d = {d}"
                    )));
                }
                if let Some(p) = prev {
                    if j <= p {
                        return Err(Error::InvalidData(format!(
                            "row {i}: feature indices must be strictly increasing"
                        )));
                    }
                }
                prev = Some(j);
            }
        }
        let row_norms_sq = rows
            .iter()
            .map(|r| r.iter().map(|&(_, v)| v * v).sum())
            .collect();
        Ok(Self {
            n: rows.len(),
            d,
            rows,
            row_norms_sq,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn row_norm_sq(&self, i: usize) -> f64 {
        self.row_norms_sq[i]
    }

    /// `aᵢᵀx`.
    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        self.rows[i].iter().map(|&(j, v)| v * x[j]).sum()
    }
}

/// Per-example loss `φ_i` applied to the margin `aᵢᵀx`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Loss {
    /// `φ(t) = ln(1 + exp(−y t))`, labels in {−1, +1}.
    Logistic,
    /// `φ(t) = (t − y)² / 2`, real labels.
    Squared,
    /// `φ(t) = (sigmoid(t) − y)²`, labels in {0, 1}. Nonconvex.
    SigmoidSquared,
}

impl Loss {
    /// The modulus `γ` such that `φ` is `1/γ`-smooth.
    pub fn gamma(self) -> f64 {
        match self {
            // second derivative of the logit loss is bounded by 1/4
            Loss::Logistic => 4.0,
            Loss::Squared => 1.0,
            // |d²/dt² (sigmoid(t) − y)²| ≤ 2·(1/16) + 2·max|sigmoid''| < 1/2
            Loss::SigmoidSquared => 2.0,
        }
    }

    pub fn is_convex(self) -> bool {
        !matches!(self, Loss::SigmoidSquared)
    }

    pub fn value(self, t: f64, y: f64) -> f64 {
        match self {
            Loss::Logistic => softplus(-y * t),
            Loss::Squared => {
                let r = t - y;
                0.5 * r * r
            }
            Loss::SigmoidSquared => {
                let r = sigmoid(t) - y;
                r * r
            }
        }
    }

    /// Scalar derivative `φ'(t)`.
    pub fn derivative(self, t: f64, y: f64) -> f64 {
        match self {
            Loss::Logistic => -y * sigmoid(-y * t),
            Loss::Squared => t - y,
            Loss::SigmoidSquared => {
                let s = sigmoid(t);
                2.0 * (s - y) * s * (1.0 - s)
            }
        }
    }

    fn coerce_labels(self, labels: Vec<f64>) -> Result<Vec<f64>> {
        match self {
            Loss::Squared => Ok(labels),
            Loss::Logistic => {
                if labels.iter().all(|&y| y == -1.0 || y == 1.0) {
                    Ok(labels)
                } else if labels.iter().all(|&y| y == 0.0 || y == 1.0) {
                    Ok(labels
                        .into_iter()
                        .map(|y| if y == 0.0 { -1.0 } else { 1.0 })
                        .collect())
                } else {
                    Err(Error::InvalidData(
                        "logistic labels must lie in {-1,+1} or {0,1}".into(),
                    ))
                }
            }
            Loss::SigmoidSquared => {
                if labels.iter().all(|&y| y == 0.0 || y == 1.0) {
                    Ok(labels)
                } else if labels.iter().all(|&y| y == -1.0 || y == 1.0) {
                    Ok(labels
                        .into_iter()
                        .map(|y| if y == -1.0 { 0.0 } else { 1.0 })
                        .collect())
                } else {
                    Err(Error::InvalidData(
                        "sigmoid-squared labels must lie in {0,1} or {-1,+1}".into(),
                    ))
                }
            }
        }
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// The composite problem together with its smoothness and strong-convexity
/// constants. Immutable after construction; safe to share across runs.
#[derive(Clone, Debug)]
pub struct CompositeProblem {
    data: DesignMatrix,
    labels: Vec<f64>,
    loss: Loss,
    lambda1: f64,
    lambda2: f64,
    l_i: Vec<f64>,
    l_f: f64,
    mu_f: f64,
    mu_psi: f64,
}

impl CompositeProblem {
    pub fn new(
        data: DesignMatrix,
        labels: Vec<f64>,
        loss: Loss,
        lambda1: f64,
        lambda2: f64,
    ) -> Result<Self> {
        if data.n() == 0 {
            return Err(Error::InvalidData("need at least one example".into()));
        }
        if labels.len() != data.n() {
            return Err(Error::DimensionMismatch {
                expected: data.n(),
                got: labels.len(),
            });
        }
        if lambda1 < 0.0 || lambda2 < 0.0 {
            return Err(Error::InvalidConfig(
                "regularization weights must be nonnegative".into(),
            ));
        }
        let labels = loss.coerce_labels(labels)?;
        let (l_i, l_f) = estimate_constants(&data, loss);
        Ok(Self {
            data,
            labels,
            loss,
            lambda1,
            lambda2,
            l_i,
            l_f,
            // ridge lives in ψ, so f itself carries no strong convexity
            mu_f: 0.0,
            mu_psi: lambda2,
        })
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn d(&self) -> usize {
        self.data.d()
    }

    pub fn data(&self) -> &DesignMatrix {
        &self.data
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn gamma(&self) -> f64 {
        self.loss.gamma()
    }

    /// Per-component smoothness constants `L_i`.
    pub fn l_i(&self) -> &[f64] {
        &self.l_i
    }

    /// Smoothness constant of `f = (1/n) Σ f_i`.
    pub fn l_f(&self) -> f64 {
        self.l_f
    }

    /// `L̄ = (1/n) Σ L_i`.
    pub fn l_bar(&self) -> f64 {
        self.l_i.iter().sum::<f64>() / self.n() as f64
    }

    pub fn mu_f(&self) -> f64 {
        self.mu_f
    }

    pub fn mu_psi(&self) -> f64 {
        self.mu_psi
    }

    pub fn mu(&self) -> f64 {
        self.mu_f + self.mu_psi
    }

    /// Margin `aᵢᵀx`.
    pub fn margin(&self, i: usize, x: &[f64]) -> f64 {
        self.data.row_dot(i, x)
    }

    /// Scalar derivative `φ_i'(aᵢᵀx)`.
    pub fn component_derivative(&self, i: usize, x: &[f64]) -> f64 {
        self.loss.derivative(self.margin(i, x), self.labels[i])
    }

    /// Scalar derivative from a precomputed margin.
    pub fn derivative_from_margin(&self, i: usize, margin: f64) -> f64 {
        self.loss.derivative(margin, self.labels[i])
    }

    /// `∇f_i(x) = φ_i'(aᵢᵀx)·aᵢ`, with the sparsity pattern of row `i`.
    pub fn component_gradient(&self, i: usize, x: &[f64]) -> Result<Vec<(usize, f64)>> {
        if i >= self.n() {
            return Err(Error::IndexOutOfRange {
                index: i,
                n: self.n(),
            });
        }
        if x.len() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                got: x.len(),
            });
        }
        let s = self.component_derivative(i, x);
        Ok(self.data.row(i).iter().map(|&(j, v)| (j, s * v)).collect())
    }

    /// Dense `∇f(x) = (1/n) Σ ∇f_i(x)`.
    pub fn full_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                got: x.len(),
            });
        }
        let mut g = vec![0.0; self.d()];
        for i in 0..self.n() {
            let s = self.component_derivative(i, x);
            for &(j, v) in self.data.row(i) {
                g[j] += s * v;
            }
        }
        let inv_n = 1.0 / self.n() as f64;
        for gj in &mut g {
            *gj *= inv_n;
        }
        Ok(g)
    }

    /// `f(x)` (the smooth part only).
    pub fn loss_value(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n() {
            acc += self.loss.value(self.margin(i, x), self.labels[i]);
        }
        acc / self.n() as f64
    }

    /// `ψ(x) = (λ₂/2)‖x‖² + λ₁‖x‖₁`.
    pub fn reg_value(&self, x: &[f64]) -> f64 {
        let sq: f64 = x.iter().map(|v| v * v).sum();
        let l1: f64 = x.iter().map(|v| v.abs()).sum();
        0.5 * self.lambda2 * sq + self.lambda1 * l1
    }

    /// `P(x) = f(x) + ψ(x)`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.loss_value(x) + self.reg_value(x)
    }

    /// Bregman divergence `f(x) − f(y) − ⟨∇f(y), x − y⟩`.
    pub fn bregman(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let gy = self.full_gradient(y)?;
        let inner: f64 = gy
            .iter()
            .zip(x.iter().zip(y.iter()))
            .map(|(g, (a, b))| g * (a - b))
            .sum();
        Ok(self.loss_value(x) - self.loss_value(y) - inner)
    }

    /// One coordinate of `prox_η(·)`: soft-threshold then shrink.
    pub fn prox_scalar(&self, eta: f64, v: f64) -> f64 {
        prox_elastic_net(v, eta, self.lambda1, self.lambda2)
    }

    /// `prox_η(v) = argmin_y { ‖v−y‖²/(2η) + ψ(y) }`, coordinatewise.
    pub fn prox_psi(&self, eta: f64, v: &[f64]) -> Result<Vec<f64>> {
        if eta <= 0.0 {
            return Err(Error::NonPositiveStep(eta));
        }
        Ok(v.iter().map(|&vj| self.prox_scalar(eta, vj)).collect())
    }

    /// Gradient-mapping norm `‖(x − prox_η̄(x − η̄∇f(x)))/η̄‖` with `η̄ = 1/L_f`.
    pub fn grad_map_norm(&self, x: &[f64]) -> Result<f64> {
        let eta = if self.l_f > 0.0 { 1.0 / self.l_f } else { 1.0 };
        let g = self.full_gradient(x)?;
        let mut acc = 0.0;
        for j in 0..self.d() {
            let p = self.prox_scalar(eta, x[j] - eta * g[j]);
            let r = (x[j] - p) / eta;
            acc += r * r;
        }
        Ok(acc.sqrt())
    }
}

/// Elastic-net proximal map for a single coordinate.
pub fn prox_elastic_net(v: f64, eta: f64, lambda1: f64, lambda2: f64) -> f64 {
    let shifted = v.abs() - eta * lambda1;
    if shifted <= 0.0 {
        0.0
    } else {
        v.signum() * shifted / (1.0 + eta * lambda2)
    }
}

/// `L_i = ‖aᵢ‖²/γ` and `L_f = λ_max(AᵀA)/(γn)` by power iteration
/// (relative tolerance 1e−6, at most 1000 iterations, capped at `L̄`).
pub fn estimate_constants(data: &DesignMatrix, loss: Loss) -> (Vec<f64>, f64) {
    let gamma = loss.gamma();
    let n = data.n();
    let l_i: Vec<f64> = (0..n).map(|i| data.row_norm_sq(i) / gamma).collect();
    let l_bar = l_i.iter().sum::<f64>() / n as f64;
    let l_f = match max_eigenvalue_gram(data) {
        Some(lambda) => (lambda / (gamma * n as f64)).min(l_bar),
        None => l_bar,
    };
    (l_i, l_f)
}

/// Largest eigenvalue of `AᵀA` by power iteration. `None` when the iteration
/// fails to converge within 1000 rounds.
fn max_eigenvalue_gram(data: &DesignMatrix) -> Option<f64> {
    let d = data.d();
    let n = data.n();
    if d == 0 {
        return Some(0.0);
    }
    // deterministic start, mildly tilted so no eigenvector is exactly missed
    let mut v: Vec<f64> = (0..d).map(|j| 1.0 + 1e-3 * j as f64).collect();
    normalize(&mut v);
    let mut prev = f64::INFINITY;
    for _ in 0..1000 {
        let mut w = vec![0.0; d];
        let mut rayleigh = 0.0;
        for i in 0..n {
            let t = data.row_dot(i, &v);
            rayleigh += t * t;
            for &(j, a) in data.row(i) {
                w[j] += a * t;
            }
        }
        if rayleigh == 0.0 {
            return Some(0.0);
        }
        if (rayleigh - prev).abs() <= 1e-6 * rayleigh {
            return Some(rayleigh);
        }
        prev = rayleigh;
        normalize(&mut w);
        v = w;
    }
    None
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Per-example scalar derivatives at the reference point `w` together with
/// the anchored full gradient `(1/n) G(w) e`.
#[derive(Clone, Debug)]
pub struct GradTable {
    derivs: Vec<f64>,
    aggregate: Vec<f64>,
}

impl GradTable {
    /// Full pass over the data: `n` component derivatives plus one scatter.
    pub fn new(problem: &CompositeProblem, w: &[f64]) -> Self {
        let n = problem.n();
        let mut derivs = Vec::with_capacity(n);
        let mut aggregate = vec![0.0; problem.d()];
        for i in 0..n {
            let s = problem.component_derivative(i, w);
            derivs.push(s);
            for &(j, v) in problem.data().row(i) {
                aggregate[j] += s * v;
            }
        }
        let inv_n = 1.0 / n as f64;
        for a in &mut aggregate {
            *a *= inv_n;
        }
        Self { derivs, aggregate }
    }

    pub fn derivative(&self, i: usize) -> f64 {
        self.derivs[i]
    }

    pub fn derivatives(&self) -> &[f64] {
        &self.derivs
    }

    /// `(1/n) G(w) e`.
    pub fn aggregate(&self) -> &[f64] {
        &self.aggregate
    }
}
