//! Expected-smoothness bounds for each sampling scheme and the importance
//! marginals that minimize them.
//!
//! Three constants are tracked per `(problem, sampler)` pair:
//! `l1` bounds the second moment of the anchored estimator difference by the
//! Bregman divergence of `f`, `l2` the centered version, and `l3` the
//! centered version against `‖x − y‖²`.

use crate::error::{Error, Result};
use crate::sampling::{enumerate_outcomes, SamplerSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundSource {
    TauNice,
    Group,
    WithReplacement,
    BetaEnumeration,
    Eso,
}

/// Expected-smoothness bounds attached to a `(problem, sampler)` pair.
#[derive(Clone, Debug)]
pub struct SmoothnessProfile {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub source: BoundSource,
    /// Per-index `β_i` values when computed by enumeration.
    pub beta: Option<Vec<f64>>,
    /// Caller-supplied separable-overapproximation parameters.
    pub v: Option<Vec<f64>>,
}

impl SmoothnessProfile {
    fn new(l1: f64, l2: f64, l3: f64, source: BoundSource) -> Self {
        debug_assert!(l1 >= 0.0 && l2 >= 0.0 && l3 >= 0.0);
        Self {
            l1,
            l2,
            l3,
            source,
            beta: None,
            v: None,
        }
    }
}

/// Bounds for the uniform fixed-size scheme. For `n = 1` the scheme is the
/// deterministic full batch: `l1 = L_f`, `l2 = l3 = 0`.
pub fn bounds_tau_nice(l_i: &[f64], l_f: f64, tau: usize) -> Result<SmoothnessProfile> {
    let n = l_i.len();
    if tau == 0 || tau > n {
        return Err(Error::InvalidSampler(format!(
            "tau = {tau} out of range for n = {n}"
        )));
    }
    if n == 1 {
        return Ok(SmoothnessProfile::new(l_f, 0.0, 0.0, BoundSource::TauNice));
    }
    let (nf, tf) = (n as f64, tau as f64);
    let l_max = l_i.iter().cloned().fold(0.0, f64::max);
    let mean_sq = l_i.iter().map(|l| l * l).sum::<f64>() / nf;
    let c = (nf - tf) / (tf * (nf - 1.0));
    let l1 = nf * (tf - 1.0) / (tf * (nf - 1.0)) * l_f + c * l_max;
    Ok(SmoothnessProfile::new(
        l1,
        c * l_max,
        c * mean_sq,
        BoundSource::TauNice,
    ))
}

/// Bounds for a group sampling, split over isolated and grouped indices.
pub fn bounds_group(l_i: &[f64], l_f: f64, spec: &SamplerSpec) -> Result<SmoothnessProfile> {
    let (marginals, groups) = match spec {
        SamplerSpec::Group {
            marginals, groups, ..
        } => (marginals, groups),
        _ => {
            return Err(Error::InvalidSampler(
                "group bounds need a group sampling".into(),
            ))
        }
    };
    let n = l_i.len();
    if marginals.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: marginals.len(),
        });
    }
    let mut isolated = vec![false; n];
    for g in groups {
        if g.len() == 1 {
            isolated[g[0]] = true;
        }
    }
    let mut m = 0.0f64;
    let mut l3_sum = 0.0;
    for i in 0..n {
        let (weighted, sq) = if isolated[i] {
            let c = 1.0 / marginals[i] - 1.0;
            (c * l_i[i], c * l_i[i] * l_i[i])
        } else {
            let c = 1.0 / marginals[i];
            (c * l_i[i], c * l_i[i] * l_i[i])
        };
        m = m.max(weighted);
        l3_sum += sq;
    }
    let nf = n as f64;
    Ok(SmoothnessProfile::new(
        l_f + m / nf,
        m / nf,
        l3_sum / (nf * nf),
        BoundSource::Group,
    ))
}

/// Bounds for independent inclusion sampling: the group formulas with every
/// index isolated.
pub fn bounds_independent(l_i: &[f64], l_f: f64, marginals: &[f64]) -> Result<SmoothnessProfile> {
    let n = l_i.len();
    if marginals.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: marginals.len(),
        });
    }
    if marginals.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
        return Err(Error::InvalidSampler("marginals must lie in (0, 1]".into()));
    }
    let mut m = 0.0f64;
    let mut l3_sum = 0.0;
    for i in 0..n {
        let c = 1.0 / marginals[i] - 1.0;
        m = m.max(c * l_i[i]);
        l3_sum += c * l_i[i] * l_i[i];
    }
    let nf = n as f64;
    Ok(SmoothnessProfile::new(
        l_f + m / nf,
        m / nf,
        l3_sum / (nf * nf),
        BoundSource::Group,
    ))
}

/// Bounds for sampling with replacement from distribution `dist`.
pub fn bounds_with_replacement(
    l_i: &[f64],
    l_f: f64,
    copies: usize,
    dist: &[f64],
) -> Result<SmoothnessProfile> {
    let n = l_i.len();
    if dist.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: dist.len(),
        });
    }
    if copies == 0 {
        return Err(Error::InvalidSampler("copy count must be positive".into()));
    }
    if dist.iter().any(|&p| p <= 0.0) {
        return Err(Error::InvalidSampler(
            "distribution entries must be positive".into(),
        ));
    }
    let (nf, tf) = (n as f64, copies as f64);
    let ratio_max = l_i
        .iter()
        .zip(dist)
        .map(|(&l, &p)| l / p)
        .fold(0.0, f64::max);
    let ratio_sq_sum: f64 = l_i.iter().zip(dist).map(|(&l, &p)| l * l / p).sum();
    let moment = ratio_max / (nf * tf);
    Ok(SmoothnessProfile::new(
        (1.0 - 1.0 / tf) * l_f + moment,
        moment,
        ratio_sq_sum / (nf * nf * tf),
        BoundSource::WithReplacement,
    ))
}

/// Bounds via the enumerated `β_i = Σ_{C ∋ i} p_C |C| θ_i²`. Samplings only.
pub fn bounds_beta(l_i: &[f64], spec: &SamplerSpec) -> Result<SmoothnessProfile> {
    if !spec.is_sampling() {
        return Err(Error::InvalidSampler(
            "beta bounds are defined for samplings, not replacement".into(),
        ));
    }
    let n = l_i.len();
    if spec.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: spec.n(),
        });
    }
    let outcomes = enumerate_outcomes(spec)?;
    let mut beta = vec![0.0; n];
    for (batch, prob) in &outcomes {
        let card = batch.size() as f64;
        for e in &batch.entries {
            beta[e.index] += prob * card * e.weight * e.weight;
        }
    }
    let nf = n as f64;
    let l1 = l_i
        .iter()
        .zip(&beta)
        .map(|(&l, &b)| l * b)
        .fold(0.0, f64::max)
        / nf;
    let l3 = l_i
        .iter()
        .zip(&beta)
        .map(|(&l, &b)| b * l * l)
        .sum::<f64>()
        / (nf * nf);
    let mut profile = SmoothnessProfile::new(l1, l1, l3, BoundSource::BetaEnumeration);
    profile.beta = Some(beta);
    Ok(profile)
}

/// Bounds from caller-supplied separable-overapproximation parameters `v_i`
/// for a sampling with marginals `p_i` and `1/γ`-smooth losses.
pub fn bounds_eso(
    v: &[f64],
    marginals: &[f64],
    gamma: f64,
    row_norms_sq: &[f64],
) -> Result<SmoothnessProfile> {
    let n = v.len();
    if marginals.len() != n || row_norms_sq.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: marginals.len().min(row_norms_sq.len()),
        });
    }
    if gamma <= 0.0 {
        return Err(Error::InvalidConfig("gamma must be positive".into()));
    }
    if v.iter().any(|&vi| vi < 0.0) {
        return Err(Error::InvalidConfig(
            "overapproximation parameters must be nonnegative".into(),
        ));
    }
    if marginals.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
        return Err(Error::InvalidSampler("marginals must lie in (0, 1]".into()));
    }
    let nf = n as f64;
    let l1 = v
        .iter()
        .zip(marginals)
        .map(|(&vi, &p)| vi / p)
        .fold(0.0, f64::max)
        / (nf * gamma);
    let l3 = v
        .iter()
        .zip(marginals)
        .zip(row_norms_sq)
        .map(|((&vi, &p), &a)| vi * a / p)
        .sum::<f64>()
        / (nf * nf * gamma * gamma);
    let mut profile = SmoothnessProfile::new(l1, l1, l3, BoundSource::Eso);
    profile.v = Some(v.to_vec());
    Ok(profile)
}

/// Marginals that minimize the smoothness bounds at expected batch size
/// `tau`: a capped proportional allocation for group sampling and the
/// normalized constants for sampling with replacement.
#[derive(Clone, Debug)]
pub struct ImportanceMarginals {
    /// `p_i` with `min{q_i, 1} ≤ p_i ≤ 1` and `Σ p_i = τ`.
    pub group: Vec<f64>,
    /// `p̃_i = L_i / Σ L_j`.
    pub replacement: Vec<f64>,
}

pub fn importance_marginals(l_i: &[f64], tau: f64) -> Result<ImportanceMarginals> {
    let n = l_i.len();
    if !(tau >= 1.0 && tau <= n as f64) {
        return Err(Error::InvalidSampler(format!(
            "tau = {tau} out of range for n = {n}"
        )));
    }
    let weights = positive_weights(l_i);
    let group = match weights {
        None => vec![tau / n as f64; n],
        Some(ref w) => capped_proportional(w, tau),
    };
    let replacement = match weights {
        None => vec![1.0 / n as f64; n],
        Some(ref w) => {
            let total: f64 = w.iter().sum();
            w.iter().map(|&l| l / total).collect()
        }
    };
    Ok(ImportanceMarginals { group, replacement })
}

/// The convenience variant `p_i = min{q_i, 1}` with expected size at most
/// `tau`; the caller must treat the resulting spec as capped.
pub fn importance_marginals_practical(l_i: &[f64], tau: f64) -> Result<Vec<f64>> {
    let n = l_i.len();
    if !(tau >= 1.0 && tau <= n as f64) {
        return Err(Error::InvalidSampler(format!(
            "tau = {tau} out of range for n = {n}"
        )));
    }
    match positive_weights(l_i) {
        None => Ok(vec![tau / n as f64; n]),
        Some(w) => {
            let total: f64 = w.iter().sum();
            Ok(w.iter().map(|&l| (tau * l / total).min(1.0)).collect())
        }
    }
}

/// All-zero constants fall back to uniform; isolated zeros are floored to a
/// vanishing share so every marginal stays positive (proper sampling).
fn positive_weights(l_i: &[f64]) -> Option<Vec<f64>> {
    let max = l_i.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return None;
    }
    Some(l_i.iter().map(|&l| l.max(1e-12 * max)).collect())
}

/// Iterative water-filling: indices whose proportional share exceeds one are
/// pinned there and the residual budget is re-split over the rest.
pub fn capped_proportional(weights: &[f64], budget: f64) -> Vec<f64> {
    let n = weights.len();
    let mut p = vec![0.0; n];
    let mut fixed = vec![false; n];
    let mut remaining = budget;
    loop {
        let active_sum: f64 = weights
            .iter()
            .zip(&fixed)
            .filter(|(_, &f)| !f)
            .map(|(&w, _)| w)
            .sum();
        if active_sum <= 0.0 {
            break;
        }
        let mut capped_any = false;
        for i in 0..n {
            if !fixed[i] {
                let share = remaining * weights[i] / active_sum;
                if share >= 1.0 {
                    p[i] = 1.0;
                    fixed[i] = true;
                    remaining -= 1.0;
                    capped_any = true;
                }
            }
        }
        if !capped_any {
            for i in 0..n {
                if !fixed[i] {
                    p[i] = remaining * weights[i] / active_sum;
                }
            }
            break;
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::build_group_sampling;

    #[test]
    fn tau_nice_full_batch_has_no_variance() {
        let p = bounds_tau_nice(&[1.0, 2.0, 3.0], 1.5, 3).unwrap();
        assert!((p.l1 - 1.5).abs() < 1e-15);
        assert_eq!(p.l2, 0.0);
        assert_eq!(p.l3, 0.0);
    }

    #[test]
    fn tau_nice_serial() {
        let p = bounds_tau_nice(&[1.0, 2.0, 3.0], 1.5, 1).unwrap();
        assert!((p.l1 - 3.0).abs() < 1e-15);
        assert!((p.l2 - 3.0).abs() < 1e-15);
        assert!((p.l3 - (1.0 + 4.0 + 9.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tau_nice_midrange_value() {
        let p = bounds_tau_nice(&[1.0, 2.0, 3.0], 2.0, 2).unwrap();
        assert!((p.l1 - 2.25).abs() < 1e-15);
        assert!(p.l2 <= p.l1 + 1e-12);
    }

    #[test]
    fn group_all_isolated_unit_marginals() {
        let spec = SamplerSpec::group(
            vec![1.0, 1.0],
            vec![vec![0], vec![1]],
            false,
        )
        .unwrap();
        let p = bounds_group(&[1.0, 2.0], 0.9, &spec).unwrap();
        assert!((p.l1 - 0.9).abs() < 1e-15);
        assert_eq!(p.l2, 0.0);
        assert_eq!(p.l3, 0.0);
    }

    #[test]
    fn group_single_pair() {
        let spec = SamplerSpec::group(vec![0.5, 0.5], vec![vec![0, 1]], false).unwrap();
        let p = bounds_group(&[1.0, 1.0], 1.0, &spec).unwrap();
        assert!((p.l1 - 2.0).abs() < 1e-15);
        assert!((p.l2 - 1.0).abs() < 1e-15);
        assert!((p.l3 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn importance_group_meets_mean_bounds() {
        let l = [1.0, 1.0, 6.0];
        let tau = 2.0;
        let m = importance_marginals(&l, tau).unwrap();
        let spec = build_group_sampling(&m.group, tau).unwrap();
        let l_bar = l.iter().sum::<f64>() / 3.0;
        let l_f = 1.2; // any valid smoothness constant below l_bar
        let p = bounds_group(&l, l_f, &spec).unwrap();
        assert!(p.l1 <= l_f + l_bar / tau + 1e-12);
        assert!(p.l2 <= l_bar / tau + 1e-12);
        assert!(p.l3 <= l_bar * l_bar / tau + 1e-12);
    }

    #[test]
    fn replacement_serial_uniform() {
        let l = [1.0, 2.0, 4.0];
        let p = bounds_with_replacement(&l, 1.0, 1, &[1.0 / 3.0; 3]).unwrap();
        assert!((p.l1 - 4.0).abs() < 1e-12);
        assert!((p.l2 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn replacement_importance_is_tight() {
        let l = [1.0, 2.0, 5.0];
        let total: f64 = l.iter().sum();
        let dist: Vec<f64> = l.iter().map(|&x| x / total).collect();
        let tau = 4;
        let p = bounds_with_replacement(&l, 0.5, tau, &dist).unwrap();
        let l_bar = total / 3.0;
        assert!((p.l2 - l_bar / tau as f64).abs() < 1e-12);
        assert!((p.l3 - l_bar * l_bar / tau as f64).abs() < 1e-12);
    }

    #[test]
    fn replacement_direct_value() {
        let p = bounds_with_replacement(&[1.0, 3.0], 1.0, 2, &[0.25, 0.75]).unwrap();
        assert!((p.l2 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn beta_full_batch() {
        let spec = SamplerSpec::independent(vec![1.0, 1.0, 1.0]).unwrap();
        let p = bounds_beta(&[1.0, 2.0, 3.0], &spec).unwrap();
        let beta = p.beta.as_ref().unwrap();
        for &b in beta {
            assert!((b - 3.0).abs() < 1e-12);
        }
        assert!((p.l1 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn beta_serial_uniform() {
        let n = 3;
        let spec = SamplerSpec::group(
            vec![1.0 / n as f64; n],
            vec![(0..n).collect()],
            false,
        )
        .unwrap();
        let p = bounds_beta(&[1.0, 2.0, 3.0], &spec).unwrap();
        for &b in p.beta.as_ref().unwrap() {
            assert!((b - n as f64).abs() < 1e-12);
        }
        assert!((p.l1 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn beta_tau_nice_closed_form() {
        let spec = SamplerSpec::tau_nice(3, 2).unwrap();
        let p = bounds_beta(&[1.0, 1.0, 1.0], &spec).unwrap();
        for &b in p.beta.as_ref().unwrap() {
            assert!((b - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_rejects_replacement() {
        let spec = SamplerSpec::with_replacement(vec![0.5, 0.5], 2).unwrap();
        assert!(bounds_beta(&[1.0, 1.0], &spec).is_err());
    }

    #[test]
    fn eso_singleton_matches_component_constants() {
        // serial sampling with v_i = ‖a_i‖² reproduces max L_i
        let n = 4;
        let row_norms = [1.0, 4.0, 2.0, 0.5];
        let gamma = 4.0;
        let marginals = vec![1.0 / n as f64; n];
        let p = bounds_eso(&row_norms, &marginals, gamma, &row_norms).unwrap();
        let l_max = row_norms.iter().map(|&a| a / gamma).fold(0.0, f64::max);
        assert!((p.l1 - l_max).abs() < 1e-12);
    }

    #[test]
    fn eso_zero_and_scaling() {
        let marginals = [0.5, 0.5];
        let norms = [1.0, 2.0];
        let zero = bounds_eso(&[0.0, 0.0], &marginals, 1.0, &norms).unwrap();
        assert_eq!((zero.l1, zero.l3), (0.0, 0.0));
        let base = bounds_eso(&[1.0, 2.0], &marginals, 1.0, &norms).unwrap();
        let doubled = bounds_eso(&[2.0, 4.0], &marginals, 1.0, &norms).unwrap();
        assert!((doubled.l1 - 2.0 * base.l1).abs() < 1e-12);
        assert!((doubled.l3 - 2.0 * base.l3).abs() < 1e-12);
    }

    #[test]
    fn importance_uniform_constants_reduce_to_uniform() {
        let m = importance_marginals(&[2.0, 2.0, 2.0, 2.0], 2.0).unwrap();
        for &p in &m.group {
            assert!((p - 0.5).abs() < 1e-12);
        }
        for &p in &m.replacement {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn importance_caps_heavy_index() {
        let m = importance_marginals(&[1.0, 1.0, 6.0], 2.0).unwrap();
        assert!((m.group[0] - 0.5).abs() < 1e-12);
        assert!((m.group[1] - 0.5).abs() < 1e-12);
        assert!((m.group[2] - 1.0).abs() < 1e-12);
        let sum: f64 = m.group.iter().sum();
        assert!((sum - 2.0).abs() < 1e-9);
        // q_i = min{q_i,1} ≤ p_i ≤ 1
        let total = 8.0f64;
        for (i, &l) in [1.0f64, 1.0, 6.0].iter().enumerate() {
            let q = (2.0 * l / total).min(1.0);
            assert!(m.group[i] >= q - 1e-12 && m.group[i] <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn importance_full_budget_pins_everything() {
        let m = importance_marginals(&[1.0, 3.0, 9.0], 3.0).unwrap();
        for &p in &m.group {
            assert!((p - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn importance_zero_constants_fall_back_to_uniform() {
        let m = importance_marginals(&[0.0, 0.0], 1.0).unwrap();
        for &p in &m.group {
            assert!((p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn practical_mode_never_exceeds_budget() {
        let p = importance_marginals_practical(&[1.0, 1.0, 6.0], 2.0).unwrap();
        let sum: f64 = p.iter().sum();
        assert!(sum <= 2.0 + 1e-12);
        assert!((p[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn l2_never_exceeds_l1_for_samplings() {
        let l = [0.5, 2.0, 1.0, 4.0];
        let l_f = 1.0;
        let profiles = vec![
            bounds_tau_nice(&l, l_f, 2).unwrap(),
            bounds_group(
                &l,
                l_f,
                &build_group_sampling(&[0.5, 0.5, 0.5, 0.5], 2.0).unwrap(),
            )
            .unwrap(),
            bounds_beta(&l, &SamplerSpec::tau_nice(4, 2).unwrap()).unwrap(),
        ];
        for p in profiles {
            assert!(p.l2 <= p.l1 + 1e-12);
        }
    }
}
