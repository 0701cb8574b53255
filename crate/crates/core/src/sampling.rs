//! Minibatch sampling schemes: fixed-size uniform subsets, independent
//! inclusion, group sampling, and sampling with replacement, together with
//! their estimator weights and an exhaustive outcome enumerator for small `n`.

use rand::Rng;

use crate::error::{Error, Result};

/// Hard cap on the number of outcomes `enumerate_outcomes` will produce.
pub const ENUMERATION_LIMIT: usize = 1_000_000;

const MARGINAL_SUM_TOL: f64 = 1e-9;
const DIST_SUM_TOL: f64 = 1e-12;
const GROUP_SUM_TOL: f64 = 1e-12;
pub const WEIGHT_IDENTITY_TOL: f64 = 1e-10;

/// A sampling scheme over `[n]`. Samplings (everything except
/// `WithReplacement`) produce sets; `WithReplacement` produces multisets.
#[derive(Clone, Debug, PartialEq)]
pub enum SamplerSpec {
    /// Uniformly random subset of fixed cardinality `tau`.
    TauNice { n: usize, tau: usize },
    /// Each index included independently with probability `marginals[i]`.
    Independent { marginals: Vec<f64>, capped: bool },
    /// Partition of `[n]` into groups; at most one index drawn per group,
    /// index `i` with marginal probability `marginals[i]`.
    Group {
        marginals: Vec<f64>,
        groups: Vec<Vec<usize>>,
        capped: bool,
    },
    /// `copies` independent draws from the distribution `dist`.
    WithReplacement { dist: Vec<f64>, copies: usize },
}

impl SamplerSpec {
    pub fn tau_nice(n: usize, tau: usize) -> Result<Self> {
        if n == 0 || tau == 0 || tau > n {
            return Err(Error::InvalidSampler(format!(
                "tau-nice needs 1 <= tau <= n, got tau = {tau}, n = {n}"
            )));
        }
        Ok(SamplerSpec::TauNice { n, tau })
    }

    pub fn independent(marginals: Vec<f64>) -> Result<Self> {
        check_marginals(&marginals)?;
        Ok(SamplerSpec::Independent {
            marginals,
            capped: false,
        })
    }

    /// Group sampling from explicit marginals and groups. The groups must
    /// partition `[n]` with per-group mass at most one.
    pub fn group(marginals: Vec<f64>, groups: Vec<Vec<usize>>, capped: bool) -> Result<Self> {
        check_marginals(&marginals)?;
        let n = marginals.len();
        let mut seen = vec![false; n];
        for group in &groups {
            if group.is_empty() {
                return Err(Error::InvalidSampler("empty group".into()));
            }
            let mut mass = 0.0;
            for &i in group {
                if i >= n || seen[i] {
                    return Err(Error::InvalidSampler(
                        "groups must partition the index set".into(),
                    ));
                }
                seen[i] = true;
                mass += marginals[i];
            }
            if mass > 1.0 + GROUP_SUM_TOL {
                return Err(Error::InvalidSampler(format!(
                    "group mass {mass} exceeds one"
                )));
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(Error::InvalidSampler(
                "groups must cover every index".into(),
            ));
        }
        let tau: f64 = marginals.iter().sum();
        let t = groups.len() as f64;
        let near_integer = (tau - tau.round()).abs() <= MARGINAL_SUM_TOL;
        let within_bound = if near_integer {
            t <= 2.0 * tau.round() - 1.0 + 0.5
        } else {
            t < 2.0 * tau + 1.0
        };
        if !within_bound {
            return Err(Error::InvalidSampler(format!(
                "group count {t} violates the bound for expected size {tau}"
            )));
        }
        Ok(SamplerSpec::Group {
            marginals,
            groups,
            capped,
        })
    }

    pub fn with_replacement(dist: Vec<f64>, copies: usize) -> Result<Self> {
        if copies == 0 {
            return Err(Error::InvalidSampler("copy count must be positive".into()));
        }
        if dist.is_empty() || dist.iter().any(|&p| p <= 0.0) {
            return Err(Error::InvalidSampler(
                "distribution entries must be positive".into(),
            ));
        }
        let total: f64 = dist.iter().sum();
        if (total - 1.0).abs() > DIST_SUM_TOL {
            return Err(Error::InvalidSampler(format!(
                "distribution sums to {total}, expected 1"
            )));
        }
        Ok(SamplerSpec::WithReplacement { dist, copies })
    }

    pub fn n(&self) -> usize {
        match self {
            SamplerSpec::TauNice { n, .. } => *n,
            SamplerSpec::Independent { marginals, .. } => marginals.len(),
            SamplerSpec::Group { marginals, .. } => marginals.len(),
            SamplerSpec::WithReplacement { dist, .. } => dist.len(),
        }
    }

    /// Expected batch size, counting multiplicity.
    pub fn expected_size(&self) -> f64 {
        match self {
            SamplerSpec::TauNice { tau, .. } => *tau as f64,
            SamplerSpec::Independent { marginals, .. } => marginals.iter().sum(),
            SamplerSpec::Group { marginals, .. } => marginals.iter().sum(),
            SamplerSpec::WithReplacement { copies, .. } => *copies as f64,
        }
    }

    /// Inclusion marginal `P[i ∈ S]` for samplings; for replacement this is
    /// the single-draw probability.
    pub fn marginal(&self, i: usize) -> f64 {
        match self {
            SamplerSpec::TauNice { n, tau } => *tau as f64 / *n as f64,
            SamplerSpec::Independent { marginals, .. } => marginals[i],
            SamplerSpec::Group { marginals, .. } => marginals[i],
            SamplerSpec::WithReplacement { dist, .. } => dist[i],
        }
    }

    /// Estimator weight `θ_i` attached to index `i` when it is drawn.
    pub fn weight(&self, i: usize) -> f64 {
        match self {
            SamplerSpec::WithReplacement { dist, copies } => {
                1.0 / (*copies as f64 * dist[i])
            }
            _ => 1.0 / self.marginal(i),
        }
    }

    pub fn is_sampling(&self) -> bool {
        !matches!(self, SamplerSpec::WithReplacement { .. })
    }

    /// Indices that form singleton groups (group sampling only).
    pub fn isolated(&self) -> Vec<usize> {
        match self {
            SamplerSpec::Group { groups, .. } => groups
                .iter()
                .filter(|g| g.len() == 1)
                .map(|g| g[0])
                .collect(),
            _ => Vec::new(),
        }
    }
}

fn check_marginals(marginals: &[f64]) -> Result<()> {
    if marginals.is_empty() {
        return Err(Error::InvalidSampler("empty marginal vector".into()));
    }
    for (i, &p) in marginals.iter().enumerate() {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidSampler(format!(
                "marginal p[{i}] = {p} outside (0, 1]"
            )));
        }
    }
    Ok(())
}

/// Greedy pass over the marginals in the given order: accumulate until the
/// running sum would exceed one, close the group, restart. Produces the
/// group-count guarantee: at most `2τ − 1` groups for integer `τ = Σ p_i`,
/// fewer than `2τ + 1` otherwise.
pub fn build_group_sampling(marginals: &[f64], tau: f64) -> Result<SamplerSpec> {
    check_marginals(marginals)?;
    let total: f64 = marginals.iter().sum();
    if (total - tau).abs() > MARGINAL_SUM_TOL && total > tau + MARGINAL_SUM_TOL {
        return Err(Error::InvalidSampler(format!(
            "marginals sum to {total}, expected at most {tau}"
        )));
    }
    let capped = total < tau - MARGINAL_SUM_TOL;
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let mut mass = 0.0;
    for (i, &p) in marginals.iter().enumerate() {
        // strict overshoot closes the group; the tolerance absorbs the
        // rounding of marginal vectors that sum to an integer exactly
        if !current.is_empty() && mass + p > 1.0 + GROUP_SUM_TOL {
            groups.push(std::mem::take(&mut current));
            mass = 0.0;
        }
        current.push(i);
        mass += p;
    }
    if !current.is_empty() {
        groups.push(current);
    }
    SamplerSpec::group(marginals.to_vec(), groups, capped)
}

/// One realized batch: distinct indices with multiplicities and weights.
/// The weighted indicator vector has entry `multiplicity · weight` at each
/// drawn index. Entries are sorted by index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DrawnBatch {
    pub entries: Vec<BatchEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchEntry {
    pub index: usize,
    pub multiplicity: u32,
    pub weight: f64,
}

impl DrawnBatch {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total size counting multiplicity.
    pub fn size(&self) -> usize {
        self.entries.iter().map(|e| e.multiplicity as usize).sum()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.index)
    }

    fn from_indices(spec: &SamplerSpec, mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        let entries = indices
            .into_iter()
            .map(|i| BatchEntry {
                index: i,
                multiplicity: 1,
                weight: spec.weight(i),
            })
            .collect();
        DrawnBatch { entries }
    }
}

/// Draws batches from a [`SamplerSpec`]. Owns the scratch state (partial
/// shuffle buffer, alias table) so repeated draws avoid reallocation.
pub struct Sampler {
    spec: SamplerSpec,
    perm: Vec<usize>,
    alias: Option<AliasTable>,
}

impl Sampler {
    pub fn new(spec: SamplerSpec) -> Self {
        let perm = match &spec {
            SamplerSpec::TauNice { n, .. } => (0..*n).collect(),
            _ => Vec::new(),
        };
        let alias = match &spec {
            SamplerSpec::WithReplacement { dist, .. } => Some(AliasTable::new(dist)),
            _ => None,
        };
        Self { spec, perm, alias }
    }

    pub fn spec(&self) -> &SamplerSpec {
        &self.spec
    }

    pub fn draw<R: Rng>(&mut self, rng: &mut R) -> DrawnBatch {
        match &self.spec {
            SamplerSpec::TauNice { n, tau } => {
                // partial Fisher-Yates over the persistent permutation
                let (n, tau) = (*n, *tau);
                for j in 0..tau {
                    let k = j + rng.gen_range(0..n - j);
                    self.perm.swap(j, k);
                }
                let picked = self.perm[..tau].to_vec();
                DrawnBatch::from_indices(&self.spec, picked)
            }
            SamplerSpec::Independent { marginals, .. } => {
                let mut picked = Vec::new();
                for (i, &p) in marginals.iter().enumerate() {
                    if rng.gen::<f64>() < p {
                        picked.push(i);
                    }
                }
                DrawnBatch::from_indices(&self.spec, picked)
            }
            SamplerSpec::Group {
                marginals, groups, ..
            } => {
                let mut picked = Vec::new();
                for group in groups {
                    // one uniform per group selects a member or nothing
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    for &i in group {
                        acc += marginals[i];
                        if u < acc {
                            picked.push(i);
                            break;
                        }
                    }
                }
                DrawnBatch::from_indices(&self.spec, picked)
            }
            SamplerSpec::WithReplacement { dist, copies } => {
                let alias = self.alias.as_ref().expect("alias table");
                let mut picked: Vec<usize> = (0..*copies).map(|_| alias.sample(rng)).collect();
                picked.sort_unstable();
                let mut entries: Vec<BatchEntry> = Vec::new();
                for i in picked {
                    match entries.last_mut() {
                        Some(e) if e.index == i => e.multiplicity += 1,
                        _ => entries.push(BatchEntry {
                            index: i,
                            multiplicity: 1,
                            weight: 1.0 / (*copies as f64 * dist[i]),
                        }),
                    }
                }
                DrawnBatch { entries }
            }
        }
    }
}

/// Walker alias table; construction is `O(n)`, sampling `O(1)`.
struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    fn new(dist: &[f64]) -> Self {
        let n = dist.len();
        let mut prob: Vec<f64> = dist.iter().map(|&p| p * n as f64).collect();
        let mut alias: Vec<usize> = (0..n).collect();
        let mut small: Vec<usize> = Vec::new();
        let mut large: Vec<usize> = Vec::new();
        for (i, &p) in prob.iter().enumerate() {
            if p < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let (Some(s), Some(l)) = (small.pop(), large.pop()) {
            alias[s] = l;
            prob[l] += prob[s] - 1.0;
            if prob[l] < 1.0 {
                small.push(l);
            } else {
                large.push(l);
            }
        }
        Self { prob, alias }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let i = rng.gen_range(0..self.prob.len());
        if rng.gen::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }
}

/// Exhaustively lists every batch outcome with its probability. Guarded by
/// [`ENUMERATION_LIMIT`]; probabilities sum to one within 1e−12.
pub fn enumerate_outcomes(spec: &SamplerSpec) -> Result<Vec<(DrawnBatch, f64)>> {
    let count = outcome_count(spec);
    if count > ENUMERATION_LIMIT as f64 {
        return Err(Error::EnumerationGuard {
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut out = Vec::new();
    match spec {
        SamplerSpec::TauNice { n, tau } => {
            let prob = 1.0 / binomial(*n, *tau);
            let mut subset = Vec::with_capacity(*tau);
            enumerate_subsets(*n, *tau, 0, &mut subset, &mut |s| {
                out.push((DrawnBatch::from_indices(spec, s.to_vec()), prob));
            });
        }
        SamplerSpec::Independent { marginals, .. } => {
            let mut picked = Vec::new();
            enumerate_independent(marginals, 0, 1.0, &mut picked, &mut |s, p| {
                out.push((DrawnBatch::from_indices(spec, s.to_vec()), p));
            });
        }
        SamplerSpec::Group {
            marginals, groups, ..
        } => {
            let mut picked = Vec::new();
            enumerate_groups(marginals, groups, 0, 1.0, &mut picked, &mut |s, p| {
                out.push((DrawnBatch::from_indices(spec, s.to_vec()), p));
            });
        }
        SamplerSpec::WithReplacement { dist, copies } => {
            let mut counts = vec![0u32; dist.len()];
            enumerate_multisets(dist, 0, *copies, &mut counts, &mut |counts| {
                let mut prob = multinomial(*copies, counts);
                let mut entries = Vec::new();
                for (i, &m) in counts.iter().enumerate() {
                    if m > 0 {
                        prob *= dist[i].powi(m as i32);
                        entries.push(BatchEntry {
                            index: i,
                            multiplicity: m,
                            weight: 1.0 / (*copies as f64 * dist[i]),
                        });
                    }
                }
                out.push((DrawnBatch { entries }, prob));
            });
        }
    }
    Ok(out)
}

fn outcome_count(spec: &SamplerSpec) -> f64 {
    match spec {
        SamplerSpec::TauNice { n, tau } => binomial(*n, *tau),
        SamplerSpec::Independent { marginals, .. } => {
            2f64.powi(marginals.len().min(1 << 10) as i32)
        }
        SamplerSpec::Group { groups, .. } => groups
            .iter()
            .map(|g| g.len() as f64 + 1.0)
            .product(),
        SamplerSpec::WithReplacement { dist, copies } => {
            binomial(dist.len() + copies - 1, *copies)
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

fn multinomial(copies: usize, counts: &[u32]) -> f64 {
    let mut acc = 1.0;
    let mut used = 0u32;
    for &m in counts {
        for j in 1..=m {
            used += 1;
            acc = acc * used as f64 / j as f64;
        }
    }
    debug_assert_eq!(used as usize, copies);
    acc
}

fn enumerate_subsets(
    n: usize,
    remaining: usize,
    start: usize,
    subset: &mut Vec<usize>,
    emit: &mut impl FnMut(&[usize]),
) {
    if remaining == 0 {
        emit(subset);
        return;
    }
    for i in start..=n - remaining {
        subset.push(i);
        enumerate_subsets(n, remaining - 1, i + 1, subset, emit);
        subset.pop();
    }
}

fn enumerate_independent(
    marginals: &[f64],
    i: usize,
    prob: f64,
    picked: &mut Vec<usize>,
    emit: &mut impl FnMut(&[usize], f64),
) {
    if i == marginals.len() {
        emit(picked, prob);
        return;
    }
    let p = marginals[i];
    // an index with p = 1 is deterministically included
    if p < 1.0 {
        enumerate_independent(marginals, i + 1, prob * (1.0 - p), picked, emit);
    }
    picked.push(i);
    enumerate_independent(marginals, i + 1, prob * p, picked, emit);
    picked.pop();
}

fn enumerate_groups(
    marginals: &[f64],
    groups: &[Vec<usize>],
    g: usize,
    prob: f64,
    picked: &mut Vec<usize>,
    emit: &mut impl FnMut(&[usize], f64),
) {
    if g == groups.len() {
        emit(picked, prob);
        return;
    }
    let mass: f64 = groups[g].iter().map(|&i| marginals[i]).sum();
    enumerate_groups(
        marginals,
        groups,
        g + 1,
        prob * (1.0 - mass).max(0.0),
        picked,
        emit,
    );
    for &i in &groups[g] {
        picked.push(i);
        enumerate_groups(marginals, groups, g + 1, prob * marginals[i], picked, emit);
        picked.pop();
    }
}

fn enumerate_multisets(
    dist: &[f64],
    i: usize,
    remaining: usize,
    counts: &mut Vec<u32>,
    emit: &mut impl FnMut(&[u32]),
) {
    if i == dist.len() - 1 {
        counts[i] = remaining as u32;
        emit(counts);
        counts[i] = 0;
        return;
    }
    for m in 0..=remaining {
        counts[i] = m as u32;
        enumerate_multisets(dist, i + 1, remaining - m, counts, emit);
    }
    counts[i] = 0;
}

/// Checks the unbiasedness identity `E[θ_S I_S] e = e` by enumeration,
/// within 1e−10 per coordinate.
pub fn verify_weight_identity(spec: &SamplerSpec) -> Result<bool> {
    let outcomes = enumerate_outcomes(spec)?;
    Ok(weight_identity_holds(&outcomes, spec.n()))
}

/// Same check against an explicit outcome list (lets tests corrupt weights).
pub fn weight_identity_holds(outcomes: &[(DrawnBatch, f64)], n: usize) -> bool {
    let mut expected = vec![0.0; n];
    for (batch, prob) in outcomes {
        for e in &batch.entries {
            expected[e.index] += prob * e.multiplicity as f64 * e.weight;
        }
    }
    expected
        .iter()
        .all(|&v| (v - 1.0).abs() <= WEIGHT_IDENTITY_TOL)
}
