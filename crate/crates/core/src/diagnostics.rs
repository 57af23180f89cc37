//! Convolution powers, total variation curves for the left walk, and the
//! empirical law of `tau`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::construction::Construction;
use crate::group::GroupElement;
use crate::heavy_tail::LevelLaw;
use crate::measure::{measure_atoms, TruncatedMeasure};
use crate::sampler::{Color, Step, StepTable, Trajectory};
use crate::set::CapExceeded;
use crate::tail::{perturb_first, tau, TailError, TauOutcome, WSets};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvolveOptions {
    pub cap: usize,
    /// Drop atoms lighter than this after each product, moving their mass
    /// into the deficit.
    pub epsilon: Option<f64>,
}

impl Default for ConvolveOptions {
    fn default() -> Self {
        Self { cap: crate::set::DEFAULT_SET_CAP, epsilon: None }
    }
}

/// `m1 * m2`, with the mass dropped by sparsification returned separately
/// (it is also included in the deficit).
pub fn convolve(
    m1: &TruncatedMeasure,
    m2: &TruncatedMeasure,
    opts: ConvolveOptions,
) -> Result<(TruncatedMeasure, f64), CapExceeded> {
    let mut atoms: BTreeMap<GroupElement, f64> = BTreeMap::new();
    for (a, pa) in &m1.atoms {
        for (b, pb) in &m2.atoms {
            *atoms.entry(a.mul(b)).or_insert(0.0) += pa * pb;
            if atoms.len() > opts.cap {
                return Err(CapExceeded { cap: opts.cap, reached: atoms.len() });
            }
        }
    }
    let mut dropped = 0.0;
    if let Some(eps) = opts.epsilon {
        atoms.retain(|_, m| {
            let keep = *m >= eps;
            if !keep {
                dropped += *m;
            }
            keep
        });
    }
    let deficit = 1.0 - (1.0 - m1.deficit) * (1.0 - m2.deficit) + dropped;
    Ok((TruncatedMeasure { atoms, deficit }, dropped))
}

/// Left translate `g * m`.
pub fn translate(g: &GroupElement, m: &TruncatedMeasure) -> TruncatedMeasure {
    TruncatedMeasure { atoms: m.atoms.iter().map(|(x, p)| (g.mul(x), *p)).collect(), deficit: m.deficit }
}

/// l1 distance between atom masses (maximum 2).
pub fn l1_atoms(m1: &TruncatedMeasure, m2: &TruncatedMeasure) -> f64 {
    let mut total = 0.0;
    for (g, p) in &m1.atoms {
        total += (p - m2.mass(g)).abs();
    }
    for (g, p) in &m2.atoms {
        if !m1.atoms.contains_key(g) {
            total += p;
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvEstimate {
    pub n: u32,
    pub g: GroupElement,
    /// l1 distance over atoms.
    pub value: f64,
    /// Bound on how far the untruncated distance can be from `value`.
    pub error_bound: f64,
    pub epsilon: Option<f64>,
}

/// l1 distance with error bound `d1 + d2`.
pub fn tv_distance(m1: &TruncatedMeasure, m2: &TruncatedMeasure) -> f64 {
    l1_atoms(m1, m2)
}

pub fn tv_estimate(m1: &TruncatedMeasure, m2: &TruncatedMeasure, n: u32, g: GroupElement) -> TvEstimate {
    TvEstimate { n, g, value: l1_atoms(m1, m2), error_bound: m1.deficit + m2.deficit, epsilon: None }
}

/// `1 - P(among n steps the maximal level is unique, blue, and exceeds n)`,
/// rounded up: the sum runs exactly to `2^20` and the rest is bracketed
/// from below.
pub fn residual_bound(law: &LevelLaw, n: u32) -> f64 {
    const M: u128 = 1 << 20;
    let nf = f64::from(n);
    let mut p = 0.0;
    let mut cdf_prev = law.cdf(u128::from(n));
    for m in (u128::from(n) + 1)..=M {
        let blue = 1.0 - LevelLaw::red_probability(m);
        p += nf * law.pmf(m) * blue * libm::pow(cdf_prev, nf - 1.0);
        cdf_prev += law.pmf(m);
    }
    let cdf_m = law.cdf(M);
    p += nf * law.survival(M) * libm::pow(cdf_m, nf - 1.0) * (1.0 - LevelLaw::red_probability(M));
    (1.0 - p).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub estimate: TvEstimate,
    /// Upper bound on the residual mass `eta_n`.
    pub residual: f64,
    /// `4/n + 4 residual`.
    pub paper_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvCurves {
    pub k_max: u32,
    /// Mass of the opposite measure beyond `k_max`.
    pub deficit: f64,
    /// One curve per tested `g`, in input order.
    pub curves: Vec<Vec<CurvePoint>>,
    /// Set when a convolution power hit the cap; the curves stop at the
    /// last completed power.
    pub capped: Option<CapExceeded>,
}

impl TvCurves {
    pub fn last_completed(&self) -> u32 {
        self.curves.first().map_or(0, |c| c.len() as u32)
    }
}

/// Distances `||g * mu^n - mu^n||` for `mu` the opposite step law truncated
/// at `k_max`, `n = 1..=n_max`.
///
/// Writing `mu = mu_t + d rho` with `mu_t` the atoms and `d` the deficit,
/// splitting `mu^n` at the first untruncated factor gives
/// `error(n) = d (2 + sum_{j<n} value(j))` plus twice the mass dropped by
/// sparsification. Because `value(n+1) <= (1-d) value(n)`, value plus error
/// never increases in `n`.
pub fn left_walk_tv_curves(
    cons: &Construction,
    law: &LevelLaw,
    k_max: u32,
    n_max: u32,
    gs: &[GroupElement],
    opts: ConvolveOptions,
) -> TvCurves {
    let mu = measure_atoms(cons, law, k_max).inverse();
    let d = mu.deficit;
    let mut curves: Vec<Vec<CurvePoint>> = gs.iter().map(|_| Vec::new()).collect();
    let mut sums: Vec<f64> = alloc::vec![0.0; gs.len()];
    let mut power = mu.clone();
    let mut dropped_total = 0.0;
    let mut capped = None;
    for n in 1..=n_max {
        if n > 1 {
            match convolve(&power, &mu, opts) {
                Ok((next, dropped)) => {
                    power = next;
                    dropped_total += dropped;
                }
                Err(e) => {
                    capped = Some(e);
                    break;
                }
            }
        }
        let residual = residual_bound(law, n);
        for (idx, g) in gs.iter().enumerate() {
            let value = l1_atoms(&translate(g, &power), &power);
            let error_bound = d * (2.0 + sums[idx]) + 2.0 * dropped_total;
            sums[idx] += value;
            let estimate = TvEstimate { n, g: g.clone(), value, error_bound, epsilon: opts.epsilon };
            let paper_bound = 4.0 / f64::from(n) + 4.0 * residual;
            curves[idx].push(CurvePoint { estimate, residual, paper_bound });
        }
    }
    TvCurves { k_max, deficit: d, curves, capped }
}

/// Empirical law of `tau` restricted to one level.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TauHistogram {
    pub level: u128,
    pub counts: BTreeMap<GroupElement, u64>,
    /// Trajectories with no resolved entry at this level (not stabilized,
    /// no entry, or an entry depending on unresolved steps).
    pub unresolved: u64,
}

impl TauHistogram {
    pub fn new(level: u128) -> Self {
        Self { level, ..Self::default() }
    }

    pub fn record(&mut self, outcome: &TauOutcome) {
        match outcome.value().and_then(|v| v.at(self.level)) {
            Some(g) => *self.counts.entry(g.clone()).or_insert(0) += 1,
            None => self.unresolved += 1,
        }
    }

    pub fn merge(&mut self, other: &TauHistogram) {
        assert_eq!(self.level, other.level);
        for (g, c) in &other.counts {
            *self.counts.entry(g.clone()).or_insert(0) += c;
        }
        self.unresolved += other.unresolved;
    }

    pub fn resolved(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn total(&self) -> u64 {
        self.resolved() + self.unresolved
    }

    pub fn is_disjoint(&self, other: &TauHistogram) -> bool {
        self.counts.keys().all(|g| !other.counts.contains_key(g))
    }
}

pub fn tau_histogram(
    trajs: &[Trajectory],
    level: u128,
    wsets: &WSets,
    horizon: usize,
) -> Result<TauHistogram, TailError> {
    let mut h = TauHistogram::new(level);
    for t in trajs {
        h.record(&tau(t, wsets, horizon)?);
    }
    Ok(h)
}

/// Minimum number of resolved trajectories for [`nondegeneracy_test`].
pub const MIN_RESOLVED: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("only {resolved} resolved samples, need at least {MIN_RESOLVED}")]
pub struct InsufficientSamples {
    pub resolved: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NondegeneracyReport {
    pub pass: bool,
    /// The two most frequent values (ties by element order).
    pub top2: Vec<(GroupElement, f64)>,
}

pub fn nondegeneracy_test(h: &TauHistogram, min_freq: f64) -> Result<NondegeneracyReport, InsufficientSamples> {
    let resolved = h.resolved();
    if resolved < MIN_RESOLVED {
        return Err(InsufficientSamples { resolved });
    }
    let mut freqs: Vec<(GroupElement, f64)> =
        h.counts.iter().map(|(g, c)| (g.clone(), *c as f64 / resolved as f64)).collect();
    freqs.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let heavy = freqs.iter().filter(|(_, f)| *f >= min_freq).count();
    freqs.truncate(2);
    Ok(NondegeneracyReport { pass: heavy >= 2, top2: freqs })
}

/// Where a trajectory's `tau` entry at the designated level comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Qualified {
    element: GroupElement,
    /// Time of the record that closes the designated entry.
    closing: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PerturbationError {
    #[error(transparent)]
    Tail(#[from] TailError),
    #[error("no sampled trajectory is stabilized by time {record_time} with a resolved entry at level {level}")]
    NoQualifying { level: u128, record_time: usize },
    #[error("no positive-probability replacement of the first step keeps the trajectory qualifying")]
    NoReplacement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationResult {
    pub level: u128,
    pub record_time: usize,
    /// Index (into the input) of the reference trajectory.
    pub reference: usize,
    /// Time of the record closing the designated entry; the fixed prefix is
    /// the steps before it.
    pub closing: usize,
    pub replacement: Step,
    /// `P(replacement) / P(original first step)`.
    pub constant: f64,
    /// Indices of the trajectories in `S`.
    pub members: Vec<usize>,
    pub original: TauHistogram,
    pub perturbed: TauHistogram,
    /// Every perturbed entry equals `phi(x'_1 x_2 ... x_{closing-1})`.
    pub coherent: bool,
}

impl PerturbationResult {
    pub fn disjoint(&self) -> bool {
        self.original.is_disjoint(&self.perturbed)
    }

    pub fn pooled(&self) -> TauHistogram {
        let mut h = self.original.clone();
        h.merge(&self.perturbed);
        h
    }
}

fn qualify(
    t: &Trajectory,
    wsets: &WSets,
    horizon: usize,
    level: u128,
    record_time: usize,
) -> Result<Option<Qualified>, TailError> {
    let TauOutcome::Value(v) = tau(t, wsets, horizon)? else {
        return Ok(None);
    };
    if v.i0 > record_time {
        return Ok(None);
    }
    let Some(element) = v.at(level).cloned() else {
        return Ok(None);
    };
    // the entry at `level` is closed by the first record after a record of
    // that value
    let records = crate::tail::detect_records(&t.steps[..v.horizon]);
    let closing = records
        .windows(2)
        .find(|w| w[0].time >= v.i0 && w[0].value == level)
        .map(|w| w[1].time)
        .expect("entry implies a closing record");
    Ok(Some(Qualified { element, closing }))
}

/// The closing argument's experiment. `S` is the set of trajectories that
/// are stabilized by `record_time`, carry a resolved entry at `level`, and
/// share the reference trajectory's steps before its closing record time
/// (and that time itself). `T` replaces the first step by the first
/// candidate, in order of level, red before blue, then element, with a
/// different image under the factor map that keeps the reference
/// trajectory qualifying.
pub fn perturbation_experiment(
    trajs: &[Trajectory],
    table: &StepTable,
    law: &LevelLaw,
    wsets: &WSets,
    horizon: usize,
    level: u128,
    record_time: usize,
) -> Result<PerturbationResult, PerturbationError> {
    let spec = wsets.spec();
    let mut qualified = Vec::new();
    for (i, t) in trajs.iter().enumerate() {
        if let Some(q) = qualify(t, wsets, horizon, level, record_time)? {
            qualified.push((i, q));
        }
    }
    let (reference, q0) = qualified.first().cloned().ok_or(PerturbationError::NoQualifying { level, record_time })?;
    let omega0 = &trajs[reference];
    let prefix = &omega0.steps[..q0.closing - 1];
    let members: Vec<usize> = qualified
        .iter()
        .filter(|(i, q)| q.closing == q0.closing && trajs[*i].steps[..q0.closing - 1] == *prefix)
        .map(|(i, _)| *i)
        .collect();

    let first = &omega0.steps[0];
    let phi_first = first.x.as_ref().map(|x| spec.phi(x));
    let mut candidates = Vec::new();
    for k in 1..=table.built() {
        candidates.push(Step { k, y: Color::Red, x: table.centre(k).cloned() });
        for x in table.blue_support(k).unwrap_or(&[]) {
            candidates.push(Step { k, y: Color::Blue, x: Some(x.clone()) });
        }
    }
    let mut chosen = None;
    for step in candidates {
        if step.x.as_ref().map(|x| spec.phi(x)) == phi_first {
            continue;
        }
        let Ok((perturbed, constant)) = perturb_first(omega0, step.clone(), table, law) else {
            continue;
        };
        if let Some(q) = qualify(&perturbed, wsets, horizon, level, record_time)? {
            if q.closing == q0.closing {
                chosen = Some((step, constant));
                break;
            }
        }
    }
    let (replacement, constant) = chosen.ok_or(PerturbationError::NoReplacement)?;

    let mut original = TauHistogram::new(level);
    let mut perturbed = TauHistogram::new(level);
    let mut coherent = true;
    for &i in &members {
        original.record(&tau(&trajs[i], wsets, horizon)?);
        let (p, _) = perturb_first(&trajs[i], replacement.clone(), table, law).expect("checked above");
        let out = tau(&p, wsets, horizon)?;
        let expected = p.steps[..q0.closing - 1]
            .iter()
            .try_fold(GroupElement::identity(), |acc, s| s.x.as_ref().map(|x| acc.mul(x)))
            .map(|z| spec.phi(&z));
        coherent &= expected.is_some() && out.value().and_then(|v| v.at(level)) == expected.as_ref();
        perturbed.record(&out);
    }
    Ok(PerturbationResult {
        level,
        record_time,
        reference,
        closing: q0.closing,
        replacement,
        constant,
        members,
        original,
        perturbed,
        coherent,
    })
}
