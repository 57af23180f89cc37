//! Records, stabilization, the decomposition maps `p` and `t`, and the tail
//! functional `tau`.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::construction::Construction;
use crate::group::{GroupElement, GroupSpec};
use crate::heavy_tail::LevelLaw;
use crate::sampler::{Color, Step, StepTable, Trajectory};
use crate::set::ElementSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordEvent {
    /// 1-based time.
    pub time: usize,
    pub value: u128,
    pub simple: bool,
    pub y: Color,
}

/// Record times of `ks` (1-based) with their simplicity flag. Time 1 is a
/// simple record.
pub fn record_times(ks: &[u128]) -> Vec<(usize, bool)> {
    let mut out = Vec::new();
    let mut max = 0u128;
    for (i, &k) in ks.iter().enumerate() {
        if i == 0 || k >= max {
            out.push((i + 1, i == 0 || k > max));
        }
        max = max.max(k);
    }
    out
}

pub fn detect_records(steps: &[Step]) -> Vec<RecordEvent> {
    let ks: Vec<u128> = steps.iter().map(|s| s.k).collect();
    record_times(&ks)
        .into_iter()
        .map(|(time, simple)| RecordEvent { time, value: ks[time - 1], simple, y: steps[time - 1].y })
        .collect()
}

/// Stabilization relative to a finite horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StabilizationReport {
    pub horizon: usize,
    /// Smallest `i0 <= horizon` such that on `[i0, horizon]` the running
    /// maximum exceeds the time and every record is simple and blue.
    pub i0: Option<usize>,
}

impl StabilizationReport {
    pub fn status(&self) -> &'static str {
        if self.i0.is_some() {
            "certified-at-horizon"
        } else {
            "not-stabilized-at-horizon"
        }
    }
}

pub fn stabilization_index(steps: &[Step]) -> Option<usize> {
    let mut last_bad = 0;
    let mut max = 0u128;
    for (idx, s) in steps.iter().enumerate() {
        let i = idx + 1;
        let record = i == 1 || s.k >= max;
        let simple = i == 1 || s.k > max;
        max = max.max(s.k);
        if max <= i as u128 || (record && (!simple || s.y == Color::Red)) {
            last_bad = i;
        }
    }
    (last_bad < steps.len()).then_some(last_bad + 1)
}

pub fn check_stabilization(t: &Trajectory, horizon: usize) -> StabilizationReport {
    assert!(horizon <= t.len(), "horizon {horizon} beyond trajectory length {}", t.len());
    StabilizationReport { horizon, i0: stabilization_index(&t.steps[..horizon]) }
}

/// `W_n = phi(A_n^w b_n F_n^-1 A_n^w)` stored as its two factors.
#[derive(Debug, Clone)]
pub struct WLevel {
    pub index: u32,
    /// `phi(A_n^w)`, sorted.
    pub outer: Vec<GroupElement>,
    /// `phi(b_n F_n^-1)`.
    pub core: ElementSet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    pub left: GroupElement,
    pub core: GroupElement,
    pub right: GroupElement,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TailError {
    #[error("level {level}: {w} has two left factors {first} and {second}; the lock is violated")]
    Ambiguous { level: u32, w: Box<GroupElement>, first: Box<GroupElement>, second: Box<GroupElement> },
    #[error("{w} decomposes at levels {levels:?}")]
    MultiLevel { w: GroupElement, levels: Vec<u32> },
    #[error("level {level} has no decomposition table")]
    Unavailable { level: u32 },
    #[error("p-chain from {w} does not descend in level")]
    NoDescent { w: GroupElement },
    #[error("two tail entries at level {level}")]
    DuplicateLevel { level: u128 },
    #[error("entry {element} at level {level} fails the brute-force check")]
    CrossCheck { level: u128, element: GroupElement },
}

/// Decomposition tables for every built level that fits under the cap.
#[derive(Debug, Clone)]
pub struct WSets {
    spec: GroupSpec,
    levels: Vec<Option<WLevel>>,
}

impl WSets {
    pub fn new(cons: &Construction) -> Self {
        let levels = cons
            .levels
            .iter()
            .map(|l| {
                let w = cons.schedule.w_power.at(l.index);
                let outer = l.a.power(w, cons.limits.set_cap).ok()?.image(&cons.spec);
                // the brute-force search visits |outer|^2 pairs
                crate::construction::lock_fits(&outer, cons.limits.set_cap).ok()?;
                let core = l.blue_support().image(&cons.spec);
                Some(WLevel { index: l.index, outer: outer.to_vec(), core })
            })
            .collect();
        Self { spec: cons.spec.clone(), levels }
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn level(&self, n: u32) -> Option<&WLevel> {
        n.checked_sub(1).and_then(|i| self.levels.get(i as usize)).and_then(Option::as_ref)
    }

    pub fn available(&self) -> impl Iterator<Item = &WLevel> + '_ {
        self.levels.iter().flatten()
    }

    /// Exhaustive search for `w = q' core q''`. The left factor must be
    /// unique; several `(core, q'')` splits of the same right part are
    /// allowed and the first in element order is returned.
    pub fn decompose_w(&self, w: &GroupElement, n: u32) -> Result<Option<Decomposition>, TailError> {
        let lvl = self.level(n).ok_or(TailError::Unavailable { level: n })?;
        let mut found: Option<Decomposition> = None;
        for q1 in &lvl.outer {
            let rest = q1.inv().mul(w);
            let hit = lvl.outer.iter().find_map(|q2| {
                let core = rest.mul(&q2.inv());
                lvl.core.contains(&core).then(|| (core, q2.clone()))
            });
            if let Some((core, right)) = hit {
                if let Some(prev) = &found {
                    return Err(TailError::Ambiguous {
                        level: n,
                        w: Box::new(w.clone()),
                        first: Box::new(prev.left.clone()),
                        second: Box::new(q1.clone()),
                    });
                }
                found = Some(Decomposition { left: q1.clone(), core, right });
            }
        }
        Ok(found)
    }

    /// `(n, p(w))` for the unique available level `n` with `w` in `W_n`.
    pub fn p_map(&self, w: &GroupElement) -> Result<Option<(u32, GroupElement)>, TailError> {
        let mut hits = Vec::new();
        for lvl in self.available() {
            if let Some(d) = self.decompose_w(w, lvl.index)? {
                hits.push((lvl.index, d.left));
            }
        }
        match hits.len() {
            0 => Ok(None),
            1 => Ok(hits.pop()),
            _ => Err(TailError::MultiLevel { w: w.clone(), levels: hits.into_iter().map(|h| h.0).collect() }),
        }
    }

    /// Iterates of `p` starting from `w` that lie in some `W_m`, tagged
    /// with that `m`.
    pub fn t_chain(&self, w: &GroupElement) -> Result<Vec<(u32, GroupElement)>, TailError> {
        let mut out = Vec::new();
        let Some((mut level, mut cur)) = self.p_map(w)? else {
            return Ok(out);
        };
        while let Some((m, next)) = self.p_map(&cur)? {
            if m >= level {
                return Err(TailError::NoDescent { w: w.clone() });
            }
            out.push((m, cur));
            level = m;
            cur = next;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Confidence {
    CrossChecked,
    BookkeepingOnly,
}

impl fmt::Display for Confidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Confidence::CrossChecked => "cross-checked",
            Confidence::BookkeepingOnly => "bookkeeping-only",
        })
    }
}

/// `tau` read off up to a horizon. An entry is `None` when the element
/// depends on an unresolved step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TailValue {
    pub i0: usize,
    pub horizon: usize,
    pub entries: BTreeMap<u128, Option<GroupElement>>,
    pub confidence: Confidence,
}

impl TailValue {
    pub fn at(&self, level: u128) -> Option<&GroupElement> {
        self.entries.get(&level).and_then(Option::as_ref)
    }

    /// Whether every resolved entry of `self` appears in `other`.
    pub fn is_contained_in(&self, other: &TailValue) -> bool {
        self.entries.iter().all(|(k, v)| other.entries.get(k) == Some(v))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TauOutcome {
    NotStabilized,
    Value(TailValue),
}

impl TauOutcome {
    pub fn value(&self) -> Option<&TailValue> {
        match self {
            TauOutcome::Value(v) => Some(v),
            TauOutcome::NotStabilized => None,
        }
    }
}

/// `tau` by record bookkeeping: for consecutive records `r' < r` at or
/// after `i0` and within the horizon, `phi(Z_{r-1})` is the entry at level
/// `k_{r'}`. The stabilization index is taken over the whole trajectory so
/// that longer horizons only add entries.
///
/// When every entry is resolved and lies at a level with a decomposition
/// table, the entries are re-derived by brute force (membership in `W_n`
/// and the `t`-chain of the top entry); a disagreement is an error.
pub fn tau(t: &Trajectory, wsets: &WSets, horizon: usize) -> Result<TauOutcome, TailError> {
    let Some(i0) = stabilization_index(&t.steps) else {
        return Ok(TauOutcome::NotStabilized);
    };
    let horizon = horizon.min(t.len());
    let spec = wsets.spec();
    let resolved = t.resolved_prefix();
    let mut prefix = Vec::with_capacity(resolved + 1);
    prefix.push(GroupElement::identity());
    for s in &t.steps[..resolved] {
        let z = prefix[prefix.len() - 1].mul(s.x.as_ref().expect("resolved prefix"));
        prefix.push(z);
    }
    let records: Vec<RecordEvent> = detect_records(&t.steps[..horizon]).into_iter().filter(|r| r.time >= i0).collect();
    let mut entries = BTreeMap::new();
    for pair in records.windows(2) {
        let (prev, r) = (pair[0], pair[1]);
        let element = prefix.get(r.time - 1).map(|z| spec.phi(z));
        if entries.insert(prev.value, element).is_some() {
            return Err(TailError::DuplicateLevel { level: prev.value });
        }
    }
    let checkable =
        entries.iter().all(|(&lvl, e)| e.is_some() && u32::try_from(lvl).is_ok_and(|n| wsets.level(n).is_some()));
    let confidence = if checkable {
        cross_check(&entries, wsets)?;
        Confidence::CrossChecked
    } else {
        Confidence::BookkeepingOnly
    };
    Ok(TauOutcome::Value(TailValue { i0, horizon, entries, confidence }))
}

fn cross_check(entries: &BTreeMap<u128, Option<GroupElement>>, wsets: &WSets) -> Result<(), TailError> {
    let resolved: Vec<(u32, &GroupElement)> =
        entries.iter().map(|(&l, e)| (l as u32, e.as_ref().expect("checked"))).collect();
    for &(level, g) in &resolved {
        if wsets.decompose_w(g, level)?.is_none() {
            return Err(TailError::CrossCheck { level: level.into(), element: g.clone() });
        }
    }
    let Some(&(top, g_top)) = resolved.last() else {
        return Ok(());
    };
    let floor = resolved[0].0;
    let chain: BTreeMap<u32, GroupElement> = wsets.t_chain(g_top)?.into_iter().filter(|(m, _)| *m >= floor).collect();
    let below: BTreeMap<u32, GroupElement> =
        resolved.iter().filter(|(l, _)| *l != top).map(|(l, g)| (*l, (*g).clone())).collect();
    if chain != below {
        return Err(TailError::CrossCheck { level: top.into(), element: g_top.clone() });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("replacement step {step:?} has probability zero")]
pub struct ZeroProbability {
    pub step: Step,
}

/// Replaces the first step; also returns `P(step') / P(step_1)`.
pub fn perturb_first(
    t: &Trajectory,
    step: Step,
    table: &StepTable,
    law: &LevelLaw,
) -> Result<(Trajectory, f64), ZeroProbability> {
    let new = table.probability(law, &step);
    if new <= 0.0 {
        return Err(ZeroProbability { step });
    }
    let old = table.probability(law, &t.steps[0]);
    let mut out = t.clone();
    out.steps[0] = step;
    Ok((out, new / old))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::{build_levels, GrowthSchedule, Limits};
    use crate::sampler::TrajectorySeed;

    fn desk() -> Construction {
        build_levels(&GroupSpec::lamplighter(), &GrowthSchedule::desk(), 2, Limits::default()).unwrap()
    }

    fn blue(ks: &[u128]) -> Vec<Step> {
        ks.iter().map(|&k| Step { k, y: Color::Blue, x: None }).collect()
    }

    fn traj(steps: Vec<Step>) -> Trajectory {
        Trajectory { seed: TrajectorySeed { master: 0, index: 0 }, steps }
    }

    #[test]
    fn record_examples() {
        assert_eq!(record_times(&[3, 1, 5, 5, 2]), [(1, true), (3, true), (4, false)]);
        assert_eq!(record_times(&[1, 2, 3, 4]), [(1, true), (2, true), (3, true), (4, true)]);
        assert_eq!(record_times(&[2, 2, 2]), [(1, true), (2, false), (3, false)]);
    }

    #[test]
    fn simple_records_strictly_dominate() {
        let ks = [4u128, 2, 7, 7, 1, 9, 3, 9, 12];
        for (time, simple) in record_times(&ks) {
            if simple && time > 1 {
                assert!(ks[..time - 1].iter().all(|&k| k < ks[time - 1]));
            }
        }
    }

    #[test]
    fn stabilization_examples() {
        let t = traj(blue(&[5, 1, 2, 3]));
        assert_eq!(check_stabilization(&t, 4).i0, Some(1));
        let inc = traj(blue(&[1, 2, 3, 4, 5, 6]));
        let r = check_stabilization(&inc, 6);
        assert_eq!(r.i0, None);
        assert_eq!(r.status(), "not-stabilized-at-horizon");
        let mut steps = blue(&[5, 1, 6, 2, 9, 1]);
        steps[2].y = Color::Red;
        assert_eq!(check_stabilization(&traj(steps), 6).i0, Some(4));
    }

    #[test]
    fn decompose_round_trip() {
        let cons = desk();
        let w = WSets::new(&cons);
        let spec = &cons.spec;
        // w = phi(b_1 f), f in F_1^-1, splits as (e, b_1 f, e)
        let l1 = &cons.levels[0];
        for f in &l1.f.inverse() {
            let core = spec.phi(&l1.b.mul(f));
            let d = w.decompose_w(&core, 1).unwrap().unwrap();
            assert_eq!(d, Decomposition { left: GroupElement::identity(), core, right: GroupElement::identity() });
        }
        for n in 1..=2 {
            assert_eq!(w.decompose_w(&GroupElement::identity(), n).unwrap(), None);
        }
        // every q' core q'' recovers q'
        let l2 = w.level(2).unwrap();
        for q1 in &l2.outer {
            for c in &l2.core {
                for q2 in &l2.outer {
                    let x = q1.mul(c).mul(q2);
                    let d = w.decompose_w(&x, 2).unwrap().unwrap();
                    assert_eq!(&d.left, q1);
                    assert_eq!(d.left.mul(&d.core).mul(&d.right), x);
                    let (m, p) = w.p_map(&x).unwrap().unwrap();
                    assert_eq!((m, &p), (2, q1));
                    if let Some((m2, _)) = w.p_map(&p).unwrap() {
                        assert!(m2 < 2);
                    }
                }
            }
        }
    }

    #[test]
    fn t_chain_examples() {
        let cons = desk();
        let w = WSets::new(&cons);
        assert!(w.t_chain(&GroupElement::identity()).unwrap().is_empty());
        let b1 = cons.spec.phi(&cons.levels[0].b);
        // p(b_1) = e, which lies in no W
        assert!(w.t_chain(&b1).unwrap().is_empty());
        // nest: q' = b_1 in W_1 and in A_2
        let l2 = w.level(2).unwrap();
        assert!(l2.outer.contains(&b1));
        for c in &l2.core {
            let x = b1.mul(c);
            assert_eq!(w.t_chain(&x).unwrap(), [(1, b1.clone())]);
        }
    }

    fn resolved(k: u128, x: GroupElement) -> Step {
        Step { k, y: Color::Blue, x: Some(x) }
    }

    #[test]
    fn tau_bookkeeping_on_constructed_trajectory() {
        let cons = desk();
        let w = WSets::new(&cons);
        let x1 = cons.levels[1].blue_support().to_vec()[3].clone();
        let mut steps = alloc::vec![resolved(2, x1.clone())];
        steps.extend(blue(&[40, 3, 1]));
        steps.push(Step { k: 900, y: Color::Blue, x: None });
        let t = traj(steps);
        let TauOutcome::Value(v) = tau(&t, &w, 5).unwrap() else { panic!() };
        assert_eq!(v.i0, 1);
        assert_eq!(v.at(2), Some(&x1));
        assert_eq!(v.entries.get(&40), Some(&None));
        assert_eq!(v.entries.len(), 2);
        assert_eq!(v.confidence, Confidence::BookkeepingOnly);
        let TauOutcome::Value(short) = tau(&t, &w, 2).unwrap() else { panic!() };
        assert_eq!(short.entries.len(), 1);
        assert_eq!(short.confidence, Confidence::CrossChecked);
        assert!(short.is_contained_in(&v));
        let TauOutcome::Value(none) = tau(&t, &w, 1).unwrap() else { panic!() };
        assert!(none.entries.is_empty());
    }

    #[test]
    fn tau_not_stabilized() {
        let cons = desk();
        let t = traj(blue(&[1, 1, 1]));
        assert_eq!(tau(&t, &WSets::new(&cons), 3).unwrap(), TauOutcome::NotStabilized);
    }

    #[test]
    fn perturbation_constant() {
        let cons = desk();
        let table = StepTable::new(&cons);
        let law = LevelLaw::new();
        let support = cons.levels[1].blue_support().to_vec();
        let t = traj(alloc::vec![resolved(2, support[0].clone()), Step { k: 50, y: Color::Blue, x: None }]);
        let (same, c) = perturb_first(&t, t.steps[0].clone(), &table, &law).unwrap();
        assert_eq!(same, t);
        assert_eq!(c, 1.0);
        let (p, c) = perturb_first(&t, resolved(2, support[1].clone()), &table, &law).unwrap();
        assert_eq!(c, 1.0);
        assert_eq!(p.steps[1], t.steps[1]);
        let red = Step { k: 1, y: Color::Red, x: Some(cons.levels[0].c.clone()) };
        let (_, c) = perturb_first(&t, red, &table, &law).unwrap();
        let oracle = (1.0 * 0.5) / (2f64.powf(-1.25) * 0.75 / cons.levels[1].f.len() as f64);
        assert!((c - oracle).abs() < 1e-12 * oracle);
        let bad = resolved(2, GroupElement::lamplighter(40, []));
        assert!(perturb_first(&t, bad, &table, &law).is_err());
    }
}
