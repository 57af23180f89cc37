//! Folner sets, locks and the level sequence `(A_i, F_i, D_i, b_i)`.

use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap};
use alloc::vec::Vec;
use core::cmp::Reverse;
use core::fmt;

use crate::group::{GroupElement, GroupFamily, GroupSpec};
use crate::set::{CapExceeded, ElementSet, DEFAULT_SET_CAP};

/// Default number of enumerated candidates tried by [`find_lock`].
pub const DEFAULT_LOCK_SEARCH: usize = 10_000;

/// A rational tolerance `numer / denom` in `(0, 1]`, compared exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tolerance {
    numer: u64,
    denom: u64,
}

impl Tolerance {
    pub fn new(numer: u64, denom: u64) -> Option<Self> {
        (numer > 0 && denom > 0 && numer <= denom).then_some(Self { numer, denom })
    }

    pub fn reciprocal(denom: u64) -> Option<Self> {
        Self::new(1, denom)
    }

    pub fn numer(self) -> u64 {
        self.numer
    }

    pub fn denom(self) -> u64 {
        self.denom
    }

    pub fn as_f64(self) -> f64 {
        self.numer as f64 / self.denom as f64
    }

    /// `count < self * total`, exactly.
    pub fn admits(self, count: usize, total: usize) -> bool {
        (count as u128) * (self.denom as u128) < (self.numer as u128) * (total as u128)
    }
}

impl fmt::Display for Tolerance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numer, self.denom)
    }
}

/// An exponent rule `level -> slope * level + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Exponent {
    pub slope: u32,
    pub offset: u32,
}

impl Exponent {
    pub const fn affine(slope: u32, offset: u32) -> Self {
        Self { slope, offset }
    }

    pub const fn constant(value: u32) -> Self {
        Self { slope: 0, offset: value }
    }

    pub fn at(self, level: u32) -> u32 {
        self.slope * level + self.offset
    }
}

/// `level -> 1 / (level + offset)`, optionally overriding level 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToleranceRule {
    pub offset: u32,
    pub first_level: Option<Tolerance>,
}

impl ToleranceRule {
    pub fn at(self, level: u32) -> Option<Tolerance> {
        match (level, self.first_level) {
            (1, Some(t)) => Some(t),
            _ => Tolerance::reciprocal(level as u64 + self.offset as u64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrowthSchedule {
    pub folner_power: Exponent,
    pub folner_delta: ToleranceRule,
    pub lock_power: Exponent,
    pub w_power: Exponent,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScheduleError {
    #[error("{rule} exponent must be at least 1 from level 1 on")]
    Exponent { rule: &'static str },
    #[error("tolerance at level {level} is not in (0, 1]")]
    Tolerance { level: u32 },
}

impl GrowthSchedule {
    /// Exponents `i + 1`, `10 i + 10`, `n` and tolerance `1/i` (with `1/2`
    /// at level 1).
    pub fn paper() -> Self {
        Self {
            folner_power: Exponent::affine(1, 1),
            folner_delta: ToleranceRule { offset: 0, first_level: Tolerance::new(1, 2) },
            lock_power: Exponent::affine(10, 10),
            w_power: Exponent::affine(1, 0),
        }
    }

    /// The scaled schedule under which every diagnostic stays computable.
    pub fn desk() -> Self {
        Self {
            folner_power: Exponent::constant(1),
            folner_delta: ToleranceRule { offset: 1, first_level: None },
            lock_power: Exponent::constant(2),
            w_power: Exponent::constant(1),
        }
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        for (rule, e) in
            [("folner_power", self.folner_power), ("lock_power", self.lock_power), ("w_power", self.w_power)]
        {
            if e.at(1) < 1 {
                return Err(ScheduleError::Exponent { rule });
            }
        }
        if self.folner_delta.at(1).is_none() {
            return Err(ScheduleError::Tolerance { level: 1 });
        }
        Ok(())
    }

    pub fn delta(&self, level: u32) -> Tolerance {
        self.folner_delta.at(level).expect("validated schedule")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub set_cap: usize,
    pub lock_search: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self { set_cap: DEFAULT_SET_CAP, lock_search: DEFAULT_LOCK_SEARCH }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FolnerReport {
    pub pass: bool,
    /// The translate with the largest `|aF \ F| / |F|` (first in element
    /// order on ties).
    pub worst: Option<(GroupElement, f64)>,
}

/// Exact `(A, delta)`-invariance: `|aF \ F| < delta |F|` for every `a`.
pub fn verify_folner(f: &ElementSet, a: &ElementSet, delta: Tolerance) -> FolnerReport {
    assert!(!f.is_empty(), "Folner candidate must be non-empty");
    let mut pass = true;
    let mut worst: Option<(GroupElement, usize)> = None;
    for g in a {
        let escaped = f.iter().filter(|x| !f.contains(&g.mul(x))).count();
        if !delta.admits(escaped, f.len()) {
            pass = false;
        }
        if worst.as_ref().is_none_or(|(_, w)| escaped > *w) {
            worst = Some((g.clone(), escaped));
        }
    }
    let worst = worst.map(|(g, c)| (g, c as f64 / f.len() as f64));
    FolnerReport { pass, worst }
}

fn spread(g: &GroupElement) -> i64 {
    let lamps = g.lamps();
    let reach = lamps.first().map_or(0, |lo| lamps[lamps.len() - 1] - lo + 1);
    g.shift().abs() + reach + g.free().iter().map(|v| v.abs()).sum::<i64>()
}

/// Parameters of the searched Folner family.
///
/// For the lamplighter part a member is
/// `{(t, L) : |t| <= radius, L within [t - window, t + window]}` with
/// `window = -1` meaning no lamps; free coordinates range over the cube
/// `[-cube, cube]^r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct FolnerParams {
    pub cube: u32,
    pub radius: u32,
    pub window: i32,
}

impl FolnerParams {
    pub fn size(self, free_rank: usize, lamps: bool) -> Option<u128> {
        let cube = (2 * self.cube as u128 + 1).checked_pow(free_rank as u32)?;
        let shifts = 2 * self.radius as u128 + 1;
        let configs = if lamps && self.window >= 0 { 1u128.checked_shl(2 * self.window as u32 + 1)? } else { 1 };
        cube.checked_mul(shifts)?.checked_mul(configs)
    }

    /// `|gF \ F|` in closed form, without materialising `F`.
    pub fn escaped(self, g: &GroupElement, free_rank: usize, lamps: bool) -> u128 {
        let overlap = |v: i64, r: u32| (2 * r as i64 + 1 - v.abs()).max(0) as u128;
        let coord = |j: usize| g.free().get(j).copied().unwrap_or(0);
        let size = self.size(free_rank, lamps).expect("size checked by caller");
        let mut staying: u128 = (0..free_rank).map(|j| overlap(coord(j), self.cube)).product();
        if !lamps {
            // Z^d cube: the shift is one more cube coordinate
            return size - staying * overlap(g.shift(), self.radius);
        }
        let (r, s, w) = (self.radius as i64, g.shift(), self.window as i64);
        let (lo, hi) = match g.lamps() {
            [] => ((-r).max(-r - s), r.min(r - s)),
            _ if w < 0 => (1, 0),
            m => ((-r).max(-r - s).max(m[m.len() - 1] - s - w), r.min(r - s).min(m[0] - s + w)),
        };
        let configs = if w >= 0 { 1u128 << (2 * w + 1) } else { 1 };
        staying *= (hi - lo + 1).max(0) as u128 * configs;
        size - staying
    }

    /// Whether every translate in `a` moves fewer than `delta |F|` points out.
    fn passes(self, a: &[&GroupElement], delta: Tolerance, free_rank: usize, lamps: bool) -> bool {
        let size = self.size(free_rank, lamps).expect("size checked by caller");
        a.iter().all(|g| {
            let lhs = self.escaped(g, free_rank, lamps) * u128::from(delta.denom());
            lhs < u128::from(delta.numer()) * size
        })
    }

    pub fn members(self, free_rank: usize, lamps: bool) -> ElementSet {
        let mut frees: Vec<Vec<i64>> = alloc::vec![Vec::new()];
        for _ in 0..free_rank {
            let c = self.cube as i64;
            frees = frees
                .into_iter()
                .flat_map(|prefix| {
                    (-c..=c).map(move |v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        let r = self.radius as i64;
        let w = self.window as i64;
        let mut out = ElementSet::new();
        for free in &frees {
            for t in -r..=r {
                if !lamps || w < 0 {
                    out.insert(GroupElement::with_free(free.iter().copied(), t, []));
                    continue;
                }
                let width = (2 * w + 1) as u32;
                for mask in 0u64..(1u64 << width) {
                    let lit = (0..width as i64).filter(|b| mask >> b & 1 == 1).map(|b| t - w + b);
                    out.insert(GroupElement::with_free(free.iter().copied(), t, lit));
                }
            }
        }
        out
    }
}

/// Smallest member (by cardinality, then parameters) of the built-in Folner
/// family passing [`verify_folner`].
///
/// The lamplighter family uses lamp windows that travel with the shift,
/// which is what left translation preserves; free-abelian groups use
/// centred cubes.
pub fn find_folner(
    a: &ElementSet,
    delta: Tolerance,
    spec: &GroupSpec,
    cap: usize,
) -> Result<(ElementSet, FolnerParams), CapExceeded> {
    let (free_rank, lamps) = match spec.family() {
        GroupFamily::Lamplighter { .. } => (0, true),
        GroupFamily::FreeTimesLamplighter { rank } => (rank as usize, true),
        // Z^d: first coordinate is the shift, the rest are free
        GroupFamily::FreeAbelian { rank } => (rank as usize - 1, false),
    };
    let mut order: Vec<&GroupElement> = a.iter().collect();
    order.sort_by_key(|g| Reverse(spread(g)));
    let a = &order[..];
    if !lamps {
        // cubes: the shift radius and the free cube move together
        for r in 0u32.. {
            let p = FolnerParams { cube: r, radius: r, window: -1 };
            let size = p.size(free_rank, false).unwrap_or(u128::MAX);
            if size > cap as u128 {
                return Err(CapExceeded { cap, reached: size.min(usize::MAX as u128) as usize });
            }
            if p.passes(a, delta, free_rank, false) {
                return Ok((p.members(free_rank, false), p));
            }
        }
        unreachable!()
    }
    let start = FolnerParams { cube: 0, radius: 0, window: -1 };
    let mut heap = BinaryHeap::new();
    let mut queued = BTreeSet::new();
    heap.push(Reverse((start.size(free_rank, true).unwrap(), start)));
    queued.insert(start);
    while let Some(Reverse((size, p))) = heap.pop() {
        if size > cap as u128 {
            return Err(CapExceeded { cap, reached: size.min(usize::MAX as u128) as usize });
        }
        if p.passes(a, delta, free_rank, true) {
            return Ok((p.members(free_rank, true), p));
        }
        let mut next =
            alloc::vec![FolnerParams { radius: p.radius + 1, ..p }, FolnerParams { window: p.window + 1, ..p },];
        if free_rank > 0 {
            next.push(FolnerParams { cube: p.cube + 1, ..p });
        }
        for q in next {
            if queued.insert(q) {
                let s = q.size(free_rank, true).unwrap_or(u128::MAX);
                heap.push(Reverse((s, q)));
            }
        }
    }
    unreachable!("the parameter lattice is infinite")
}

/// First violation of the lock conditions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LockViolation {
    /// `a1 b a2 = a1' b a2'` with `(a1, a2) != (a1', a2')`.
    Collision { first: (GroupElement, GroupElement), second: (GroupElement, GroupElement), product: GroupElement },
    /// `a1 b a2` lies in `A`.
    Meets { pair: (GroupElement, GroupElement), product: GroupElement },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LockReport {
    pub pass: bool,
    pub witness: Option<LockViolation>,
}

/// Exhaustive `O(|A|^2)` lock check: one pass over `A x A` keyed by the
/// product `a1 b a2`.
pub fn verify_lock(b: &GroupElement, a: &ElementSet) -> LockReport {
    let mut seen: BTreeMap<GroupElement, (&GroupElement, &GroupElement)> = BTreeMap::new();
    for a1 in a {
        let left = a1.mul(b);
        for a2 in a {
            let product = left.mul(a2);
            if a.contains(&product) {
                let witness = LockViolation::Meets { pair: (a1.clone(), a2.clone()), product };
                return LockReport { pass: false, witness: Some(witness) };
            }
            if let Some(&(p1, p2)) = seen.get(&product) {
                let witness = LockViolation::Collision {
                    first: (p1.clone(), p2.clone()),
                    second: (a1.clone(), a2.clone()),
                    product,
                };
                return LockReport { pass: false, witness: Some(witness) };
            }
            seen.insert(product, (a1, a2));
        }
    }
    LockReport { pass: true, witness: None }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no lock among the first {candidates} enumerated elements")]
pub struct LockSearchExhausted {
    pub candidates: usize,
}

/// A lock for `A` makes `A b A` a set of exactly `|A|^2` elements, so the
/// check is refused when that set cannot fit under the cap.
pub fn lock_fits(a: &ElementSet, cap: usize) -> Result<(), CapExceeded> {
    let pairs = (a.len() as u128).pow(2);
    if pairs > cap as u128 {
        return Err(CapExceeded { cap, reached: pairs.min(usize::MAX as u128) as usize });
    }
    Ok(())
}

/// First element `b` of the enumeration of `G` whose image `phi(b)` is a
/// lock for `a` (a subset of the factor group).
pub fn find_lock(a: &ElementSet, spec: &GroupSpec, horizon: usize) -> Result<GroupElement, LockSearchExhausted> {
    spec.enumerate()
        .take(horizon)
        .find(|b| verify_lock(&spec.phi(b), a).pass)
        .ok_or(LockSearchExhausted { candidates: horizon })
}

/// One level `i` of the construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstructionLevel {
    pub index: u32,
    pub a: ElementSet,
    pub f: ElementSet,
    pub d: ElementSet,
    pub b: GroupElement,
    pub c: GroupElement,
}

impl ConstructionLevel {
    /// `A ∪ {c} ∪ {c^-1}`.
    pub fn folner_base(&self) -> ElementSet {
        let mut base = self.a.clone();
        base.insert(self.c.clone());
        base.insert(self.c.inv());
        base
    }

    /// `b F^-1`, the support of a blue step at this level.
    pub fn blue_support(&self) -> ElementSet {
        self.f.inverse().left_translate(&self.b)
    }

    /// `D ∪ b F^-1 ∪ F b^-1`, the next level's `A`.
    pub fn next_a(&self) -> ElementSet {
        self.d.union(&self.blue_support()).union(&self.f.right_translate(&self.b.inv()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConstructionError {
    #[error("invalid schedule: {0}")]
    Schedule(#[from] ScheduleError),
    #[error("level {level}: {source}")]
    Resource { level: u32, source: CapExceeded },
    #[error("level {level}: {source}")]
    LockSearch { level: u32, source: LockSearchExhausted },
}

impl ConstructionError {
    pub fn level(&self) -> Option<u32> {
        match self {
            Self::Schedule(_) => None,
            Self::Resource { level, .. } | Self::LockSearch { level, .. } => Some(*level),
        }
    }
}

/// Built levels together with everything needed to rebuild or re-verify
/// them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Construction {
    pub spec: GroupSpec,
    pub schedule: GrowthSchedule,
    pub limits: Limits,
    pub levels: Vec<ConstructionLevel>,
}

impl Construction {
    pub fn built(&self) -> u32 {
        self.levels.len() as u32
    }

    pub fn level(&self, index: u32) -> Option<&ConstructionLevel> {
        index.checked_sub(1).and_then(|i| self.levels.get(i as usize))
    }

    /// `A_{L+1}`, computable from the last built level.
    pub fn next_a(&self) -> ElementSet {
        self.levels.last().map_or_else(ElementSet::identity, ConstructionLevel::next_a)
    }

    /// `A_n` for `1 <= n <= L + 1`.
    pub fn a_set(&self, n: u32) -> Option<ElementSet> {
        if n == self.built() + 1 {
            Some(self.next_a())
        } else {
            self.level(n).map(|l| l.a.clone())
        }
    }

    /// The set `phi(D_i)^{lock_power(i)}` a level's lock must lock.
    pub fn lock_target(&self, level: &ConstructionLevel) -> Result<ElementSet, CapExceeded> {
        level.d.image(&self.spec).power(self.schedule.lock_power.at(level.index), self.limits.set_cap)
    }
}

/// Builds levels `1..=count`, consuming `c_1, ..., c_count` from the pinned
/// enumeration.
pub fn build_levels(
    spec: &GroupSpec,
    schedule: &GrowthSchedule,
    count: u32,
    limits: Limits,
) -> Result<Construction, ConstructionError> {
    schedule.validate()?;
    let cs = spec.enumerate_prefix(count as usize);
    let mut levels = Vec::with_capacity(count as usize);
    let mut a = ElementSet::identity();
    for (i, c) in (1..=count).zip(cs) {
        let resource = |source| ConstructionError::Resource { level: i, source };
        let mut base = a.clone();
        base.insert(c.clone());
        base.insert(c.inv());
        let base = base.power(schedule.folner_power.at(i), limits.set_cap).map_err(resource)?;
        let (f, _) = find_folner(&base, schedule.delta(i), spec, limits.set_cap).map_err(resource)?;
        let mut d = f.inverse().union(&f).union(&a);
        d.insert(c.clone());
        d.insert(c.inv());
        // phi(D) holds the identity, so its powers only grow
        let image = d.image(spec);
        lock_fits(&image, limits.set_cap).map_err(resource)?;
        let target = image.power(schedule.lock_power.at(i), limits.set_cap).map_err(resource)?;
        lock_fits(&target, limits.set_cap).map_err(resource)?;
        let b = find_lock(&target, spec, limits.lock_search)
            .map_err(|source| ConstructionError::LockSearch { level: i, source })?;
        let level = ConstructionLevel { index: i, a, f, d, b, c };
        a = level.next_a();
        levels.push(level);
    }
    Ok(Construction { spec: spec.clone(), schedule: *schedule, limits, levels })
}

/// Outcome of re-checking one invariant of a stored construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub level: u32,
    pub name: &'static str,
    pub pass: bool,
    pub detail: alloc::string::String,
}

/// Re-verifies every level invariant from scratch.
pub fn verify_construction(cons: &Construction) -> Vec<Check> {
    use alloc::format;
    let mut out = Vec::new();
    let mut push = |level, name, pass, detail| out.push(Check { level, name, pass, detail });
    let cs = cons.spec.enumerate_prefix(cons.levels.len());
    let mut expected_a = ElementSet::identity();
    for (lvl, c) in cons.levels.iter().zip(&cs) {
        let i = lvl.index;
        push(i, "A recursion", lvl.a == expected_a, format!("|A| = {}", lvl.a.len()));
        push(i, "enumerated c", &lvl.c == c, format!("c = {}", lvl.c));
        let mut d = lvl.f.inverse().union(&lvl.f).union(&lvl.a);
        d.insert(lvl.c.clone());
        d.insert(lvl.c.inv());
        push(i, "D definition", d == lvl.d, format!("|D| = {}", lvl.d.len()));
        push(i, "identity in A", lvl.a.contains(&GroupElement::identity()), alloc::string::String::new());
        match lvl.folner_base().power(cons.schedule.folner_power.at(i), cons.limits.set_cap) {
            Ok(base) => {
                let delta = cons.schedule.delta(i);
                let r = verify_folner(&lvl.f, &base, delta);
                let worst = r.worst.map(|(_, w)| w).unwrap_or(0.0);
                push(i, "Folner", r.pass, format!("|F| = {}, worst ratio {worst} vs delta {delta}", lvl.f.len()));
            }
            Err(e) => push(i, "Folner", false, format!("{e}")),
        }
        match cons.lock_target(lvl).and_then(|t| lock_fits(&t, cons.limits.set_cap).map(|_| t)) {
            Ok(target) => {
                let r = verify_lock(&cons.spec.phi(&lvl.b), &target);
                push(
                    i,
                    "lock",
                    r.pass,
                    format!("b = {}, |phi(D)^k| = {}, witness {:?}", lvl.b, target.len(), r.witness),
                );
            }
            Err(e) => push(i, "lock", false, format!("{e}")),
        }
        let next = lvl.next_a();
        push(i, "A monotone", lvl.a.is_subset(&next), alloc::string::String::new());
        expected_a = next;
    }
    out
}
