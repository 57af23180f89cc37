//! The coupled step process `(K_i, Y_i, X_i)` and its prefix products.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::construction::Construction;
use crate::group::GroupElement;
use crate::heavy_tail::{uniform01, LevelLaw, LevelSampler};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Color {
    Red,
    Blue,
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Color::Red => "red",
            Color::Blue => "blue",
        })
    }
}

impl FromStr for Color {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "red" => Ok(Color::Red),
            "blue" => Ok(Color::Blue),
            _ => Err(()),
        }
    }
}

/// One step. `x` is `None` when `k` exceeds the built levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub k: u128,
    pub y: Color,
    pub x: Option<GroupElement>,
}

/// `(master seed, trajectory index)`; the index selects the ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrajectorySeed {
    pub master: u64,
    pub index: u64,
}

impl TrajectorySeed {
    pub fn rng(self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.master);
        rng.set_stream(self.index);
        rng
    }
}

impl fmt::Display for TrajectorySeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.master, self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub seed: TrajectorySeed,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("step {index} is unresolved (level {k} is not built)")]
pub struct UnresolvedStep {
    /// 1-based step index.
    pub index: usize,
    pub k: u128,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn levels(&self) -> Vec<u128> {
        self.steps.iter().map(|s| s.k).collect()
    }

    /// Length of the longest resolved prefix.
    pub fn resolved_prefix(&self) -> usize {
        self.steps.iter().take_while(|s| s.x.is_some()).count()
    }

    fn elements(&self) -> Result<Vec<&GroupElement>, UnresolvedStep> {
        self.steps
            .iter()
            .enumerate()
            .map(|(i, s)| s.x.as_ref().ok_or(UnresolvedStep { index: i + 1, k: s.k }))
            .collect()
    }
}

/// `Z_i = x_1 ... x_i` for every `i`.
pub fn right_products(t: &Trajectory) -> Result<Vec<GroupElement>, UnresolvedStep> {
    let xs = t.elements()?;
    let mut acc = GroupElement::identity();
    Ok(xs
        .into_iter()
        .map(|x| {
            acc = acc.mul(x);
            acc.clone()
        })
        .collect())
}

/// `Z'_i = x_i ... x_1` for every `i`.
pub fn left_products(t: &Trajectory) -> Result<Vec<GroupElement>, UnresolvedStep> {
    let xs = t.elements()?;
    let mut acc = GroupElement::identity();
    Ok(xs
        .into_iter()
        .map(|x| {
            acc = x.mul(&acc);
            acc.clone()
        })
        .collect())
}

/// Red with probability `2^-k`.
pub fn sample_y<R: Rng + ?Sized>(rng: &mut R, k: u128) -> Color {
    if uniform01(rng) < LevelLaw::red_probability(k) {
        Color::Red
    } else {
        Color::Blue
    }
}

/// Per-level lookup tables for resolving `x`: `c_i` and the sorted points
/// of `b_i F_i^-1`.
#[derive(Debug, Clone)]
pub struct StepTable {
    levels: Vec<(GroupElement, Vec<GroupElement>)>,
}

impl StepTable {
    pub fn new(cons: &Construction) -> Self {
        let levels = cons.levels.iter().map(|l| (l.c.clone(), l.blue_support().to_vec())).collect();
        Self { levels }
    }

    pub fn built(&self) -> u128 {
        self.levels.len() as u128
    }

    pub fn centre(&self, k: u128) -> Option<&GroupElement> {
        self.level(k).map(|(c, _)| c)
    }

    pub fn blue_support(&self, k: u128) -> Option<&[GroupElement]> {
        self.level(k).map(|(_, s)| s.as_slice())
    }

    fn level(&self, k: u128) -> Option<&(GroupElement, Vec<GroupElement>)> {
        k.checked_sub(1).and_then(|i| usize::try_from(i).ok()).and_then(|i| self.levels.get(i))
    }

    /// Whether `(k, y, x)` is a possible step (`x = None` only above the
    /// built levels).
    pub fn admits(&self, step: &Step) -> bool {
        match (self.level(step.k), &step.x) {
            (None, None) => step.k >= 1,
            (Some((c, _)), Some(x)) if step.y == Color::Red => x == c,
            (Some((_, support)), Some(x)) => support.binary_search(x).is_ok(),
            _ => false,
        }
    }

    /// Probability of the step under the sampler, `P(K = k) P(Y | k)` times
    /// `1 / |F_k|` for a resolved blue step.
    pub fn probability(&self, law: &LevelLaw, step: &Step) -> f64 {
        if !self.admits(step) {
            return 0.0;
        }
        let red = LevelLaw::red_probability(step.k);
        let colour = match step.y {
            Color::Red => red,
            Color::Blue => 1.0 - red,
        };
        let uniform = match (step.y, self.blue_support(step.k)) {
            (Color::Blue, Some(s)) => 1.0 / s.len() as f64,
            _ => 1.0,
        };
        law.pmf(step.k) * colour * uniform
    }
}

/// Draws one step: level, colour, then (when resolvable) a uniform point
/// of `b_k F_k^-1` for blue.
pub fn sample_step<R: Rng + ?Sized>(rng: &mut R, sampler: &mut LevelSampler, table: &StepTable) -> Step {
    let k = sampler.sample(rng);
    let y = sample_y(rng, k);
    let x = table.level(k).map(|(c, support)| match y {
        Color::Red => c.clone(),
        Color::Blue => support[rng.gen_range(0..support.len() as u64) as usize].clone(),
    });
    Step { k, y, x }
}

/// `n` i.i.d. steps from the stream of `seed`.
pub fn sample_trajectory(seed: TrajectorySeed, n: usize, table: &StepTable, sampler: &mut LevelSampler) -> Trajectory {
    assert!(n >= 1, "trajectory length must be positive");
    let mut rng = seed.rng();
    let steps = (0..n).map(|_| sample_step(&mut rng, sampler, table)).collect();
    Trajectory { seed, steps }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::{build_levels, GrowthSchedule, Limits};
    use crate::group::GroupSpec;
    use crate::measure::measure_atoms;
    use alloc::collections::BTreeMap;

    fn desk() -> Construction {
        build_levels(&GroupSpec::lamplighter(), &GrowthSchedule::desk(), 2, Limits::default()).unwrap()
    }

    fn l(shift: i64, lamps: &[i64]) -> GroupElement {
        GroupElement::lamplighter(shift, lamps.iter().copied())
    }

    fn traj(xs: &[GroupElement]) -> Trajectory {
        let steps = xs.iter().map(|x| Step { k: 1, y: Color::Blue, x: Some(x.clone()) }).collect();
        Trajectory { seed: TrajectorySeed { master: 0, index: 0 }, steps }
    }

    #[test]
    fn products_of_two_steps() {
        let (a, b) = (l(1, &[]), l(0, &[0]));
        let t = traj(&[a.clone(), b.clone()]);
        assert_eq!(right_products(&t).unwrap(), [a.clone(), a.mul(&b)]);
        assert_eq!(left_products(&t).unwrap(), [a.clone(), b.mul(&a)]);
        assert_ne!(a.mul(&b), b.mul(&a));
    }

    #[test]
    fn commuting_lamplighter_pair() {
        let a = l(1, &[0]);
        let t = traj(&[a.clone(), a.clone()]);
        let expected = l(2, &[0, 1]);
        assert_eq!(right_products(&t).unwrap()[1], expected);
        assert_eq!(left_products(&t).unwrap()[1], expected);
    }

    #[test]
    fn abelian_products_coincide() {
        let xs: Vec<_> = [3, -1, 4, 1, -5].iter().map(|&v| GroupElement::free_abelian(&[v, 2 * v])).collect();
        let t = traj(&xs);
        assert_eq!(right_products(&t).unwrap(), left_products(&t).unwrap());
    }

    #[test]
    fn unresolved_step_is_named() {
        let mut t = traj(&[l(1, &[])]);
        t.steps.push(Step { k: 9, y: Color::Blue, x: None });
        assert_eq!(right_products(&t), Err(UnresolvedStep { index: 2, k: 9 }));
        assert_eq!(left_products(&t), Err(UnresolvedStep { index: 2, k: 9 }));
    }

    #[test]
    fn sampled_steps_respect_construction() {
        let cons = desk();
        let table = StepTable::new(&cons);
        let mut sampler = LevelSampler::new();
        for index in 0..200 {
            let t = sample_trajectory(TrajectorySeed { master: 3, index }, 50, &table, &mut sampler);
            for s in &t.steps {
                assert!(table.admits(s), "{s:?}");
                assert_eq!(s.x.is_some(), s.k <= 2);
            }
        }
    }

    #[test]
    fn streams_are_independent_and_reproducible() {
        let cons = desk();
        let table = StepTable::new(&cons);
        let mut sampler = LevelSampler::new();
        let seed = |index| TrajectorySeed { master: 11, index };
        let a = sample_trajectory(seed(0), 40, &table, &mut sampler);
        let b = sample_trajectory(seed(1), 40, &table, &mut sampler);
        let a2 = sample_trajectory(seed(0), 40, &table, &mut LevelSampler::new());
        assert_ne!(a.steps, b.steps);
        assert_eq!(a, a2);
    }

    #[test]
    fn single_step_products_agree() {
        let cons = desk();
        let table = StepTable::new(&cons);
        let mut sampler = LevelSampler::new();
        for index in 0..50 {
            let t = sample_trajectory(TrajectorySeed { master: 1, index }, 1, &table, &mut sampler);
            if t.resolved_prefix() == 1 {
                assert_eq!(right_products(&t), left_products(&t));
            }
        }
    }

    #[test]
    fn step_probabilities_match_atoms() {
        let cons = desk();
        let table = StepTable::new(&cons);
        let law = LevelLaw::new();
        let m = measure_atoms(&cons, &law, 2);
        let mut agg: BTreeMap<GroupElement, f64> = BTreeMap::new();
        for k in 1..=2u128 {
            let c = table.centre(k).unwrap().clone();
            let p = table.probability(&law, &Step { k, y: Color::Red, x: Some(c.clone()) });
            *agg.entry(c).or_default() += p;
            for x in table.blue_support(k).unwrap() {
                let s = Step { k, y: Color::Blue, x: Some(x.clone()) };
                *agg.entry(x.clone()).or_default() += table.probability(&law, &s);
            }
        }
        for (g, p) in &agg {
            assert!((p - m.mass(g)).abs() < 1e-15);
        }
        let wrong = Step { k: 1, y: Color::Red, x: Some(l(5, &[])) };
        assert_eq!(table.probability(&law, &wrong), 0.0);
    }

    #[test]
    fn empirical_step_law_matches_atoms() {
        // k_max = built levels; the deficit here is P(K > 2), so compare
        // conditional laws of resolved x
        let cons = desk();
        let table = StepTable::new(&cons);
        let law = LevelLaw::new();
        let m = measure_atoms(&cons, &law, 2);
        let resolved_mass = 1.0 - m.deficit;
        let mut rng = TrajectorySeed { master: 99, index: 0 }.rng();
        let mut sampler = LevelSampler::new();
        let mut counts: BTreeMap<GroupElement, u64> = BTreeMap::new();
        let mut resolved = 0u64;
        for _ in 0..1_000_000 {
            if let Some(x) = sample_step(&mut rng, &mut sampler, &table).x {
                *counts.entry(x).or_default() += 1;
                resolved += 1;
            }
        }
        let mut tv = 0.0;
        for (g, mass) in &m.atoms {
            let freq = counts.get(g).copied().unwrap_or(0) as f64 / resolved as f64;
            tv += (freq - mass / resolved_mass).abs();
        }
        assert!(counts.keys().all(|g| m.atoms.contains_key(g)));
        assert!(tv < 0.01, "tv = {tv}");
    }
}
