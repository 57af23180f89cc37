//! Finitely supported measures with an explicit missing-mass deficit.

use alloc::collections::BTreeMap;

use crate::construction::Construction;
use crate::group::GroupElement;
use crate::heavy_tail::LevelLaw;

/// Atoms plus the mass not represented by them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TruncatedMeasure {
    pub atoms: BTreeMap<GroupElement, f64>,
    pub deficit: f64,
}

impl TruncatedMeasure {
    pub fn dirac(g: GroupElement) -> Self {
        Self { atoms: BTreeMap::from([(g, 1.0)]), deficit: 0.0 }
    }

    /// Uniform probability on the elements yielded by `it`.
    pub fn uniform<'a>(it: impl IntoIterator<Item = &'a GroupElement>) -> Self {
        let mut atoms: BTreeMap<GroupElement, f64> = it.into_iter().map(|g| (g.clone(), 0.0)).collect();
        let w = 1.0 / atoms.len() as f64;
        atoms.values_mut().for_each(|m| *m = w);
        Self { atoms, deficit: 0.0 }
    }

    pub fn add(&mut self, g: GroupElement, mass: f64) {
        *self.atoms.entry(g).or_insert(0.0) += mass;
    }

    pub fn mass(&self, g: &GroupElement) -> f64 {
        self.atoms.get(g).copied().unwrap_or(0.0)
    }

    /// Sum of atom masses, added smallest first.
    pub fn total(&self) -> f64 {
        let mut masses: alloc::vec::Vec<f64> = self.atoms.values().copied().collect();
        masses.sort_by(f64::total_cmp);
        masses.iter().sum()
    }

    /// `|total + deficit - 1|`.
    pub fn normalization_error(&self) -> f64 {
        (self.total() + self.deficit - 1.0).abs()
    }

    /// The opposite measure `g -> m(g^-1)`.
    pub fn inverse(&self) -> Self {
        Self { atoms: self.atoms.iter().map(|(g, m)| (g.inv(), *m)).collect(), deficit: self.deficit }
    }
}

/// Atoms of the step law for levels `1..=k_max`: `P(K = i) 2^-i` on `c_i`
/// and `P(K = i)(1 - 2^-i) / |F_i|` on each point of `b_i F_i^-1`.
pub fn measure_atoms(cons: &Construction, law: &LevelLaw, k_max: u32) -> TruncatedMeasure {
    assert!(k_max <= cons.built(), "k_max {k_max} exceeds built levels {}", cons.built());
    let mut m = TruncatedMeasure::default();
    for level in &cons.levels[..k_max as usize] {
        let k = u128::from(level.index);
        let p = law.pmf(k);
        let red = LevelLaw::red_probability(k);
        m.add(level.c.clone(), p * red);
        let blue = p * (1.0 - red) / level.f.len() as f64;
        for x in &level.blue_support() {
            m.add(x.clone(), blue);
        }
    }
    m.deficit = law.survival(u128::from(k_max));
    m
}
