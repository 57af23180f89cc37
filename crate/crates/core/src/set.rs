//! Finite subsets of the ambient group and their product-set algebra.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::group::{GroupElement, GroupSpec};

/// Default cardinality cap for set algebra.
pub const DEFAULT_SET_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("set cardinality cap {cap} exceeded (reached {reached} elements)")]
pub struct CapExceeded {
    pub cap: usize,
    pub reached: usize,
}

/// A finite, deduplicated set of group elements iterated in element order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ElementSet(BTreeSet<GroupElement>);

impl ElementSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn singleton(e: GroupElement) -> Self {
        Self(BTreeSet::from([e]))
    }

    pub fn identity() -> Self {
        Self::singleton(GroupElement::identity())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, e: &GroupElement) -> bool {
        self.0.contains(e)
    }

    pub fn insert(&mut self, e: GroupElement) -> bool {
        self.0.insert(e)
    }

    pub fn iter(&self) -> impl Iterator<Item = &GroupElement> + '_ {
        self.0.iter()
    }

    pub fn to_vec(&self) -> Vec<GroupElement> {
        self.0.iter().cloned().collect()
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn union(&self, other: &Self) -> Self {
        Self(self.0.union(&other.0).cloned().collect())
    }

    pub fn inverse(&self) -> Self {
        self.0.iter().map(GroupElement::inv).collect()
    }

    /// `{ab : a in self, b in other}`.
    pub fn product(&self, other: &Self, cap: usize) -> Result<Self, CapExceeded> {
        let mut out = BTreeSet::new();
        for a in &self.0 {
            for b in &other.0 {
                out.insert(a.mul(b));
                if out.len() > cap {
                    return Err(CapExceeded { cap, reached: out.len() });
                }
            }
        }
        Ok(Self(out))
    }

    /// The `k`-fold product set, with `A^1 = A`.
    pub fn power(&self, k: u32, cap: usize) -> Result<Self, CapExceeded> {
        assert!(k >= 1, "set power needs k >= 1");
        if self.len() > cap {
            return Err(CapExceeded { cap, reached: self.len() });
        }
        let mut acc = self.clone();
        for _ in 1..k {
            let next = acc.product(self, cap)?;
            // once A^(j+1) = A^j every higher power agrees
            if next == acc {
                break;
            }
            acc = next;
        }
        Ok(acc)
    }

    pub fn left_translate(&self, g: &GroupElement) -> Self {
        self.0.iter().map(|x| g.mul(x)).collect()
    }

    pub fn right_translate(&self, g: &GroupElement) -> Self {
        self.0.iter().map(|x| x.mul(g)).collect()
    }

    /// Image under the group's factor map.
    pub fn image(&self, spec: &GroupSpec) -> Self {
        self.0.iter().map(|x| spec.phi(x)).collect()
    }
}

impl FromIterator<GroupElement> for ElementSet {
    fn from_iter<I: IntoIterator<Item = GroupElement>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a ElementSet {
    type Item = &'a GroupElement;
    type IntoIter = alloc::collections::btree_set::Iter<'a, GroupElement>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(n: i64) -> GroupElement {
        GroupElement::free_abelian(&[n])
    }

    #[test]
    fn identity_set_is_idempotent() {
        assert_eq!(ElementSet::identity().power(5, 10).unwrap(), ElementSet::identity());
    }

    #[test]
    fn product_of_two_pairs() {
        let a = GroupElement::lamplighter(1, []);
        let b = GroupElement::lamplighter(0, [0]);
        let left: ElementSet = [GroupElement::identity(), a.clone()].into_iter().collect();
        let right: ElementSet = [GroupElement::identity(), b.clone()].into_iter().collect();
        let prod = left.product(&right, 100).unwrap();
        let expected: ElementSet = [GroupElement::identity(), a.clone(), b.clone(), a.mul(&b)].into_iter().collect();
        assert_eq!(prod, expected);
        assert_eq!(prod.len(), 4);
    }

    #[test]
    fn integer_interval_powers() {
        // direct enumeration oracle: all sums of k terms from {0, 1}
        let base: ElementSet = [z(0), z(1)].into_iter().collect();
        for k in 1..=12u32 {
            let p = base.power(k, 1000).unwrap();
            let oracle: ElementSet = (0..=(k as i64)).map(z).collect();
            assert_eq!(p, oracle);
            assert_eq!(p.len(), k as usize + 1);
        }
    }

    #[test]
    fn cap_is_reported() {
        let base: ElementSet = (-3..=3).map(z).collect();
        let err = base.power(10, 20).unwrap_err();
        assert_eq!(err.cap, 20);
        assert!(err.reached > 20);
    }

    #[test]
    fn inverse_is_involution() {
        let s: ElementSet =
            [GroupElement::lamplighter(2, [0, 5]), GroupElement::lamplighter(-1, [3])].into_iter().collect();
        assert_eq!(s.inverse().inverse(), s);
    }
}
