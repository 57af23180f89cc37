//! Exact arithmetic in `Z^r x (Z/2 wr Z)`.
//!
//! Every built-in family is a subgroup of this ambient product: the standard
//! lamplighter uses no free coordinates, `Z x lamplighter` uses one, and the
//! free-abelian control `Z^d` uses the lamplighter shift as its first
//! coordinate and never lights a lamp.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

/// A point of the ambient group in canonical form.
///
/// `lamps` is strictly increasing (the lit positions of the `Z/2` lamps) and
/// `free` carries the extra `Z` coordinates with trailing zeros trimmed, so
/// structural equality is group equality.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct GroupElement {
    shift: i64,
    lamps: Vec<i64>,
    free: Vec<i64>,
}

impl GroupElement {
    pub fn identity() -> Self {
        Self::default()
    }

    /// Builds a lamplighter element; `lamps` may be unsorted but must not
    /// repeat a position.
    pub fn lamplighter(shift: i64, lamps: impl IntoIterator<Item = i64>) -> Self {
        Self::with_free(Vec::new(), shift, lamps)
    }

    pub fn with_free(free: impl IntoIterator<Item = i64>, shift: i64, lamps: impl IntoIterator<Item = i64>) -> Self {
        let mut lamps: Vec<i64> = lamps.into_iter().collect();
        lamps.sort_unstable();
        // toggling twice switches a lamp off again
        let mut canonical: Vec<i64> = Vec::with_capacity(lamps.len());
        for p in lamps {
            if canonical.last() == Some(&p) {
                canonical.pop();
            } else {
                canonical.push(p);
            }
        }
        let mut free: Vec<i64> = free.into_iter().collect();
        trim_zeros(&mut free);
        Self { shift, lamps: canonical, free }
    }

    /// An element of `Z^d` with coordinates `coords` (the first coordinate
    /// rides on the lamplighter shift).
    pub fn free_abelian(coords: &[i64]) -> Self {
        match coords.split_first() {
            None => Self::identity(),
            Some((first, rest)) => Self::with_free(rest.iter().copied(), *first, []),
        }
    }

    pub fn shift(&self) -> i64 {
        self.shift
    }

    pub fn lamps(&self) -> &[i64] {
        &self.lamps
    }

    pub fn free(&self) -> &[i64] {
        &self.free
    }

    pub fn is_identity(&self) -> bool {
        self.shift == 0 && self.lamps.is_empty() && self.free.is_empty()
    }

    /// Wreath-product law: shifts add and the right factor's lamps are
    /// translated by the left factor's shift before the symmetric difference.
    pub fn mul(&self, rhs: &Self) -> Self {
        let lamps = symmetric_difference_shifted(&self.lamps, &rhs.lamps, self.shift);
        let mut free = if self.free.len() >= rhs.free.len() { self.free.clone() } else { rhs.free.clone() };
        let other = if self.free.len() >= rhs.free.len() { &rhs.free } else { &self.free };
        for (slot, v) in free.iter_mut().zip(other) {
            *slot += v;
        }
        trim_zeros(&mut free);
        Self { shift: self.shift + rhs.shift, lamps, free }
    }

    pub fn inv(&self) -> Self {
        let shift = -self.shift;
        let lamps = self.lamps.iter().map(|p| p + shift).collect();
        let free = self.free.iter().map(|v| -v).collect();
        Self { shift, lamps, free }
    }

    /// The lamplighter coordinate alone (projection `Z^r x L -> L`).
    pub fn lamplighter_part(&self) -> Self {
        Self { shift: self.shift, lamps: self.lamps.clone(), free: Vec::new() }
    }
}

fn trim_zeros(v: &mut Vec<i64>) {
    while v.last() == Some(&0) {
        v.pop();
    }
}

/// `left Δ (offset + right)` for two sorted position lists.
fn symmetric_difference_shifted(left: &[i64], right: &[i64], offset: i64) -> Vec<i64> {
    let mut out = Vec::with_capacity(left.len() + right.len());
    let (mut i, mut j) = (0, 0);
    while i < left.len() && j < right.len() {
        let r = right[j] + offset;
        match left[i].cmp(&r) {
            Ordering::Less => {
                out.push(left[i]);
                i += 1;
            }
            Ordering::Greater => {
                out.push(r);
                j += 1;
            }
            Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&left[i..]);
    out.extend(right[j..].iter().map(|p| p + offset));
    out
}

impl fmt::Display for GroupElement {
    /// `(shift, [lamps])`, or `((free...), (shift, [lamps]))` when free
    /// coordinates are present.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn lamplighter(e: &GroupElement, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            write!(f, "({}, [", e.shift)?;
            for (i, p) in e.lamps.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{p}")?;
            }
            f.write_str("])")
        }
        if self.free.is_empty() {
            return lamplighter(self, f);
        }
        f.write_str("((")?;
        for (i, v) in self.free.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str("), ")?;
        lamplighter(self, f)?;
        f.write_str(")")
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed group element `{input}`: {reason}")]
pub struct ParseElementError {
    pub input: String,
    pub reason: &'static str,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), &'static str> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err("unexpected character")
        }
    }

    fn int(&mut self) -> Result<i64, &'static str> {
        self.skip_ws();
        let start = self.pos;
        if self.bytes.get(self.pos) == Some(&b'-') {
            self.pos += 1;
        }
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        core::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or("expected an integer")
    }

    /// Comma separated integers up to (and consuming) `close`.
    fn ints_until(&mut self, close: u8) -> Result<Vec<i64>, &'static str> {
        let mut out = Vec::new();
        if self.peek() == Some(close) {
            self.pos += 1;
            return Ok(out);
        }
        loop {
            out.push(self.int()?);
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(c) if c == close => {
                    self.pos += 1;
                    return Ok(out);
                }
                _ => return Err("unterminated list"),
            }
        }
    }

    fn lamplighter(&mut self) -> Result<(i64, Vec<i64>), &'static str> {
        self.expect(b'(')?;
        let shift = self.int()?;
        self.expect(b',')?;
        self.expect(b'[')?;
        let lamps = self.ints_until(b']')?;
        self.expect(b')')?;
        Ok((shift, lamps))
    }
}

impl FromStr for GroupElement {
    type Err = ParseElementError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason| ParseElementError { input: s.into(), reason };
        let mut cur = Cursor { bytes: s.as_bytes(), pos: 0 };
        let parsed = (|| {
            cur.expect(b'(')?;
            if cur.peek() == Some(b'(') {
                cur.pos += 1;
                let free = cur.ints_until(b')')?;
                cur.expect(b',')?;
                let (shift, lamps) = cur.lamplighter()?;
                cur.expect(b')')?;
                Ok((free, shift, lamps))
            } else {
                cur.pos -= 1;
                let (shift, lamps) = cur.lamplighter()?;
                Ok((Vec::new(), shift, lamps))
            }
        })()
        .map_err(err)?;
        if cur.peek().is_some() {
            return Err(err("trailing input"));
        }
        let (free, shift, lamps) = parsed;
        if lamps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(err("lamp positions must be strictly increasing"));
        }
        if free.last() == Some(&0) {
            return Err(err("free coordinates must not end in zero"));
        }
        Ok(Self { shift, lamps, free })
    }
}

/// Built-in group families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupFamily {
    /// `Z/m wr Z^r`; only `base_rank = 1`, `lamp_modulus = 2` is implemented.
    Lamplighter { base_rank: u32, lamp_modulus: u32 },
    /// `Z^rank`, the abelian control: it has no ICC factor.
    FreeAbelian { rank: u32 },
    /// `Z^rank x (Z/2 wr Z)`.
    FreeTimesLamplighter { rank: u32 },
}

/// The epimorphism onto the factor used for locks and tail values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorMap {
    Identity,
    ProjectLamplighter,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpecError {
    #[error(
        "only the rank-1 lamplighter with lamp modulus 2 is supported (got rank {base_rank}, modulus {lamp_modulus})"
    )]
    UnsupportedLamplighter { base_rank: u32, lamp_modulus: u32 },
    #[error("rank must be at least 1")]
    ZeroRank,
    #[error("factor map {factor:?} is not defined on {family:?}")]
    FactorMismatch { family: GroupFamily, factor: FactorMap },
    #[error("word balls stop growing at radius {radius} (generators do not generate an infinite group)")]
    Stalled { radius: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSpec {
    family: GroupFamily,
    generators: Vec<GroupElement>,
    factor: FactorMap,
}

impl GroupSpec {
    pub fn new(family: GroupFamily, factor: FactorMap) -> Result<Self, SpecError> {
        let generators = match family {
            GroupFamily::Lamplighter { base_rank, lamp_modulus } => {
                if base_rank != 1 || lamp_modulus != 2 {
                    return Err(SpecError::UnsupportedLamplighter { base_rank, lamp_modulus });
                }
                if factor != FactorMap::Identity {
                    return Err(SpecError::FactorMismatch { family, factor });
                }
                alloc::vec![GroupElement::lamplighter(1, []), GroupElement::lamplighter(0, [0])]
            }
            GroupFamily::FreeAbelian { rank } => {
                if rank == 0 {
                    return Err(SpecError::ZeroRank);
                }
                if factor != FactorMap::Identity {
                    return Err(SpecError::FactorMismatch { family, factor });
                }
                (0..rank as usize)
                    .map(|j| {
                        let mut coords = alloc::vec![0; rank as usize];
                        coords[j] = 1;
                        GroupElement::free_abelian(&coords)
                    })
                    .collect()
            }
            GroupFamily::FreeTimesLamplighter { rank } => {
                if rank == 0 {
                    return Err(SpecError::ZeroRank);
                }
                let mut gens: Vec<GroupElement> = (0..rank as usize)
                    .map(|j| {
                        let mut free = alloc::vec![0; rank as usize];
                        free[j] = 1;
                        GroupElement::with_free(free, 0, [])
                    })
                    .collect();
                gens.push(GroupElement::lamplighter(1, []));
                gens.push(GroupElement::lamplighter(0, [0]));
                gens
            }
        };
        Ok(Self { family, generators, factor })
    }

    pub fn lamplighter() -> Self {
        Self::new(GroupFamily::Lamplighter { base_rank: 1, lamp_modulus: 2 }, FactorMap::Identity)
            .expect("built-in lamplighter spec")
    }

    pub fn free_abelian(rank: u32) -> Result<Self, SpecError> {
        Self::new(GroupFamily::FreeAbelian { rank }, FactorMap::Identity)
    }

    pub fn free_times_lamplighter(rank: u32) -> Result<Self, SpecError> {
        Self::new(GroupFamily::FreeTimesLamplighter { rank }, FactorMap::ProjectLamplighter)
    }

    pub fn family(&self) -> GroupFamily {
        self.family
    }

    pub fn factor(&self) -> FactorMap {
        self.factor
    }

    pub fn generators(&self) -> &[GroupElement] {
        &self.generators
    }

    /// Whether the factor group is one of the built-in ICC groups.
    pub fn has_icc_factor(&self) -> bool {
        !matches!(self.family, GroupFamily::FreeAbelian { .. })
    }

    /// Number of free `Z` coordinates carried outside the lamplighter shift.
    pub fn free_rank(&self) -> usize {
        match self.family {
            GroupFamily::Lamplighter { .. } => 0,
            GroupFamily::FreeAbelian { rank } => rank as usize - 1,
            GroupFamily::FreeTimesLamplighter { rank } => rank as usize,
        }
    }

    pub fn phi(&self, a: &GroupElement) -> GroupElement {
        match self.factor {
            FactorMap::Identity => a.clone(),
            FactorMap::ProjectLamplighter => a.lamplighter_part(),
        }
    }

    /// Generators together with their inverses, sorted and deduplicated.
    pub fn symmetric_generators(&self) -> Vec<GroupElement> {
        let set: BTreeSet<GroupElement> = self.generators.iter().flat_map(|g| [g.clone(), g.inv()]).collect();
        set.into_iter().collect()
    }

    pub fn enumerate(&self) -> Enumeration {
        Enumeration::new(self.symmetric_generators())
    }

    /// The first `n` elements of the pinned enumeration.
    pub fn enumerate_prefix(&self, n: usize) -> Vec<GroupElement> {
        self.enumerate().take(n).collect()
    }

    /// Checks that word balls grow strictly up to `radius`.
    pub fn check_growth(&self, radius: usize) -> Result<(), SpecError> {
        let mut e = self.enumerate();
        let mut last = 0;
        for r in 0..=radius {
            let size = e.ball_size(r);
            if r > 0 && size <= last {
                return Err(SpecError::Stalled { radius: r });
            }
            last = size;
        }
        Ok(())
    }
}

/// Breadth-first enumeration by word length; each sphere is emitted in the
/// total order of [`GroupElement`]. Prefix-stable and injective.
#[derive(Debug, Clone)]
pub struct Enumeration {
    generators: Vec<GroupElement>,
    seen: BTreeSet<GroupElement>,
    sphere: Vec<GroupElement>,
    pending: VecDeque<GroupElement>,
    radius: usize,
}

impl Enumeration {
    fn new(generators: Vec<GroupElement>) -> Self {
        let e = GroupElement::identity();
        let mut seen = BTreeSet::new();
        seen.insert(e.clone());
        Self { generators, seen, sphere: alloc::vec![e.clone()], pending: VecDeque::from([e]), radius: 0 }
    }

    fn advance_sphere(&mut self) {
        let mut next = BTreeSet::new();
        for x in &self.sphere {
            for g in &self.generators {
                let y = x.mul(g);
                if !self.seen.contains(&y) {
                    next.insert(y);
                }
            }
        }
        self.seen.extend(next.iter().cloned());
        self.sphere = next.into_iter().collect();
        self.pending.extend(self.sphere.iter().cloned());
        self.radius += 1;
    }

    /// Word length of the most recently emitted element.
    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Number of elements of word length at most `r`.
    pub fn ball_size(&mut self, r: usize) -> usize {
        while self.radius < r {
            if self.sphere.is_empty() {
                break;
            }
            self.advance_sphere();
        }
        self.seen.len()
    }
}

impl Iterator for Enumeration {
    type Item = GroupElement;

    fn next(&mut self) -> Option<GroupElement> {
        while self.pending.is_empty() {
            if self.sphere.is_empty() {
                return None;
            }
            self.advance_sphere();
        }
        self.pending.pop_front()
    }
}
