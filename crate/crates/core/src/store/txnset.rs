use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

/// Identifier of a committed transaction. Zero means "before any".
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TxnId(pub u64);

impl TxnId {
    pub fn next(self) -> TxnId {
        TxnId(self.0 + 1)
    }
}

impl fmt::Display for TxnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

/// Set of transaction ids stored as disjoint, non-adjacent inclusive ranges.
/// A cell's done set is almost always one contiguous range.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TxnSet {
    ranges: Vec<(u64, u64)>,
}

impl TxnSet {
    pub fn new() -> TxnSet {
        TxnSet::default()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn len(&self) -> u64 {
        self.ranges.iter().map(|(a, b)| b - a + 1).sum()
    }

    pub fn contains(&self, t: TxnId) -> bool {
        let t = t.0;
        self.ranges.binary_search_by(|&(a, b)| {
            if b < t {
                core::cmp::Ordering::Less
            } else if a > t {
                core::cmp::Ordering::Greater
            } else {
                core::cmp::Ordering::Equal
            }
        }).is_ok()
    }

    pub fn insert(&mut self, t: TxnId) {
        let t = t.0;
        let i = self.ranges.partition_point(|&(_, b)| b.saturating_add(1) < t);
        if i < self.ranges.len() && self.ranges[i].0 <= t.saturating_add(1) {
            let r = &mut self.ranges[i];
            r.0 = r.0.min(t);
            r.1 = r.1.max(t);
            // May now touch the next range.
            if i + 1 < self.ranges.len() && self.ranges[i + 1].0 <= self.ranges[i].1 + 1 {
                self.ranges[i].1 = self.ranges[i].1.max(self.ranges[i + 1].1);
                self.ranges.remove(i + 1);
            }
        } else {
            self.ranges.insert(i, (t, t));
        }
    }

    pub fn remove(&mut self, t: TxnId) {
        let t = t.0;
        if let Some(i) = self.ranges.iter().position(|&(a, b)| a <= t && t <= b) {
            let (a, b) = self.ranges[i];
            match (a == t, b == t) {
                (true, true) => {
                    self.ranges.remove(i);
                }
                (true, false) => self.ranges[i].0 = t + 1,
                (false, true) => self.ranges[i].1 = t - 1,
                (false, false) => {
                    self.ranges[i].1 = t - 1;
                    self.ranges.insert(i + 1, (t + 1, b));
                }
            }
        }
    }

    /// Drops every id below `floor`.
    pub fn retain_from(&mut self, floor: TxnId) {
        self.ranges.retain(|&(_, b)| b >= floor.0);
        if let Some(first) = self.ranges.first_mut() {
            first.0 = first.0.max(floor.0);
        }
    }

    pub fn union(&self, other: &TxnSet) -> TxnSet {
        let mut out = self.clone();
        for t in other.iter() {
            out.insert(t);
        }
        out
    }

    pub fn max(&self) -> Option<TxnId> {
        self.ranges.last().map(|&(_, b)| TxnId(b))
    }

    pub fn min(&self) -> Option<TxnId> {
        self.ranges.first().map(|&(a, _)| TxnId(a))
    }

    pub fn iter(&self) -> impl Iterator<Item = TxnId> + '_ {
        self.ranges.iter().flat_map(|&(a, b)| (a..=b).map(TxnId))
    }

    pub fn ranges(&self) -> &[(u64, u64)] {
        &self.ranges
    }

    pub fn is_disjoint(&self, other: &TxnSet) -> bool {
        other.iter().all(|t| !self.contains(t))
    }
}

impl FromIterator<TxnId> for TxnSet {
    fn from_iter<I: IntoIterator<Item = TxnId>>(iter: I) -> Self {
        let mut s = TxnSet::new();
        for t in iter {
            s.insert(t);
        }
        s
    }
}

/// Committed values by transaction, keeping at most `cap` newest entries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct History<V> {
    entries: BTreeMap<TxnId, V>,
    cap: usize,
}

impl<V> History<V> {
    pub fn new(cap: usize) -> History<V> {
        History { entries: BTreeMap::new(), cap: cap.max(1) }
    }

    /// Records `v` at `t`; returns the oldest id still retained.
    pub fn insert(&mut self, t: TxnId, v: V) -> TxnId {
        self.entries.insert(t, v);
        while self.entries.len() > self.cap {
            self.entries.pop_first();
        }
        *self.entries.keys().next().unwrap()
    }

    pub fn get(&self, t: TxnId) -> Option<&V> {
        self.entries.get(&t)
    }

    /// Value as of `t`: the newest entry at or before it.
    pub fn as_of(&self, t: TxnId) -> Option<(TxnId, &V)> {
        self.entries.range(..=t).next_back().map(|(k, v)| (*k, v))
    }

    pub fn latest(&self) -> Option<(TxnId, &V)> {
        self.entries.iter().next_back().map(|(k, v)| (*k, v))
    }

    pub fn oldest(&self) -> Option<TxnId> {
        self.entries.keys().next().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn iter(&self) -> impl Iterator<Item = (TxnId, &V)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }
}
