//! State indexing, truncations and finite state sets.

use serde::{Deserialize, Serialize};

/// Logical size of a state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateCount {
    Finite(usize),
    Infinite,
}

impl StateCount {
    pub fn contains(self, x: usize) -> bool {
        match self {
            StateCount::Finite(n) => x < n,
            StateCount::Infinite => true,
        }
    }
}

/// The computational window `{0, .., size-1}` of a countable state space.
///
/// Kernel mass routed to an index `>= size` leaves the truncation and is
/// booked as outflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub size: usize,
}

impl Truncation {
    pub fn new(size: usize) -> Self {
        Truncation { size }
    }

    pub fn contains(&self, y: usize) -> bool {
        y < self.size
    }

    /// Truncation holding the signed states `-radius..=radius`.
    pub fn signed(radius: u32) -> Self {
        Truncation::new(2 * radius as usize + 1)
    }

    pub fn all(&self) -> StateSet {
        StateSet::range(0, self.size)
    }
}

/// A finite set of state indices, kept sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct StateSet(Vec<usize>);

impl StateSet {
    pub fn new(mut states: Vec<usize>) -> Self {
        states.sort_unstable();
        states.dedup();
        StateSet(states)
    }

    pub fn singleton(x: usize) -> Self {
        StateSet(vec![x])
    }

    pub fn range(start: usize, end: usize) -> Self {
        StateSet((start..end).collect())
    }

    pub fn contains(&self, x: usize) -> bool {
        self.0.binary_search(&x).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> Option<usize> {
        self.0.last().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// `true` when every member lies inside the truncation.
    pub fn within(&self, trunc: Truncation) -> bool {
        self.max().is_none_or(|m| m < trunc.size)
    }

    /// Compact label used in reports, e.g. `{0,1,2}`.
    pub fn label(&self) -> String {
        let inner: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        format!("{{{}}}", inner.join(","))
    }
}

impl FromIterator<usize> for StateSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        StateSet::new(iter.into_iter().collect())
    }
}

/// Interleaving bijection between the integers and state indices:
/// `0, 1, -1, 2, -2, ...` map to `0, 1, 2, 3, 4, ...`.
pub fn signed_to_index(j: i64) -> usize {
    if j > 0 {
        (2 * j - 1) as usize
    } else {
        (-2 * j) as usize
    }
}

pub fn index_to_signed(x: usize) -> i64 {
    let x = x as i64;
    if x % 2 == 1 {
        (x + 1) / 2
    } else {
        -x / 2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interleaving_is_a_bijection() {
        for j in -50..=50 {
            assert_eq!(index_to_signed(signed_to_index(j)), j);
        }
        assert_eq!(signed_to_index(0), 0);
        assert_eq!(signed_to_index(1), 1);
        assert_eq!(signed_to_index(-1), 2);
        assert_eq!(signed_to_index(-20), 40);
        assert_eq!(Truncation::signed(20).size, 41);
    }

    #[test]
    fn state_set_is_sorted() {
        let s = StateSet::new(vec![3, 1, 3, 2]);
        assert_eq!(s.as_slice(), &[1, 2, 3]);
        assert!(s.contains(2));
        assert!(!s.contains(0));
        assert_eq!(s.label(), "{1,2,3}");
        assert!(s.within(Truncation::new(4)));
        assert!(!s.within(Truncation::new(3)));
        assert!(StateSet::default().within(Truncation::new(0)));
    }
}
