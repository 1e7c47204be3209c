use std::cmp::Ordering;
use std::fmt;

/// Set of outgoing-arc indices still available at a diagram node. Index 0
/// (unmatched) is always present in master diagrams.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct StateSet {
    words: Vec<u64>,
}

impl StateSet {
    pub fn empty() -> Self {
        StateSet { words: Vec::new() }
    }

    /// {0, 1, ..., n}
    pub fn full(n: usize) -> Self {
        let mut s = StateSet {
            words: vec![0; n / 64 + 1],
        };
        for v in 0..=n {
            s.insert(v as u32);
        }
        s
    }

    pub fn insert(&mut self, v: u32) {
        let (w, b) = (v as usize / 64, v % 64);
        if self.words.len() <= w {
            self.words.resize(w + 1, 0);
        }
        self.words[w] |= 1 << b;
    }

    pub fn remove(&mut self, v: u32) {
        let (w, b) = (v as usize / 64, v % 64);
        if let Some(word) = self.words.get_mut(w) {
            *word &= !(1 << b);
        }
        self.trim();
    }

    fn trim(&mut self) {
        while self.words.last() == Some(&0) {
            self.words.pop();
        }
    }

    pub fn contains(&self, v: u32) -> bool {
        self.words
            .get(v as usize / 64)
            .is_some_and(|w| w >> (v % 64) & 1 == 1)
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.words.iter().enumerate().flat_map(|(k, &w)| {
            (0..64u32)
                .filter(move |b| w >> b & 1 == 1)
                .map(move |b| k as u32 * 64 + b)
        })
    }

    pub fn union(&self, other: &StateSet) -> StateSet {
        let n = self.words.len().max(other.words.len());
        let words = (0..n)
            .map(|k| {
                self.words.get(k).copied().unwrap_or(0) | other.words.get(k).copied().unwrap_or(0)
            })
            .collect();
        StateSet { words }
    }

    pub fn intersection_len(&self, other: &StateSet) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn union_len(&self, other: &StateSet) -> usize {
        self.len() + other.len() - self.intersection_len(other)
    }

    /// Compare as ascending element sequences.
    pub fn lex_cmp(&self, other: &StateSet) -> Ordering {
        self.iter().cmp(other.iter())
    }
}

impl fmt::Debug for StateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl fmt::Display for StateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, v) in self.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "}}")
    }
}

impl FromIterator<u32> for StateSet {
    fn from_iter<I: IntoIterator<Item = u32>>(iter: I) -> Self {
        let mut s = StateSet::empty();
        for v in iter {
            s.insert(v);
        }
        s
    }
}
