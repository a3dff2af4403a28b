//! Online triplet mining inside a batch.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::math;
use crate::rng::Rng;

/// Row indices into a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

impl Triplet {
    pub fn new(anchor: usize, positive: usize, negative: usize) -> Self {
        Self {
            anchor,
            positive,
            negative,
        }
    }

    pub fn is_valid<L: PartialEq>(&self, labels: &[L]) -> bool {
        self.anchor != self.positive
            && labels[self.anchor] == labels[self.positive]
            && labels[self.anchor] != labels[self.negative]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mining {
    Random,
    SemiHard,
}

impl Mining {
    pub fn as_str(self) -> &'static str {
        match self {
            Mining::Random => "random",
            Mining::SemiHard => "semi_hard",
        }
    }
}

/// Every valid triplet, ordered by `(anchor, positive, negative)`.
pub fn all_triplets<L: PartialEq>(labels: &[L]) -> Vec<Triplet> {
    let mut out = Vec::new();
    for a in 0..labels.len() {
        for p in 0..labels.len() {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            for n in 0..labels.len() {
                if labels[n] != labels[a] {
                    out.push(Triplet::new(a, p, n));
                }
            }
        }
    }
    out
}

/// Up to `max_triplets` distinct valid triplets drawn uniformly from all
/// valid ones. When there are at most `max_triplets`, all of them are
/// returned in enumeration order.
pub fn mine_random<L: PartialEq>(labels: &[L], rng: &mut Rng, max_triplets: usize) -> Vec<Triplet> {
    let n = labels.len();
    let same: Vec<usize> = (0..n)
        .map(|i| labels.iter().filter(|l| **l == labels[i]).count())
        .collect();
    // Triplets anchored at each row: (same - 1) positives times (n - same)
    // negatives.
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0u64);
    for &s in &same {
        let w = ((s - 1) * (n - s)) as u64;
        prefix.push(prefix.last().copied().unwrap_or(0) + w);
    }
    let total = prefix[n];
    if total == 0 || max_triplets == 0 {
        return Vec::new();
    }
    if total <= max_triplets as u64 {
        return all_triplets(labels);
    }

    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(max_triplets);
    while out.len() < max_triplets {
        let r = rng.below(total);
        let anchor = prefix.partition_point(|&c| c <= r) - 1;
        let offset = r - prefix[anchor];
        let negatives = (n - same[anchor]) as u64;
        let (p_rank, n_rank) = ((offset / negatives) as usize, (offset % negatives) as usize);
        let positive = (0..n)
            .filter(|&j| j != anchor && labels[j] == labels[anchor])
            .nth(p_rank)
            .unwrap_or(anchor);
        let negative = (0..n)
            .filter(|&j| labels[j] != labels[anchor])
            .nth(n_rank)
            .unwrap_or(anchor);
        let t = Triplet::new(anchor, positive, negative);
        if seen.insert(t) {
            out.push(t);
        }
    }
    out
}

/// All triplets with `d(a, p) < d(a, n) < d(a, p) + margin` on the given
/// embeddings, ordered by `(anchor, positive, negative)`.
pub fn mine_semi_hard<L: PartialEq, E: AsRef<[f64]>>(embeddings: &[E], labels: &[L], margin: f64) -> Vec<Triplet> {
    let n = embeddings.len();
    let mut dist = alloc::vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = math::l2(embeddings[i].as_ref(), embeddings[j].as_ref());
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let mut out = Vec::new();
    for a in 0..n {
        for p in 0..n {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            let d_ap = dist[a * n + p];
            for neg in 0..n {
                if labels[neg] == labels[a] {
                    continue;
                }
                let d_an = dist[a * n + neg];
                if d_ap < d_an && d_an < d_ap + margin {
                    out.push(Triplet::new(a, p, neg));
                }
            }
        }
    }
    out
}
