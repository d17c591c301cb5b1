//! Edit-distance machinery for the discrete input space.
//!
//! The optimizer measures dissimilarity between sequences with the
//! normalized Levenshtein distance: unit-cost insert/delete/substitute edit
//! distance divided by the longer (unpadded) length, so values live in
//! [0, 1] and zero means exact reconstruction.

use crate::types::TokenSequence;

/// Plain Levenshtein edit distance over token slices (two-row DP).
pub fn levenshtein(a: &[u16], b: &[u16]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Normalized Levenshtein distance between the unpadded prefixes of two
/// sequences: edit distance / max(|a|, |b|). Both empty gives 0.
pub fn normalized_levenshtein(a: &TokenSequence, b: &TokenSequence) -> f64 {
    let (ua, ub) = (a.unpadded(), b.unpadded());
    let longer = ua.len().max(ub.len());
    if longer == 0 {
        return 0.0;
    }
    levenshtein(ua, ub) as f64 / longer as f64
}
