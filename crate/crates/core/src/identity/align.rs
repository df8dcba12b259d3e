use serde::{Deserialize, Serialize};

use crate::dataset::AminoAcidSequence;
use crate::error::{Error, Result};

/// Gap character in aligned strings.
pub const GAP: u8 = b'-';
/// Chain separator used when an antibody is reduced to one sequence. Never matches.
pub const SEPARATOR: u8 = b'/';

/// Linear-gap scoring scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignParams {
    pub match_score: i32,
    pub mismatch_score: i32,
    pub gap_penalty: i32,
}

impl Default for AlignParams {
    fn default() -> Self {
        Self {
            match_score: 1,
            mismatch_score: -1,
            gap_penalty: -2,
        }
    }
}

impl AlignParams {
    pub fn validate(&self) -> Result<()> {
        if self.match_score <= self.mismatch_score {
            return Err(Error::Config("match_score must exceed mismatch_score".into()));
        }
        if self.gap_penalty >= 0 {
            return Err(Error::Config("gap_penalty must be negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub aligned_a: String,
    pub aligned_b: String,
    pub score: i32,
}

impl Alignment {
    /// Columns holding the same residue, not counting `X` or the chain separator.
    pub fn identical_columns(&self) -> usize {
        self.aligned_a
            .bytes()
            .zip(self.aligned_b.bytes())
            .filter(|&(x, y)| is_match(x, y))
            .count()
    }
}

/// Residue equality as used for scoring and identity: unknowns and the
/// separator never match anything.
#[inline]
pub fn is_match(a: u8, b: u8) -> bool {
    a == b && a != b'X' && a != SEPARATOR && a != GAP
}

/// DP cell value ordered lexicographically: alignment score first, then
/// identical columns. Maximizing the pair makes identity independent of
/// argument order.
type Cell = (i32, u32);

#[inline]
fn better(a: Cell, b: Cell) -> bool {
    a > b
}

#[inline]
fn diag(prev: Cell, x: u8, y: u8, p: &AlignParams) -> Cell {
    if is_match(x, y) {
        (prev.0 + p.match_score, prev.1 + 1)
    } else {
        (prev.0 + p.mismatch_score, prev.1)
    }
}

/// Needleman–Wunsch over raw bytes. Among optimal-score alignments the one
/// with most identical columns is returned; remaining ties trace back
/// diagonal, then up (gap in `b`), then left (gap in `a`).
pub fn align_bytes(a: &[u8], b: &[u8], p: &AlignParams) -> Alignment {
    let (n, m) = (a.len(), b.len());
    let width = m + 1;
    let mut dp: Vec<Cell> = vec![(0, 0); (n + 1) * width];
    for j in 1..=m {
        dp[j] = (p.gap_penalty * j as i32, 0);
    }
    for i in 1..=n {
        dp[i * width] = (p.gap_penalty * i as i32, 0);
        for j in 1..=m {
            let d = diag(dp[(i - 1) * width + j - 1], a[i - 1], b[j - 1], p);
            let up = dp[(i - 1) * width + j];
            let up = (up.0 + p.gap_penalty, up.1);
            let left = dp[i * width + j - 1];
            let left = (left.0 + p.gap_penalty, left.1);
            let mut best = d;
            if better(up, best) {
                best = up;
            }
            if better(left, best) {
                best = left;
            }
            dp[i * width + j] = best;
        }
    }

    let mut ra = Vec::with_capacity(n + m);
    let mut rb = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * width + j];
        if i > 0 && j > 0 && diag(dp[(i - 1) * width + j - 1], a[i - 1], b[j - 1], p) == here {
            ra.push(a[i - 1]);
            rb.push(b[j - 1]);
            i -= 1;
            j -= 1;
        } else if i > 0 && {
            let up = dp[(i - 1) * width + j];
            (up.0 + p.gap_penalty, up.1) == here
        } {
            ra.push(a[i - 1]);
            rb.push(GAP);
            i -= 1;
        } else {
            ra.push(GAP);
            rb.push(b[j - 1]);
            j -= 1;
        }
    }
    ra.reverse();
    rb.reverse();
    Alignment {
        aligned_a: String::from_utf8(ra).expect("ascii"),
        aligned_b: String::from_utf8(rb).expect("ascii"),
        score: dp[n * width + m].0,
    }
}

pub fn global_align(a: &AminoAcidSequence, b: &AminoAcidSequence, p: &AlignParams) -> Alignment {
    align_bytes(a.as_bytes(), b.as_bytes(), p)
}

/// Identical columns of an optimal alignment divided by the shorter length,
/// without materializing the traceback.
pub fn identity_bytes(a: &[u8], b: &[u8], p: &AlignParams) -> f64 {
    let denom = a.len().min(b.len());
    if denom == 0 {
        return 0.0;
    }
    let m = b.len();
    let mut prev: Vec<Cell> = (0..=m).map(|j| (p.gap_penalty * j as i32, 0)).collect();
    let mut cur: Vec<Cell> = vec![(0, 0); m + 1];
    for (i, &x) in a.iter().enumerate() {
        cur[0] = (p.gap_penalty * (i as i32 + 1), 0);
        for j in 1..=m {
            let d = diag(prev[j - 1], x, b[j - 1], p);
            let up = (prev[j].0 + p.gap_penalty, prev[j].1);
            let left = (cur[j - 1].0 + p.gap_penalty, cur[j - 1].1);
            cur[j] = d.max(up).max(left);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m].1 as f64 / denom as f64
}

pub fn percent_identity(a: &AminoAcidSequence, b: &AminoAcidSequence, p: &AlignParams) -> f64 {
    identity_bytes(a.as_bytes(), b.as_bytes(), p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(x: &str) -> AminoAcidSequence {
        AminoAcidSequence::new(x).unwrap()
    }

    /// Best (score, matches) over every global alignment, by recursion over
    /// the three column types.
    fn brute_force(a: &[u8], b: &[u8], p: &AlignParams) -> Cell {
        match (a.split_first(), b.split_first()) {
            (None, None) => (0, 0),
            (Some((_, ra)), None) => {
                let r = brute_force(ra, b, p);
                (r.0 + p.gap_penalty, r.1)
            }
            (None, Some((_, rb))) => {
                let r = brute_force(a, rb, p);
                (r.0 + p.gap_penalty, r.1)
            }
            (Some((&x, ra)), Some((&y, rb))) => {
                let r = brute_force(ra, rb, p);
                let d = if is_match(x, y) { (r.0 + p.match_score, r.1 + 1) } else { (r.0 + p.mismatch_score, r.1) };
                let u = brute_force(ra, b, p);
                let l = brute_force(a, rb, p);
                d.max((u.0 + p.gap_penalty, u.1)).max((l.0 + p.gap_penalty, l.1))
            }
        }
    }

    fn column_score(al: &Alignment, p: &AlignParams) -> i32 {
        al.aligned_a
            .bytes()
            .zip(al.aligned_b.bytes())
            .map(|(x, y)| {
                if x == GAP || y == GAP {
                    p.gap_penalty
                } else if is_match(x, y) {
                    p.match_score
                } else {
                    p.mismatch_score
                }
            })
            .sum()
    }

    #[test]
    fn align_examples() {
        let p = AlignParams::default();
        let al = global_align(&s("ACD"), &s("ACD"), &p);
        assert_eq!((al.score, al.aligned_a.as_str(), al.aligned_b.as_str()), (3, "ACD", "ACD"));
        let al = global_align(&s("A"), &s("C"), &p);
        assert_eq!((al.score, al.aligned_a.as_str()), (-1, "A"));
        let al = global_align(&s("ACD"), &s("AD"), &p);
        assert_eq!(brute_force(b"ACD", b"AD", &p).0, 0);
        assert_eq!(al.score, 0);
        assert_eq!(al.aligned_b, "A-D");
    }

    #[test]
    fn identity_examples() {
        let p = AlignParams::default();
        assert_eq!(percent_identity(&s("ACDEFG"), &s("ACDEFG"), &p), 1.0);
        assert_eq!(percent_identity(&s("AAAA"), &s("CCCC"), &p), 0.0);
        assert_eq!(percent_identity(&s("ACDE"), &s("ACDF"), &p), 0.75);
        // Unknown residues never count.
        assert_eq!(percent_identity(&s("AXDE"), &s("AXDE"), &p), 0.75);
        assert_eq!(identity_bytes(b"AC/DE", b"AC/DE", &p), 0.8);
    }

    #[test]
    fn param_validation() {
        assert!(AlignParams::default().validate().is_ok());
        assert!(AlignParams { match_score: 0, mismatch_score: 0, gap_penalty: -1 }.validate().is_err());
        assert!(AlignParams { gap_penalty: 0, ..Default::default() }.validate().is_err());
    }

    fn seq_strategy(max: usize) -> impl Strategy<Value = Vec<u8>> {
        proptest::collection::vec(proptest::sample::select(b"ACDGX".to_vec()), 1..=max)
    }

    proptest! {
        #[test]
        fn dp_matches_enumeration(a in seq_strategy(6), b in seq_strategy(6)) {
            let p = AlignParams::default();
            let al = align_bytes(&a, &b, &p);
            let best = brute_force(&a, &b, &p);
            prop_assert_eq!(al.score, best.0);
            prop_assert_eq!(al.identical_columns() as u32, best.1);
            prop_assert_eq!(column_score(&al, &p), al.score);
        }

        #[test]
        fn alignment_shape(a in seq_strategy(30), b in seq_strategy(30)) {
            let al = align_bytes(&a, &b, &AlignParams::default());
            prop_assert_eq!(al.aligned_a.len(), al.aligned_b.len());
            prop_assert!(al.aligned_a.bytes().zip(al.aligned_b.bytes()).all(|(x, y)| !(x == GAP && y == GAP)));
            let strip = |s: &str| s.bytes().filter(|&c| c != GAP).collect::<Vec<u8>>();
            prop_assert_eq!(strip(&al.aligned_a), a.clone());
            prop_assert_eq!(strip(&al.aligned_b), b.clone());
        }

        #[test]
        fn identity_symmetric_and_consistent(a in seq_strategy(30), b in seq_strategy(30)) {
            let p = AlignParams::default();
            let ab = identity_bytes(&a, &b, &p);
            prop_assert_eq!(ab, identity_bytes(&b, &a, &p));
            prop_assert!((0.0..=1.0).contains(&ab));
            let al = align_bytes(&a, &b, &p);
            prop_assert_eq!(ab, al.identical_columns() as f64 / a.len().min(b.len()) as f64);
        }

        #[test]
        fn identity_one_iff_equal(a in proptest::collection::vec(proptest::sample::select(b"ACDG".to_vec()), 1..20),
                                  b in proptest::collection::vec(proptest::sample::select(b"ACDG".to_vec()), 1..20)) {
            let p = AlignParams::default();
            prop_assert_eq!(identity_bytes(&a, &a, &p), 1.0);
            if a != b && a.len() == b.len() {
                prop_assert!(identity_bytes(&a, &b, &p) < 1.0);
            }
        }
    }
}
