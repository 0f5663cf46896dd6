//! Word error rate via Levenshtein alignment, relative WER reduction and WER
//! recovery rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Error counts for one utterance or a whole corpus.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_length: usize,
    /// Percent.
    pub wer: f64,
}

impl ScoreReport {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    fn with_counts(s: usize, d: usize, i: usize, n: usize) -> Self {
        Self {
            substitutions: s,
            deletions: d,
            insertions: i,
            reference_length: n,
            wer: if n == 0 { 0.0 } else { 100.0 * (s + d + i) as f64 / n as f64 },
        }
    }

    /// Add counts, recomputing the corpus-level WER.
    pub fn merge(&self, other: &ScoreReport) -> ScoreReport {
        Self::with_counts(
            self.substitutions + other.substitutions,
            self.deletions + other.deletions,
            self.insertions + other.insertions,
            self.reference_length + other.reference_length,
        )
    }
}

#[derive(Clone, Copy)]
enum Step {
    Diagonal,
    Delete,
    Insert,
}

/// Minimal-cost alignment with unit costs.
///
/// Among equal-cost alignments the backtrace prefers substitutions, then
/// deletions, then insertions.
pub fn edit_distance_align<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<ScoreReport> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut cost = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        cost[i * w] = i;
    }
    for j in 0..=m {
        cost[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = cost[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let del = cost[(i - 1) * w + j] + 1;
            let ins = cost[i * w + j - 1] + 1;
            cost[i * w + j] = sub.min(del).min(ins);
        }
    }

    let (mut s, mut d, mut ins) = (0, 0, 0);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = cost[i * w + j];
        let step = if i > 0
            && j > 0
            && here == cost[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1])
        {
            Step::Diagonal
        } else if i > 0 && here == cost[(i - 1) * w + j] + 1 {
            Step::Delete
        } else {
            Step::Insert
        };
        match step {
            Step::Diagonal => {
                s += usize::from(reference[i - 1] != hypothesis[j - 1]);
                i -= 1;
                j -= 1;
            }
            Step::Delete => {
                d += 1;
                i -= 1;
            }
            Step::Insert => {
                ins += 1;
                j -= 1;
            }
        }
    }
    Ok(ScoreReport::with_counts(s, d, ins, n))
}

/// Corpus-level score: error counts and reference lengths are summed before
/// dividing.
pub fn corpus_score<'a, T, I>(pairs: I) -> Result<ScoreReport>
where
    T: PartialEq + 'a,
    I: IntoIterator<Item = (&'a [T], &'a [T])>,
{
    let mut total = ScoreReport::default();
    for (r, h) in pairs {
        total = total.merge(&edit_distance_align(r, h)?);
    }
    if total.reference_length == 0 {
        return Err(Error::EmptyReference);
    }
    Ok(total)
}

/// Relative WER reduction in percent.
pub fn werr(baseline_wer: f64, new_wer: f64) -> Result<f64> {
    if baseline_wer <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "baseline WER must be positive, got {baseline_wer}"
        )));
    }
    Ok(100.0 * (baseline_wer - new_wer) / baseline_wer)
}

/// WER recovery rate in percent: the share of the gain from adding the same
/// amount of labeled data that was recovered with unlabeled data.
pub fn wrr(baseline_wer: f64, ssl_wer: f64, oracle_wer: f64) -> Result<f64> {
    if baseline_wer <= oracle_wer {
        return Err(Error::UndefinedRecovery {
            baseline: baseline_wer,
            oracle: oracle_wer,
        });
    }
    Ok(100.0 * (baseline_wer - ssl_wer) / (baseline_wer - oracle_wer))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn words(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identical_is_zero() {
        let r = edit_distance_align(&words("a b c"), &words("a b c")).unwrap();
        assert_eq!(r.wer, 0.0);
        assert_eq!(r.errors(), 0);
    }

    #[test]
    fn single_substitution() {
        let r = edit_distance_align(&words("a b c"), &words("a x c")).unwrap();
        assert_eq!((r.substitutions, r.deletions, r.insertions), (1, 0, 0));
        assert!((r.wer - 33.33).abs() < 0.01);
    }

    #[test]
    fn deletion_and_insertion() {
        let r = edit_distance_align(&words("a"), &words("")).unwrap();
        assert_eq!((r.deletions, r.wer), (1, 100.0));
        let r = edit_distance_align(&words("a"), &words("a b")).unwrap();
        assert_eq!((r.insertions, r.wer), (1, 100.0));
        assert!(matches!(edit_distance_align::<&str>(&[], &["a"]), Err(Error::EmptyReference)));
    }

    #[test]
    fn tie_prefers_substitution() {
        // "a b" -> "b c": two substitutions or one deletion + one insertion.
        let r = edit_distance_align(&words("a b"), &words("b c")).unwrap();
        assert_eq!((r.substitutions, r.deletions, r.insertions), (2, 0, 0));
    }

    #[test]
    fn corpus_score_pools_counts() {
        let a = words("a b c d");
        let b = words("a x c d");
        let c = words("e");
        let d: Vec<&str> = vec![];
        let total = corpus_score([(a.as_slice(), b.as_slice()), (c.as_slice(), d.as_slice())]).unwrap();
        assert_eq!(total.reference_length, 5);
        assert_eq!(total.errors(), 2);
        assert!((total.wer - 40.0).abs() < 1e-12);
    }

    #[test]
    fn werr_and_wrr_reported_values() {
        assert!((werr(16.77, 15.22).unwrap() - 9.2).abs() < 0.05);
        assert!((werr(15.97, 15.79).unwrap() - 1.1).abs() < 0.05);
        assert_eq!(werr(16.77, 16.77).unwrap(), 0.0);
        assert!((wrr(16.77, 15.60, 14.87).unwrap() - 61.6).abs() < 0.05);
        assert!((wrr(16.77, 15.02, 14.87).unwrap() - 92.1).abs() < 0.05);
        assert!((wrr(16.77, 14.87, 14.87).unwrap() - 100.0).abs() < 1e-9);
        assert!(matches!(wrr(14.0, 13.0, 14.0), Err(Error::UndefinedRecovery { .. })));
        assert!(werr(0.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn wrr_is_scale_invariant(b in 10.0f64..30.0, gap in 0.5f64..5.0, frac in 0.0f64..1.0, k in 0.1f64..10.0) {
            let o = b - gap;
            let s = b - frac * gap;
            let w1 = wrr(b, s, o).unwrap();
            let w2 = wrr(k * b, k * s, k * o).unwrap();
            prop_assert!((w1 - w2).abs() < 1e-9);
        }

        #[test]
        fn relabeling_preserves_wer(r in proptest::collection::vec(0u8..4, 1..8), h in proptest::collection::vec(0u8..4, 0..8)) {
            let relabel = |v: &[u8]| v.iter().map(|&x| (x + 1) % 4 + 10).collect::<Vec<_>>();
            let a = edit_distance_align(&r, &h).unwrap();
            let b = edit_distance_align(&relabel(&r), &relabel(&h)).unwrap();
            prop_assert_eq!(a, b);
            prop_assert_eq!(edit_distance_align(&r, &r).unwrap().wer, 0.0);
        }
    }
}
