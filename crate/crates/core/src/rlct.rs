//! Exact real log canonical thresholds (learning coefficients) of LDA and of
//! matrix factorization, and the asymptotic learning-curve terms they drive.
//!
//! Everything here is integer or rational arithmetic; floating point only
//! appears when a curve is evaluated at a sample size.

use std::fmt;

use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Sizes of an LDA problem together with the intrinsic rank of its truth.
///
/// `vocab` is M (words), `docs` is N (documents), `topics` is H (model),
/// `true_topics` is H0 and `rank` is r = rank(U0 V0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LdaShape {
    vocab: u32,
    docs: u32,
    topics: u32,
    true_topics: u32,
    rank: u32,
}

impl LdaShape {
    pub fn new(vocab: u32, docs: u32, topics: u32, true_topics: u32, rank: u32) -> Result<Self> {
        if vocab < 2 {
            return Err(Error::InvalidShape(format!("M >= 2 required, got M = {vocab}")));
        }
        if docs < 2 {
            return Err(Error::InvalidShape(format!("N >= 2 required, got N = {docs}")));
        }
        if true_topics < 1 {
            return Err(Error::InvalidShape("H0 >= 1 required, got H0 = 0".into()));
        }
        if topics < true_topics {
            return Err(Error::InvalidShape(format!(
                "H >= H0 required, got H = {topics}, H0 = {true_topics}"
            )));
        }
        let max_rank = max_intrinsic_rank(vocab, docs, true_topics);
        if rank > max_rank {
            return Err(Error::InvalidShape(format!(
                "r <= min(M-1, N-1, H0-1) = {max_rank} required, got r = {rank}"
            )));
        }
        Ok(Self {
            vocab,
            docs,
            topics,
            true_topics,
            rank,
        })
    }

    /// Shape with H0 set to r + 1, the smallest true topic count that admits
    /// rank r. The learning coefficient depends on H0 only through r.
    pub fn with_rank(vocab: u32, docs: u32, topics: u32, rank: u32) -> Result<Self> {
        Self::new(vocab, docs, topics, rank + 1, rank)
    }

    pub fn vocab(&self) -> u32 {
        self.vocab
    }

    pub fn docs(&self) -> u32 {
        self.docs
    }

    pub fn topics(&self) -> u32 {
        self.topics
    }

    pub fn true_topics(&self) -> u32 {
        self.true_topics
    }

    pub fn rank(&self) -> u32 {
        self.rank
    }
}

/// Largest intrinsic rank a truth with these sizes can have.
pub fn max_intrinsic_rank(vocab: u32, docs: u32, true_topics: u32) -> u32 {
    (vocab.saturating_sub(1))
        .min(docs.saturating_sub(1))
        .min(true_topics.saturating_sub(1))
}

/// A learning coefficient and the order of its pole.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RlctResult {
    pub lambda: Rational64,
    pub multiplicity: u32,
}

impl RlctResult {
    pub fn lambda_f64(&self) -> f64 {
        self.lambda.to_f64().unwrap_or(f64::NAN)
    }
}

impl fmt::Display for RlctResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "lambda = {}, m = {}", self.lambda, self.multiplicity)
    }
}

/// Which branch of the case analysis a shape falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RlctCase {
    /// All three triangle-type inequalities hold.
    Balanced,
    /// M + H < N + r + 1.
    DocumentsDominate,
    /// N + H < M + r + 1.
    VocabularyDominates,
    /// M + N < H + r + 1.
    TopicsDominate,
}

#[allow(clippy::int_plus_one)]
pub fn lda_case(shape: &LdaShape) -> RlctCase {
    let (m, n, h, r) = widen(shape);
    if n + r + 1 <= m + h && m + r + 1 <= n + h && h + r + 1 <= m + n {
        RlctCase::Balanced
    } else if m + h < n + r + 1 {
        RlctCase::DocumentsDominate
    } else if n + h < m + r + 1 {
        RlctCase::VocabularyDominates
    } else {
        RlctCase::TopicsDominate
    }
}

/// Learning coefficient and multiplicity of LDA.
pub fn lda_rlct(shape: &LdaShape) -> RlctResult {
    let (m, n, h, r) = widen(shape);
    match lda_case(shape) {
        RlctCase::Balanced => {
            let s = h + r + 1;
            let core = 2 * s * (m + n) - (m - n).pow(2) - s * s;
            let half_n = Rational64::new(n, 2);
            if (m + n + h + r) % 2 == 1 {
                RlctResult {
                    lambda: Rational64::new(core, 8) - half_n,
                    multiplicity: 1,
                }
            } else {
                RlctResult {
                    lambda: Rational64::new(core + 1, 8) - half_n,
                    multiplicity: 2,
                }
            }
        }
        RlctCase::DocumentsDominate => RlctResult {
            lambda: Rational64::new(m * h + n * (r + 1) - h * (r + 1) - n, 2),
            multiplicity: 1,
        },
        RlctCase::VocabularyDominates => RlctResult {
            lambda: Rational64::new(n * h + m * (r + 1) - h * (r + 1) - n, 2),
            multiplicity: 1,
        },
        RlctCase::TopicsDominate => RlctResult {
            lambda: Rational64::new(m * n - n, 2),
            multiplicity: 1,
        },
    }
}

/// Learning coefficient of unconstrained matrix factorization
/// ‖UV − U0V0‖² with U: m×h, V: h×n and rank(U0V0) = r (reduced rank
/// regression).
///
/// `h = 0, r = 0` is accepted and yields λ = 0: with no factor columns the
/// discrepancy is identically zero.
pub fn mf_rlct(m: u32, n: u32, h: u32, r: u32) -> Result<RlctResult> {
    if m < 1 || n < 1 {
        return Err(Error::InvalidShape(format!(
            "MF needs m >= 1 and n >= 1, got m = {m}, n = {n}"
        )));
    }
    let max_rank = m.min(n).min(h);
    if r > max_rank {
        return Err(Error::InvalidShape(format!(
            "MF needs r <= min(m, n, h) = {max_rank}, got r = {r}"
        )));
    }
    let (m, n, h, r) = (i64::from(m), i64::from(n), i64::from(h), i64::from(r));
    let result = if n + r <= m + h && m + r <= n + h && h + r <= m + n {
        let s = h + r;
        let core = 2 * s * (m + n) - (m - n).pow(2) - s * s;
        if (m + n + h + r) % 2 == 0 {
            RlctResult {
                lambda: Rational64::new(core, 8),
                multiplicity: 1,
            }
        } else {
            RlctResult {
                lambda: Rational64::new(core + 1, 8),
                multiplicity: 2,
            }
        }
    } else if m + h < n + r {
        RlctResult {
            lambda: Rational64::new(m * h + n * r - h * r, 2),
            multiplicity: 1,
        }
    } else if n + h < m + r {
        RlctResult {
            lambda: Rational64::new(n * h + m * r - h * r, 2),
            multiplicity: 1,
        }
    } else {
        RlctResult {
            lambda: Rational64::new(m * n, 2),
            multiplicity: 1,
        }
    };
    debug_assert!(result.lambda >= Rational64::zero());
    Ok(result)
}

/// Free parameter count (M−1)H + (H−1)N of the pair of stochastic matrices.
pub fn lda_dimension(shape: &LdaShape) -> u64 {
    let (m, n, h) = (
        u64::from(shape.vocab),
        u64::from(shape.docs),
        u64::from(shape.topics),
    );
    (m - 1) * h + (h - 1) * n
}

/// Leading terms of the expected Bayesian generalization error,
/// λ/n − (m−1)/(n log n).
pub fn expected_generalization_error(lambda: f64, multiplicity: u32, n: u64) -> Result<f64> {
    if n < 3 {
        return Err(Error::Domain(format!(
            "generalization-error asymptotics need n >= 3, got n = {n}"
        )));
    }
    let n = n as f64;
    Ok(lambda / n - f64::from(multiplicity.saturating_sub(1)) / (n * n.ln()))
}

/// Leading terms of the free energy beyond n·S_n, λ log n − (m−1) log log n.
pub fn free_energy_penalty(lambda: f64, multiplicity: u32, n: u64) -> Result<f64> {
    if n < 16 {
        return Err(Error::Domain(format!(
            "free-energy asymptotics need n >= 16, got n = {n}"
        )));
    }
    let ln_n = (n as f64).ln();
    Ok(lambda * ln_n - f64::from(multiplicity.saturating_sub(1)) * ln_n.ln())
}

/// Asymptotic learning curve of a model with known (λ, m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticCurve {
    pub rlct: RlctResult,
}

impl AsymptoticCurve {
    pub fn new(rlct: RlctResult) -> Self {
        Self { rlct }
    }

    pub fn generalization_error(&self, n: u64) -> Result<f64> {
        expected_generalization_error(self.rlct.lambda_f64(), self.rlct.multiplicity, n)
    }

    pub fn free_energy_penalty(&self, n: u64) -> Result<f64> {
        free_energy_penalty(self.rlct.lambda_f64(), self.rlct.multiplicity, n)
    }

    pub fn evaluate(&self, grid: &[u64]) -> Result<Vec<(u64, f64)>> {
        grid.iter()
            .map(|&n| self.generalization_error(n).map(|g| (n, g)))
            .collect()
    }
}

fn widen(shape: &LdaShape) -> (i64, i64, i64, i64) {
    (
        i64::from(shape.vocab),
        i64::from(shape.docs),
        i64::from(shape.topics),
        i64::from(shape.rank),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    fn lda(m: u32, n: u32, h: u32, r: u32) -> RlctResult {
        lda_rlct(&LdaShape::with_rank(m, n, h, r).unwrap())
    }

    #[test]
    fn table_two_theory() {
        assert_eq!(lda(10, 5, 2, 1), RlctResult { lambda: rat(21, 2), multiplicity: 1 });
        assert_eq!(lda(10, 5, 5, 1), RlctResult { lambda: rat(15, 1), multiplicity: 1 });
    }

    #[test]
    fn single_topic_is_regular_categorical() {
        let shape = LdaShape::new(3, 2, 1, 1, 0).unwrap();
        let res = lda_rlct(&shape);
        assert_eq!(res, RlctResult { lambda: rat(1, 1), multiplicity: 1 });
        assert_eq!(lda_dimension(&shape), 2);
    }

    #[test]
    fn balanced_even_sum_has_multiplicity_two() {
        let shape = LdaShape::with_rank(3, 3, 3, 1).unwrap();
        assert_eq!(lda_case(&shape), RlctCase::Balanced);
        assert_eq!(lda_rlct(&shape), RlctResult { lambda: rat(3, 1), multiplicity: 2 });
        let mf = mf_rlct(3, 3, 3, 2).unwrap();
        assert_eq!(mf.lambda - rat(3, 2), rat(3, 1));
    }

    #[test]
    fn mf_examples() {
        assert_eq!(mf_rlct(9, 4, 1, 1).unwrap(), RlctResult { lambda: rat(6, 1), multiplicity: 1 });
        assert_eq!(mf_rlct(2, 2, 2, 1).unwrap(), RlctResult { lambda: rat(2, 1), multiplicity: 2 });
        for m in 1..6 {
            for n in 1..6 {
                assert_eq!(mf_rlct(m, n, 0, 0).unwrap(), RlctResult { lambda: rat(0, 1), multiplicity: 1 });
            }
        }
    }

    #[test]
    fn mf_rejects_bad_rank() {
        assert!(matches!(mf_rlct(3, 3, 0, 1), Err(Error::InvalidShape(_))));
        assert!(matches!(mf_rlct(3, 2, 5, 3), Err(Error::InvalidShape(_))));
        assert!(matches!(mf_rlct(0, 2, 1, 0), Err(Error::InvalidShape(_))));
    }

    #[test]
    fn shape_validation_names_constraint() {
        let err = LdaShape::new(1, 5, 2, 2, 0).unwrap_err().to_string();
        assert!(err.contains("M >= 2"), "{err}");
        let err = LdaShape::new(10, 1, 2, 2, 0).unwrap_err().to_string();
        assert!(err.contains("N >= 2"), "{err}");
        let err = LdaShape::new(10, 5, 1, 2, 0).unwrap_err().to_string();
        assert!(err.contains("H >= H0"), "{err}");
        let err = LdaShape::new(10, 5, 3, 2, 2).unwrap_err().to_string();
        assert!(err.contains("r <= min"), "{err}");
        assert!(LdaShape::new(10, 5, 3, 3, 0).is_ok());
    }

    #[test]
    fn dimensions() {
        let dims: Vec<u64> = (2..=5)
            .map(|h| lda_dimension(&LdaShape::with_rank(10, 5, h, 1).unwrap()))
            .collect();
        assert_eq!(dims, vec![23, 37, 51, 65]);
        assert_eq!(lda_dimension(&LdaShape::new(2, 2, 1, 1, 0).unwrap()), 1);
    }

    #[test]
    fn generalization_error_terms() {
        let g = expected_generalization_error(10.5, 1, 1000).unwrap();
        assert!((g - 0.0105).abs() < 1e-15);
        let g = expected_generalization_error(7.25, 1, 400).unwrap();
        assert_eq!(g, 7.25 / 400.0);
        let g = expected_generalization_error(3.0, 2, 100).unwrap();
        assert!((g - 0.027828).abs() < 1e-6, "{g}");
        assert!(expected_generalization_error(1.0, 1, 2).is_err());
    }

    #[test]
    fn free_energy_terms() {
        let f = free_energy_penalty(12.0, 1, 1000).unwrap();
        assert!((f - 82.8931).abs() < 1e-4, "{f}");
        let f = free_energy_penalty(1.0, 1, 100).unwrap();
        assert!((f - 4.6052).abs() < 1e-4, "{f}");
        let f = free_energy_penalty(15.0, 2, 1_000_000).unwrap();
        let direct = 15.0 * 1e6f64.ln() - 1e6f64.ln().ln();
        assert!((f - direct).abs() < 1e-9 && (f - 204.6069).abs() < 1e-4, "{f}");
        assert!(free_energy_penalty(1.0, 1, 15).is_err());
    }

    #[test]
    fn curve_is_positive_and_decreasing() {
        let curve = AsymptoticCurve::new(lda(10, 5, 3, 1));
        let grid: Vec<u64> = (3..200).collect();
        let values = curve.evaluate(&grid).unwrap();
        assert!(values.iter().all(|(_, g)| g.is_finite() && *g > 0.0));
        assert!(values.windows(2).all(|w| w[1].1 < w[0].1));
        // multiplicity two stays positive from n = 3 on
        let curve = AsymptoticCurve::new(lda(3, 3, 3, 1));
        assert!(curve.evaluate(&grid).unwrap().iter().all(|(_, g)| *g > 0.0));
    }
}
