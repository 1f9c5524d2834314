//! The LDA generative model conditional on the document label: truths with
//! a controlled intrinsic rank, token sampling, and exact likelihood-based
//! quantities over the finite M × N outcome grid.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::matrix::{rank, StochasticMatrix, RANK_TOLERANCE};

/// Floor applied to probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-300;

/// Redraw limit for [`sample_true_model`].
pub const MAX_TRUTH_ATTEMPTS: usize = 1000;

const DOC_DIST_TOLERANCE: f64 = 1e-9;

#[inline]
pub(crate) fn floored_ln(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

/// One observed word, as zero-based indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Token {
    pub doc: u32,
    pub word: u32,
}

/// A bag of tokens plus its word × document tally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    vocab: usize,
    docs: usize,
    tokens: Vec<Token>,
    counts: Vec<u32>,
}

impl Dataset {
    pub fn from_tokens(vocab: usize, docs: usize, tokens: Vec<Token>) -> Result<Self> {
        let mut counts = vec![0u32; vocab * docs];
        for (t, tok) in tokens.iter().enumerate() {
            let (i, j) = (tok.word as usize, tok.doc as usize);
            if i >= vocab || j >= docs {
                return Err(Error::DimensionMismatch(format!(
                    "token {t} = (doc {j}, word {i}) outside {docs} docs x {vocab} words"
                )));
            }
            counts[i * docs + j] += 1;
        }
        Ok(Self {
            vocab,
            docs,
            tokens,
            counts,
        })
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn docs(&self) -> usize {
        self.docs
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    /// Number of tokens with word `i` in document `j`.
    pub fn count(&self, word: usize, doc: usize) -> u32 {
        self.counts[word * self.docs + doc]
    }

    /// Row-major word × document tallies.
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn doc_lengths(&self) -> Vec<u32> {
        let mut lens = vec![0; self.docs];
        for tok in &self.tokens {
            lens[tok.doc as usize] += 1;
        }
        lens
    }
}

/// The data-generating distribution: A0 (M × H0), B0 (H0 × N) and the
/// document distribution q'(z).
#[derive(Debug, Clone, PartialEq)]
pub struct TrueModel {
    a0: StochasticMatrix,
    b0: StochasticMatrix,
    doc_dist: Vec<f64>,
    // q(i | j), row-major M × N
    cond: Vec<f64>,
}

impl TrueModel {
    /// Validates shapes, full rank of A0 and B0, and a strictly positive
    /// normalized `doc_dist`. `None` means uniform over documents.
    pub fn new(a0: StochasticMatrix, b0: StochasticMatrix, doc_dist: Option<Vec<f64>>) -> Result<Self> {
        if !a0.is_full_rank(RANK_TOLERANCE) {
            return Err(Error::InvalidShape("A0 is not full rank".into()));
        }
        if !b0.is_full_rank(RANK_TOLERANCE) {
            return Err(Error::InvalidShape("B0 is not full rank".into()));
        }
        Self::new_unchecked_rank(a0, b0, doc_dist)
    }

    /// Like [`TrueModel::new`] without the full-rank requirement. Useful for
    /// degenerate truths such as one-hot topics that share a word.
    pub fn new_unchecked_rank(
        a0: StochasticMatrix,
        b0: StochasticMatrix,
        doc_dist: Option<Vec<f64>>,
    ) -> Result<Self> {
        let cond = a0.product(&b0)?;
        let docs = b0.cols();
        let doc_dist = doc_dist.unwrap_or_else(|| vec![1.0 / docs as f64; docs]);
        if doc_dist.len() != docs {
            return Err(Error::DimensionMismatch(format!(
                "document distribution has {} entries for {docs} documents",
                doc_dist.len()
            )));
        }
        if doc_dist.iter().any(|&p| !p.is_finite() || p <= 0.0) {
            return Err(Error::Config("document distribution must be strictly positive".into()));
        }
        let total: f64 = doc_dist.iter().sum();
        if (total - 1.0).abs() > DOC_DIST_TOLERANCE {
            return Err(Error::Config(format!("document distribution sums to {total}")));
        }
        Ok(Self {
            a0,
            b0,
            doc_dist,
            cond,
        })
    }

    pub fn a0(&self) -> &StochasticMatrix {
        &self.a0
    }

    pub fn b0(&self) -> &StochasticMatrix {
        &self.b0
    }

    pub fn doc_dist(&self) -> &[f64] {
        &self.doc_dist
    }

    pub fn vocab(&self) -> usize {
        self.a0.rows()
    }

    pub fn docs(&self) -> usize {
        self.b0.cols()
    }

    pub fn true_topics(&self) -> usize {
        self.a0.cols()
    }

    /// q(word | doc).
    #[inline]
    pub fn cond_prob(&self, word: usize, doc: usize) -> f64 {
        self.cond[word * self.docs() + doc]
    }

    /// Exact conditional entropy Σ_j q'(j) Σ_i −q(i|j) log q(i|j).
    pub fn conditional_entropy(&self) -> f64 {
        let mut h = 0.0;
        for (j, &pj) in self.doc_dist.iter().enumerate() {
            for i in 0..self.vocab() {
                let q = self.cond_prob(i, j);
                if q > 0.0 {
                    h -= pj * q * q.ln();
                }
            }
        }
        h
    }

    /// Intrinsic rank r of this truth.
    pub fn intrinsic_rank(&self) -> Result<usize> {
        rank_r(&self.a0, &self.b0)
    }
}

fn dirichlet_one_column<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    let mut col: Vec<f64> = (0..len).map(|_| Exp1.sample(rng)).collect();
    let sum: f64 = col.iter().sum();
    col.iter_mut().for_each(|v| *v /= sum);
    col
}

fn random_stochastic<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Result<StochasticMatrix> {
    let columns: Vec<Vec<f64>> = (0..cols).map(|_| dirichlet_one_column(rows, rng)).collect();
    StochasticMatrix::from_columns(&columns)
}

/// Draws a truth with Dirichlet(1) columns, redrawing until A0 and B0 are
/// full rank and r takes its generic value min(M−1, N−1, H0−1). The
/// document distribution is uniform.
pub fn sample_true_model<R: Rng + ?Sized>(
    vocab: usize,
    docs: usize,
    true_topics: usize,
    rng: &mut R,
) -> Result<TrueModel> {
    if vocab < 2 || docs < 2 || true_topics < 1 {
        return Err(Error::InvalidShape(format!(
            "truth needs M >= 2, N >= 2, H0 >= 1; got M = {vocab}, N = {docs}, H0 = {true_topics}"
        )));
    }
    let generic = (vocab - 1).min(docs - 1).min(true_topics - 1);
    for _ in 0..MAX_TRUTH_ATTEMPTS {
        let a0 = random_stochastic(vocab, true_topics, rng)?;
        let b0 = random_stochastic(true_topics, docs, rng)?;
        if !a0.is_full_rank(RANK_TOLERANCE) || !b0.is_full_rank(RANK_TOLERANCE) {
            continue;
        }
        if rank_r(&a0, &b0)? != generic {
            continue;
        }
        return TrueModel::new(a0, b0, None);
    }
    Err(Error::RejectionLimit(MAX_TRUTH_ATTEMPTS))
}

/// Intrinsic rank r = rank(U0 V0) with the default pivot tolerance.
pub fn rank_r(a0: &StochasticMatrix, b0: &StochasticMatrix) -> Result<usize> {
    rank_r_with_tolerance(a0, b0, RANK_TOLERANCE)
}

/// r = rank(U0 V0), where U0 = (a_ik − a_iH0) over i < M, k < H0 and
/// V0 = (b_kj − b_k1) over k < H0, j > 1. Zero when H0 = 1.
pub fn rank_r_with_tolerance(a0: &StochasticMatrix, b0: &StochasticMatrix, tolerance: f64) -> Result<usize> {
    if a0.cols() != b0.rows() {
        return Err(Error::DimensionMismatch(format!(
            "A0 is {}x{} but B0 is {}x{}",
            a0.rows(),
            a0.cols(),
            b0.rows(),
            b0.cols()
        )));
    }
    let (m, h0, n) = (a0.rows(), a0.cols(), b0.cols());
    if h0 == 1 || m < 2 || n < 2 {
        return Ok(0);
    }
    let (rows, inner, cols) = (m - 1, h0 - 1, n - 1);
    let mut product = vec![0.0; rows * cols];
    for i in 0..rows {
        for k in 0..inner {
            let u = a0.get(i, k) - a0.get(i, h0 - 1);
            if u == 0.0 {
                continue;
            }
            for j in 0..cols {
                product[i * cols + j] += u * (b0.get(k, j + 1) - b0.get(k, 0));
            }
        }
    }
    Ok(rank(&product, rows, cols, tolerance))
}

/// Draws `n` i.i.d. tokens: document from q', topic from column b0_j,
/// word from column a0_k.
pub fn generate_dataset<R: Rng + ?Sized>(model: &TrueModel, n: usize, rng: &mut R) -> Result<Dataset> {
    let weights = |col: Vec<f64>| {
        WeightedIndex::new(col).map_err(|e| Error::Domain(format!("bad sampling weights: {e}")))
    };
    let doc_sampler = weights(model.doc_dist.clone())?;
    let topic_samplers = (0..model.docs())
        .map(|j| weights(model.b0.column(j).collect()))
        .collect::<Result<Vec<_>>>()?;
    let word_samplers = (0..model.true_topics())
        .map(|k| weights(model.a0.column(k).collect()))
        .collect::<Result<Vec<_>>>()?;
    let tokens = (0..n)
        .map(|_| {
            let doc = doc_sampler.sample(rng);
            let topic = topic_samplers[doc].sample(rng);
            let word = word_samplers[topic].sample(rng);
            Token {
                doc: doc as u32,
                word: word as u32,
            }
        })
        .collect();
    Dataset::from_tokens(model.vocab(), model.docs(), tokens)
}

/// log p(word | doc, A, B) = log Σ_k b_kj a_ik, floored at [`PROB_FLOOR`].
pub fn cond_log_lik(a: &StochasticMatrix, b: &StochasticMatrix, token: Token) -> f64 {
    let (i, j) = (token.word as usize, token.doc as usize);
    let p: f64 = (0..a.cols()).map(|k| b.get(k, j) * a.get(i, k)).sum();
    floored_ln(p)
}

/// Exact KL divergence Σ_j q'(j) Σ_i q(i|j) log(q(i|j) / p(i|j, A, B)).
pub fn kl_exact(a: &StochasticMatrix, b: &StochasticMatrix, model: &TrueModel) -> Result<f64> {
    if a.rows() != model.vocab() || b.cols() != model.docs() {
        return Err(Error::DimensionMismatch(format!(
            "model is {}x{} words x docs but truth is {}x{}",
            a.rows(),
            b.cols(),
            model.vocab(),
            model.docs()
        )));
    }
    let p = a.product(b)?;
    Ok(kl_from_table(model, |i, j| floored_ln(p[i * model.docs() + j])))
}

/// Σ_j q'(j) Σ_i q(i|j) (log q(i|j) − log_p(i, j)).
pub(crate) fn kl_from_table(model: &TrueModel, log_p: impl Fn(usize, usize) -> f64) -> f64 {
    let mut kl = 0.0;
    for (j, &pj) in model.doc_dist.iter().enumerate() {
        let mut inner = 0.0;
        for i in 0..model.vocab() {
            let q = model.cond_prob(i, j);
            if q > 0.0 {
                inner += q * (q.ln() - log_p(i, j));
            }
        }
        kl += pj * inner;
    }
    kl
}

/// S_n = −(1/n) Σ_t log q(word_t | doc_t).
pub fn empirical_entropy(dataset: &Dataset, model: &TrueModel) -> f64 {
    let n = dataset.len();
    if n == 0 {
        return 0.0;
    }
    let docs = dataset.docs();
    let total: f64 = dataset
        .counts()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(cell, &c)| f64::from(c) * floored_ln(model.cond_prob(cell / docs, cell % docs)))
        .sum();
    -total / n as f64
}
