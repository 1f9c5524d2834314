//! Collapsed Gibbs sampling over token-topic assignments, with conjugate
//! Dirichlet draws of (A, B) from the count tables at retained sweeps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::StochasticMatrix;
use crate::model::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsConfig {
    /// Symmetric Dirichlet concentration on document-topic proportions.
    pub alpha: f64,
    /// Symmetric Dirichlet concentration on topic-word probabilities.
    pub beta: f64,
    pub burn_in: usize,
    pub thinning: usize,
    /// Number of retained (A, B) draws.
    pub draws: usize,
    pub seed: u64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            burn_in: 10_000,
            thinning: 20,
            draws: 1000,
            seed: 0,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if self.thinning == 0 {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        if self.draws == 0 {
            return Err(Error::Config("at least one retained draw is required".into()));
        }
        Ok(())
    }

    pub fn total_sweeps(&self) -> usize {
        self.burn_in + self.thinning * self.draws
    }
}

/// Latent topic assignments and the count tables they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    topics: usize,
    vocab: usize,
    docs: usize,
    assignments: Vec<u32>,
    // doc-major: [doc * topics + k]
    doc_topic: Vec<u32>,
    // word-major: [word * topics + k]
    word_topic: Vec<u32>,
    topic_total: Vec<u32>,
    scratch: Vec<f64>,
}

impl ChainState {
    pub fn topics(&self) -> usize {
        self.topics
    }

    pub fn assignments(&self) -> &[u32] {
        &self.assignments
    }

    pub fn doc_topic(&self, k: usize, doc: usize) -> u32 {
        self.doc_topic[doc * self.topics + k]
    }

    pub fn word_topic(&self, word: usize, k: usize) -> u32 {
        self.word_topic[word * self.topics + k]
    }

    pub fn topic_total(&self, k: usize) -> u32 {
        self.topic_total[k]
    }

    /// Checks that the tables agree with each other and with the dataset's
    /// document lengths.
    pub fn is_consistent(&self, dataset: &Dataset) -> bool {
        let h = self.topics;
        let doc_lengths = dataset.doc_lengths();
        let docs_ok = (0..self.docs)
            .all(|j| self.doc_topic[j * h..(j + 1) * h].iter().sum::<u32>() == doc_lengths[j]);
        let words_ok = (0..h).all(|k| {
            (0..self.vocab).map(|i| self.word_topic[i * h + k]).sum::<u32>() == self.topic_total[k]
        });
        let total_ok = self.topic_total.iter().map(|&c| c as usize).sum::<usize>() == dataset.len();
        docs_ok && words_ok && total_ok && self.assignments.len() == dataset.len()
    }

    /// Recounts the tables from the assignments and compares.
    pub fn matches_assignments(&self, dataset: &Dataset) -> bool {
        let mut fresh = empty_state(dataset, self.topics);
        for (t, tok) in dataset.tokens().iter().enumerate() {
            fresh.add(tok.doc as usize, tok.word as usize, self.assignments[t] as usize);
        }
        fresh.doc_topic == self.doc_topic
            && fresh.word_topic == self.word_topic
            && fresh.topic_total == self.topic_total
    }

    #[inline]
    fn add(&mut self, doc: usize, word: usize, k: usize) {
        self.doc_topic[doc * self.topics + k] += 1;
        self.word_topic[word * self.topics + k] += 1;
        self.topic_total[k] += 1;
    }

    #[inline]
    fn remove(&mut self, doc: usize, word: usize, k: usize) {
        self.doc_topic[doc * self.topics + k] -= 1;
        self.word_topic[word * self.topics + k] -= 1;
        self.topic_total[k] -= 1;
    }
}

fn empty_state(dataset: &Dataset, topics: usize) -> ChainState {
    ChainState {
        topics,
        vocab: dataset.vocab(),
        docs: dataset.docs(),
        assignments: vec![0; dataset.len()],
        doc_topic: vec![0; dataset.docs() * topics],
        word_topic: vec![0; dataset.vocab() * topics],
        topic_total: vec![0; topics],
        scratch: vec![0.0; topics],
    }
}

/// Assigns every token a uniformly random topic.
pub fn init_chain<R: Rng + ?Sized>(dataset: &Dataset, topics: usize, rng: &mut R) -> Result<ChainState> {
    if topics == 0 {
        return Err(Error::InvalidShape("H >= 1 required".into()));
    }
    let mut state = empty_state(dataset, topics);
    for (t, tok) in dataset.tokens().iter().enumerate() {
        let k = rng.random_range(0..topics);
        state.assignments[t] = k as u32;
        state.add(tok.doc as usize, tok.word as usize, k);
    }
    Ok(state)
}

/// Resamples every token once from its collapsed full conditional
/// P(y_t = k | rest) ∝ (n_kj + α)(n_ik + β) / (n_k + Mβ).
pub fn sweep<R: Rng + ?Sized>(state: &mut ChainState, dataset: &Dataset, config: &GibbsConfig, rng: &mut R) {
    let h = state.topics;
    if h == 1 {
        return;
    }
    let (alpha, beta) = (config.alpha, config.beta);
    let vocab_beta = state.vocab as f64 * beta;
    let mut weights = std::mem::take(&mut state.scratch);
    for (t, tok) in dataset.tokens().iter().enumerate() {
        let (doc, word) = (tok.doc as usize, tok.word as usize);
        let old = state.assignments[t] as usize;
        state.remove(doc, word, old);

        let dt = &state.doc_topic[doc * h..(doc + 1) * h];
        let wt = &state.word_topic[word * h..(word + 1) * h];
        let mut total = 0.0;
        for k in 0..h {
            total += (f64::from(dt[k]) + alpha) * (f64::from(wt[k]) + beta)
                / (f64::from(state.topic_total[k]) + vocab_beta);
            weights[k] = total;
        }
        let u = rng.random::<f64>() * total;
        let new = weights[..h - 1].iter().position(|&c| u < c).unwrap_or(h - 1);

        state.assignments[t] = new as u32;
        state.add(doc, word, new);
    }
    state.scratch = weights;
    debug_assert!(state.is_consistent(dataset));
}

/// One posterior parameter sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    /// Topic-word matrix, M × H.
    pub a: StochasticMatrix,
    /// Document-topic matrix, H × N.
    pub b: StochasticMatrix,
}

fn dirichlet<R: Rng + ?Sized>(concentrations: impl Iterator<Item = f64>, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = concentrations
        .map(|c| Gamma::new(c, 1.0).expect("positive concentration").sample(rng))
        .collect();
    let sum: f64 = v.iter().sum();
    if sum > 0.0 {
        v.iter_mut().for_each(|x| *x /= sum);
    } else {
        // every gamma underflowed; only reachable with tiny concentrations
        let len = v.len() as f64;
        v.iter_mut().for_each(|x| *x = 1.0 / len);
    }
    v
}

/// Draws a_k ~ Dir(β + n_·k) and b_j ~ Dir(α + n_·j) from the current tables.
pub fn draw_parameters<R: Rng + ?Sized>(state: &ChainState, config: &GibbsConfig, rng: &mut R) -> Draw {
    let h = state.topics;
    let a_cols: Vec<Vec<f64>> = (0..h)
        .map(|k| {
            dirichlet(
                (0..state.vocab).map(|i| config.beta + f64::from(state.word_topic(i, k))),
                rng,
            )
        })
        .collect();
    let b_cols: Vec<Vec<f64>> = (0..state.docs)
        .map(|j| dirichlet((0..h).map(|k| config.alpha + f64::from(state.doc_topic(k, j))), rng))
        .collect();
    Draw {
        a: StochasticMatrix::from_columns(&a_cols).expect("normalized Dirichlet column"),
        b: StochasticMatrix::from_columns(&b_cols).expect("normalized Dirichlet column"),
    }
}

/// Retained posterior draws, in sweep order.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    draws: Vec<Draw>,
}

impl PosteriorDraws {
    pub fn new(draws: Vec<Draw>) -> Result<Self> {
        let first = draws
            .first()
            .ok_or_else(|| Error::Config("posterior needs at least one draw".into()))?;
        let shape = (first.a.rows(), first.a.cols(), first.b.cols());
        for (idx, d) in draws.iter().enumerate() {
            if (d.a.rows(), d.a.cols(), d.b.cols()) != shape || d.b.rows() != d.a.cols() {
                return Err(Error::DimensionMismatch(format!("draw {idx} has a different shape")));
            }
        }
        Ok(Self { draws })
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn draws(&self) -> &[Draw] {
        &self.draws
    }

    pub fn vocab(&self) -> usize {
        self.draws[0].a.rows()
    }

    pub fn topics(&self) -> usize {
        self.draws[0].a.cols()
    }

    pub fn docs(&self) -> usize {
        self.draws[0].b.cols()
    }
}

/// Runs the chain seeded from `config.seed`.
pub fn run(dataset: &Dataset, topics: usize, config: &GibbsConfig) -> Result<PosteriorDraws> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    run_with_rng(dataset, topics, config, &mut rng)
}

/// `burn_in` sweeps, then one retained draw after every `thinning` sweeps
/// until `draws` are collected.
pub fn run_with_rng<R: Rng + ?Sized>(
    dataset: &Dataset,
    topics: usize,
    config: &GibbsConfig,
    rng: &mut R,
) -> Result<PosteriorDraws> {
    config.validate()?;
    let mut state = init_chain(dataset, topics, rng)?;
    for _ in 0..config.burn_in {
        sweep(&mut state, dataset, config, rng);
    }
    let mut draws = Vec::with_capacity(config.draws);
    for _ in 0..config.draws {
        for _ in 0..config.thinning {
            sweep(&mut state, dataset, config, rng);
        }
        draws.push(draw_parameters(&state, config, rng));
    }
    PosteriorDraws::new(draws)
}
