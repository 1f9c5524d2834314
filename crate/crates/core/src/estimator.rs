//! Generalization error, empirical entropy and WAIC from posterior draws,
//! and the per-replicate learning-coefficient estimate n(G_n + W_n − S_n)/2.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{self, GibbsConfig, PosteriorDraws};
use crate::model::{self, empirical_entropy, floored_ln, kl_from_table, Token, TrueModel};

/// How G_n is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GnMode {
    /// Exact sum over the word × document grid.
    Exact,
    /// Monte Carlo average over a fresh test set from the truth.
    Mc,
}

/// p(i | j, w_k) for every draw k and cell (i, j), laid out draw-major.
struct CellTable {
    draws: usize,
    docs: usize,
    cells: usize,
    probs: Vec<f64>,
}

impl CellTable {
    fn new(draws: &PosteriorDraws) -> Self {
        let docs = draws.docs();
        let cells = draws.vocab() * docs;
        let mut probs = Vec::with_capacity(cells * draws.len());
        for d in draws.draws() {
            probs.extend(d.a.product(&d.b).expect("draw shapes checked on construction"));
        }
        Self {
            draws: draws.len(),
            docs,
            cells,
            probs,
        }
    }

    fn cell(word: usize, doc: usize, docs: usize) -> usize {
        word * docs + doc
    }

    fn probs_at(&self, cell: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.draws).map(move |k| self.probs[k * self.cells + cell])
    }

    fn log_predictive(&self, cell: usize) -> f64 {
        floored_ln(self.probs_at(cell).sum::<f64>() / self.draws as f64)
    }

    /// Population variance over draws of log p(cell | w).
    fn log_variance(&self, cell: usize) -> f64 {
        let k = self.draws as f64;
        let mean = self.probs_at(cell).map(floored_ln).sum::<f64>() / k;
        self.probs_at(cell)
            .map(|p| (floored_ln(p) - mean).powi(2))
            .sum::<f64>()
            / k
    }
}

/// log of the posterior-averaged probability of one token.
pub fn predictive_log_prob(draws: &PosteriorDraws, token: Token) -> f64 {
    let mean = draws
        .draws()
        .iter()
        .map(|d| model::cond_log_lik(&d.a, &d.b, token).exp())
        .sum::<f64>()
        / draws.len() as f64;
    floored_ln(mean)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaicTerms {
    /// Empirical loss −(1/n) Σ log E_w[p(X_i | w)].
    pub t_n: f64,
    /// Functional variance Σ V_w[log p(X_i | w)].
    pub v_n: f64,
    /// WAIC, T_n + V_n / n.
    pub w_n: f64,
}

fn check_shapes(draws: &PosteriorDraws, vocab: usize, docs: usize) -> Result<()> {
    if draws.vocab() != vocab || draws.docs() != docs {
        return Err(Error::DimensionMismatch(format!(
            "draws cover {}x{} words x docs, data has {vocab}x{docs}",
            draws.vocab(),
            draws.docs()
        )));
    }
    Ok(())
}

pub fn waic(draws: &PosteriorDraws, dataset: &model::Dataset) -> Result<WaicTerms> {
    if draws.len() < 2 {
        return Err(Error::Domain(format!(
            "WAIC needs at least two draws, got {}",
            draws.len()
        )));
    }
    if dataset.is_empty() {
        return Err(Error::Domain("WAIC of an empty dataset".into()));
    }
    check_shapes(draws, dataset.vocab(), dataset.docs())?;
    waic_with_table(&CellTable::new(draws), dataset)
}

fn waic_with_table(table: &CellTable, dataset: &model::Dataset) -> Result<WaicTerms> {
    let n = dataset.len() as f64;
    let mut loss = 0.0;
    let mut v_n = 0.0;
    for (cell, &count) in dataset.counts().iter().enumerate() {
        if count == 0 {
            continue;
        }
        let c = f64::from(count);
        loss -= c * table.log_predictive(cell);
        v_n += c * table.log_variance(cell);
    }
    let t_n = loss / n;
    Ok(WaicTerms {
        t_n,
        v_n,
        w_n: t_n + v_n / n,
    })
}

/// G_n by exact enumeration of the word × document grid.
pub fn gen_error_exact(draws: &PosteriorDraws, truth: &TrueModel) -> Result<f64> {
    check_shapes(draws, truth.vocab(), truth.docs())?;
    Ok(gen_error_with_table(&CellTable::new(draws), truth))
}

fn gen_error_with_table(table: &CellTable, truth: &TrueModel) -> f64 {
    kl_from_table(truth, |i, j| table.log_predictive(CellTable::cell(i, j, table.docs)))
}

/// A sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// G_n as the average of log q(X*) / p*(X*) over `test_size` fresh tokens.
pub fn gen_error_mc<R: Rng + ?Sized>(
    draws: &PosteriorDraws,
    truth: &TrueModel,
    test_size: usize,
    rng: &mut R,
) -> Result<MonteCarloEstimate> {
    check_shapes(draws, truth.vocab(), truth.docs())?;
    gen_error_mc_with_table(&CellTable::new(draws), truth, test_size, rng)
}

fn gen_error_mc_with_table<R: Rng + ?Sized>(
    table: &CellTable,
    truth: &TrueModel,
    test_size: usize,
    rng: &mut R,
) -> Result<MonteCarloEstimate> {
    if test_size == 0 {
        return Err(Error::Domain("Monte Carlo G_n needs n_T >= 1".into()));
    }
    let test = model::generate_dataset(truth, test_size, rng)?;
    let docs = truth.docs();
    let log_ratio: Vec<f64> = (0..table.cells)
        .map(|cell| {
            let q = truth.cond_prob(cell / docs, cell % docs);
            floored_ln(q) - table.log_predictive(cell)
        })
        .collect();
    let n = test_size as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for (cell, &count) in test.counts().iter().enumerate() {
        let c = f64::from(count);
        sum += c * log_ratio[cell];
        sum_sq += c * log_ratio[cell] * log_ratio[cell];
    }
    let mean = sum / n;
    let std_error = if test_size > 1 {
        ((sum_sq - n * mean * mean).max(0.0) / (n - 1.0) / n).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(MonteCarloEstimate {
        value: mean,
        std_error,
    })
}

/// All losses of one replicate, in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub g_n: f64,
    pub s_n: f64,
    pub t_n: f64,
    pub v_n: f64,
    pub w_n: f64,
    /// n (G_n + W_n − S_n) / 2.
    pub lambda_sample: f64,
}

/// Settings for one replicate beyond the truth and the model size.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateSettings {
    pub sample_size: usize,
    pub gibbs: GibbsConfig,
    pub gn_mode: GnMode,
    /// Test-set size for [`GnMode::Mc`].
    pub test_size: usize,
}

/// One full replicate: draw a training set, run the sampler, compute the
/// losses. All randomness comes from one stream seeded by `gibbs.seed`.
pub fn lambda_replicate(truth: &TrueModel, topics: usize, settings: &ReplicateSettings) -> Result<LossReport> {
    if settings.sample_size == 0 {
        return Err(Error::Config("sample size must be positive".into()));
    }
    if settings.gn_mode == GnMode::Mc && settings.test_size == 0 {
        return Err(Error::Config("Monte Carlo G_n needs n_T >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(settings.gibbs.seed);
    let dataset = model::generate_dataset(truth, settings.sample_size, &mut rng)?;
    let draws = gibbs::run_with_rng(&dataset, topics, &settings.gibbs, &mut rng)?;
    if draws.len() < 2 {
        return Err(Error::Config("WAIC needs at least two retained draws".into()));
    }
    let table = CellTable::new(&draws);
    let g_n = match settings.gn_mode {
        GnMode::Exact => gen_error_with_table(&table, truth),
        GnMode::Mc => gen_error_mc_with_table(&table, truth, settings.test_size, &mut rng)?.value,
    };
    let s_n = empirical_entropy(&dataset, truth);
    let w = waic_with_table(&table, &dataset)?;
    let n = settings.sample_size as f64;
    Ok(LossReport {
        g_n,
        s_n,
        t_n: w.t_n,
        v_n: w.v_n,
        w_n: w.w_n,
        lambda_sample: n * (g_n + w.w_n - s_n) / 2.0,
    })
}

/// Mean and unbiased standard deviation of replicate values.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaEstimate {
    pub values: Vec<f64>,
    pub lambda_hat: f64,
    pub std: f64,
}

impl LambdaEstimate {
    pub fn replicates(&self) -> usize {
        self.values.len()
    }

    /// Standard error of the mean, std / √D.
    pub fn std_error(&self) -> f64 {
        self.std / (self.values.len() as f64).sqrt()
    }
}

pub fn aggregate(values: &[f64]) -> Result<LambdaEstimate> {
    if values.len() < 2 {
        return Err(Error::Domain(format!(
            "aggregation needs at least two replicates, got {}",
            values.len()
        )));
    }
    let d = values.len() as f64;
    let mean = values.iter().sum::<f64>() / d;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (d - 1.0);
    Ok(LambdaEstimate {
        values: values.to_vec(),
        lambda_hat: mean,
        std: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::Draw;
    use crate::matrix::StochasticMatrix;
    use crate::model::{kl_exact, sample_true_model, Dataset};

    fn bernoulli_draw(p: f64) -> Draw {
        // one topic, two words, one document
        Draw {
            a: StochasticMatrix::from_columns(&[vec![p, 1.0 - p]]).unwrap(),
            b: StochasticMatrix::from_row_major(1, 1, vec![1.0]).unwrap(),
        }
    }

    fn random_draws(truth: &TrueModel, topics: usize, k: usize, seed: u64) -> PosteriorDraws {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ds = model::generate_dataset(truth, 50, &mut rng).unwrap();
        let cfg = GibbsConfig { burn_in: 20, thinning: 1, draws: k, seed, ..Default::default() };
        gibbs::run(&ds, topics, &cfg).unwrap()
    }

    #[test]
    fn predictive_is_mean_of_probabilities() {
        let draws = PosteriorDraws::new(vec![bernoulli_draw(0.2), bernoulli_draw(0.4)]).unwrap();
        let v = predictive_log_prob(&draws, Token { doc: 0, word: 0 });
        assert!((v - 0.3f64.ln()).abs() < 1e-15);
        let single = PosteriorDraws::new(vec![bernoulli_draw(0.7)]).unwrap();
        let d = &single.draws()[0];
        let tok = Token { doc: 0, word: 1 };
        assert!((predictive_log_prob(&single, tok) - model::cond_log_lik(&d.a, &d.b, tok)).abs() < 1e-15);
    }

    #[test]
    fn waic_two_draw_hand_values() {
        // log-probs −1 and −3 for the single token (word 0)
        let d1 = bernoulli_draw((-1.0f64).exp());
        let d2 = bernoulli_draw((-3.0f64).exp());
        let draws = PosteriorDraws::new(vec![d1, d2]).unwrap();
        let ds = Dataset::from_tokens(2, 1, vec![Token { doc: 0, word: 0 }]).unwrap();
        let w = waic(&draws, &ds).unwrap();
        let expected_t = -(((-1.0f64).exp() + (-3.0f64).exp()) / 2.0).ln();
        assert!((w.t_n - expected_t).abs() < 1e-12);
        assert!((w.t_n - 1.5662).abs() < 1e-4);
        assert!((w.v_n - 1.0).abs() < 1e-12);
        assert!((w.w_n - (w.t_n + w.v_n)).abs() < 1e-15);
    }

    #[test]
    fn identical_draws_have_zero_variance() {
        let draws = PosteriorDraws::new(vec![bernoulli_draw(0.3); 5]).unwrap();
        let ds = Dataset::from_tokens(
            2,
            1,
            vec![Token { doc: 0, word: 0 }, Token { doc: 0, word: 1 }],
        )
        .unwrap();
        let w = waic(&draws, &ds).unwrap();
        assert_eq!(w.v_n, 0.0);
        assert_eq!(w.w_n, w.t_n);
    }

    #[test]
    fn waic_rejects_single_draw() {
        let draws = PosteriorDraws::new(vec![bernoulli_draw(0.3)]).unwrap();
        let ds = Dataset::from_tokens(2, 1, vec![Token { doc: 0, word: 0 }]).unwrap();
        assert!(matches!(waic(&draws, &ds), Err(Error::Domain(_))));
    }

    #[test]
    fn exact_gn_of_single_draw_is_kl() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let truth = sample_true_model(6, 4, 2, &mut rng).unwrap();
        let draws = random_draws(&truth, 3, 1, 2);
        let d = &draws.draws()[0];
        let g = gen_error_exact(&draws, &truth).unwrap();
        assert!((g - kl_exact(&d.a, &d.b, &truth).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn exact_gn_vanishes_at_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let truth = sample_true_model(6, 4, 2, &mut rng).unwrap();
        let perfect = Draw { a: truth.a0().clone(), b: truth.b0().clone() };
        let draws = PosteriorDraws::new(vec![perfect; 3]).unwrap();
        assert!(gen_error_exact(&draws, &truth).unwrap().abs() < 1e-15);
        let mc = gen_error_mc(&draws, &truth, 1000, &mut rng).unwrap();
        assert!(mc.value.abs() < 1e-12);
    }

    #[test]
    fn exact_gn_is_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let truth = sample_true_model(5, 3, 2, &mut rng).unwrap();
        for seed in 0..20 {
            let draws = random_draws(&truth, 2 + (seed as usize % 3), 4, seed);
            assert!(gen_error_exact(&draws, &truth).unwrap() >= -1e-12);
        }
    }

    #[test]
    fn mc_gn_converges_to_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let truth = sample_true_model(5, 3, 2, &mut rng).unwrap();
        let draws = random_draws(&truth, 3, 5, 9);
        let exact = gen_error_exact(&draws, &truth).unwrap();
        let mut errors = Vec::new();
        for n_t in [1_000, 10_000, 100_000] {
            let mc = gen_error_mc(&draws, &truth, n_t, &mut ChaCha8Rng::seed_from_u64(n_t as u64)).unwrap();
            assert!((mc.value - exact).abs() < 4.0 * mc.std_error, "n_T = {n_t}");
            errors.push(mc.std_error);
        }
        assert!(errors.windows(2).all(|w| w[1] < w[0]));
        let a = gen_error_mc(&draws, &truth, 500, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = gen_error_mc(&draws, &truth, 500, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert!(gen_error_mc(&draws, &truth, 0, &mut rng).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let est = aggregate(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!((est.lambda_hat, est.std), (1.0, 0.0));
        let est = aggregate(&[0.0, 2.0]).unwrap();
        assert_eq!(est.lambda_hat, 1.0);
        assert!((est.std - 2f64.sqrt()).abs() < 1e-15);
        assert!(aggregate(&[3.0]).is_err());
        let diff: f64 = (10.5f64 - 10.79).abs();
        assert!((diff - 0.2901).abs() < 5e-4);
    }

    #[test]
    fn replicate_is_deterministic_and_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let truth = sample_true_model(4, 3, 2, &mut rng).unwrap();
        let settings = ReplicateSettings {
            sample_size: 200,
            gibbs: GibbsConfig { burn_in: 50, thinning: 2, draws: 50, seed: 77, ..Default::default() },
            gn_mode: GnMode::Exact,
            test_size: 0,
        };
        let a = lambda_replicate(&truth, 3, &settings).unwrap();
        let b = lambda_replicate(&truth, 3, &settings).unwrap();
        assert_eq!(a, b);
        assert!(a.v_n >= 0.0 && a.w_n >= a.t_n);
        let recomputed = 200.0 * (a.g_n + a.w_n - a.s_n) / 2.0;
        assert!((a.lambda_sample - recomputed).abs() < 1e-12);
        let mc = ReplicateSettings { gn_mode: GnMode::Mc, test_size: 0, ..settings };
        assert!(lambda_replicate(&truth, 3, &mc).is_err());
    }
}
