use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma};

use lda_rlct::model::{empirical_entropy, generate_dataset, kl_exact, sample_true_model};
use lda_rlct::{waic, Draw, PosteriorDraws, StochasticMatrix};

fn random_stochastic<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> StochasticMatrix {
    let columns: Vec<Vec<f64>> = (0..cols)
        .map(|_| {
            let raw: Vec<f64> = (0..rows).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / s).collect()
        })
        .collect();
    StochasticMatrix::from_columns(&columns).unwrap()
}

#[test]
fn kl_is_non_negative_and_zero_at_truth() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let truth = sample_true_model(6, 4, 2, &mut rng).unwrap();
    assert!(kl_exact(truth.a0(), truth.b0(), &truth).unwrap().abs() < 1e-12);
    for _ in 0..1000 {
        let h = rng.random_range(1..=4);
        let a = random_stochastic(6, h, &mut rng);
        let b = random_stochastic(h, 4, &mut rng);
        assert!(kl_exact(&a, &b, &truth).unwrap() >= -1e-12);
    }
}

#[test]
fn kl_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let truth = sample_true_model(8, 5, 3, &mut rng).unwrap();
    let a = random_stochastic(8, 2, &mut rng);
    let b = random_stochastic(2, 5, &mut rng);
    let exact = kl_exact(&a, &b, &truth).unwrap();
    let data = generate_dataset(&truth, 200_000, &mut rng).unwrap();
    let p = a.product(&b).unwrap();
    let terms: Vec<f64> = data
        .tokens()
        .iter()
        .map(|t| {
            let (i, j) = (t.word as usize, t.doc as usize);
            truth.cond_prob(i, j).ln() - p[i * 5 + j].ln()
        })
        .collect();
    let n = terms.len() as f64;
    let mean = terms.iter().sum::<f64>() / n;
    let sd = (terms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((mean - exact).abs() < 4.0 * sd / n.sqrt(), "{mean} vs {exact}");
}

#[test]
fn token_frequencies_follow_the_truth() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let truth = sample_true_model(10, 5, 2, &mut rng).unwrap();
    let n = 100_000;
    let data = generate_dataset(&truth, n, &mut rng).unwrap();
    for j in 0..5 {
        for i in 0..10 {
            let p = truth.doc_dist()[j] * truth.cond_prob(i, j);
            let freq = f64::from(data.count(i, j)) / n as f64;
            assert!((freq - p).abs() < 5.0 * (p * (1.0 - p) / n as f64).sqrt(), "({i},{j})");
        }
    }
}

#[test]
fn empirical_entropy_approaches_conditional_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let truth = sample_true_model(10, 5, 3, &mut rng).unwrap();
    let data = generate_dataset(&truth, 100_000, &mut rng).unwrap();
    let s_n = empirical_entropy(&data, &truth);
    let s = truth.conditional_entropy();
    assert!((s_n - s).abs() < 0.02, "{s_n} vs {s}");
}

/// With a single topic the posterior of each draw is exactly Dirichlet, so
/// n(W_n - S_n) averages to λ = (M - 1)/2.
#[test]
fn waic_error_in_the_regular_case() {
    let (m, n, reps) = (2usize, 2000usize, 200);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let truth = sample_true_model(m, 2, 1, &mut rng).unwrap();
    let mut total = 0.0;
    for _ in 0..reps {
        let data = generate_dataset(&truth, n, &mut rng).unwrap();
        let counts: Vec<f64> = (0..m).map(|i| f64::from(data.count(i, 0) + data.count(i, 1))).collect();
        let draws: Vec<Draw> = (0..400)
            .map(|_| {
                let g: Vec<f64> = counts
                    .iter()
                    .map(|&c| Gamma::new(c + 1.0, 1.0).unwrap().sample(&mut rng))
                    .collect();
                let s: f64 = g.iter().sum();
                Draw {
                    a: StochasticMatrix::from_columns(&[g.iter().map(|x| x / s).collect()]).unwrap(),
                    b: StochasticMatrix::uniform(1, 2),
                }
            })
            .collect();
        let w = waic(&PosteriorDraws::new(draws).unwrap(), &data).unwrap();
        total += n as f64 * (w.w_n - empirical_entropy(&data, &truth));
    }
    let mean = total / reps as f64;
    assert!((mean - 0.5).abs() < 0.25, "{mean}");
}
