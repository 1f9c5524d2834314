//! Exact learning coefficients (real log canonical thresholds) of latent
//! Dirichlet allocation, and a Gibbs-sampling/WAIC harness that estimates
//! them numerically.
//!
//! * [`rlct`]: closed-form λ and multiplicity for LDA and matrix
//!   factorization, and the asymptotic learning-curve terms.
//! * [`model`]: the conditional LDA model, truths, tokens, exact KL.
//! * [`gibbs`]: collapsed Gibbs sampler with conjugate parameter draws.
//! * [`estimator`]: G_n, S_n, WAIC and the per-replicate estimate of λ.
//! * [`experiment`]: replicate orchestration and report artifacts.

pub mod error;
pub mod estimator;
pub mod experiment;
pub mod gibbs;
pub mod io;
pub mod matrix;
pub mod model;
pub mod rlct;

pub use error::{Error, Result};
pub use estimator::{
    aggregate, gen_error_exact, gen_error_mc, lambda_replicate, predictive_log_prob, waic, GnMode,
    LambdaEstimate, LossReport, MonteCarloEstimate, ReplicateSettings, WaicTerms,
};
pub use experiment::{ExperimentConfig, ExperimentReport, ReplicateRecord, SimulationOutcome};
pub use gibbs::{ChainState, Draw, GibbsConfig, PosteriorDraws};
pub use matrix::StochasticMatrix;
pub use model::{Dataset, Token, TrueModel};
pub use num_rational::Rational64;
pub use rlct::{
    lda_dimension, lda_rlct, mf_rlct, AsymptoticCurve, LdaShape, RlctCase, RlctResult,
};
