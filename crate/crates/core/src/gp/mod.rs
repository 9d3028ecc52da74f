//! Exact, sparse and harmonic variational GP inference.

mod elbo;
mod exact;
mod likelihood;
mod model;
mod predict;
mod theory;

pub use elbo::{elbo, elbo_grad, kl_gaussian, kl_terms, ElboGrad, GroupGrad};
pub use exact::{exact_gp_posterior, exact_log_evidence};
pub use likelihood::{
    gauss_hermite, log_ndtr, ndtr, BernoulliLikelihood, ExpectedLogLik, GaussianLikelihood, Likelihood,
};
pub use model::{
    default_jitter, Checkpoint, GroupRecord, HvgpModel, InducingGroup, SvgpModel, CHECKPOINT_FORMAT_VERSION,
};
pub use predict::{
    hvgp_predict, joint_hvgp_predict, predict, svgp_predict, HvgpPrediction, PartPrediction, Prediction,
};
pub use theory::{block_posterior, build_orbit_svgp, optimal_s, span_nystrom};
pub(crate) use predict::{chain_inducing, cross_cov};
