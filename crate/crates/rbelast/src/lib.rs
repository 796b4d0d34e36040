//! Certified reduced-basis solver for affinely parametrized linear
//! elasticity.
//!
//! The pipeline: benchmark generators (or mesh files) define a parametrized
//! elasticity problem; geometry maps push the weak form onto a fixed
//! reference domain and collapse it to a minimal affine decomposition; the
//! truth layer assembles parameter-independent P1 blocks once; greedy
//! sampling trains a Y-orthonormal reduced basis; and online queries return
//! the reduced output together with a rigorous a posteriori error bound
//! built from residual dual norms and an SCM coercivity lower bound.

pub mod archive;
pub mod cert;
pub mod config;
pub mod eig;
pub mod expr;
pub mod geomap;
pub mod greedy;
pub mod lp;
pub mod material;
pub mod mesh;
pub mod model;
pub mod problems;
pub mod quadrature;
pub mod rb;
pub mod sif;
pub mod sparse;
pub mod truth;

pub use cert::{ResidualGram, ScmConfig, ScmData};
pub use config::{parse_problem_config, ProblemConfig};
pub use geomap::{AffineDecomposition, ParamBox};
pub use greedy::{greedy_build, convergence_study, GreedyConfig};
pub use mesh::{parse_mesh, serialize_mesh, validate_mesh, Mesh};
pub use model::{CertifiedOutput, RbModel};
pub use problems::{build_problem, validate_problem, ProblemName, ProblemOptions, Resolution};
pub use truth::{assemble_parameter_independent, build_inner_product, truth_solve, TruthOperators};

/// Offline pipeline: build the problem, assemble, train SCM and greedy.
/// Returns the trained model plus the truth operators (for studies).
pub fn offline_train(
    cfg: &config::ProblemConfig,
) -> Result<(model::RbModel, truth::TruthOperators, problems::ProblemSpec), OfflineError> {
    let spec = problems::build_problem(cfg.name, &cfg.options)?;
    let mut ops = truth::assemble_parameter_independent(&spec.mesh, &spec.decomp, &spec.bcs)?;
    let mu_bar = spec.decomp.box_.centroid();
    truth::build_inner_product(&mut ops, &spec.decomp, &mu_bar)?;
    let scm_train = greedy::training_sample(&spec.decomp, cfg.scm_train, cfg.scm_seed);
    let (scm, _hist) = cert::scm_offline(&ops, &spec.decomp, &scm_train, &cfg.scm)?;
    let model = greedy::greedy_build(&ops, &spec.decomp, scm, &cfg.greedy)?;
    Ok((model, ops, spec))
}

#[derive(Debug, thiserror::Error)]
pub enum OfflineError {
    #[error(transparent)]
    Problem(#[from] problems::ProblemError),
    #[error(transparent)]
    Truth(#[from] truth::TruthError),
    #[error(transparent)]
    Cert(#[from] cert::CertError),
    #[error(transparent)]
    Greedy(#[from] greedy::GreedyError),
}
