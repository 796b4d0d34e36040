//! Offline training: greedy snapshot selection driven by the online error
//! estimator, and the convergence-study tabulation the benchmark reports
//! are built from.

use crate::cert::{CertError, ResidualGram, ScmData};
use crate::geomap::AffineDecomposition;
use crate::model::{GreedyRecord, RbModel};
use crate::rb::{RbError, ReducedBasis, ReducedOperators};
use crate::truth::{self, TruthError, TruthOperators};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GreedyError {
    #[error("snapshot at mu = {0:?} rejected before the tolerance was reached (max bound {1:.3e})")]
    StagnationAtDependentSnapshot(Vec<f64>, f64),
    #[error(transparent)]
    Cert(#[from] CertError),
    #[error(transparent)]
    Truth(#[from] TruthError),
    #[error(transparent)]
    Rb(#[from] RbError),
    #[error(transparent)]
    Geomap(#[from] crate::geomap::GeomapError),
}

/// Greedy error indicator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Indicator {
    RelativeOutputBound,
    AbsoluteOutputBound,
}

#[derive(Clone, Debug)]
pub struct GreedyConfig {
    pub n_train: usize,
    pub tol: f64,
    pub n_max: usize,
    pub seed: u64,
    pub indicator: Indicator,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        GreedyConfig {
            n_train: 300,
            tol: 1e-6,
            n_max: 40,
            seed: 1234,
            indicator: Indicator::RelativeOutputBound,
        }
    }
}

/// Uniform random training sample over the parameter box.
pub fn training_sample(
    decomp: &AffineDecomposition,
    n: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| decomp.box_.sample(&mut rng)).collect()
}

/// Greedy construction of the reduced model. The SCM data must already be
/// built. For non-compliant problems the primal and dual bases grow on the
/// same selected parameters.
pub fn greedy_build(
    ops: &TruthOperators,
    decomp: &AffineDecomposition,
    scm: ScmData,
    cfg: &GreedyConfig,
) -> Result<RbModel, GreedyError> {
    let train = training_sample(decomp, cfg.n_train, cfg.seed);
    let mut model = RbModel {
        decomp: decomp.clone(),
        primal: ReducedBasis::default(),
        dual: if decomp.compliant {
            None
        } else {
            Some(ReducedBasis::default())
        },
        red: ReducedOperators::default(),
        gram: ResidualGram::new(ops, &ops.fq, decomp.qa()),
        gram_dual: if decomp.compliant {
            None
        } else {
            Some(ResidualGram::new(ops, &ops.lq, decomp.qa()))
        },
        scm,
        history: Vec::new(),
    };

    loop {
        let n = model.primal.len();
        // estimator sweep over the training set (online cost only)
        let (pick, max_est) = if n == 0 {
            // no basis yet: residual equals the load; use the absolute bound
            let mut best = (0usize, -1.0f64);
            for (i, mu) in train.iter().enumerate() {
                let theta_f = decomp.theta_f(mu)?;
                let theta_a = decomp.theta_a(mu)?;
                let zero = nalgebra::DVector::zeros(0);
                let eps =
                    crate::cert::residual_dual_norm(&model.gram, &theta_f, &theta_a, &zero, 0)?;
                let (alpha, _) =
                    crate::cert::alpha_lower_bound_or_fallback(&model.scm, decomp, mu)?;
                let est = eps * eps / alpha;
                if est > best.1 {
                    best = (i, est);
                }
            }
            best
        } else {
            let mut best = (0usize, -1.0f64);
            for (i, mu) in train.iter().enumerate() {
                let (s_n, delta) = model.error_bound(mu, n)?;
                let est = match cfg.indicator {
                    Indicator::RelativeOutputBound => delta / s_n.abs().max(1e-300),
                    Indicator::AbsoluteOutputBound => delta,
                };
                if est > best.1 {
                    best = (i, est);
                }
            }
            best
        };

        if n > 0 && max_est <= cfg.tol {
            break;
        }
        if n >= cfg.n_max {
            break;
        }
        let mu = &train[pick];
        model.history.push(GreedyRecord {
            n: n + 1,
            mu: mu.clone(),
            max_bound: max_est,
        });

        let snapshot = truth::truth_solve(ops, decomp, mu)?;
        match model.primal.gram_schmidt_append(&snapshot.u, ops, mu) {
            Ok(()) => {}
            Err(RbError::NearlyDependentSnapshot(_)) if n > 0 => {
                model.history.pop();
                if max_est > cfg.tol {
                    return Err(GreedyError::StagnationAtDependentSnapshot(
                        mu.clone(),
                        max_est,
                    ));
                }
                break;
            }
            Err(e) => return Err(e.into()),
        }
        model.red.grow_primal(ops, &model.primal);
        model.gram.grow(ops, &model.primal);

        if let Some(dual_basis) = model.dual.as_mut() {
            let dual_snap = truth::truth_dual_solve(ops, decomp, mu)?;
            match dual_basis.gram_schmidt_append(&dual_snap.u, ops, mu) {
                Ok(()) => {
                    model.red.grow_dual(ops, &model.primal, dual_basis);
                    model
                        .gram_dual
                        .as_mut()
                        .expect("dual gram")
                        .grow(ops, dual_basis);
                }
                Err(RbError::NearlyDependentSnapshot(_)) => {
                    // keep the primal enrichment; dual space saturated
                }
                Err(e) => return Err(e.into()),
            }
            let dual_ref = model.dual.as_ref().expect("dual basis");
            model.red.sync_dual_primal(ops, &model.primal, dual_ref);
        }
    }
    Ok(model)
}

/// One row of a convergence study.
#[derive(Clone, Debug)]
pub struct ConvergenceRow {
    pub n: usize,
    /// max over the test sample of Δ_N / |s_N|
    pub e_n: f64,
    /// mean effectivity Δ_N / |s_truth - s_N|
    pub eta_bar: f64,
}

/// Evaluate max relative bounds and mean effectivities over a random test
/// sample; truth solves are performed once per test point.
pub fn convergence_study(
    model: &RbModel,
    ops: &TruthOperators,
    test: &[Vec<f64>],
    n_list: &[usize],
) -> Result<Vec<ConvergenceRow>, GreedyError> {
    let truths: Vec<f64> = test
        .iter()
        .map(|mu| truth::truth_solve(ops, &model.decomp, mu).map(|s| s.s))
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let mut e_n = 0.0f64;
        let mut eta_sum = 0.0;
        let mut eta_count = 0usize;
        for (mu, s_truth) in test.iter().zip(&truths) {
            let (s_n, delta) = model.error_bound(mu, n)?;
            e_n = e_n.max(delta / s_n.abs().max(1e-300));
            let err = (s_truth - s_n).abs();
            if err > 0.0 {
                eta_sum += delta / err;
                eta_count += 1;
            }
        }
        rows.push(ConvergenceRow {
            n,
            e_n,
            eta_bar: eta_sum / eta_count.max(1) as f64,
        });
    }
    Ok(rows)
}
