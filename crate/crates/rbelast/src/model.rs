//! The trained reduced model: bases, projected operators, residual blocks
//! and SCM data, with the certified online query.

use crate::cert::{
    self, alpha_lower_bound_or_fallback, CertError, ResidualGram, ScmData,
};
use crate::geomap::AffineDecomposition;
use crate::rb::{self, ReducedBasis, ReducedOperators};
use std::time::{Duration, Instant};

/// One greedy iteration record: (iteration, chosen mu, max estimator before
/// the enrichment).
#[derive(Clone, Debug, PartialEq)]
pub struct GreedyRecord {
    pub n: usize,
    pub mu: Vec<f64>,
    pub max_bound: f64,
}

/// Everything an online query needs, plus the basis for reconstruction.
pub struct RbModel {
    pub decomp: AffineDecomposition,
    pub primal: ReducedBasis,
    pub dual: Option<ReducedBasis>,
    pub red: ReducedOperators,
    pub gram: ResidualGram,
    pub gram_dual: Option<ResidualGram>,
    pub scm: ScmData,
    pub history: Vec<GreedyRecord>,
}

/// Certified result of one online query.
#[derive(Clone, Debug)]
pub struct CertifiedOutput {
    pub s_n: f64,
    pub delta_n: f64,
    pub alpha_lb: f64,
    /// False when the SCM lower bound was non-positive and the upper bound
    /// substituted (bound no longer rigorous).
    pub rigorous: bool,
    pub online_time: Duration,
}

impl RbModel {
    pub fn n_max(&self) -> usize {
        self.red.n_max
    }

    /// Online query: reduced solve, residual dual norm(s), SCM lower bound,
    /// output error bound. No truth-sized data is touched.
    pub fn query(&self, mu: &[f64], n: usize) -> Result<CertifiedOutput, CertError> {
        if n == 0 || n > self.red.n_max {
            return Err(CertError::Geomap(crate::geomap::GeomapError::OutOfDomain(
                mu.to_vec(),
            )));
        }
        let start = Instant::now();
        let sol = rb::online_solve(&self.red, &self.decomp, mu, n)?;
        let (eps_pr, eps_du) = self.residual_norms(mu, n, &sol)?;
        let (alpha, rigorous) = alpha_lower_bound_or_fallback(&self.scm, &self.decomp, mu)?;
        let delta = if self.decomp.compliant {
            cert::output_bound_compliant(eps_pr, alpha)?
        } else {
            cert::output_bound_primal_dual(eps_pr, eps_du.expect("dual residual"), alpha)?
        };
        Ok(CertifiedOutput {
            s_n: sol.s_n,
            delta_n: delta,
            alpha_lb: alpha,
            rigorous,
            online_time: start.elapsed(),
        })
    }

    /// Plain reduced solve without certification.
    pub fn solve(&self, mu: &[f64], n: usize) -> Result<rb::OnlineSolution, CertError> {
        Ok(rb::online_solve(&self.red, &self.decomp, mu, n)?)
    }

    fn residual_norms(
        &self,
        mu: &[f64],
        n: usize,
        sol: &rb::OnlineSolution,
    ) -> Result<(f64, Option<f64>), CertError> {
        let theta_a = self.decomp.theta_a(mu)?;
        let theta_f = self.decomp.theta_f(mu)?;
        let eps_pr = cert::residual_dual_norm(&self.gram, &theta_f, &theta_a, &sol.u_n, n)?;
        if self.decomp.compliant {
            return Ok((eps_pr, None));
        }
        let theta_l = self.decomp.theta_l(mu)?;
        let gram_du = self.gram_dual.as_ref().expect("dual residual blocks");
        let psi = sol.psi_n.as_ref().expect("dual coefficients");
        let n_du = n.min(self.red.n_max_du);
        let eps_du = cert::dual_residual_dual_norm(gram_du, &theta_l, &theta_a, psi, n_du)?;
        Ok((eps_pr, Some(eps_du)))
    }

    /// Residual dual norm(s) and bound at (mu, N) without timing, for sweeps.
    pub fn error_bound(&self, mu: &[f64], n: usize) -> Result<(f64, f64), CertError> {
        let sol = rb::online_solve(&self.red, &self.decomp, mu, n)?;
        let (eps_pr, eps_du) = self.residual_norms(mu, n, &sol)?;
        let (alpha, _rig) = alpha_lower_bound_or_fallback(&self.scm, &self.decomp, mu)?;
        let delta = if self.decomp.compliant {
            cert::output_bound_compliant(eps_pr, alpha)?
        } else {
            cert::output_bound_primal_dual(eps_pr, eps_du.expect("dual residual"), alpha)?
        };
        Ok((sol.s_n, delta))
    }
}
