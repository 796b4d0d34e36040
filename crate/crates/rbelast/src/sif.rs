//! Virtual-crack-extension post-processing: energy release rate by forward
//! differencing of the compliant energy output in the crack-length
//! parameter, with certified bounds, and mode-I stress intensity factors.

use crate::cert::CertError;
use crate::model::RbModel;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SifError {
    #[error("finite-difference step leaves the parameter domain at mu = {0:?}")]
    StepLeavesDomain(Vec<f64>),
    #[error("energy release band reaches below zero (G = {0:.3e}, bound {1:.3e}); raise N or the FD step")]
    NegativeEnergyRelease(f64, f64),
    #[error(transparent)]
    Cert(#[from] CertError),
}

/// Forward-difference energy release rate from two output values:
/// G = -(s(mu + d) - s(mu)) / d.
pub fn err_fd(s_at_mu: f64, s_at_mu_plus: f64, delta_mu1: f64) -> f64 {
    -(s_at_mu_plus - s_at_mu) / delta_mu1
}

/// Certified ERR estimate: the reduced counterpart pairs the plain value at
/// mu with the bound-shifted value at mu + d so the error band stays
/// one-sided, and the band width adds the two output bounds.
pub fn err_rb_bound(
    model: &RbModel,
    mu: &[f64],
    n: usize,
    delta_mu1: f64,
) -> Result<(f64, f64), SifError> {
    let mut mu_plus = mu.to_vec();
    mu_plus[0] += delta_mu1;
    if !model.decomp.box_.contains(mu) || !model.decomp.box_.contains(&mu_plus) {
        return Err(SifError::StepLeavesDomain(mu.to_vec()));
    }
    let (s0, d0) = model.error_bound(mu, n)?;
    let (s1, d1) = model.error_bound(&mu_plus, n)?;
    let g = (s0 - (s1 + d1)) / delta_mu1;
    let dg = (d0 + d1) / delta_mu1;
    Ok((g, dg))
}

/// Mode-I SIF band from an ERR band: half-sum / half-difference of
/// sqrt((G ± dG)/(1 - nu^2)).
pub fn sif_from_err(g: f64, dg: f64, nu: f64) -> Result<(f64, f64), SifError> {
    if g - dg < 0.0 {
        return Err(SifError::NegativeEnergyRelease(g, dg));
    }
    let denom = 2.0 * (1.0 - nu * nu).sqrt();
    let hi = (g + dg).sqrt();
    let lo = (g - dg).sqrt();
    Ok(((hi + lo) / denom, (hi - lo) / denom))
}

/// One row of a SIF sweep.
#[derive(Clone, Debug)]
pub struct SifResult {
    pub mu: Vec<f64>,
    pub g_n: f64,
    pub dg: f64,
    /// None when the ERR band crosses zero (flagged row).
    pub sif_n: Option<f64>,
    pub dsif: Option<f64>,
}

/// Sweep mu1 over `values` at fixed remaining components, producing SIF rows.
pub fn sif_sweep(
    model: &RbModel,
    mu_base: &[f64],
    mu1_values: &[f64],
    n: usize,
    delta_mu1: f64,
    nu: f64,
) -> Result<Vec<SifResult>, SifError> {
    let mut rows = Vec::with_capacity(mu1_values.len());
    for &m1 in mu1_values {
        let mut mu = mu_base.to_vec();
        mu[0] = m1;
        let (g, dg) = err_rb_bound(model, &mu, n, delta_mu1)?;
        let (sif, dsif) = match sif_from_err(g, dg, nu) {
            Ok((s, d)) => (Some(s), Some(d)),
            Err(SifError::NegativeEnergyRelease(_, _)) => (None, None),
            Err(e) => return Err(e),
        };
        rows.push(SifResult {
            mu,
            g_n: g,
            dg,
            sif_n: sif,
            dsif,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_output_exact_fd() {
        // s(mu) = 3 - 2 mu1: slope -2 gives G = 2 for any step
        let s = |m: f64| 3.0 - 2.0 * m;
        let g = err_fd(s(0.4), s(0.4 + 1e-3), 1e-3);
        assert!((g - 2.0).abs() < 1e-9);
        // constant output gives zero
        let g0 = err_fd(5.0, 5.0, 1e-3);
        assert_eq!(g0, 0.0);
    }

    #[test]
    fn sif_closed_forms() {
        // zero band: SIF = sqrt(G/(1-nu^2)), dSIF = 0
        let (s, d) = sif_from_err(2.0, 0.0, 0.3).unwrap();
        assert!((s - (2.0 / (1.0 - 0.09)).sqrt()).abs() < 1e-14);
        assert_eq!(d, 0.0);
        // boundary case G = dG, nu = 0: SIF = dSIF = sqrt(2)/2
        let (s, d) = sif_from_err(1.0, 1.0, 0.0).unwrap();
        assert!((s - std::f64::consts::SQRT_2 / 2.0).abs() < 1e-14);
        assert!((d - std::f64::consts::SQRT_2 / 2.0).abs() < 1e-14);
        // negative band rejected
        assert!(matches!(
            sif_from_err(1.0, 1.5, 0.0),
            Err(SifError::NegativeEnergyRelease(_, _))
        ));
    }

    #[test]
    fn sif_band_encloses_truth_band() {
        // interval arithmetic sanity: any g_fe in [g-dg, g+dg] maps into
        // [sif-dsif, sif+dsif]
        let (g, dg, nu) = (1.7, 0.25, 0.3);
        let (sif, dsif) = sif_from_err(g, dg, nu).unwrap();
        for k in 0..50 {
            let g_fe = g - dg + 2.0 * dg * (k as f64) / 49.0;
            let sif_fe = (g_fe / (1.0 - nu * nu)).sqrt();
            assert!(sif_fe >= sif - dsif - 1e-12);
            assert!(sif_fe <= sif + dsif + 1e-12);
        }
    }
}
