//! A posteriori machinery: offline/online residual dual norms, the
//! successive constraint method for coercivity lower bounds, and the output
//! error bounds built from the two.

use crate::eig;
use crate::geomap::{AffineDecomposition, GeomapError};
use crate::lp::{solve_box_lp, LpError};
use crate::rb::ReducedBasis;
use crate::truth::{TruthError, TruthOperators};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CertError {
    #[error("residual norm squared is {0:.3e}, beyond the roundoff clamp window")]
    NegativeNormSquared(f64),
    #[error("coercivity lower bound must be positive, got {0}")]
    NonPositiveAlpha(f64),
    #[error("non-coercive operator detected: alpha = {0:.3e} at mu = {1:?}")]
    NonCoerciveDetected(f64, Vec<f64>),
    #[error("SCM constraint set is empty")]
    EmptyConstraintSet,
    #[error("truth output equals the reduced output to roundoff; effectivity undefined")]
    ZeroError,
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Truth(#[from] TruthError),
    #[error(transparent)]
    Geomap(#[from] GeomapError),
    #[error(transparent)]
    Eig(#[from] eig::EigError),
}

/// Parameter-independent residual blocks for one (load, basis) pair.
///
/// `cff[q][q'] = F_qᵀ Y⁻¹ F_q'`, `cfa[qa][qf]` holds `F_qfᵀ Y⁻¹ K_qa Z` as an
/// N_max vector, `caa[qa][qa']` holds `(K_qa Z)ᵀ Y⁻¹ (K_qa' Z)`. The same
/// structure serves the dual residual with L_q in place of F_q.
#[derive(Clone, Default)]
pub struct ResidualGram {
    pub cff: DMatrix<f64>,
    pub cfa: Vec<Vec<DVector<f64>>>,
    pub caa: Vec<Vec<DMatrix<f64>>>,
    pub n: usize,
    /// Riesz representers of the load terms (offline scratch; truth-sized,
    /// not archived, absent in loaded models).
    pf: Vec<Vec<f64>>,
}

impl ResidualGram {
    /// Reassemble from archived parts (no offline scratch; cannot grow).
    pub fn from_parts(
        cff: DMatrix<f64>,
        cfa: Vec<Vec<DVector<f64>>>,
        caa: Vec<Vec<DMatrix<f64>>>,
        n: usize,
    ) -> ResidualGram {
        ResidualGram {
            cff,
            cfa,
            caa,
            n,
            pf: Vec::new(),
        }
    }

    /// Initialize load-load blocks; basis blocks grow via [`Self::grow`].
    pub fn new(ops: &TruthOperators, load: &[Vec<f64>], qa: usize) -> ResidualGram {
        let qf = load.len();
        let pf: Vec<Vec<f64>> = load.iter().map(|f| ops.y_factor().solve(f)).collect();
        let mut cff = DMatrix::zeros(qf, qf);
        for i in 0..qf {
            for j in 0..qf {
                cff[(i, j)] = pf[i].iter().zip(&load[j]).map(|(a, b)| a * b).sum();
            }
        }
        ResidualGram {
            cff,
            cfa: vec![vec![DVector::zeros(0); qf]; qa],
            caa: vec![vec![DMatrix::zeros(0, 0); qa]; qa],
            n: 0,
            pf,
        }
    }

    /// Extend all blocks for one new basis vector.
    pub fn grow(&mut self, ops: &TruthOperators, basis: &ReducedBasis) {
        let n_new = self.n + 1;
        assert!(basis.len() >= n_new);
        let z_new = &basis.z[n_new - 1];
        let qa = self.caa.len();
        let qf = self.pf.len();
        let nh = z_new.len();
        // kz[q] = K_q z_new and its Riesz representer
        let mut kz = Vec::with_capacity(qa);
        let mut pz = Vec::with_capacity(qa);
        for kq in &ops.kq {
            let mut v = vec![0.0; nh];
            ops.pattern.matvec(kq, z_new, &mut v);
            pz.push(ops.y_factor().solve(&v));
            kz.push(v);
        }
        for q in 0..qa {
            for (f, cfa_q) in self.cfa[q].iter_mut().enumerate() {
                let mut v = DVector::zeros(n_new);
                v.rows_mut(0, self.n).copy_from(cfa_q);
                v[n_new - 1] = self.pf[f].iter().zip(&kz[q]).map(|(a, b)| a * b).sum();
                *cfa_q = v;
            }
        }
        // new column of each (q, q') block: (K_q z_i)ᵀ Y⁻¹ (K_q' z_new)
        //   = z_iᵀ [K_q (Y⁻¹ K_q' z_new)]
        for q in 0..qa {
            for qp in 0..qa {
                let mut w = vec![0.0; nh];
                ops.pattern.matvec(&ops.kq[q], &pz[qp], &mut w);
                let mut m = DMatrix::zeros(n_new, n_new);
                m.view_mut((0, 0), (self.n, self.n)).copy_from(&self.caa[q][qp]);
                for (i, zi) in basis.z.iter().take(n_new).enumerate() {
                    m[(i, n_new - 1)] = zi.iter().zip(&w).map(|(a, b)| a * b).sum();
                }
                self.caa[q][qp] = m;
            }
        }
        // mirror the new rows from the transposed blocks
        for q in 0..qa {
            for qp in 0..qa {
                for j in 0..n_new - 1 {
                    let v = self.caa[qp][q][(j, n_new - 1)];
                    self.caa[q][qp][(n_new - 1, j)] = v;
                }
            }
        }
        self.n = n_new;
    }
}

/// Online evaluation of the residual dual norm ε(μ) for a primal residual
/// r(v) = f(v) - a(u_rb, v): cost O((Qa² + Qf²) N²), no truth-sized work.
pub fn residual_dual_norm(
    gram: &ResidualGram,
    theta_load: &[f64],
    theta_a: &[f64],
    coeffs: &DVector<f64>,
    n: usize,
) -> Result<f64, CertError> {
    eps_from_blocks(gram, theta_load, theta_a, coeffs, n, -2.0)
}

/// Dual residual r_du(v) = -l(v) - a(v, psi_rb): identical blocks with the
/// opposite cross-term sign.
pub fn dual_residual_dual_norm(
    gram: &ResidualGram,
    theta_load: &[f64],
    theta_a: &[f64],
    coeffs: &DVector<f64>,
    n: usize,
) -> Result<f64, CertError> {
    eps_from_blocks(gram, theta_load, theta_a, coeffs, n, 2.0)
}

fn eps_from_blocks(
    gram: &ResidualGram,
    theta_load: &[f64],
    theta_a: &[f64],
    coeffs: &DVector<f64>,
    n: usize,
    cross_sign: f64,
) -> Result<f64, CertError> {
    let qf = theta_load.len();
    let qa = theta_a.len();
    let mut load_part = 0.0;
    for i in 0..qf {
        for j in 0..qf {
            load_part += theta_load[i] * theta_load[j] * gram.cff[(i, j)];
        }
    }
    let mut cross = 0.0;
    for (q, ta) in theta_a.iter().enumerate() {
        for (f, tf) in theta_load.iter().enumerate() {
            let v = gram.cfa[q][f].rows(0, n).dot(&coeffs.rows(0, n));
            cross += ta * tf * v;
        }
    }
    let mut quad = 0.0;
    for q in 0..qa {
        for qp in 0..qa {
            let block = gram.caa[q][qp].view((0, 0), (n, n));
            let v = (coeffs.rows(0, n).transpose() * block * coeffs.rows(0, n))[(0, 0)];
            quad += theta_a[q] * theta_a[qp] * v;
        }
    }
    let eps2 = load_part + cross_sign * cross + quad;
    let scale = load_part.abs().max(quad.abs()).max(1e-300);
    if eps2 < -1e-10 * scale {
        return Err(CertError::NegativeNormSquared(eps2));
    }
    Ok(eps2.max(0.0).sqrt())
}

/// One SCM constraint: an exactly solved coercivity eigenproblem.
#[derive(Clone, Debug)]
pub struct ScmConstraint {
    pub mu: Vec<f64>,
    pub alpha: f64,
    /// y_*q = χᵀ K_q χ for the Y-normalized eigenvector χ.
    pub y_star: Vec<f64>,
    /// Θ_a evaluated at `mu`, cached for the LP constraint rows.
    pub theta: Vec<f64>,
}

/// Successive-constraint-method data: continuity constraint box plus the
/// greedy-selected exact constraints.
#[derive(Clone, Debug, Default)]
pub struct ScmData {
    pub y_box: Vec<(f64, f64)>,
    pub constraints: Vec<ScmConstraint>,
    pub m_near: usize,
    /// Parameter box widths for the scaled nearest-neighbor metric.
    pub box_widths: Vec<f64>,
}

impl ScmData {
    /// Indices of the (up to) M stored constraints nearest to mu in box-width
    /// scaled coordinates.
    pub fn nearest(&self, mu: &[f64], m: usize) -> Vec<usize> {
        let mut dist: Vec<(f64, usize)> = self
            .constraints
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let d: f64 = c
                    .mu
                    .iter()
                    .zip(mu)
                    .zip(&self.box_widths)
                    .map(|((a, b), w)| ((a - b) / w.max(1e-300)).powi(2))
                    .sum();
                (d, i)
            })
            .collect();
        dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        dist.into_iter().take(m).map(|(_, i)| i).collect()
    }
}

/// SCM offline stage: continuity box from extremal eigensolves, then a
/// greedy loop appending the training point with the worst relative gap.
pub struct ScmConfig {
    pub tol: f64,
    pub m_near: usize,
    pub j_max: usize,
}

impl Default for ScmConfig {
    fn default() -> Self {
        ScmConfig {
            tol: 0.75,
            m_near: 8,
            j_max: 60,
        }
    }
}

pub fn scm_offline(
    ops: &TruthOperators,
    decomp: &AffineDecomposition,
    train: &[Vec<f64>],
    cfg: &ScmConfig,
) -> Result<(ScmData, Vec<(usize, f64)>), CertError> {
    assert!(!train.is_empty(), "SCM training sample must be nonempty");
    let qa = decomp.qa();
    let mut y_box = Vec::with_capacity(qa);
    for kq in &ops.kq {
        let (lo, hi) =
            eig::extremal_generalized_eigs(&ops.pattern, kq, &ops.y, ops.y_factor())?;
        y_box.push((lo, hi));
    }
    let widths: Vec<f64> = decomp
        .box_
        .lo
        .iter()
        .zip(&decomp.box_.hi)
        .map(|(l, h)| h - l)
        .collect();
    let mut scm = ScmData {
        y_box,
        constraints: Vec::new(),
        m_near: cfg.m_near,
        box_widths: widths,
    };
    let thetas: Vec<Vec<f64>> = train
        .iter()
        .map(|mu| decomp.theta_a(mu))
        .collect::<Result<_, _>>()?;
    let mut history = Vec::new();
    loop {
        // worst relative gap over the training sample
        let mut worst = (0usize, -1.0f64);
        for (i, mu) in train.iter().enumerate() {
            let lb = lower_bound_inner(&scm, mu, &thetas[i])?;
            let ub = upper_bound_inner(&scm, mu, &thetas[i]);
            let gap = match ub {
                Some(ub) if ub > 0.0 => (ub - lb) / ub,
                Some(_) | None => f64::INFINITY,
            };
            if gap > worst.1 {
                worst = (i, gap);
            }
        }
        history.push((worst.0, worst.1));
        if worst.1 <= cfg.tol || scm.constraints.len() >= cfg.j_max {
            break;
        }
        let mu = &train[worst.0];
        let theta = &thetas[worst.0];
        let kvals = ops.combine_k(theta);
        let (alpha, chi) = eig::smallest_generalized_eig(&ops.pattern, &kvals, &ops.y)?;
        if alpha <= 0.0 {
            return Err(CertError::NonCoerciveDetected(alpha, mu.clone()));
        }
        let mut y_star = Vec::with_capacity(qa);
        let mut tmp = vec![0.0; chi.len()];
        for kq in &ops.kq {
            ops.pattern.matvec(kq, &chi, &mut tmp);
            y_star.push(chi.iter().zip(&tmp).map(|(a, b)| a * b).sum());
        }
        scm.constraints.push(ScmConstraint {
            mu: mu.clone(),
            alpha,
            y_star,
            theta: theta.clone(),
        });
    }
    Ok((scm, history))
}

/// Coercivity lower bound at mu: LP over the continuity box with the M
/// nearest stability constraints. May legitimately return a non-positive
/// value when the constraint set is still poor; callers decide on fallback.
pub fn scm_lower_bound(
    scm: &ScmData,
    decomp: &AffineDecomposition,
    mu: &[f64],
) -> Result<f64, CertError> {
    let theta = decomp.theta_a(mu)?;
    lower_bound_inner(scm, mu, &theta)
}

fn lower_bound_inner(scm: &ScmData, mu: &[f64], theta: &[f64]) -> Result<f64, CertError> {
    let lo: Vec<f64> = scm.y_box.iter().map(|b| b.0).collect();
    let hi: Vec<f64> = scm.y_box.iter().map(|b| b.1).collect();
    let sel = scm.nearest(mu, scm.m_near);
    let a: Vec<Vec<f64>> = sel.iter().map(|&i| scm.constraints[i].theta.clone()).collect();
    let b: Vec<f64> = sel.iter().map(|&i| scm.constraints[i].alpha).collect();
    let y = solve_box_lp(theta, &lo, &hi, &a, &b)?;
    Ok(theta.iter().zip(&y).map(|(t, yq)| t * yq).sum())
}

/// Upper bound: minimum of Θ(μ)·y_*(μ') over the M nearest constraints.
pub fn scm_upper_bound(
    scm: &ScmData,
    decomp: &AffineDecomposition,
    mu: &[f64],
) -> Result<f64, CertError> {
    let theta = decomp.theta_a(mu)?;
    upper_bound_inner(scm, mu, &theta).ok_or(CertError::EmptyConstraintSet)
}

fn upper_bound_inner(scm: &ScmData, mu: &[f64], theta: &[f64]) -> Option<f64> {
    let idx = scm.nearest(mu, scm.m_near.max(1));
    idx.iter()
        .map(|&i| {
            scm.constraints[i]
                .y_star
                .iter()
                .zip(theta)
                .map(|(y, t)| t * y)
                .sum::<f64>()
        })
        .min_by(|a, b| a.partial_cmp(b).unwrap())
}

/// Lower bound with the documented fallback: when the LP value is not
/// positive the upper bound substitutes and the result is flagged
/// non-rigorous.
pub fn alpha_lower_bound_or_fallback(
    scm: &ScmData,
    decomp: &AffineDecomposition,
    mu: &[f64],
) -> Result<(f64, bool), CertError> {
    let lb = scm_lower_bound(scm, decomp, mu)?;
    if lb > 0.0 {
        return Ok((lb, true));
    }
    let ub = scm_upper_bound(scm, decomp, mu)?;
    Ok((ub, false))
}

/// Compliant output bound Δ = ε² / α_LB.
pub fn output_bound_compliant(eps: f64, alpha_lb: f64) -> Result<f64, CertError> {
    if alpha_lb <= 0.0 {
        return Err(CertError::NonPositiveAlpha(alpha_lb));
    }
    Ok(eps * eps / alpha_lb)
}

/// Primal-dual output bound Δ = (ε_pr/√α)(ε_du/√α).
pub fn output_bound_primal_dual(eps_pr: f64, eps_du: f64, alpha_lb: f64) -> Result<f64, CertError> {
    if alpha_lb <= 0.0 {
        return Err(CertError::NonPositiveAlpha(alpha_lb));
    }
    Ok(eps_pr * eps_du / alpha_lb)
}

/// Effectivity η = Δ / |s_truth − s_rb|.
pub fn effectivity(delta: f64, s_truth: f64, s_rb: f64) -> Result<f64, CertError> {
    let err = (s_truth - s_rb).abs();
    if err == 0.0 {
        return Err(CertError::ZeroError);
    }
    Ok(delta / err)
}
