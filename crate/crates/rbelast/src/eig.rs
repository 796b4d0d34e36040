//! Generalized symmetric eigensolves against the SPD inner-product matrix.
//!
//! Two entry points: the smallest eigenvalue of an SPD pencil (coercivity
//! constants, via shift-invert Lanczos on K⁻¹Y) and both extremal
//! eigenvalues of a possibly indefinite pencil (continuity constraint boxes,
//! via Lanczos on Y⁻¹K). Both use Y-inner products with full
//! reorthogonalization and fall back to a dense solve below 500 dofs.

use crate::sparse::{CsrPattern, SkylineFactor, SparseError};
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

const DENSE_FALLBACK_DIM: usize = 500;

#[derive(Debug, Error)]
pub enum EigError {
    #[error("eigensolver did not converge within {0} iterations (best residual {1:.3e})")]
    NoConvergence(usize, f64),
    #[error("inner-product matrix not SPD: {0}")]
    NotSpd(#[from] SparseError),
    #[error("dense reduction failed (matrix not SPD?)")]
    DenseReduction,
}

/// Dense generalized symmetric eigensolve A x = λ Y x with SPD Y.
/// Returns eigenvalues ascending and Y-orthonormal eigenvectors as columns.
pub fn dense_generalized_eig(
    a: &DMatrix<f64>,
    y: &DMatrix<f64>,
) -> Result<(Vec<f64>, DMatrix<f64>), EigError> {
    let chol = y.clone().cholesky().ok_or(EigError::DenseReduction)?;
    let l = chol.l();
    let linv_a = l
        .clone()
        .solve_lower_triangular(a)
        .ok_or(EigError::DenseReduction)?;
    let c_t = l
        .clone()
        .solve_lower_triangular(&linv_a.transpose())
        .ok_or(EigError::DenseReduction)?;
    let c = (&c_t + c_t.transpose()) * 0.5;
    let se = nalgebra::SymmetricEigen::new(c);
    let mut idx: Vec<usize> = (0..se.eigenvalues.len()).collect();
    idx.sort_by(|&i, &j| se.eigenvalues[i].partial_cmp(&se.eigenvalues[j]).unwrap());
    let vals: Vec<f64> = idx.iter().map(|&i| se.eigenvalues[i]).collect();
    let lt = l.transpose();
    let mut vecs = DMatrix::zeros(a.nrows(), vals.len());
    for (col, &i) in idx.iter().enumerate() {
        let q = se.eigenvectors.column(i).into_owned();
        let x = lt
            .solve_upper_triangular(&q)
            .ok_or(EigError::DenseReduction)?;
        vecs.set_column(col, &x);
    }
    Ok((vals, vecs))
}

pub fn to_dense(pattern: &CsrPattern, vals: &[f64]) -> DMatrix<f64> {
    let n = pattern.n;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for k in pattern.indptr[i]..pattern.indptr[i + 1] {
            m[(i, pattern.indices[k] as usize)] = vals[k];
        }
    }
    m
}

struct Lanczos<'a> {
    pattern: &'a CsrPattern,
    y_vals: &'a [f64],
    alphas: Vec<f64>,
    betas: Vec<f64>,
    basis: Vec<Vec<f64>>,
    breakdown: bool,
}

impl<'a> Lanczos<'a> {
    fn new(pattern: &'a CsrPattern, y_vals: &'a [f64], seed: u64) -> Lanczos<'a> {
        let n = pattern.n;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut yv = vec![0.0; n];
        pattern.matvec(y_vals, &v, &mut yv);
        let nrm = dot(&v, &yv).sqrt();
        for x in v.iter_mut() {
            *x /= nrm;
        }
        Lanczos {
            pattern,
            y_vals,
            alphas: Vec::new(),
            betas: Vec::new(),
            basis: vec![v],
            breakdown: false,
        }
    }

    /// One Lanczos step with the given self-adjoint operator application.
    /// Returns false on (lucky) breakdown.
    fn step(&mut self, op: &mut impl FnMut(&[f64]) -> Vec<f64>) -> bool {
        if self.breakdown {
            return false;
        }
        let n = self.pattern.n;
        let j = self.basis.len() - 1;
        let vj = self.basis[j].clone();
        let mut w = op(&vj);
        let mut yw = vec![0.0; n];
        self.pattern.matvec(self.y_vals, &w, &mut yw);
        let alpha = dot(&yw, &vj);
        self.alphas.push(alpha);
        // subtract alpha*vj and beta*v_{j-1}
        for (wk, vk) in w.iter_mut().zip(&vj) {
            *wk -= alpha * vk;
        }
        if j > 0 {
            let beta_prev = self.betas[j - 1];
            let vprev = &self.basis[j - 1];
            for (wk, vk) in w.iter_mut().zip(vprev) {
                *wk -= beta_prev * vk;
            }
        }
        // full classical Gram-Schmidt reorthogonalization, two passes
        for _ in 0..2 {
            self.pattern.matvec(self.y_vals, &w, &mut yw);
            let coeffs: Vec<f64> = self.basis.iter().map(|vi| dot(&yw, vi)).collect();
            for (vi, ci) in self.basis.iter().zip(&coeffs) {
                for (wk, vk) in w.iter_mut().zip(vi) {
                    *wk -= ci * vk;
                }
            }
        }
        self.pattern.matvec(self.y_vals, &w, &mut yw);
        let beta = dot(&yw, &w).max(0.0).sqrt();
        if !(beta.is_finite() && beta > 1e-14 * self.alphas[0].abs().max(1.0)) {
            self.breakdown = true;
            return false;
        }
        for wk in w.iter_mut() {
            *wk /= beta;
        }
        self.betas.push(beta);
        self.basis.push(w);
        true
    }

    /// Ritz values (ascending) and coefficient vectors of the tridiagonal.
    fn ritz(&self) -> (Vec<f64>, DMatrix<f64>) {
        let m = self.alphas.len();
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = self.alphas[i];
            if i + 1 < m {
                t[(i, i + 1)] = self.betas[i];
                t[(i + 1, i)] = self.betas[i];
            }
        }
        let se = nalgebra::SymmetricEigen::new(t);
        let mut idx: Vec<usize> = (0..m).collect();
        idx.sort_by(|&i, &j| se.eigenvalues[i].partial_cmp(&se.eigenvalues[j]).unwrap());
        let vals: Vec<f64> = idx.iter().map(|&i| se.eigenvalues[i]).collect();
        let mut vecs = DMatrix::zeros(m, m);
        for (c, &i) in idx.iter().enumerate() {
            vecs.set_column(c, &se.eigenvectors.column(i));
        }
        (vals, vecs)
    }

    fn ritz_vector(&self, coeffs: nalgebra::DVectorView<f64>) -> Vec<f64> {
        let n = self.pattern.n;
        let mut z = vec![0.0; n];
        for (c, v) in coeffs.iter().zip(&self.basis) {
            for (zk, vk) in z.iter_mut().zip(v) {
                *zk += c * vk;
            }
        }
        z
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Pencil residual ‖A z − λ Y z‖₂ and ‖A z‖₂.
fn pencil_residual(
    pattern: &CsrPattern,
    a_vals: &[f64],
    y_vals: &[f64],
    lambda: f64,
    z: &[f64],
) -> (f64, f64) {
    let n = pattern.n;
    let mut az = vec![0.0; n];
    let mut yz = vec![0.0; n];
    pattern.matvec(a_vals, z, &mut az);
    pattern.matvec(y_vals, z, &mut yz);
    let mut res = 0.0;
    for i in 0..n {
        let r = az[i] - lambda * yz[i];
        res += r * r;
    }
    (res.sqrt(), norm2(&az))
}

/// Y-normalize a vector in place.
fn y_normalize(pattern: &CsrPattern, y_vals: &[f64], z: &mut [f64]) {
    let mut yz = vec![0.0; z.len()];
    pattern.matvec(y_vals, z, &mut yz);
    let nrm = dot(z, &yz).sqrt();
    for x in z.iter_mut() {
        *x /= nrm;
    }
}

/// Smallest eigenvalue of the SPD pencil A x = λ Y x with its Y-normalized
/// eigenvector. Residual criterion: ‖Aχ − λYχ‖ ≤ 1e-8 ‖Aχ‖.
pub fn smallest_generalized_eig(
    pattern: &CsrPattern,
    a_vals: &[f64],
    y_vals: &[f64],
) -> Result<(f64, Vec<f64>), EigError> {
    let n = pattern.n;
    let tol = 1e-8;
    if n <= DENSE_FALLBACK_DIM {
        let (vals, vecs) = dense_generalized_eig(&to_dense(pattern, a_vals), &to_dense(pattern, y_vals))?;
        let mut chi: Vec<f64> = vecs.column(0).iter().copied().collect();
        y_normalize(pattern, y_vals, &mut chi);
        return Ok((vals[0], chi));
    }
    let factor = SkylineFactor::factor(pattern, a_vals)?;
    let mut op = |v: &[f64]| {
        let mut yv = vec![0.0; n];
        pattern.matvec(y_vals, v, &mut yv);
        factor.solve_in_place(&mut yv);
        yv
    };
    let mut lanczos = Lanczos::new(pattern, y_vals, 0x51e16);
    let max_iter = 300;
    let mut best_res = f64::INFINITY;
    let mut k = 0;
    while k < max_iter {
        let alive = lanczos.step(&mut op);
        k += 1;
        let m = lanczos.alphas.len();
        if !alive || m >= 8 && k % 5 == 0 || k == max_iter {
            let (vals, vecs) = lanczos.ritz();
            // largest Ritz value of K⁻¹Y  <->  smallest pencil eigenvalue
            let theta = vals[m - 1];
            let lambda = 1.0 / theta;
            let mut chi = lanczos.ritz_vector(vecs.column(m - 1));
            y_normalize(pattern, y_vals, &mut chi);
            let (res, anorm) = pencil_residual(pattern, a_vals, y_vals, lambda, &chi);
            best_res = best_res.min(res / anorm.max(1e-300));
            if res <= tol * anorm {
                return Ok((lambda, chi));
            }
            if !alive {
                break;
            }
        }
    }
    Err(EigError::NoConvergence(max_iter, best_res))
}

/// Both extremal eigenvalues of the (possibly indefinite) pencil
/// K x = y Y x, widened outward by 1e-6 (|y|+1) so downstream constraint
/// boxes stay valid under the iteration tolerance.
pub fn extremal_generalized_eigs(
    pattern: &CsrPattern,
    k_vals: &[f64],
    y_vals: &[f64],
    y_factor: &SkylineFactor,
) -> Result<(f64, f64), EigError> {
    let n = pattern.n;
    let widen = |lo: f64, hi: f64| (lo - 1e-6 * (lo.abs() + 1.0), hi + 1e-6 * (hi.abs() + 1.0));
    if n <= DENSE_FALLBACK_DIM {
        let (vals, _) = dense_generalized_eig(&to_dense(pattern, k_vals), &to_dense(pattern, y_vals))?;
        let (lo, hi) = widen(vals[0], *vals.last().unwrap());
        return Ok((lo, hi));
    }
    let mut op = |v: &[f64]| {
        let mut kv = vec![0.0; n];
        pattern.matvec(k_vals, v, &mut kv);
        y_factor.solve_in_place(&mut kv);
        kv
    };
    let mut lanczos = Lanczos::new(pattern, y_vals, 0xe87e);
    let max_iter = 350;
    let tol = 1e-6;
    let mut best_res = f64::INFINITY;
    let mut k = 0;
    while k < max_iter {
        let alive = lanczos.step(&mut op);
        k += 1;
        let m = lanczos.alphas.len();
        if !alive || m >= 10 && k % 10 == 0 || k == max_iter {
            let (vals, vecs) = lanczos.ritz();
            let scale = vals[m - 1].abs().max(vals[0].abs()).max(1e-30);
            let mut worst = 0.0f64;
            for end in [0, m - 1] {
                let lam = vals[end];
                let mut z = lanczos.ritz_vector(vecs.column(end));
                y_normalize(pattern, y_vals, &mut z);
                let (res, _) = pencil_residual(pattern, k_vals, y_vals, lam, &z);
                // ‖Kz − λYz‖ relative to the spectral scale of the pencil
                worst = worst.max(res / scale);
            }
            best_res = best_res.min(worst);
            if worst <= tol || !alive {
                let (lo, hi) = widen(vals[0], vals[m - 1]);
                return Ok((lo, hi));
            }
        }
    }
    Err(EigError::NoConvergence(max_iter, best_res))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_csr(m: &DMatrix<f64>) -> (CsrPattern, Vec<f64>) {
        let n = m.nrows();
        let edges = (0..n as u32).flat_map(|i| (0..n as u32).map(move |j| (i, j)));
        let pattern = CsrPattern::from_adjacency(n, edges);
        let mut vals = vec![0.0; pattern.nnz()];
        for i in 0..n {
            for k in pattern.indptr[i]..pattern.indptr[i + 1] {
                vals[k] = m[(i, pattern.indices[k] as usize)];
            }
        }
        (pattern, vals)
    }

    fn random_spd(n: usize, seed: u64, shift: f64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * shift
    }

    #[test]
    fn pencil_with_a_equal_y_gives_one() {
        let y = random_spd(40, 3, 2.0);
        let (pattern, vals) = full_csr(&y);
        let (lam, chi) = smallest_generalized_eig(&pattern, &vals, &vals).unwrap();
        assert!((lam - 1.0).abs() < 1e-10);
        // chi normalized in Y
        let mut ychi = vec![0.0; 40];
        pattern.matvec(&vals, &chi, &mut ychi);
        let n: f64 = chi.iter().zip(&ychi).map(|(a, b)| a * b).sum();
        assert!((n - 1.0).abs() < 1e-10);
    }

    #[test]
    fn dense_oracle_50x50() {
        let a = random_spd(50, 11, 1.0);
        let y = random_spd(50, 12, 5.0);
        let (pa, va) = full_csr(&a);
        let (_py, vy) = full_csr(&y);
        let (lam, chi) = smallest_generalized_eig(&pa, &va, &vy).unwrap();
        let (vals, _) = dense_generalized_eig(&a, &y).unwrap();
        assert!((lam - vals[0]).abs() <= 1e-8 * vals[0].abs());
        let (res, an) = pencil_residual(&pa, &va, &vy, lam, &chi);
        assert!(res <= 1e-8 * an);
    }

    #[test]
    fn lanczos_path_matches_dense_on_larger_pencil() {
        // band matrix (n > 500) to exercise the sparse Lanczos route
        let n = 600;
        let edges = (0..n as u32 - 1).map(|i| (i, i + 1));
        let pattern = CsrPattern::from_adjacency(n, edges);
        let mut a_vals = vec![0.0; pattern.nnz()];
        let mut y_vals = vec![0.0; pattern.nnz()];
        for i in 0..n {
            for k in pattern.indptr[i]..pattern.indptr[i + 1] {
                let j = pattern.indices[k] as usize;
                if i == j {
                    a_vals[k] = 2.0 + (i as f64 * 0.01).sin().powi(2);
                    y_vals[k] = 1.0 + 0.2 * ((i * 7 % 13) as f64 / 13.0);
                } else {
                    a_vals[k] = -1.0;
                    y_vals[k] = 0.05;
                }
            }
        }
        let (lam, _chi) = smallest_generalized_eig(&pattern, &a_vals, &y_vals).unwrap();
        let (vals, _) = dense_generalized_eig(&to_dense(&pattern, &a_vals), &to_dense(&pattern, &y_vals)).unwrap();
        assert!(
            (lam - vals[0]).abs() <= 1e-7 * vals[0].abs(),
            "{lam} vs {}",
            vals[0]
        );
    }

    #[test]
    fn extremal_identity_and_zero() {
        let y = random_spd(30, 5, 3.0);
        let (pattern, vals) = full_csr(&y);
        let (lo, hi) = extremal_generalized_eigs(&pattern, &vals, &vals, &SkylineFactor::factor(&pattern, &vals).unwrap()).unwrap();
        // widened around (1, 1)
        assert!(lo <= 1.0 && hi >= 1.0);
        assert!((lo - 1.0).abs() < 1e-5 && (hi - 1.0).abs() < 1e-5);

        let zeros = vec![0.0; vals.len()];
        let (lo, hi) = extremal_generalized_eigs(&pattern, &zeros, &vals, &SkylineFactor::factor(&pattern, &vals).unwrap()).unwrap();
        assert!(lo <= 0.0 && hi >= 0.0);
        assert!(lo.abs() < 1e-5 && hi.abs() < 1e-5);
    }

    #[test]
    fn extremal_indefinite_small_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 60;
        let s = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let k = (&s + s.transpose()) * 0.5; // symmetric indefinite
        let y = random_spd(n, 78, 4.0);
        let (pk, vk) = full_csr(&k);
        let (_py, vy) = full_csr(&y);
        let yf = SkylineFactor::factor(&pk, &vy).unwrap();
        let (lo, hi) = extremal_generalized_eigs(&pk, &vk, &vy, &yf).unwrap();
        let (vals, _) = dense_generalized_eig(&k, &y).unwrap();
        assert!(lo <= vals[0] + 1e-9 && vals[0] - lo < 1e-4 * (vals[0].abs() + 1.0));
        let top = *vals.last().unwrap();
        assert!(hi >= top - 1e-9 && hi - top < 1e-4 * (top.abs() + 1.0));
    }
}
