//! Reduced spaces, operator projection and the dense online solve.
//!
//! Basis vectors are orthonormal in the Y inner product (classical
//! Gram-Schmidt with one re-orthogonalization pass). Projected blocks are
//! stored at N_max and nested: the leading N x N sub-blocks serve every
//! N <= N_max.

use crate::geomap::AffineDecomposition;
use crate::truth::TruthOperators;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RbError {
    #[error("snapshot is numerically dependent on the current basis (post-projection norm ratio {0:.3e})")]
    NearlyDependentSnapshot(f64),
    #[error("reduced system is singular at N = {0}")]
    SingularReducedSystem(usize),
    #[error("requested N = {0} exceeds N_max = {1}")]
    BadN(usize, usize),
}

/// Y-orthonormal reduced basis with its snapshot parameters.
#[derive(Clone, Default)]
pub struct ReducedBasis {
    pub z: Vec<Vec<f64>>,
    pub snapshot_params: Vec<Vec<f64>>,
}

impl ReducedBasis {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Orthonormalize `u` against the basis and append. Rejects snapshots
    /// whose post-projection Y-norm drops below 1e-10 of the original.
    pub fn gram_schmidt_append(
        &mut self,
        u: &[f64],
        ops: &TruthOperators,
        mu: &[f64],
    ) -> Result<(), RbError> {
        let norm_in = ops.y_norm(u);
        let mut w = u.to_vec();
        // classical GS, two passes (twice is enough at these basis sizes)
        for _ in 0..2 {
            let yw = ops.y_matvec(&w);
            let coeffs: Vec<f64> = self
                .z
                .iter()
                .map(|zi| zi.iter().zip(&yw).map(|(a, b)| a * b).sum())
                .collect();
            for (zi, c) in self.z.iter().zip(&coeffs) {
                for (wk, zk) in w.iter_mut().zip(zi) {
                    *wk -= c * zk;
                }
            }
        }
        let norm_out = ops.y_norm(&w);
        if !(norm_out.is_finite() && norm_out > 1e-10 * norm_in) {
            return Err(RbError::NearlyDependentSnapshot(norm_out / norm_in));
        }
        for wk in w.iter_mut() {
            *wk /= norm_out;
        }
        self.z.push(w);
        self.snapshot_params.push(mu.to_vec());
        Ok(())
    }

    /// Z * u_n, the truth-sized reconstruction.
    pub fn reconstruct(&self, u_n: &[f64]) -> Vec<f64> {
        assert!(u_n.len() <= self.z.len());
        let n_h = self.z.first().map(|z| z.len()).unwrap_or(0);
        let mut out = vec![0.0; n_h];
        for (c, z) in u_n.iter().zip(&self.z) {
            for (o, zk) in out.iter_mut().zip(z) {
                *o += c * zk;
            }
        }
        out
    }
}

/// Dense projected blocks at N_max (primal space, plus dual-space blocks for
/// non-compliant outputs). Holds no truth-sized arrays: online queries stay
/// N-independent of the truth dimension.
#[derive(Clone, Default)]
pub struct ReducedOperators {
    pub n_max: usize,
    pub n_max_du: usize,
    /// Zᵀ K_q Z
    pub kq_n: Vec<DMatrix<f64>>,
    /// Zᵀ F_q
    pub fq_n: Vec<DVector<f64>>,
    /// Zᵀ L_q (primal test space; output evaluation)
    pub lq_n: Vec<DVector<f64>>,
    /// Z_duᵀ K_q Z_du
    pub kq_du: Vec<DMatrix<f64>>,
    /// Z_duᵀ K_q Z_pr (dual-primal coupling for the residual correction)
    pub kq_du_pr: Vec<DMatrix<f64>>,
    /// Z_duᵀ F_q
    pub fq_du: Vec<DVector<f64>>,
    /// Z_duᵀ L_q
    pub lq_du: Vec<DVector<f64>>,
}

impl ReducedOperators {
    /// Project all truth blocks onto the given bases from scratch.
    pub fn project(ops: &TruthOperators, primal: &ReducedBasis, dual: Option<&ReducedBasis>) -> ReducedOperators {
        let mut red = ReducedOperators::default();
        for _ in 0..primal.len() {
            red.grow_primal(ops, primal);
        }
        if let Some(du) = dual {
            for _ in 0..du.len() {
                red.grow_dual(ops, primal, du);
            }
        }
        red
    }

    /// Incremental update after one new primal basis vector: adds one
    /// row/column to each projected block.
    pub fn grow_primal(&mut self, ops: &TruthOperators, primal: &ReducedBasis) {
        let n_new = self.n_max + 1;
        assert!(primal.len() >= n_new);
        let z_new = &primal.z[n_new - 1];
        if self.kq_n.is_empty() {
            self.kq_n = vec![DMatrix::zeros(0, 0); ops.kq.len()];
            self.fq_n = vec![DVector::zeros(0); ops.fq.len()];
            self.lq_n = vec![DVector::zeros(0); ops.lq.len()];
        }
        for (q, kq) in ops.kq.iter().enumerate() {
            let mut kz = vec![0.0; z_new.len()];
            ops.pattern.matvec(kq, z_new, &mut kz);
            let old = &self.kq_n[q];
            let mut m = DMatrix::zeros(n_new, n_new);
            m.view_mut((0, 0), (n_new - 1, n_new - 1)).copy_from(old);
            for i in 0..n_new {
                let v: f64 = primal.z[i].iter().zip(&kz).map(|(a, b)| a * b).sum();
                m[(i, n_new - 1)] = v;
                m[(n_new - 1, i)] = v;
            }
            // recompute the symmetric new diagonal entry exactly once
            let d: f64 = z_new.iter().zip(&kz).map(|(a, b)| a * b).sum();
            m[(n_new - 1, n_new - 1)] = d;
            self.kq_n[q] = m;
        }
        for (q, fq) in ops.fq.iter().enumerate() {
            let mut v = DVector::zeros(n_new);
            v.view_mut((0, 0), (n_new - 1, 1)).copy_from(&self.fq_n[q]);
            v[n_new - 1] = fq.iter().zip(z_new).map(|(a, b)| a * b).sum();
            self.fq_n[q] = v;
        }
        for (q, lq) in ops.lq.iter().enumerate() {
            let mut v = DVector::zeros(n_new);
            v.view_mut((0, 0), (n_new - 1, 1)).copy_from(&self.lq_n[q]);
            v[n_new - 1] = lq.iter().zip(z_new).map(|(a, b)| a * b).sum();
            self.lq_n[q] = v;
        }
        self.n_max = n_new;
    }

    /// Incremental update after one new dual basis vector.
    pub fn grow_dual(&mut self, ops: &TruthOperators, primal: &ReducedBasis, dual: &ReducedBasis) {
        let n_new = self.n_max_du + 1;
        assert!(dual.len() >= n_new);
        let z_new = &dual.z[n_new - 1];
        if self.kq_du.is_empty() {
            self.kq_du = vec![DMatrix::zeros(0, 0); ops.kq.len()];
            self.kq_du_pr = vec![DMatrix::zeros(0, self.n_max); ops.kq.len()];
            self.fq_du = vec![DVector::zeros(0); ops.fq.len()];
            self.lq_du = vec![DVector::zeros(0); ops.lq.len()];
        }
        for (q, kq) in ops.kq.iter().enumerate() {
            let mut kz = vec![0.0; z_new.len()];
            ops.pattern.matvec(kq, z_new, &mut kz);
            // dual-dual block
            let old = &self.kq_du[q];
            let mut m = DMatrix::zeros(n_new, n_new);
            m.view_mut((0, 0), (n_new - 1, n_new - 1)).copy_from(old);
            for i in 0..n_new {
                let v: f64 = dual.z[i].iter().zip(&kz).map(|(a, b)| a * b).sum();
                m[(i, n_new - 1)] = v;
                m[(n_new - 1, i)] = v;
            }
            self.kq_du[q] = m;
            // dual-primal block: one new row (columns = current primal size)
            let old = &self.kq_du_pr[q];
            let n_pr = self.n_max;
            let mut m = DMatrix::zeros(n_new, n_pr);
            m.view_mut((0, 0), (n_new - 1, old.ncols().min(n_pr)))
                .copy_from(&old.view((0, 0), (n_new - 1, old.ncols().min(n_pr))));
            for (j, zp) in primal.z.iter().take(n_pr).enumerate() {
                m[(n_new - 1, j)] = zp.iter().zip(&kz).map(|(a, b)| a * b).sum();
            }
            self.kq_du_pr[q] = m;
        }
        for (q, fq) in ops.fq.iter().enumerate() {
            let mut v = DVector::zeros(n_new);
            v.view_mut((0, 0), (n_new - 1, 1)).copy_from(&self.fq_du[q]);
            v[n_new - 1] = fq.iter().zip(z_new).map(|(a, b)| a * b).sum();
            self.fq_du[q] = v;
        }
        for (q, lq) in ops.lq.iter().enumerate() {
            let mut v = DVector::zeros(n_new);
            v.view_mut((0, 0), (n_new - 1, 1)).copy_from(&self.lq_du[q]);
            v[n_new - 1] = lq.iter().zip(z_new).map(|(a, b)| a * b).sum();
            self.lq_du[q] = v;
        }
        self.n_max_du = n_new;
    }

    /// After growing the primal basis, dual-primal coupling blocks need the
    /// new primal column as well.
    pub fn sync_dual_primal(&mut self, ops: &TruthOperators, primal: &ReducedBasis, dual: &ReducedBasis) {
        if self.kq_du.is_empty() || self.n_max_du == 0 {
            return;
        }
        let n_pr = self.n_max;
        for (q, kq) in ops.kq.iter().enumerate() {
            let old = &self.kq_du_pr[q];
            if old.ncols() == n_pr {
                continue;
            }
            let mut m = DMatrix::zeros(self.n_max_du, n_pr);
            m.view_mut((0, 0), (self.n_max_du, old.ncols())).copy_from(old);
            for j in old.ncols()..n_pr {
                let mut kz = vec![0.0; primal.z[j].len()];
                ops.pattern.matvec(kq, &primal.z[j], &mut kz);
                for (i, zd) in dual.z.iter().take(self.n_max_du).enumerate() {
                    m[(i, j)] = zd.iter().zip(&kz).map(|(a, b)| a * b).sum();
                }
            }
            self.kq_du_pr[q] = m;
        }
    }
}

/// Result of one online solve.
pub struct OnlineSolution {
    pub u_n: DVector<f64>,
    /// dual coefficients for non-compliant outputs
    pub psi_n: Option<DVector<f64>>,
    pub s_n: f64,
}

/// Assemble and solve the N x N reduced system; evaluates the output
/// (compliant s = F_Nᵀ u_N, otherwise the primal-dual corrected value).
/// Touches only N- and Q-sized data.
pub fn online_solve(
    red: &ReducedOperators,
    decomp: &AffineDecomposition,
    mu: &[f64],
    n: usize,
) -> Result<OnlineSolution, crate::geomap::GeomapError> {
    let theta_a = decomp.theta_a(mu)?;
    let theta_f = decomp.theta_f(mu)?;
    let k_n = combine_matrix(&red.kq_n, &theta_a, n);
    let f_n = combine_vector(&red.fq_n, &theta_f, n);
    let lu = k_n.lu();
    let u_n = lu.solve(&f_n).expect("reduced stiffness is SPD");
    if decomp.compliant {
        let s_n = f_n.dot(&u_n);
        return Ok(OnlineSolution {
            u_n,
            psi_n: None,
            s_n,
        });
    }
    let theta_l = decomp.theta_l(mu)?;
    let n_du = n.min(red.n_max_du);
    let k_du = combine_matrix(&red.kq_du, &theta_a, n_du);
    let mut l_du = combine_vector(&red.lq_du, &theta_l, n_du);
    l_du.neg_mut();
    let psi_n = k_du.lu().solve(&l_du).expect("reduced dual stiffness is SPD");
    // s = L u - [F_duᵀ psi - psiᵀ K_dupr u]
    let l_pr = combine_vector(&red.lq_n, &theta_l, n);
    let f_du = combine_vector(&red.fq_du, &theta_f, n_du);
    let k_du_pr = combine_block(&red.kq_du_pr, &theta_a, n_du, n);
    let s_n = l_pr.dot(&u_n) - f_du.dot(&psi_n) + (psi_n.transpose() * k_du_pr * &u_n)[(0, 0)];
    Ok(OnlineSolution {
        u_n,
        psi_n: Some(psi_n),
        s_n,
    })
}

/// Condition number of the dense reduced stiffness at (mu, N).
pub fn reduced_condition_number(
    red: &ReducedOperators,
    decomp: &AffineDecomposition,
    mu: &[f64],
    n: usize,
) -> Result<f64, crate::geomap::GeomapError> {
    let theta_a = decomp.theta_a(mu)?;
    let k_n = combine_matrix(&red.kq_n, &theta_a, n);
    let sym = (&k_n + k_n.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let max = eig.eigenvalues.amax();
    let min = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    Ok(max / min)
}

pub fn combine_matrix(blocks: &[DMatrix<f64>], theta: &[f64], n: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n, n);
    for (t, b) in theta.iter().zip(blocks) {
        out += b.view((0, 0), (n, n)) * *t;
    }
    out
}

pub fn combine_vector(blocks: &[DVector<f64>], theta: &[f64], n: usize) -> DVector<f64> {
    let mut out = DVector::zeros(n);
    for (t, b) in theta.iter().zip(blocks) {
        out += b.rows(0, n) * *t;
    }
    out
}

fn combine_block(blocks: &[DMatrix<f64>], theta: &[f64], rows: usize, cols: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, cols);
    for (t, b) in theta.iter().zip(blocks) {
        out += b.view((0, 0), (rows, cols)) * *t;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_structured_rect, BcKind, BoundaryCondition};
    use crate::truth::{assemble_parameter_independent, build_inner_product, truth_solve};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (crate::geomap::AffineDecomposition, TruthOperators) {
        // parametrized two-region problem so snapshots vary with mu
        use crate::expr::ParamExpr as E;
        use crate::geomap::{collapse_terms, AffineGroup, FormKind, FormTerm, ParamBox, RawTerm};
        use crate::material::{build_sa, MaterialMode, MaterialSpec};

        let mesh = generate_structured_rect(6, 6, &|ix, _, _| if ix < 3 { 1 } else { 2 }, None).unwrap();
        let box_ = ParamBox::new(vec![0.5], vec![2.0]);
        let mut raw = Vec::new();
        for region in 1..=2u32 {
            let e = if region == 1 {
                E::constant(1.0)
            } else {
                E::param(0)
            };
            let spec = MaterialSpec::isotropic(MaterialMode::PlaneStressIsotropic, e, 0.3);
            let sa = build_sa(&spec);
            for a in 0..4u8 {
                for b in 0..4u8 {
                    let p = &sa.s[a as usize][b as usize];
                    if p.is_zero() {
                        continue;
                    }
                    raw.push(RawTerm {
                        theta: p.terms()[0].2.clone(),
                        kind: FormKind::GradGrad {
                            wi: a / 2,
                            wj: a % 2,
                            vi: b / 2,
                            vj: b % 2,
                        },
                        region,
                        weight: (0, 0),
                    });
                }
            }
        }
        let a = collapse_terms(raw, &box_);
        let f = vec![AffineGroup {
            theta: E::constant(1.0),
            forms: vec![FormTerm {
                kind: FormKind::BoundaryTrace { tag: 3, comp: 1 },
                region: 1,
                weight: (0, 0),
                scale: 1.0,
            }, FormTerm {
                kind: FormKind::BoundaryTrace { tag: 3, comp: 1 },
                region: 2,
                weight: (0, 0),
                scale: 1.0,
            }],
        }];
        let decomp = crate::geomap::AffineDecomposition {
            a,
            f,
            l: Vec::new(),
            box_,
            mu_ref: vec![1.0],
            compliant: true,
            axisymmetric: false,
        };
        let bcs = vec![BoundaryCondition {
            tag: 1,
            kind: BcKind::Dirichlet { fix: [true, true] },
        }];
        let mut ops = assemble_parameter_independent(&mesh, &decomp, &bcs).unwrap();
        build_inner_product(&mut ops, &decomp, &[1.25]).unwrap();
        (decomp, ops)
    }

    #[test]
    fn gram_schmidt_orthonormal_and_rejects_duplicates() {
        let (decomp, ops) = setup();
        let mut basis = ReducedBasis::default();
        let mus = [[0.6], [0.9], [1.3], [1.7], [2.0]];
        for mu in &mus {
            let sol = truth_solve(&ops, &decomp, mu).unwrap();
            basis.gram_schmidt_append(&sol.u, &ops, mu).unwrap();
        }
        assert_eq!(basis.len(), 5);
        for i in 0..5 {
            for j in 0..5 {
                let d = ops.y_dot(&basis.z[i], &basis.z[j]);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-10, "Gram {i}{j} = {d}");
            }
        }
        // appending an existing snapshot again must be rejected
        let again = truth_solve(&ops, &decomp, &mus[2]).unwrap();
        assert!(matches!(
            basis.gram_schmidt_append(&again.u, &ops, &mus[2]),
            Err(RbError::NearlyDependentSnapshot(_))
        ));
    }

    #[test]
    fn projection_matches_dense_oracle_and_nests() {
        let (decomp, ops) = setup();
        let mut basis = ReducedBasis::default();
        for mu in [[0.6], [1.0], [1.5], [1.9]] {
            let sol = truth_solve(&ops, &decomp, &mu).unwrap();
            basis.gram_schmidt_append(&sol.u, &ops, &mu).unwrap();
        }
        let red = ReducedOperators::project(&ops, &basis, None);
        let mu = [1.1];
        let theta = decomp.theta_a(&mu).unwrap();
        // dense oracle: Zᵀ K(mu) Z entry-wise
        let kvals = ops.combine_k(&theta);
        let mut oracle = DMatrix::zeros(4, 4);
        for i in 0..4 {
            let mut kz = vec![0.0; ops.n_dofs()];
            ops.pattern.matvec(&kvals, &basis.z[i], &mut kz);
            for j in 0..4 {
                oracle[(j, i)] = basis.z[j].iter().zip(&kz).map(|(a, b)| a * b).sum();
            }
        }
        let online = combine_matrix(&red.kq_n, &theta, 4);
        assert!((&oracle - &online).amax() < 1e-10 * oracle.amax());
        // nesting: N=2 blocks are the leading sub-blocks
        let n2 = combine_matrix(&red.kq_n, &theta, 2);
        assert!((&oracle.view((0, 0), (2, 2)) - &n2).amax() < 1e-10 * oracle.amax());
    }

    #[test]
    fn snapshot_reproduction_and_output_lower_bound() {
        let (decomp, ops) = setup();
        let mut basis = ReducedBasis::default();
        let mus = [[0.55], [0.95], [1.45], [1.95]];
        let mut truths = Vec::new();
        for mu in &mus {
            let sol = truth_solve(&ops, &decomp, mu).unwrap();
            basis.gram_schmidt_append(&sol.u, &ops, mu).unwrap();
            truths.push(sol);
        }
        let red = ReducedOperators::project(&ops, &basis, None);
        for (i, mu) in mus.iter().enumerate() {
            let sol = online_solve(&red, &decomp, mu, basis.len()).unwrap();
            let rel = (sol.s_n - truths[i].s).abs() / truths[i].s.abs();
            assert!(rel < 1e-9, "snapshot {i} rel err {rel}");
            // reconstruct must match the truth field in Y-norm
            let ur = basis.reconstruct(sol.u_n.as_slice());
            let diff: Vec<f64> = ur.iter().zip(&truths[i].u).map(|(a, b)| a - b).collect();
            assert!(ops.y_norm(&diff) <= 1e-8 * ops.y_norm(&truths[i].u));
        }
        // compliant outputs approach from below
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..20 {
            let mu = [rng.gen_range(0.5..2.0)];
            let sol = online_solve(&red, &decomp, &mu, basis.len()).unwrap();
            let truth = truth_solve(&ops, &decomp, &mu).unwrap();
            assert!(truth.s - sol.s_n >= -1e-12 * truth.s.abs());
        }
    }

    #[test]
    fn reconstruct_basic_identities() {
        let (decomp, ops) = setup();
        let mut basis = ReducedBasis::default();
        for mu in [[0.7], [1.8]] {
            let sol = truth_solve(&ops, &decomp, &mu).unwrap();
            basis.gram_schmidt_append(&sol.u, &ops, &mu).unwrap();
        }
        let e1 = basis.reconstruct(&[1.0]);
        for (a, b) in e1.iter().zip(&basis.z[0]) {
            assert_eq!(a, b);
        }
        // linearity
        let x = basis.reconstruct(&[0.3, -0.7]);
        let y1 = basis.reconstruct(&[1.0, 0.0]);
        let y2 = basis.reconstruct(&[0.0, 1.0]);
        for i in 0..x.len() {
            assert!((x[i] - (0.3 * y1[i] - 0.7 * y2[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn condition_number_one_at_mu_bar_and_n1() {
        let (decomp, ops) = setup();
        let mut basis = ReducedBasis::default();
        for mu in [[0.6], [1.2], [1.9]] {
            let sol = truth_solve(&ops, &decomp, &mu).unwrap();
            basis.gram_schmidt_append(&sol.u, &ops, &mu).unwrap();
        }
        let red = ReducedOperators::project(&ops, &basis, None);
        // N=1 always has condition number 1
        let c1 = reduced_condition_number(&red, &decomp, &[0.8], 1).unwrap();
        assert!((c1 - 1.0).abs() < 1e-12);
        // at mu_bar the reduced stiffness is the identity
        let cbar = reduced_condition_number(&red, &decomp, &[1.25], 3).unwrap();
        assert!((cbar - 1.0).abs() < 1e-8);
    }
}
