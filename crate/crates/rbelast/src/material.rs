//! Constitutive matrices for isotropic/orthotropic plane stress, plane
//! strain and the axisymmetric formulation.
//!
//! Moduli and the material-axis angle may depend on the parameter vector, so
//! all builders work on [`ParamExpr`] entries; numeric evaluation wrappers
//! back the validation checks and the unit tests.
//!
//! Conventions: nu21 is always derived as nu12*E2/E1 (compliance symmetry),
//! and similarly nu31 = nu13*E3/E1, nu32 = nu23*E3/E2. The shear modulus
//! defaults to the Carroll estimate 1/G12 = (1+nu21)/E1 + (1+nu12)/E2 when
//! not given explicitly.

use crate::expr::{MonomialPoly, ParamExpr};
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MaterialError {
    #[error("constitutive matrix asymmetric beyond 1e-12 relative at mu = {0:?}")]
    AsymmetricConstitutive(Vec<f64>),
    #[error("constitutive matrix not positive definite at mu = {0:?}")]
    NotPositiveDefinite(Vec<f64>),
    #[error("modulus must be positive, got {0}")]
    NonPositiveModulus(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaterialMode {
    PlaneStressIsotropic,
    PlaneStrainIsotropic,
    PlaneStressOrthotropic,
    PlaneStrainOrthotropic,
    AxisymmetricIsotropic,
}

impl MaterialMode {
    pub fn is_axisymmetric(&self) -> bool {
        matches!(self, MaterialMode::AxisymmetricIsotropic)
    }
}

/// One region's material. Moduli and theta are expressions over μ; Poisson
/// ratios are plain constants (every shipped problem keeps them fixed).
#[derive(Clone, Debug)]
pub struct MaterialSpec {
    pub mode: MaterialMode,
    pub e1: ParamExpr,
    pub e2: ParamExpr,
    pub e3: ParamExpr,
    pub nu12: f64,
    pub nu13: f64,
    pub nu23: f64,
    /// Explicit shear modulus; `None` selects the Carroll estimate.
    pub g12: Option<ParamExpr>,
    /// Material-axis rotation angle.
    pub theta: ParamExpr,
}

impl MaterialSpec {
    pub fn isotropic(mode: MaterialMode, e: ParamExpr, nu: f64) -> MaterialSpec {
        MaterialSpec {
            mode,
            e1: e.clone(),
            e2: e.clone(),
            e3: e,
            nu12: nu,
            nu13: nu,
            nu23: nu,
            g12: None,
            theta: ParamExpr::constant(0.0),
        }
    }

    pub fn orthotropic_plane_stress(
        e1: ParamExpr,
        e2: ParamExpr,
        nu12: f64,
        g12: Option<ParamExpr>,
        theta: ParamExpr,
    ) -> MaterialSpec {
        MaterialSpec {
            mode: MaterialMode::PlaneStressOrthotropic,
            e1,
            e2: e2.clone(),
            e3: e2,
            nu12,
            nu13: nu12,
            nu23: nu12,
            g12,
            theta,
        }
    }
}

/// Shear modulus estimate: G12 = 1 / ((1+nu21)/E1 + (1+nu12)/E2).
pub fn estimate_shear_modulus(e1: f64, e2: f64, nu12: f64, nu21: f64) -> f64 {
    1.0 / ((1.0 + nu21) / e1 + (1.0 + nu12) / e2)
}

fn shear_modulus_expr(e1: &ParamExpr, e2: &ParamExpr, nu12: f64) -> ParamExpr {
    let nu21 = ParamExpr::constant(nu12) * e2.clone() / e1.clone();
    ParamExpr::constant(1.0)
        / ((ParamExpr::constant(1.0) + nu21) / e1.clone()
            + ParamExpr::constant(1.0 + nu12) / e2.clone())
}

/// In-plane rotation of a 3x3 stress-strain matrix: E = T(θ) Ê T(θ)ᵀ.
pub fn rotate_material(e_hat: &[[ParamExpr; 3]; 3], theta: &ParamExpr) -> [[ParamExpr; 3]; 3] {
    if let ParamExpr::Const(v) = theta {
        if *v == 0.0 {
            return e_hat.clone();
        }
    }
    let c = theta.clone().cos();
    let s = theta.clone().sin();
    let c2 = c.clone() * c.clone();
    let s2 = s.clone() * s.clone();
    let sc = s * c;
    let t: [[ParamExpr; 3]; 3] = [
        [c2.clone(), s2.clone(), ParamExpr::constant(-2.0) * sc.clone()],
        [s2.clone(), c2.clone(), ParamExpr::constant(2.0) * sc.clone()],
        [sc.clone(), -sc, c2 - s2],
    ];
    let zero = || ParamExpr::constant(0.0);
    let mut te: Vec<Vec<ParamExpr>> = vec![vec![zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = zero();
            for (k, tk) in t[i].iter().enumerate() {
                acc = acc + tk.clone() * e_hat[k][j].clone();
            }
            te[i][j] = acc;
        }
    }
    let mut out: [[ParamExpr; 3]; 3] = e_hat.clone();
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = zero();
            for k in 0..3 {
                acc = acc + te[i][k].clone() * t[j][k].clone();
            }
            out[i][j] = acc;
        }
    }
    out
}

/// Numeric counterpart of [`rotate_material`].
pub fn rotate_material_numeric(e_hat: &DMatrix<f64>, theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    let t = DMatrix::from_row_slice(
        3,
        3,
        &[
            c * c,
            s * s,
            -2.0 * s * c,
            s * s,
            c * c,
            2.0 * s * c,
            s * c,
            -s * c,
            c * c - s * s,
        ],
    );
    &t * e_hat * t.transpose()
}

/// Symbolic constitutive matrix: 3x3 for Cartesian modes, 4x4 (rr, zz, θθ,
/// rz ordering) for the axisymmetric mode.
pub fn build_e_matrix(spec: &MaterialSpec) -> Vec<Vec<ParamExpr>> {
    let c = ParamExpr::constant;
    match spec.mode {
        MaterialMode::PlaneStressIsotropic => {
            let nu = spec.nu12;
            let f = spec.e1.clone() / c(1.0 - nu * nu);
            vec![
                vec![f.clone(), f.clone() * c(nu), c(0.0)],
                vec![f.clone() * c(nu), f.clone(), c(0.0)],
                vec![c(0.0), c(0.0), f * c((1.0 - nu) / 2.0)],
            ]
        }
        MaterialMode::PlaneStrainIsotropic => {
            let nu = spec.nu12;
            let f = spec.e1.clone() / c((1.0 + nu) * (1.0 - 2.0 * nu));
            vec![
                vec![f.clone() * c(1.0 - nu), f.clone() * c(nu), c(0.0)],
                vec![f.clone() * c(nu), f.clone() * c(1.0 - nu), c(0.0)],
                vec![c(0.0), c(0.0), f * c((1.0 - 2.0 * nu) / 2.0)],
            ]
        }
        MaterialMode::PlaneStressOrthotropic => {
            let nu12 = spec.nu12;
            let nu21 = c(nu12) * spec.e2.clone() / spec.e1.clone();
            let d = c(1.0) - c(nu12) * nu21;
            let q11 = spec.e1.clone() / d.clone();
            let q22 = spec.e2.clone() / d.clone();
            let q12 = c(nu12) * spec.e2.clone() / d;
            let g12 = spec
                .g12
                .clone()
                .unwrap_or_else(|| shear_modulus_expr(&spec.e1, &spec.e2, nu12));
            let e_hat = [
                [q11, q12.clone(), c(0.0)],
                [q12, q22, c(0.0)],
                [c(0.0), c(0.0), g12],
            ];
            rotate_material(&e_hat, &spec.theta)
                .iter()
                .map(|r| r.to_vec())
                .collect()
        }
        MaterialMode::PlaneStrainOrthotropic => {
            // Invert the 3x3 normal-strain compliance symbolically, then take
            // the in-plane block (plane strain: eps_33 = 0).
            let s11 = c(1.0) / spec.e1.clone();
            let s22 = c(1.0) / spec.e2.clone();
            let s33 = c(1.0) / spec.e3.clone();
            let s12 = c(-spec.nu12) / spec.e1.clone();
            let s13 = c(-spec.nu13) / spec.e1.clone();
            let s23 = c(-spec.nu23) / spec.e2.clone();
            let det = s11.clone() * (s22.clone() * s33.clone() - s23.clone() * s23.clone())
                - s12.clone() * (s12.clone() * s33.clone() - s23.clone() * s13.clone())
                + s13.clone() * (s12.clone() * s23.clone() - s22.clone() * s13.clone());
            let c11 = (s22.clone() * s33.clone() - s23.clone() * s23.clone()) / det.clone();
            let c22 = (s11.clone() * s33.clone() - s13.clone() * s13.clone()) / det.clone();
            let c12 = (s13.clone() * s23.clone() - s12.clone() * s33.clone()) / det;
            let g12 = spec
                .g12
                .clone()
                .unwrap_or_else(|| shear_modulus_expr(&spec.e1, &spec.e2, spec.nu12));
            let e_hat = [
                [c11, c12.clone(), c(0.0)],
                [c12, c22, c(0.0)],
                [c(0.0), c(0.0), g12],
            ];
            rotate_material(&e_hat, &spec.theta)
                .iter()
                .map(|r| r.to_vec())
                .collect()
        }
        MaterialMode::AxisymmetricIsotropic => {
            let nu = spec.nu12;
            let f = spec.e1.clone() / c((1.0 + nu) * (1.0 - 2.0 * nu));
            let dg = c(1.0 - nu);
            let off = c(nu);
            let row = |a: &ParamExpr, b: &ParamExpr, d: &ParamExpr| {
                vec![
                    f.clone() * a.clone(),
                    f.clone() * b.clone(),
                    f.clone() * d.clone(),
                    c(0.0),
                ]
            };
            vec![
                row(&dg, &off, &off),
                row(&off, &dg, &off),
                row(&off, &off, &dg),
                vec![c(0.0), c(0.0), c(0.0), f * c((1.0 - 2.0 * nu) / 2.0)],
            ]
        }
    }
}

/// Numeric constitutive matrix with symmetry/SPD verification.
pub fn build_e_matrix_numeric(spec: &MaterialSpec, mu: &[f64]) -> Result<DMatrix<f64>, MaterialError> {
    for e in [&spec.e1, &spec.e2, &spec.e3] {
        let v = e.eval(mu);
        if !(v.is_finite() && v > 0.0) {
            return Err(MaterialError::NonPositiveModulus(v));
        }
    }
    let sym = build_e_matrix(spec);
    let n = sym.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = sym[i][j].eval(mu);
        }
    }
    let scale = m.amax();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(MaterialError::AsymmetricConstitutive(mu.to_vec()));
            }
        }
    }
    if nalgebra::Cholesky::new(m.clone()).is_none() {
        return Err(MaterialError::NotPositiveDefinite(mu.to_vec()));
    }
    Ok(m)
}

/// The 5x5 tensor behind the unified weak form, acting on the vector
/// (∂w1/∂x1, ∂w1/∂x2, ∂w2/∂x1, ∂w2/∂x2, w1) in original-domain coordinates.
///
/// Cartesian modes: constant entries, zero fifth row/column. Axisymmetric:
/// entries are polynomials in x1 (degree <= 3).
#[derive(Clone, Debug)]
pub struct ElasticTensor {
    pub s: Vec<Vec<MonomialPoly>>,
}

pub fn build_sa(spec: &MaterialSpec) -> ElasticTensor {
    let e = build_e_matrix(spec);
    let zero = MonomialPoly::zero;
    let mut s = vec![vec![zero(); 5]; 5];
    if !spec.mode.is_axisymmetric() {
        // [B] maps (∂1u1, ∂2u1, ∂1u2, ∂2u2) to (eps11, eps22, gamma12):
        //   eps11 = ∂1u1, eps22 = ∂2u2, gamma12 = ∂2u1 + ∂1u2
        // C = Bᵀ E B, padded with a zero w1 slot.
        let b_cols: [Vec<(usize, f64)>; 4] = [
            vec![(0, 1.0)],
            vec![(2, 1.0)],
            vec![(2, 1.0)],
            vec![(1, 1.0)],
        ];
        for a in 0..4 {
            for b in 0..4 {
                let mut acc = ParamExpr::constant(0.0);
                for &(r, cr) in &b_cols[a] {
                    for &(q, cq) in &b_cols[b] {
                        acc = acc
                            + ParamExpr::constant(cr * cq) * e[r][q].clone();
                    }
                }
                s[a][b] = MonomialPoly::constant(acc);
            }
        }
    } else {
        // B_a (4x5), entries constant or x1, per the change of variables
        // u1 = u_r / r:
        //   eps_rr     = x1 ∂1u1 + u1
        //   eps_zz     = ∂2u2
        //   eps_θθ     = u1
        //   gamma_rz   = x1 ∂2u1 + ∂1u2
        // S^a = x1 * B_aᵀ E B_a.
        let x1 = || MonomialPoly::monomial(1, 0, ParamExpr::constant(1.0));
        let one = || MonomialPoly::constant(ParamExpr::constant(1.0));
        let mut ba = vec![vec![MonomialPoly::zero(); 5]; 4];
        ba[0][0] = x1();
        ba[0][4] = one();
        ba[1][3] = one();
        ba[2][4] = one();
        ba[3][1] = x1();
        ba[3][2] = one();
        for a in 0..5 {
            for b in 0..5 {
                let mut acc = MonomialPoly::zero();
                for r in 0..4 {
                    if ba[r][a].is_zero() {
                        continue;
                    }
                    for q in 0..4 {
                        if ba[q][b].is_zero() || e[r][q].is_zero_const() {
                            continue;
                        }
                        acc = acc.add(&ba[r][a].mul(&ba[q][b]).scale(&e[r][q]));
                    }
                }
                // multiply by the radial measure x1
                s[a][b] = acc.mul(&x1());
            }
        }
    }
    ElasticTensor { s }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ParamExpr as E;

    fn numeric_sa(spec: &MaterialSpec, mu: &[f64], x1: f64) -> DMatrix<f64> {
        let t = build_sa(spec);
        DMatrix::from_fn(5, 5, |i, j| t.s[i][j].eval(mu, x1, 0.0))
    }

    #[test]
    fn plane_stress_nu_zero_decouples() {
        let spec = MaterialSpec::isotropic(MaterialMode::PlaneStressIsotropic, E::constant(1.0), 0.0);
        let m = build_e_matrix_numeric(&spec, &[]).unwrap();
        assert!((m[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((m[(1, 1)] - 1.0).abs() < 1e-15);
        assert!((m[(2, 2)] - 0.5).abs() < 1e-15);
        assert!(m[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn axisymmetric_matrix_matches_reference_values() {
        let spec =
            MaterialSpec::isotropic(MaterialMode::AxisymmetricIsotropic, E::constant(1.0), 0.3);
        let m = build_e_matrix_numeric(&spec, &[]).unwrap();
        let f = 1.0 / (1.3 * 0.4);
        for i in 0..3 {
            assert!((m[(i, i)] - f * 0.7).abs() < 1e-14);
            for j in 0..3 {
                if i != j {
                    assert!((m[(i, j)] - f * 0.3).abs() < 1e-14);
                }
            }
        }
        assert!((m[(3, 3)] - f * 0.2).abs() < 1e-14);
    }

    #[test]
    fn shear_estimate_values_and_homogeneity() {
        assert!((estimate_shear_modulus(1.0, 1.0, 0.3, 0.3) - 1.0 / 2.6).abs() < 1e-15);
        assert!((estimate_shear_modulus(1.0, 2.0, 0.3, 0.6) - 1.0 / 2.25).abs() < 1e-15);
        for c in [0.5, 2.0, 7.3] {
            let g = estimate_shear_modulus(1.3, 0.8, 0.25, 0.2);
            let gc = estimate_shear_modulus(c * 1.3, c * 0.8, 0.25, 0.2);
            assert!((gc - c * g).abs() < 1e-12 * gc.abs());
        }
    }

    #[test]
    fn orthotropic_equal_moduli_reduces_to_isotropic() {
        let ortho = MaterialSpec::orthotropic_plane_stress(
            E::constant(1.0),
            E::constant(1.0),
            0.3,
            None,
            E::constant(0.0),
        );
        let iso = MaterialSpec::isotropic(MaterialMode::PlaneStressIsotropic, E::constant(1.0), 0.3);
        let mo = build_e_matrix_numeric(&ortho, &[]).unwrap();
        let mi = build_e_matrix_numeric(&iso, &[]).unwrap();
        assert!((mo - mi).amax() < 1e-14);
    }

    #[test]
    fn plane_strain_orthotropic_degenerates_to_isotropic() {
        let mut spec = MaterialSpec::isotropic(MaterialMode::PlaneStrainOrthotropic, E::constant(2.0), 0.3);
        // explicit isotropic shear so the Carroll estimate is not compared
        spec.g12 = Some(E::constant(2.0 / (2.0 * 1.3)));
        let iso = MaterialSpec::isotropic(MaterialMode::PlaneStrainIsotropic, E::constant(2.0), 0.3);
        let a = build_e_matrix_numeric(&spec, &[]).unwrap();
        let b = build_e_matrix_numeric(&iso, &[]).unwrap();
        assert!((a - b).amax() < 1e-12);
    }

    #[test]
    fn rotation_identities() {
        let e_hat = DMatrix::from_row_slice(3, 3, &[2.0, 0.4, 0.0, 0.4, 1.1, 0.0, 0.0, 0.0, 0.7]);
        let r0 = rotate_material_numeric(&e_hat, 0.0);
        assert!((&r0 - &e_hat).amax() < 1e-15);
        let rpi = rotate_material_numeric(&e_hat, std::f64::consts::PI);
        assert!((&rpi - &e_hat).amax() < 1e-12);
        let rhalf = rotate_material_numeric(&e_hat, std::f64::consts::FRAC_PI_2);
        assert!((rhalf[(0, 0)] - e_hat[(1, 1)]).abs() < 1e-12);
        assert!((rhalf[(1, 1)] - e_hat[(0, 0)]).abs() < 1e-12);
    }

    #[test]
    fn rotation_is_identity_on_isotropic() {
        let spec = MaterialSpec::isotropic(MaterialMode::PlaneStressIsotropic, E::constant(1.7), 0.28);
        let base = build_e_matrix_numeric(&spec, &[]).unwrap();
        for theta in [0.3, -0.9, 1.2, 2.5] {
            let r = rotate_material_numeric(&base, theta);
            assert!((&r - &base).amax() < 1e-12, "theta={theta}");
        }
    }

    #[test]
    fn symbolic_rotation_matches_numeric() {
        let e1 = E::constant(1.0);
        let e2 = E::param(0);
        let spec = MaterialSpec::orthotropic_plane_stress(e1, e2, 0.3, None, E::param(1));
        let sym = build_e_matrix(&spec);
        let mu = [1.7, 0.35];
        // numeric route: build unrotated then rotate
        let spec0 = MaterialSpec::orthotropic_plane_stress(
            E::constant(1.0),
            E::constant(mu[0]),
            0.3,
            None,
            E::constant(0.0),
        );
        let m0 = build_e_matrix_numeric(&spec0, &[]).unwrap();
        let rot = rotate_material_numeric(&m0, mu[1]);
        for i in 0..3 {
            for j in 0..3 {
                assert!((sym[i][j].eval(&mu) - rot[(i, j)]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn cartesian_sa_structure() {
        let spec = MaterialSpec::isotropic(MaterialMode::PlaneStressIsotropic, E::constant(1.0), 0.3);
        let s = numeric_sa(&spec, &[], 1.0);
        for k in 0..5 {
            assert_eq!(s[(4, k)], 0.0);
            assert_eq!(s[(k, 4)], 0.0);
        }
        assert!((s.clone() - s.transpose()).amax() < 1e-14);
    }

    #[test]
    fn axisymmetric_sa_leading_coefficient() {
        let spec =
            MaterialSpec::isotropic(MaterialMode::AxisymmetricIsotropic, E::constant(1.0), 0.3);
        let t = build_sa(&spec);
        // (∂u1/∂x1, ∂v1/∂x1) entry: leading monomial x1^3 with coefficient E11
        let e = build_e_matrix_numeric(&spec, &[]).unwrap();
        let p = &t.s[0][0];
        let lead = p
            .terms()
            .iter()
            .find(|(m, n, _)| *m == 3 && *n == 0)
            .expect("x1^3 term present");
        assert!((lead.2.eval(&[]) - e[(0, 0)]).abs() < 1e-14);
        assert!(p.max_degree() <= 3);
    }

    #[test]
    fn axisymmetric_sa_quadratic_form_nonnegative() {
        let spec =
            MaterialSpec::isotropic(MaterialMode::AxisymmetricIsotropic, E::constant(1.0), 0.3);
        let mut rng = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for _ in 0..200 {
            let x1 = 0.05 + (next() + 1.0) * 2.0; // strictly positive radius
            let s = numeric_sa(&spec, &[], x1);
            let v = nalgebra::DVector::from_fn(5, |_, _| next());
            let q = (v.transpose() * &s * &v)[(0, 0)];
            assert!(q >= -1e-12 * s.amax(), "q = {q} at x1 = {x1}");
        }
    }

    #[test]
    fn spd_check_rejects_bad_inputs() {
        let spec = MaterialSpec::isotropic(MaterialMode::PlaneStressIsotropic, E::constant(-1.0), 0.3);
        assert!(matches!(
            build_e_matrix_numeric(&spec, &[]),
            Err(MaterialError::NonPositiveModulus(_))
        ));
    }
}
