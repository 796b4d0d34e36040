//! Per-subdomain affine maps, reference-domain effective forms and the
//! collapse to a minimal affine decomposition.
//!
//! Each subdomain deforms as T_s(μ; x) = R_s(μ) x + G_s(μ). Maps are solved
//! symbolically from vertex correspondences, pushed through the weak form on
//! the reference domain, expanded entry by entry, and finally collapsed:
//! zero coefficients are dropped and proportional coefficients merged, with
//! the proportionality constants folded into the form descriptors.

use crate::expr::{MonomialPoly, ParamExpr};
use crate::material::ElasticTensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomapError {
    #[error("reference triangle is degenerate")]
    DegenerateTriangle,
    #[error("map orientation flips: det R = {0} at mu = {1:?}")]
    OrientationFlip(f64, Vec<f64>),
    #[error("mapped edge is not axis-preserving and has non-constant length scale")]
    UnsupportedEdgeMap,
    #[error("parameter {0:?} outside the parameter box")]
    OutOfDomain(Vec<f64>),
    #[error("axisymmetric map must be axis-aligned (R12 = R21 = 0)")]
    NotAxisAligned,
}

/// Box-shaped parameter domain.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ParamBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> ParamBox {
        assert_eq!(lo.len(), hi.len());
        ParamBox { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn centroid(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn contains(&self, mu: &[f64]) -> bool {
        mu.len() == self.dim()
            && mu.iter().zip(self.lo.iter().zip(&self.hi)).all(|(m, (l, h))| {
                let slack = 1e-12 * (h - l).abs().max(1.0);
                *m >= l - slack && *m <= h + slack
            })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| rng.gen_range(*l..=*h))
            .collect()
    }
}

/// Symbolic affine map of one subdomain.
#[derive(Clone, Debug)]
pub struct AffineMap {
    pub r: [[ParamExpr; 2]; 2],
    pub g: [ParamExpr; 2],
    pub det: ParamExpr,
    /// Adjugate of R; the inverse is adj/det.
    pub adj: [[ParamExpr; 2]; 2],
}

impl AffineMap {
    pub fn identity() -> AffineMap {
        let c = ParamExpr::constant;
        AffineMap {
            r: [[c(1.0), c(0.0)], [c(0.0), c(1.0)]],
            g: [c(0.0), c(0.0)],
            det: c(1.0),
            adj: [[c(1.0), c(0.0)], [c(0.0), c(1.0)]],
        }
    }

    pub fn eval_r(&self, mu: &[f64]) -> [[f64; 2]; 2] {
        [
            [self.r[0][0].eval(mu), self.r[0][1].eval(mu)],
            [self.r[1][0].eval(mu), self.r[1][1].eval(mu)],
        ]
    }

    pub fn eval_g(&self, mu: &[f64]) -> [f64; 2] {
        [self.g[0].eval(mu), self.g[1].eval(mu)]
    }

    pub fn apply(&self, mu: &[f64], x: [f64; 2]) -> [f64; 2] {
        let r = self.eval_r(mu);
        let g = self.eval_g(mu);
        [
            r[0][0] * x[0] + r[0][1] * x[1] + g[0],
            r[1][0] * x[0] + r[1][1] * x[1] + g[1],
        ]
    }

    /// Check D(μ)·R(μ) = I at a parameter sample (inverse consistency).
    pub fn check_inverse(&self, mu: &[f64], tol: f64) -> bool {
        let r = self.eval_r(mu);
        let det = self.det.eval(mu);
        let adj = [
            [self.adj[0][0].eval(mu), self.adj[0][1].eval(mu)],
            [self.adj[1][0].eval(mu), self.adj[1][1].eval(mu)],
        ];
        let mut max = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = 0.0;
                for k in 0..2 {
                    acc += adj[i][k] / det * r[k][j];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                max = max.max((acc - expect).abs());
            }
        }
        max <= tol
    }
}

/// Solve T(x) = R x + G from three vertex correspondences; the mapped
/// vertices are expression-valued. det R must stay positive over the box.
pub fn solve_affine_map(
    ref_vertices: [[f64; 2]; 3],
    mapped_vertices: [[ParamExpr; 2]; 3],
    box_: &ParamBox,
) -> Result<AffineMap, GeomapError> {
    let e1 = [
        ref_vertices[1][0] - ref_vertices[0][0],
        ref_vertices[1][1] - ref_vertices[0][1],
    ];
    let e2 = [
        ref_vertices[2][0] - ref_vertices[0][0],
        ref_vertices[2][1] - ref_vertices[0][1],
    ];
    let det_ref = e1[0] * e2[1] - e2[0] * e1[1];
    if det_ref.abs() < 1e-14 {
        return Err(GeomapError::DegenerateTriangle);
    }
    // Inverse of the reference edge matrix [e1 e2] (constants).
    let inv = [
        [e2[1] / det_ref, -e2[0] / det_ref],
        [-e1[1] / det_ref, e1[0] / det_ref],
    ];
    let d1 = [
        mapped_vertices[1][0].clone() - mapped_vertices[0][0].clone(),
        mapped_vertices[1][1].clone() - mapped_vertices[0][1].clone(),
    ];
    let d2 = [
        mapped_vertices[2][0].clone() - mapped_vertices[0][0].clone(),
        mapped_vertices[2][1].clone() - mapped_vertices[0][1].clone(),
    ];
    // R = [d1 d2] * inv
    let c = ParamExpr::constant;
    let r = [
        [
            d1[0].clone() * c(inv[0][0]) + d2[0].clone() * c(inv[1][0]),
            d1[0].clone() * c(inv[0][1]) + d2[0].clone() * c(inv[1][1]),
        ],
        [
            d1[1].clone() * c(inv[0][0]) + d2[1].clone() * c(inv[1][0]),
            d1[1].clone() * c(inv[0][1]) + d2[1].clone() * c(inv[1][1]),
        ],
    ];
    let g = [
        mapped_vertices[0][0].clone()
            - (r[0][0].clone() * c(ref_vertices[0][0]) + r[0][1].clone() * c(ref_vertices[0][1])),
        mapped_vertices[0][1].clone()
            - (r[1][0].clone() * c(ref_vertices[0][0]) + r[1][1].clone() * c(ref_vertices[0][1])),
    ];
    let det = r[0][0].clone() * r[1][1].clone() - r[0][1].clone() * r[1][0].clone();
    let adj = [
        [r[1][1].clone(), -r[0][1].clone()],
        [-r[1][0].clone(), r[0][0].clone()],
    ];
    let map = AffineMap { r, g, det, adj };
    // Positivity of det R over a parameter sample.
    let mut rng = ChaCha8Rng::seed_from_u64(0x0fee1);
    for _ in 0..64 {
        let mu = box_.sample(&mut rng);
        let d = map.det.eval(&mu);
        if !(d.is_finite() && d > 0.0) {
            return Err(GeomapError::OrientationFlip(d, mu));
        }
    }
    Ok(map)
}

/// Report entry from the mapping continuity check.
#[derive(Clone, Debug)]
pub struct ContinuityViolation {
    pub mu: Vec<f64>,
    pub edge: [u32; 2],
    pub regions: (u32, u32),
    pub mismatch: f64,
}

/// For each interior edge shared by triangles of different regions, both
/// region maps must agree on the edge endpoints at every sampled parameter.
pub fn mapping_continuity_check(
    maps: &[AffineMap],
    mesh: &crate::mesh::Mesh,
    samples: &[Vec<f64>],
) -> Vec<ContinuityViolation> {
    use std::collections::HashMap;
    let mut edge_regions: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
    for t in &mesh.triangles {
        for k in 0..3 {
            let (a, b) = (t.v[k], t.v[(k + 1) % 3]);
            let key = if a < b { (a, b) } else { (b, a) };
            edge_regions.entry(key).or_default().push(t.region);
        }
    }
    let mut violations = Vec::new();
    let mut seen_pairs = std::collections::HashSet::new();
    for (edge, regions) in &edge_regions {
        if regions.len() != 2 || regions[0] == regions[1] {
            continue;
        }
        let pair_key = (
            edge.0,
            edge.1,
            regions[0].min(regions[1]),
            regions[0].max(regions[1]),
        );
        if !seen_pairs.insert(pair_key) {
            continue;
        }
        let (ra, rb) = (regions[0] as usize - 1, regions[1] as usize - 1);
        for mu in samples {
            let mut worst = 0.0f64;
            for &v in &[edge.0, edge.1] {
                let x = mesh.nodes[v as usize];
                let pa = maps[ra].apply(mu, x);
                let pb = maps[rb].apply(mu, x);
                worst = worst.max(((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt());
            }
            if worst > 1e-10 {
                violations.push(ContinuityViolation {
                    mu: mu.clone(),
                    edge: [edge.0, edge.1],
                    regions: (regions[0], regions[1]),
                    mismatch: worst,
                });
            }
        }
    }
    violations
}

/// Effective elastic tensor on the reference domain:
/// S_eff = Hᵀ S H · det R with H = blkdiag(D, D, 1), D = R⁻¹, evaluated as
/// (Ĥᵀ S Ĥ)/det with Ĥ = blkdiag(adj, adj, det) to keep a single division
/// per entry. For the axisymmetric mode the original radial coordinate is
/// substituted first: x1° = R11 x1 + G1 (the map must be axis-aligned).
pub fn effective_tensor(
    sa: &ElasticTensor,
    map: &AffineMap,
    axisymmetric: bool,
    box_: &ParamBox,
) -> Result<Vec<Vec<MonomialPoly>>, GeomapError> {
    let mut s = sa.s.clone();
    if axisymmetric {
        // Axis alignment: off-diagonal R entries must vanish identically.
        let mut rng = ChaCha8Rng::seed_from_u64(0xa11e);
        for _ in 0..16 {
            let mu = box_.sample(&mut rng);
            if map.r[0][1].eval(&mu).abs() > 1e-12 || map.r[1][0].eval(&mu).abs() > 1e-12 {
                return Err(GeomapError::NotAxisAligned);
            }
        }
        for row in s.iter_mut() {
            for p in row.iter_mut() {
                if !p.is_zero() {
                    *p = p.substitute_x1(&map.r[0][0], &map.g[0]);
                }
            }
        }
    }
    // Ĥ column a (length-5 sparse columns over rows c).
    let c0 = ParamExpr::constant(0.0);
    let hhat = |r: usize, cidx: usize| -> ParamExpr {
        match (r, cidx) {
            (0, 0) => map.adj[0][0].clone(),
            (0, 1) => map.adj[0][1].clone(),
            (1, 0) => map.adj[1][0].clone(),
            (1, 1) => map.adj[1][1].clone(),
            (2, 2) => map.adj[0][0].clone(),
            (2, 3) => map.adj[0][1].clone(),
            (3, 2) => map.adj[1][0].clone(),
            (3, 3) => map.adj[1][1].clone(),
            (4, 4) => map.det.clone(),
            _ => c0.clone(),
        }
    };
    let mut out = vec![vec![MonomialPoly::zero(); 5]; 5];
    for a in 0..5 {
        for b in a..5 {
            let mut acc = MonomialPoly::zero();
            for r in 0..5 {
                let hra = hhat(r, a);
                if hra.is_zero_const() {
                    continue;
                }
                for q in 0..5 {
                    if s[r][q].is_zero() {
                        continue;
                    }
                    let hqb = hhat(q, b);
                    if hqb.is_zero_const() {
                        continue;
                    }
                    acc = acc.add(&s[r][q].scale(&(hra.clone() * hqb)));
                }
            }
            if !acc.is_zero() {
                // single division by det R
                let divided = MonomialPoly::zero().add(&acc); // clone
                let mut final_poly = MonomialPoly::zero();
                for (m, n, coeff) in divided.terms() {
                    final_poly.add_term(*m, *n, coeff.clone() / map.det.clone());
                }
                out[a][b] = final_poly.clone();
                if b != a {
                    out[b][a] = final_poly;
                }
            }
        }
    }
    Ok(out)
}

/// Edge length multiplier ‖R e_t‖ for a mapped edge with reference unit
/// tangent `tangent`.
///
/// Two supported shapes keep the coefficient an expression tree: the mapped
/// edge vector stays axis-parallel (one component identically zero), or the
/// squared length is parameter-independent (rotations). Anything else would
/// need square-root nodes, which no shipped problem requires.
pub fn edge_length_multiplier(
    map: &AffineMap,
    tangent: [f64; 2],
    box_: &ParamBox,
) -> Result<ParamExpr, GeomapError> {
    let c = ParamExpr::constant;
    let vx = map.r[0][0].clone() * c(tangent[0]) + map.r[0][1].clone() * c(tangent[1]);
    let vy = map.r[1][0].clone() * c(tangent[0]) + map.r[1][1].clone() * c(tangent[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(0x7a9e);
    let samples: Vec<Vec<f64>> = (0..32).map(|_| box_.sample(&mut rng)).collect();
    let zero_x = samples.iter().all(|mu| vx.eval(mu).abs() < 1e-13);
    let zero_y = samples.iter().all(|mu| vy.eval(mu).abs() < 1e-13);
    if zero_y && !zero_x {
        let pos = samples.iter().all(|mu| vx.eval(mu) > 0.0);
        return Ok(if pos { vx } else { -vx });
    }
    if zero_x && !zero_y {
        let pos = samples.iter().all(|mu| vy.eval(mu) > 0.0);
        return Ok(if pos { vy } else { -vy });
    }
    // constant squared norm?
    let norms: Vec<f64> = samples
        .iter()
        .map(|mu| vx.eval(mu).powi(2) + vy.eval(mu).powi(2))
        .collect();
    let first = norms[0];
    if norms.iter().all(|n| (n - first).abs() <= 1e-12 * first.max(1.0)) {
        return Ok(c(first.sqrt()));
    }
    Err(GeomapError::UnsupportedEdgeMap)
}

/// Kind of parameter-independent form a coefficient multiplies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FormKind {
    /// ∫ x1^m x2^n ∂w_wi/∂x_wj ∂v_vi/∂x_vj  (components and derivative
    /// directions are 0-based)
    GradGrad { wi: u8, wj: u8, vi: u8, vj: u8 },
    /// ∫ x1^m x2^n ∂w_wi/∂x_wj · v1
    GradDisp { wi: u8, wj: u8 },
    /// ∫ x1^m x2^n w1 · ∂v_vi/∂x_vj
    DispGrad { vi: u8, vj: u8 },
    /// ∫ x1^m x2^n w1 v1
    DispDisp,
    /// ∫_edges(tag) x1^m x2^n v_comp  (load)
    BoundaryTrace { tag: u32, comp: u8 },
    /// ∫_edges(tag) x1^m x2^n v_comp  (output)
    OutputTrace { tag: u32, comp: u8 },
}

/// One parameter-independent form with its region, monomial weight and the
/// constant folded out of the coefficient during collapsing.
#[derive(Clone, Debug)]
pub struct FormTerm {
    pub kind: FormKind,
    pub region: u32,
    pub weight: (u8, u8),
    pub scale: f64,
}

/// A collapsed affine term: one coefficient expression and the scaled forms
/// it multiplies.
#[derive(Clone, Debug)]
pub struct AffineGroup {
    pub theta: ParamExpr,
    pub forms: Vec<FormTerm>,
}

/// Minimal affine decomposition of a, f, and ℓ.
#[derive(Clone, Debug)]
pub struct AffineDecomposition {
    pub a: Vec<AffineGroup>,
    pub f: Vec<AffineGroup>,
    pub l: Vec<AffineGroup>,
    pub box_: ParamBox,
    pub mu_ref: Vec<f64>,
    pub compliant: bool,
    pub axisymmetric: bool,
}

impl AffineDecomposition {
    pub fn qa(&self) -> usize {
        self.a.len()
    }
    pub fn qf(&self) -> usize {
        self.f.len()
    }
    pub fn ql(&self) -> usize {
        self.l.len()
    }

    pub fn check_domain(&self, mu: &[f64]) -> Result<(), GeomapError> {
        if self.box_.contains(mu) {
            Ok(())
        } else {
            Err(GeomapError::OutOfDomain(mu.to_vec()))
        }
    }

    pub fn theta_a(&self, mu: &[f64]) -> Result<Vec<f64>, GeomapError> {
        self.check_domain(mu)?;
        Ok(self.a.iter().map(|g| g.theta.eval(mu)).collect())
    }

    pub fn theta_f(&self, mu: &[f64]) -> Result<Vec<f64>, GeomapError> {
        self.check_domain(mu)?;
        Ok(self.f.iter().map(|g| g.theta.eval(mu)).collect())
    }

    pub fn theta_l(&self, mu: &[f64]) -> Result<Vec<f64>, GeomapError> {
        self.check_domain(mu)?;
        Ok(self.l.iter().map(|g| g.theta.eval(mu)).collect())
    }
}

/// Raw, uncollapsed term.
#[derive(Clone, Debug)]
pub struct RawTerm {
    pub theta: ParamExpr,
    pub kind: FormKind,
    pub region: u32,
    pub weight: (u8, u8),
}

/// Drop identically-zero coefficients and merge proportional ones.
///
/// Detection is numerical: coefficients are evaluated at 32 seeded random
/// parameter points; a term joins a group when its value vector is a constant
/// multiple of the group's to 1e-12 relative, and the multiple becomes the
/// form's `scale`.
pub fn collapse_terms(raw: Vec<RawTerm>, box_: &ParamBox) -> Vec<AffineGroup> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0111a5e);
    let samples: Vec<Vec<f64>> = (0..32).map(|_| box_.sample(&mut rng)).collect();
    let values: Vec<Vec<f64>> = raw
        .iter()
        .map(|t| samples.iter().map(|mu| t.theta.eval(mu)).collect())
        .collect();
    let global_scale = values
        .iter()
        .flat_map(|v| v.iter().map(|x| x.abs()))
        .fold(0.0f64, f64::max)
        .max(1.0);

    let mut groups: Vec<AffineGroup> = Vec::new();
    let mut group_vals: Vec<Vec<f64>> = Vec::new();
    for (term, vals) in raw.into_iter().zip(values) {
        let maxabs = vals.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if maxabs < 1e-14 * global_scale {
            continue; // identically zero on the sample
        }
        let mut placed = false;
        for (gi, gv) in group_vals.iter().enumerate() {
            // least-squares ratio, then verify proportionality
            let dot: f64 = vals.iter().zip(gv).map(|(a, b)| a * b).sum();
            let nn: f64 = gv.iter().map(|b| b * b).sum();
            let ratio = dot / nn;
            let ok = vals
                .iter()
                .zip(gv)
                .all(|(a, b)| (a - ratio * b).abs() <= 1e-12 * maxabs.max(1e-300));
            if ok {
                groups[gi].forms.push(FormTerm {
                    kind: term.kind,
                    region: term.region,
                    weight: term.weight,
                    scale: ratio,
                });
                placed = true;
                break;
            }
        }
        if !placed {
            group_vals.push(vals);
            groups.push(AffineGroup {
                theta: term.theta,
                forms: vec![FormTerm {
                    kind: term.kind,
                    region: term.region,
                    weight: term.weight,
                    scale: 1.0,
                }],
            });
        }
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ParamExpr as E;

    fn unit_box(dim: usize) -> ParamBox {
        ParamBox::new(vec![0.5; dim], vec![2.0; dim])
    }

    fn const_pts(p: [[f64; 2]; 3]) -> [[ParamExpr; 2]; 3] {
        p.map(|v| [E::constant(v[0]), E::constant(v[1])])
    }

    #[test]
    fn identity_map_from_identical_triangles() {
        let t = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let map = solve_affine_map(t, const_pts(t), &unit_box(1)).unwrap();
        let mu = [1.0];
        assert_eq!(map.eval_r(&mu), [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(map.eval_g(&mu), [0.0, 0.0]);
        assert!((map.det.eval(&mu) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pure_scaling_map() {
        let t = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let mapped = [[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]];
        let map = solve_affine_map(t, const_pts(mapped), &unit_box(1)).unwrap();
        let mu = [1.0];
        assert_eq!(map.eval_r(&mu), [[2.0, 0.0], [0.0, 2.0]]);
        assert_eq!(map.eval_g(&mu), [0.0, 0.0]);
    }

    #[test]
    fn random_correspondence_residual_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let refv = [[0.0, 0.0], [1.0, 0.2], [0.3, 1.1]];
            let mapped: [[f64; 2]; 3] = [
                [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                [rng.gen_range(1.0..2.0), rng.gen_range(-1.0..1.0)],
                [rng.gen_range(-0.5..0.5), rng.gen_range(1.0..2.0)],
            ];
            // force positive orientation of the image
            let det = (mapped[1][0] - mapped[0][0]) * (mapped[2][1] - mapped[0][1])
                - (mapped[2][0] - mapped[0][0]) * (mapped[1][1] - mapped[0][1]);
            if det <= 0.05 {
                continue;
            }
            let map = solve_affine_map(refv, const_pts(mapped), &unit_box(1)).unwrap();
            let mu = [1.0];
            for (rv, mv) in refv.iter().zip(&mapped) {
                let img = map.apply(&mu, *rv);
                let err = ((img[0] - mv[0]).powi(2) + (img[1] - mv[1]).powi(2)).sqrt();
                assert!(err <= 1e-12);
            }
            assert!(map.check_inverse(&mu, 1e-12));
        }
    }

    #[test]
    fn degenerate_reference_rejected() {
        let t = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        assert!(matches!(
            solve_affine_map(t, const_pts(t), &unit_box(1)),
            Err(GeomapError::DegenerateTriangle)
        ));
    }

    #[test]
    fn orientation_flip_detected() {
        let t = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        // mirrored image
        let mapped = [[0.0, 0.0], [-1.0, 0.0], [0.0, 1.0]];
        assert!(matches!(
            solve_affine_map(t, const_pts(mapped), &unit_box(1)),
            Err(GeomapError::OrientationFlip(_, _))
        ));
    }

    #[test]
    fn edge_multiplier_cases() {
        let b = unit_box(1);
        let ident = AffineMap::identity();
        let m = edge_length_multiplier(&ident, [1.0, 0.0], &b).unwrap();
        assert!((m.eval(&[1.0]) - 1.0).abs() < 1e-15);

        // scaling by mu
        let t = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let mapped = [
            [E::constant(0.0), E::constant(0.0)],
            [E::param(0), E::constant(0.0)],
            [E::constant(0.0), E::param(0)],
        ];
        let scal = solve_affine_map(t, mapped, &b).unwrap();
        let m = edge_length_multiplier(&scal, [1.0, 0.0], &b).unwrap();
        assert!((m.eval(&[1.7]) - 1.7).abs() < 1e-14);

        // rotation: constant norm, multiplier 1
        let ang = 0.6f64;
        let rot = [
            [E::constant(0.0), E::constant(0.0)],
            [E::constant(ang.cos()), E::constant(ang.sin())],
            [E::constant(-ang.sin()), E::constant(ang.cos())],
        ];
        let rotm = solve_affine_map(t, rot, &b).unwrap();
        let m = edge_length_multiplier(&rotm, [1.0, 0.0], &b).unwrap();
        assert!((m.eval(&[1.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collapse_merges_proportional_and_drops_zero() {
        let b = unit_box(2);
        let gg = |r| FormKind::GradGrad {
            wi: 0,
            wj: 0,
            vi: 0,
            vj: 0,
        };
        let _ = gg(0u32);
        let mk = |theta: ParamExpr, region: u32| RawTerm {
            theta,
            kind: FormKind::GradGrad {
                wi: 0,
                wj: 0,
                vi: 0,
                vj: 0,
            },
            region,
            weight: (0, 0),
        };
        let raw = vec![
            mk(E::param(0), 1),
            mk(E::constant(3.0) * E::param(0), 2),
            mk(E::constant(0.0) * E::param(1), 3),
            mk(E::param(1), 4),
        ];
        let groups = collapse_terms(raw, &b);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].forms.len(), 2);
        assert!((groups[0].forms[1].scale - 3.0).abs() < 1e-12);
        assert_eq!(groups[1].forms.len(), 1);
    }

    #[test]
    fn continuity_check_negative_control() {
        use crate::mesh::generate_structured_rect;
        // two-region strip; region 2 map deliberately shifted
        let mesh = generate_structured_rect(2, 1, &|ix, _, _| (ix + 1) as u32, None).unwrap();
        let good = vec![AffineMap::identity(), AffineMap::identity()];
        let samples = vec![vec![1.0]];
        assert!(mapping_continuity_check(&good, &mesh, &samples).is_empty());

        let mut bad_map = AffineMap::identity();
        bad_map.g[0] = E::constant(0.25);
        let bad = vec![AffineMap::identity(), bad_map];
        let report = mapping_continuity_check(&bad, &mesh, &samples);
        assert!(!report.is_empty());
        assert!(report[0].mismatch > 0.2);
    }
}
