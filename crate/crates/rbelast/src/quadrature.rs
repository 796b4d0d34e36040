//! Exact integration of monomial-weighted P1 forms on triangles and edges.
//!
//! Every integrand in the assembly is a polynomial: gradients of P1 shape
//! functions are constant, shape functions are affine and the axisymmetric
//! weights are monomials x1^m x2^n of bounded degree. All integrals are
//! therefore evaluated in closed form by mapping to the unit simplex and
//! using  ∫ u^a v^b du dv = a! b! / (a+b+2)!.

const MAX_WEIGHT_DEGREE: u8 = 6;

/// Factorials up to what degree-8 integrands need.
const FACT: [f64; 13] = {
    let mut f = [1.0; 13];
    let mut i = 1;
    while i < 13 {
        f[i] = f[i - 1] * i as f64;
        i += 1;
    }
    f
};

pub fn weight_degree_supported(m: u8, n: u8) -> bool {
    m + n <= MAX_WEIGHT_DEGREE
}

/// Dense table of triangle moments M[m][n] = ∫_T x^m y^n dA for all
/// m <= mmax, n <= nmax, in global coordinates.
pub struct TriMoments {
    mmax: usize,
    nmax: usize,
    vals: Vec<f64>,
}

impl TriMoments {
    pub fn compute(v: &[[f64; 2]; 3], mmax: usize, nmax: usize) -> TriMoments {
        let ax = v[1][0] - v[0][0];
        let bx = v[2][0] - v[0][0];
        let ay = v[1][1] - v[0][1];
        let by = v[2][1] - v[0][1];
        let jac = (ax * by - bx * ay).abs();

        // Powers of x(u,w) = x0 + ax u + bx w as coefficient grids over (u, w).
        let deg = mmax + nmax;
        let xpows = affine_powers(v[0][0], ax, bx, mmax, deg);
        let ypows = affine_powers(v[0][1], ay, by, nmax, deg);

        let mut vals = vec![0.0; (mmax + 1) * (nmax + 1)];
        for m in 0..=mmax {
            for n in 0..=nmax {
                let mut acc = 0.0;
                // multiply coefficient grids of x^m and y^n, integrate monomials
                for (au, aw, ca) in xpows[m].iter() {
                    for (bu, bw, cb) in ypows[n].iter() {
                        let p = au + bu;
                        let q = aw + bw;
                        acc += ca * cb * FACT[p] * FACT[q] / FACT[p + q + 2];
                    }
                }
                vals[m * (nmax + 1) + n] = acc * jac;
            }
        }
        TriMoments { mmax, nmax, vals }
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> f64 {
        debug_assert!(m <= self.mmax && n <= self.nmax);
        self.vals[m * (self.nmax + 1) + n]
    }
}

/// Coefficient lists (pow_u, pow_w, coeff) of (c0 + c1 u + c2 w)^k for k = 0..=kmax.
fn affine_powers(c0: f64, c1: f64, c2: f64, kmax: usize, _deg: usize) -> Vec<Vec<(usize, usize, f64)>> {
    let mut out: Vec<Vec<(usize, usize, f64)>> = Vec::with_capacity(kmax + 1);
    out.push(vec![(0, 0, 1.0)]);
    for k in 1..=kmax {
        let prev = &out[k - 1];
        let mut grid = std::collections::HashMap::<(usize, usize), f64>::new();
        for &(u, w, c) in prev {
            *grid.entry((u, w)).or_insert(0.0) += c * c0;
            *grid.entry((u + 1, w)).or_insert(0.0) += c * c1;
            *grid.entry((u, w + 1)).or_insert(0.0) += c * c2;
        }
        let mut v: Vec<(usize, usize, f64)> = grid.into_iter().map(|((u, w), c)| (u, w, c)).collect();
        v.sort_by_key(|t| (t.0, t.1));
        out.push(v);
    }
    out
}

/// P1 shape function data on a triangle: values are affine, gradients constant.
pub struct P1Basis {
    /// Coefficients (c0, cx, cy) of each shape function: λ_a = c0 + cx x + cy y.
    pub coeff: [[f64; 3]; 3],
    /// Constant gradients [dλ_a/dx, dλ_a/dy].
    pub grad: [[f64; 2]; 3],
    pub area: f64,
}

impl P1Basis {
    pub fn new(v: &[[f64; 2]; 3]) -> P1Basis {
        let det = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]);
        let area = 0.5 * det;
        let mut coeff = [[0.0; 3]; 3];
        let mut grad = [[0.0; 2]; 3];
        for a in 0..3 {
            let (p, q) = ((a + 1) % 3, (a + 2) % 3);
            // λ_a = (x_p × x_q + stuff) / det via cofactors
            coeff[a][0] = (v[p][0] * v[q][1] - v[q][0] * v[p][1]) / det;
            coeff[a][1] = (v[p][1] - v[q][1]) / det;
            coeff[a][2] = (v[q][0] - v[p][0]) / det;
            grad[a] = [coeff[a][1], coeff[a][2]];
        }
        P1Basis { coeff, grad, area }
    }

    /// ∫_T x^m y^n λ_a dA
    pub fn moment_shape(&self, mom: &TriMoments, m: usize, n: usize, a: usize) -> f64 {
        let c = &self.coeff[a];
        c[0] * mom.get(m, n) + c[1] * mom.get(m + 1, n) + c[2] * mom.get(m, n + 1)
    }

    /// ∫_T x^m y^n λ_a λ_b dA
    pub fn moment_shape_pair(&self, mom: &TriMoments, m: usize, n: usize, a: usize, b: usize) -> f64 {
        let ca = &self.coeff[a];
        let cb = &self.coeff[b];
        let mut acc = 0.0;
        let offs = [(0usize, 0usize), (1, 0), (0, 1)];
        for (i, (oa_m, oa_n)) in offs.iter().enumerate() {
            for (j, (ob_m, ob_n)) in offs.iter().enumerate() {
                acc += ca[i] * cb[j] * mom.get(m + oa_m + ob_m, n + oa_n + ob_n);
            }
        }
        acc
    }
}

/// ∫_edge x^m y^n φ ds where φ is the P1 trace associated with one endpoint:
/// returns the pair (for endpoint 0, for endpoint 1). Exact.
pub fn edge_moment_shapes(a: [f64; 2], b: [f64; 2], m: usize, n: usize) -> (f64, f64) {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    let len = (dx * dx + dy * dy).sqrt();
    // x(t)^m y(t)^n as a polynomial in t over [0,1]
    let px = poly1_pow(a[0], dx, m);
    let py = poly1_pow(a[1], dy, n);
    let pxy = poly1_mul(&px, &py);
    // φ0 = 1-t, φ1 = t
    let mut i0 = 0.0;
    let mut i1 = 0.0;
    for (k, c) in pxy.iter().enumerate() {
        // ∫ t^k (1-t) = 1/(k+1) - 1/(k+2); ∫ t^(k+1) = 1/(k+2)
        i0 += c * (1.0 / (k as f64 + 1.0) - 1.0 / (k as f64 + 2.0));
        i1 += c * (1.0 / (k as f64 + 2.0));
    }
    (i0 * len, i1 * len)
}

fn poly1_pow(c0: f64, c1: f64, k: usize) -> Vec<f64> {
    let mut p = vec![1.0];
    for _ in 0..k {
        let mut q = vec![0.0; p.len() + 1];
        for (i, c) in p.iter().enumerate() {
            q[i] += c * c0;
            q[i + 1] += c * c1;
        }
        p = q;
    }
    p
}

fn poly1_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, ca) in a.iter().enumerate() {
        for (j, cb) in b.iter().enumerate() {
            out[i + j] += ca * cb;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_quad(v: &[[f64; 2]; 3], f: impl Fn(f64, f64) -> f64) -> f64 {
        // brute-force oracle: centroid rule on an n^2 subdivision of the simplex
        let n = 500usize;
        let area2 = ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1])
            - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]))
            .abs();
        let cell = area2 / (2.0 * (n * n) as f64);
        let eval = |u: f64, t: f64| {
            let x = v[0][0] + u * (v[1][0] - v[0][0]) + t * (v[2][0] - v[0][0]);
            let y = v[0][1] + u * (v[1][1] - v[0][1]) + t * (v[2][1] - v[0][1]);
            f(x, y)
        };
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..(n - i) {
                // lower sub-triangle centroid
                let u = (i as f64 + 1.0 / 3.0) / n as f64;
                let t = (j as f64 + 1.0 / 3.0) / n as f64;
                acc += eval(u, t) * cell;
                // upper sub-triangle, present unless on the hypotenuse row
                if i + j + 1 < n {
                    let u = (i as f64 + 2.0 / 3.0) / n as f64;
                    let t = (j as f64 + 2.0 / 3.0) / n as f64;
                    acc += eval(u, t) * cell;
                }
            }
        }
        acc
    }

    #[test]
    fn unit_triangle_moments() {
        let v = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let m = TriMoments::compute(&v, 3, 3);
        assert!((m.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((m.get(1, 0) - 1.0 / 6.0).abs() < 1e-15);
        assert!((m.get(1, 1) - 1.0 / 24.0).abs() < 1e-15);
        assert!((m.get(2, 0) - 1.0 / 12.0).abs() < 1e-15);
        assert!((m.get(3, 0) - 1.0 / 20.0).abs() < 1e-15);
    }

    #[test]
    fn skewed_triangle_against_midpoint_oracle() {
        let v = [[0.3, -0.2], [1.7, 0.4], [0.9, 1.5]];
        let m = TriMoments::compute(&v, 3, 2);
        for (mm, nn) in [(0usize, 0usize), (1, 0), (0, 1), (2, 1), (3, 2)] {
            let oracle = dense_quad(&v, |x, y| x.powi(mm as i32) * y.powi(nn as i32));
            let exact = m.get(mm, nn);
            assert!(
                (oracle - exact).abs() < 1e-4 * exact.abs().max(1.0),
                "m={mm} n={nn}: {oracle} vs {exact}"
            );
        }
    }

    #[test]
    fn p1_partition_of_unity_and_gradients() {
        let v = [[0.2, 0.1], [1.3, 0.3], [0.4, 1.6]];
        let b = P1Basis::new(&v);
        for (i, p) in v.iter().enumerate() {
            for (a, c) in b.coeff.iter().enumerate() {
                let val = c[0] + c[1] * p[0] + c[2] * p[1];
                let expect = if a == i { 1.0 } else { 0.0 };
                assert!((val - expect).abs() < 1e-13);
            }
        }
        let gsum: [f64; 2] = [
            b.grad.iter().map(|g| g[0]).sum(),
            b.grad.iter().map(|g| g[1]).sum(),
        ];
        assert!(gsum[0].abs() < 1e-13 && gsum[1].abs() < 1e-13);
    }

    #[test]
    fn shape_moments_exact() {
        let v = [[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]];
        let b = P1Basis::new(&v);
        let m = TriMoments::compute(&v, 2, 2);
        // ∫ λ_a = A/3
        for a in 0..3 {
            assert!((b.moment_shape(&m, 0, 0, a) - b.area / 3.0).abs() < 1e-13);
        }
        // ∫ λ_a λ_b = A/12 (a≠b), A/6 (a=b)
        for a in 0..3 {
            for bb in 0..3 {
                let expect = if a == bb { b.area / 6.0 } else { b.area / 12.0 };
                assert!((b.moment_shape_pair(&m, 0, 0, a, bb) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn edge_moments_exact() {
        // edge from (1,0) to (3,0), weight x^2: x(t) = 1+2t, ds = 2 dt
        let (i0, i1) = edge_moment_shapes([1.0, 0.0], [3.0, 0.0], 2, 0);
        // ∫0^1 (1+2t)^2 (1-t) 2 dt and ∫0^1 (1+2t)^2 t 2 dt by midpoint oracle
        let n = 400000;
        let (mut o0, mut o1) = (0.0, 0.0);
        for k in 0..n {
            let t = (k as f64 + 0.5) / n as f64;
            let w = (1.0 + 2.0 * t) * (1.0 + 2.0 * t) * 2.0 / n as f64;
            o0 += w * (1.0 - t);
            o1 += w * t;
        }
        assert!((i0 - o0).abs() < 1e-8);
        assert!((i1 - o1).abs() < 1e-8);
        // vertical edge sanity: ∫ y λ ds on ((0,0),(0,1)) = 1/6 and 1/3
        let (j0, j1) = edge_moment_shapes([0.0, 0.0], [0.0, 1.0], 0, 1);
        assert!((j0 - 1.0 / 6.0).abs() < 1e-14);
        assert!((j1 - 1.0 / 3.0).abs() < 1e-14);
    }
}
