//! Minimal sparse symmetric toolkit for the truth solves: CSR storage with a
//! shared pattern across all affine blocks, reverse Cuthill-McKee ordering,
//! and a profile (skyline) LDLᵀ factorization.
//!
//! Problem sizes are desk scale (N ~ 1e4, 2D P1 stencils), where a banded
//! profile factorization after RCM is quick, deterministic and dependency
//! free.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("matrix is singular or not positive definite at pivot {0}")]
    NotSpd(usize),
}

/// Shared sparsity pattern (full symmetric storage, CSR).
#[derive(Clone, Debug)]
pub struct CsrPattern {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
}

impl CsrPattern {
    /// Build from an undirected adjacency list (self-loops added).
    pub fn from_adjacency(n: usize, edges: impl Iterator<Item = (u32, u32)>) -> CsrPattern {
        let mut neigh: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (a, b) in edges {
            neigh[a as usize].push(b);
            if a != b {
                neigh[b as usize].push(a);
            }
        }
        for (i, list) in neigh.iter_mut().enumerate() {
            list.push(i as u32);
            list.sort_unstable();
            list.dedup();
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for list in &neigh {
            indices.extend_from_slice(list);
            indptr.push(indices.len());
        }
        CsrPattern { n, indptr, indices }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Position of (row, col) in the value array.
    pub fn find(&self, row: usize, col: u32) -> Option<usize> {
        let lo = self.indptr[row];
        let hi = self.indptr[row + 1];
        self.indices[lo..hi]
            .binary_search(&col)
            .ok()
            .map(|k| lo + k)
    }

    pub fn matvec(&self, vals: &[f64], x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(vals.len(), self.nnz());
        for (row, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.indptr[row]..self.indptr[row + 1] {
                acc += vals[k] * x[self.indices[k] as usize];
            }
            *yi = acc;
        }
    }
}

/// Reverse Cuthill-McKee ordering of an undirected graph given as a CSR
/// pattern. Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(pattern: &CsrPattern) -> Vec<u32> {
    let n = pattern.n;
    let degree = |v: usize| pattern.indptr[v + 1] - pattern.indptr[v];
    let mut visited = vec![false; n];
    let mut order: Vec<u32> = Vec::with_capacity(n);
    loop {
        // lowest-degree unvisited node starts the next component
        let start = match (0..n).filter(|&v| !visited[v]).min_by_key(|&v| degree(v)) {
            Some(s) => s,
            None => break,
        };
        // BFS with neighbor lists sorted by degree
        let mut queue = std::collections::VecDeque::new();
        visited[start] = true;
        queue.push_back(start as u32);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<u32> = (pattern.indptr[v as usize]..pattern.indptr[v as usize + 1])
                .map(|k| pattern.indices[k])
                .filter(|&u| !visited[u as usize])
                .collect();
            nbrs.sort_by_key(|&u| degree(u as usize));
            for u in nbrs {
                if !visited[u as usize] {
                    visited[u as usize] = true;
                    queue.push_back(u);
                }
            }
        }
    }
    order.reverse();
    order
}

/// Profile (skyline) LDLᵀ factorization of a symmetric positive definite
/// matrix handed over in CSR form.
pub struct SkylineFactor {
    n: usize,
    /// first column with a stored entry in each row
    first: Vec<usize>,
    /// row storage offsets into `vals`; row i occupies first[i]..=i
    offset: Vec<usize>,
    /// packed strictly-lower rows of L (unit diagonal implied)
    vals: Vec<f64>,
    /// D of the LDLᵀ factorization
    diag: Vec<f64>,
}

impl SkylineFactor {
    pub fn factor(pattern: &CsrPattern, values: &[f64]) -> Result<SkylineFactor, SparseError> {
        let n = pattern.n;
        let mut first = vec![0usize; n];
        for row in 0..n {
            let lo = pattern.indptr[row];
            first[row] = pattern.indices[lo] as usize; // sorted, so min col
        }
        // The profile must be monotone for the factorization sweep: entry
        // (i,j) fills everything between; widen to the running envelope.
        let mut offset = vec![0usize; n + 1];
        for row in 0..n {
            let width = row - first[row]; // strictly-lower width
            offset[row + 1] = offset[row] + width;
        }
        let mut vals = vec![0.0; offset[n]];
        let mut diag = vec![0.0; n];
        // scatter CSR values into the profile
        for row in 0..n {
            for k in pattern.indptr[row]..pattern.indptr[row + 1] {
                let col = pattern.indices[k] as usize;
                if col < row {
                    vals[offset[row] + (col - first[row])] = values[k];
                } else if col == row {
                    diag[row] = values[k];
                }
            }
        }
        // in-place LDLt on the profile
        for i in 0..n {
            let fi = first[i];
            // work on row i: for j in fi..i: L[i][j] = (A[i][j] - sum) / d[j]
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut sum = 0.0;
                let base_i = offset[i] - fi;
                let base_j = offset[j] - fj;
                for k in lo..j {
                    sum += vals[base_i + k] * vals[base_j + k] * diag[k];
                }
                let idx = base_i + j;
                vals[idx] = (vals[idx] - sum) / diag[j];
            }
            let base_i = offset[i] - fi;
            let mut d = diag[i];
            for k in fi..i {
                d -= vals[base_i + k] * vals[base_i + k] * diag[k];
            }
            if !(d.is_finite() && d > 0.0) {
                return Err(SparseError::NotSpd(i));
            }
            diag[i] = d;
        }
        Ok(SkylineFactor {
            n,
            first,
            offset,
            vals,
            diag,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        // forward: L y = b
        for i in 0..n {
            let fi = self.first[i];
            let base = self.offset[i] - fi;
            let mut acc = x[i];
            for k in fi..i {
                acc -= self.vals[base + k] * x[k];
            }
            x[i] = acc;
        }
        // diagonal
        for i in 0..n {
            x[i] /= self.diag[i];
        }
        // backward: Lᵀ z = y
        for i in (0..n).rev() {
            let fi = self.first[i];
            let base = self.offset[i] - fi;
            let xi = x[i];
            for k in fi..i {
                x[k] -= self.vals[base + k] * xi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * n as f64
    }

    fn to_csr(m: &DMatrix<f64>) -> (CsrPattern, Vec<f64>) {
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

    #[test]
    fn dense_spd_solve_matches_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1usize, 3, 10, 40] {
            let m = random_spd(n, &mut rng);
            let (pattern, vals) = to_csr(&m);
            let f = SkylineFactor::factor(&pattern, &vals).unwrap();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = f.solve(&b);
            let xd = m
                .clone()
                .cholesky()
                .unwrap()
                .solve(&DVector::from_column_slice(&b));
            for i in 0..n {
                assert!((x[i] - xd[i]).abs() < 1e-9 * xd.amax().max(1.0));
            }
        }
    }

    #[test]
    fn sparse_banded_system() {
        // tridiagonal SPD
        let n = 200;
        let edges = (0..n as u32 - 1).map(|i| (i, i + 1));
        let pattern = CsrPattern::from_adjacency(n, edges);
        let mut vals = vec![0.0; pattern.nnz()];
        for i in 0..n {
            for k in pattern.indptr[i]..pattern.indptr[i + 1] {
                let j = pattern.indices[k] as usize;
                vals[k] = if i == j { 2.0 } else { -1.0 };
            }
        }
        let f = SkylineFactor::factor(&pattern, &vals).unwrap();
        // solve against known solution
        let xtrue: Vec<f64> = (0..n).map(|i| (i as f64 * 0.01).sin()).collect();
        let mut b = vec![0.0; n];
        pattern.matvec(&vals, &xtrue, &mut b);
        let x = f.solve(&b);
        for i in 0..n {
            assert!((x[i] - xtrue[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn non_spd_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]); // indefinite
        let (pattern, vals) = to_csr(&m);
        assert!(matches!(
            SkylineFactor::factor(&pattern, &vals),
            Err(SparseError::NotSpd(_))
        ));
    }

    #[test]
    fn rcm_reduces_bandwidth() {
        // a "crossed" ring graph has large natural bandwidth
        let n = 60u32;
        let edges = (0..n).map(|i| (i, (i + 1) % n)).chain((0..n).map(|i| (i, (i + n / 2) % n)));
        let pattern = CsrPattern::from_adjacency(n as usize, edges);
        let perm = reverse_cuthill_mckee(&pattern);
        let mut inv = vec![0u32; n as usize];
        for (new, &old) in perm.iter().enumerate() {
            inv[old as usize] = new as u32;
        }
        let bw = |order: &dyn Fn(u32) -> u32| {
            let mut m = 0i64;
            for v in 0..n {
                for k in pattern.indptr[v as usize]..pattern.indptr[v as usize + 1] {
                    let u = pattern.indices[k];
                    m = m.max((order(v) as i64 - order(u) as i64).abs());
                }
            }
            m
        };
        let natural = bw(&|v| v);
        let rcm = bw(&|v| inv[v as usize]);
        assert!(rcm <= natural);
        assert_eq!(
            {
                let mut p = perm.clone();
                p.sort_unstable();
                p
            },
            (0..n).collect::<Vec<_>>()
        );
    }
}
