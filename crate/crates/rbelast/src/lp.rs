//! Dense bounded-variable primal simplex with Bland's rule.
//!
//! Solves  min cᵀy  s.t.  lo <= y <= hi  and  A y >= b.
//! Problem sizes here are tiny (tens of variables, at most a handful of
//! inequality rows), so the basis inverse is recomputed densely each
//! iteration and a two-phase start with artificial variables keeps the
//! logic simple and robust.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("LP is infeasible (phase-1 objective {0:.3e})")]
    Infeasible(f64),
    #[error("LP did not converge within {0} pivots")]
    Stalled(usize),
    #[error("LP is unbounded along variable {0}")]
    Unbounded(usize),
}

#[derive(Clone, Copy, PartialEq)]
enum Loc {
    Basic,
    AtLower,
    AtUpper,
}

/// Minimize cᵀy over the box [lo, hi] intersected with {A y >= b}.
/// Returns the optimal y.
pub fn solve_box_lp(
    c: &[f64],
    lo: &[f64],
    hi: &[f64],
    a: &[Vec<f64>],
    b: &[f64],
) -> Result<Vec<f64>, LpError> {
    let nq = c.len();
    let m = a.len();
    assert_eq!(lo.len(), nq);
    assert_eq!(hi.len(), nq);
    assert_eq!(b.len(), m);
    if m == 0 {
        // pure box problem: minimize componentwise
        return Ok((0..nq)
            .map(|q| if c[q] >= 0.0 { lo[q] } else { hi[q] })
            .collect());
    }

    // Variables: y (boxed), s (surplus, >= 0), z (artificial, >= 0).
    // Rows: A y - s + S z = b, with S a sign matrix chosen so the initial
    // artificial values are nonnegative.
    let n_total = nq + m + m;
    let col = |j: usize, i: usize, sign: &[f64]| -> f64 {
        if j < nq {
            a[i][j]
        } else if j < nq + m {
            if j - nq == i {
                -1.0
            } else {
                0.0
            }
        } else if j - nq - m == i {
            sign[i]
        } else {
            0.0
        }
    };

    // initial point: y at the cost-preferred corner, s at its feasible value
    let mut value = vec![0.0; n_total];
    let mut loc = vec![Loc::AtLower; n_total];
    for q in 0..nq {
        if c[q] >= 0.0 {
            value[q] = lo[q];
            loc[q] = Loc::AtLower;
        } else {
            value[q] = hi[q];
            loc[q] = Loc::AtUpper;
        }
    }
    let mut sign = vec![1.0; m];
    let mut basis: Vec<usize> = Vec::with_capacity(m);
    for i in 0..m {
        let ay: f64 = (0..nq).map(|q| a[i][q] * value[q]).sum();
        let resid = ay - b[i]; // = s_i when feasible
        if resid >= 0.0 {
            // surplus can start basic and feasible; artificial pinned at 0
            value[nq + i] = resid;
            basis.push(nq + i);
            loc[nq + i] = Loc::Basic;
        } else {
            // artificial carries the infeasibility: z_i = b_i - ay > 0, sign +1
            value[nq + m + i] = -resid;
            sign[i] = 1.0;
            basis.push(nq + m + i);
            loc[nq + m + i] = Loc::Basic;
        }
    }

    let lower = |j: usize| -> f64 {
        if j < nq {
            lo[j]
        } else {
            0.0
        }
    };
    let upper = |j: usize, artificial_frozen: bool| -> f64 {
        if j < nq {
            hi[j]
        } else if j < nq + m {
            f64::INFINITY
        } else if artificial_frozen {
            0.0
        } else {
            f64::INFINITY
        }
    };

    // phase 1: minimize sum of artificials
    let mut cost1 = vec![0.0; n_total];
    for i in 0..m {
        cost1[nq + m + i] = 1.0;
    }
    let p1 = simplex_loop(
        &mut value,
        &mut loc,
        &mut basis,
        &cost1,
        &lower,
        &|j| upper(j, false),
        &col,
        &sign,
        nq,
        m,
    )?;
    if p1 > 1e-9 {
        return Err(LpError::Infeasible(p1));
    }
    // drive any residual basic artificials toward zero value; they are at
    // zero already (phase-1 optimum), freeze them there
    let mut cost2 = vec![0.0; n_total];
    cost2[..nq].copy_from_slice(c);
    simplex_loop(
        &mut value,
        &mut loc,
        &mut basis,
        &cost2,
        &lower,
        &|j| upper(j, true),
        &col,
        &sign,
        nq,
        m,
    )?;
    Ok(value[..nq].to_vec())
}

#[allow(clippy::too_many_arguments)]
fn simplex_loop(
    value: &mut [f64],
    loc: &mut [Loc],
    basis: &mut [usize],
    cost: &[f64],
    lower: &dyn Fn(usize) -> f64,
    upper: &dyn Fn(usize) -> f64,
    col: &dyn Fn(usize, usize, &[f64]) -> f64,
    sign: &[f64],
    nq: usize,
    m: usize,
) -> Result<f64, LpError> {
    let n_total = value.len();
    let tol = 1e-10;
    let max_pivots = 200 * (n_total + m);
    for _pivot in 0..max_pivots {
        // basis matrix inverse (M is tiny)
        let bmat = DMatrix::from_fn(m, m, |i, k| col(basis[k], i, sign));
        let binv = bmat
            .clone()
            .try_inverse()
            .ok_or(LpError::Stalled(_pivot))?;
        // recompute basic values for numerical hygiene:
        // x_B = B^{-1} (b_eff), with b_eff = b - sum_{nonbasic} A_j x_j.
        // Here b is implicit: rows satisfy A x = b exactly at the current
        // point, so refresh only the duals and reduced costs.
        let cb = nalgebra::DVector::from_fn(m, |k, _| cost[basis[k]]);
        let y = binv.transpose() * &cb; // duals

        // entering variable (Bland: lowest index eligible)
        let mut entering: Option<(usize, f64)> = None;
        for j in 0..n_total {
            if loc[j] == Loc::Basic {
                continue;
            }
            if upper(j) == lower(j) {
                continue; // frozen (artificials in phase 2)
            }
            let aj = nalgebra::DVector::from_fn(m, |i, _| col(j, i, sign));
            let dj = cost[j] - y.dot(&aj);
            let eligible = match loc[j] {
                Loc::AtLower => dj < -tol,
                Loc::AtUpper => dj > tol,
                Loc::Basic => false,
            };
            if eligible {
                entering = Some((j, if loc[j] == Loc::AtLower { 1.0 } else { -1.0 }));
                break;
            }
        }
        let Some((j_in, dir)) = entering else {
            // optimal
            let obj: f64 = (0..n_total).map(|j| cost[j] * value[j]).sum();
            return Ok(obj);
        };

        let aj = nalgebra::DVector::from_fn(m, |i, _| col(j_in, i, sign));
        let w = &binv * &aj; // basic change rate: x_B -= t * dir * w

        // ratio test
        let mut t_max = upper(j_in) - lower(j_in); // bound flip distance
        let mut leave: Option<usize> = None; // index into basis
        let mut leave_to_upper = false;
        for k in 0..m {
            let rate = -dir * w[k];
            let xb = value[basis[k]];
            if rate > tol {
                let room = upper(basis[k]) - xb;
                let t = room / rate;
                if t < t_max - 1e-14 {
                    t_max = t;
                    leave = Some(k);
                    leave_to_upper = true;
                } else if t <= t_max + 1e-14 && leave.map(|kk| basis[kk] > basis[k]).unwrap_or(false) {
                    t_max = t.min(t_max);
                    leave = Some(k);
                    leave_to_upper = true;
                }
            } else if rate < -tol {
                let room = xb - lower(basis[k]);
                let t = room / (-rate);
                if t < t_max - 1e-14 {
                    t_max = t;
                    leave = Some(k);
                    leave_to_upper = false;
                } else if t <= t_max + 1e-14 && leave.map(|kk| basis[kk] > basis[k]).unwrap_or(false) {
                    t_max = t.min(t_max);
                    leave = Some(k);
                    leave_to_upper = false;
                }
            }
        }
        if !t_max.is_finite() {
            return Err(LpError::Unbounded(j_in));
        }
        let t = t_max.max(0.0);

        // apply the move
        value[j_in] += dir * t;
        for k in 0..m {
            value[basis[k]] -= dir * t * w[k];
        }
        match leave {
            None => {
                // bound flip of the entering variable
                loc[j_in] = if dir > 0.0 { Loc::AtUpper } else { Loc::AtLower };
            }
            Some(k_out) => {
                let j_out = basis[k_out];
                loc[j_out] = if leave_to_upper {
                    value[j_out] = upper(j_out);
                    Loc::AtUpper
                } else {
                    value[j_out] = lower(j_out);
                    Loc::AtLower
                };
                basis[k_out] = j_in;
                loc[j_in] = Loc::Basic;
            }
        }
    }
    Err(LpError::Stalled(max_pivots))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn objective(c: &[f64], y: &[f64]) -> f64 {
        c.iter().zip(y).map(|(a, b)| a * b).sum()
    }

    fn feasible(lo: &[f64], hi: &[f64], a: &[Vec<f64>], b: &[f64], y: &[f64], tol: f64) -> bool {
        y.iter()
            .zip(lo.iter().zip(hi))
            .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
            && a.iter()
                .zip(b)
                .all(|(row, bi)| objective(row, y) >= bi - tol)
    }

    #[test]
    fn box_only_matches_componentwise_minimum() {
        let c = [1.0, -2.0, 0.5, -0.1];
        let lo = [-1.0, -1.0, 0.0, 2.0];
        let hi = [3.0, 4.0, 1.0, 5.0];
        let y = solve_box_lp(&c, &lo, &hi, &[], &[]).unwrap();
        assert_eq!(y, vec![-1.0, 4.0, 0.0, 5.0]);
    }

    #[test]
    fn single_constraint_hand_case() {
        // min y1 + y2 over [0,2]^2 with y1 + y2 >= 1: optimum value 1
        let c = [1.0, 1.0];
        let lo = [0.0, 0.0];
        let hi = [2.0, 2.0];
        let a = vec![vec![1.0, 1.0]];
        let b = [1.0];
        let y = solve_box_lp(&c, &lo, &hi, &a, &b).unwrap();
        assert!(feasible(&lo, &hi, &a, &b, &y, 1e-9));
        assert!((objective(&c, &y) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constraint_inactive_when_corner_feasible() {
        // corner already satisfies the constraint
        let c = [1.0, 1.0];
        let lo = [1.0, 1.0];
        let hi = [2.0, 2.0];
        let a = vec![vec![1.0, 1.0]];
        let b = [0.5];
        let y = solve_box_lp(&c, &lo, &hi, &a, &b).unwrap();
        assert_eq!(y, vec![1.0, 1.0]);
    }

    #[test]
    fn infeasible_detected() {
        let c = [1.0];
        let lo = [0.0];
        let hi = [1.0];
        let a = vec![vec![1.0]];
        let b = [5.0];
        assert!(matches!(
            solve_box_lp(&c, &lo, &hi, &a, &b),
            Err(LpError::Infeasible(_))
        ));
    }

    #[test]
    fn two_constraints_known_optimum() {
        // min -y1 - 2 y2 over [0,3]^2, y1 + y2 >= 1 (inactive at optimum),
        // optimum at corner (3,3) = -9
        let c = [-1.0, -2.0];
        let lo = [0.0, 0.0];
        let hi = [3.0, 3.0];
        let a = vec![vec![1.0, 1.0], vec![-1.0, 1.0]];
        let b = [1.0, -3.0];
        let y = solve_box_lp(&c, &lo, &hi, &a, &b).unwrap();
        assert!(feasible(&lo, &hi, &a, &b, &y, 1e-9));
        assert!((objective(&c, &y) + 9.0).abs() < 1e-9);
    }

    #[test]
    fn random_instances_dominate_sampled_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x1b);
        for case in 0..200 {
            let nq = rng.gen_range(1..7);
            let m = rng.gen_range(0..4);
            let lo: Vec<f64> = (0..nq).map(|_| rng.gen_range(-2.0..0.0)).collect();
            let hi: Vec<f64> = lo.iter().map(|l| l + rng.gen_range(0.1..3.0)).collect();
            let c: Vec<f64> = (0..nq).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..nq).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            // choose b so that a known interior point stays feasible
            let anchor: Vec<f64> = lo
                .iter()
                .zip(&hi)
                .map(|(l, h)| 0.5 * (l + h))
                .collect();
            let b: Vec<f64> = a
                .iter()
                .map(|row| objective(row, &anchor) - rng.gen_range(0.0..0.5))
                .collect();
            let y = solve_box_lp(&c, &lo, &hi, &a, &b)
                .unwrap_or_else(|e| panic!("case {case}: {e}"));
            assert!(feasible(&lo, &hi, &a, &b, &y, 1e-8), "case {case}");
            let fy = objective(&c, &y);
            // optimum must not exceed any sampled feasible point
            for _ in 0..300 {
                let p: Vec<f64> = lo
                    .iter()
                    .zip(&hi)
                    .map(|(l, h)| rng.gen_range(*l..=*h))
                    .collect();
                if feasible(&lo, &hi, &a, &b, &p, 0.0) {
                    assert!(
                        fy <= objective(&c, &p) + 1e-8,
                        "case {case}: {fy} > {}",
                        objective(&c, &p)
                    );
                }
            }
        }
    }
}
