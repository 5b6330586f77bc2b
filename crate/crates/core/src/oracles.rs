//! Brute-force reference computations used to check the fast paths:
//! central differences, dense elimination, composite quadrature and a
//! sub-stepped forward Euler reference.
//!
//! Nothing here calls into the code it is meant to verify.

use crate::error::{check_len, Error, Result};
use crate::field::{BatchState, NeuralField, ThetaVec};
use crate::linalg::DenseMatrix;
use crate::trajectory::ControlPath;

/// Default central-difference step for `f64` objectives.
pub const FD_STEP: f64 = 1e-5;

/// `(f(v + εδ) − f(v − εδ)) / 2ε`
pub fn fd_directional<F>(f: &F, v: &[f64], direction: &[f64], eps: f64) -> f64
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    let shifted = |sign: f64| -> Vec<f64> {
        v.iter()
            .zip(direction)
            .map(|(a, b)| a + sign * eps * b)
            .collect()
    };
    (f(&shifted(1.0)) - f(&shifted(-1.0))) / (2.0 * eps)
}

/// Full central-difference gradient.
pub fn fd_gradient<F>(f: &F, v: &[f64], eps: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    let mut e = vec![0.0; v.len()];
    (0..v.len())
        .map(|j| {
            e[j] = 1.0;
            let g = fd_directional(f, v, &e, eps);
            e[j] = 0.0;
            g
        })
        .collect()
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(a: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    check_len("dense_solve square", n, a.cols())?;
    check_len("dense_solve rhs", n, rhs.len())?;
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    let mut b = rhs.to_vec();
    let scale = a.entries().iter().fold(0.0_f64, |s, v| s.max(v.abs()));
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[pivot_row][col].abs() <= 1e-300_f64.max(1e-15 * scale) {
            return Err(Error::SingularMatrix(col));
        }
        m.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in col + 1..n {
            let factor = m[row][col] / m[col][col];
            if factor == 0.0 {
                continue;
            }
            let (upper, lower) = m.split_at_mut(row);
            for (target, pivot) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *target -= factor * pivot;
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let tail: f64 = (i + 1..n).map(|k| m[i][k] * x[k]).sum();
        x[i] = (b[i] - tail) / m[i][i];
    }
    Ok(x)
}

/// Composite midpoint rule with `panels` panels on `[a, b]`.
pub fn composite_quadrature<G: Fn(f64) -> f64>(g: G, a: f64, b: f64, panels: usize) -> f64 {
    assert!(panels >= 1, "composite_quadrature needs at least one panel");
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| g(a + (i as f64 + 0.5) * h))
        .sum::<f64>()
        * h
}

/// Composite Simpson rule with `panels` panels on `[a, b]`. Exact for cubics.
pub fn composite_simpson<G: Fn(f64) -> f64>(g: G, a: f64, b: f64, panels: usize) -> f64 {
    assert!(panels >= 1, "composite_simpson needs at least one panel");
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let left = a + i as f64 * h;
            g(left) + 4.0 * g(left + 0.5 * h) + g(left + h)
        })
        .sum::<f64>()
        * h
        / 6.0
}

/// Forward Euler with every interval split into `factor` sub-steps and the
/// control sampled at each sub-step midpoint. Returns the terminal state.
pub fn fine_reference_solve(
    field: &NeuralField,
    theta: &ControlPath,
    x_in: &BatchState,
    factor: usize,
) -> Result<BatchState> {
    if factor == 0 {
        return Err(Error::InvalidArgument("refinement factor must be >= 1".into()));
    }
    let grid = theta.grid();
    let mut x = x_in.clone();
    for k in 1..=grid.intervals() {
        let (left, right) = (theta.value(k - 1).as_slice(), theta.value(k).as_slice());
        let h = grid.tau(k) / factor as f64;
        for j in 0..factor {
            let w = (j as f64 + 0.5) / factor as f64;
            let sampled: Vec<f64> = left
                .iter()
                .zip(right)
                .map(|(a, b)| (1.0 - w) * a + w * b)
                .collect();
            let rate = field.eval(&x, &ThetaVec::from_vec(theta.width(), sampled)?)?;
            for (xi, ri) in x.as_mut_slice().iter_mut().zip(rate.as_slice()) {
                *xi += h * ri;
            }
            if !x.is_finite() {
                return Err(Error::NonFiniteState(k));
            }
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::linalg::{solve_tridiagonal, SeededRng, TridiagonalMatrix};
    use crate::trajectory::solve_state;

    #[test]
    fn fd_is_exact_on_quadratics_and_linears() {
        let q = |v: &[f64]| 3.0 * v[0] * v[0] - 2.0 * v[0] * v[1] + v[1];
        let g = fd_directional(&q, &[1.5, -0.5], &[1.0, 0.0], 1e-3);
        assert!((g - (9.0 + 1.0)).abs() < 1e-12);
        let l = |v: &[f64]| 2.0 * v[0] - 7.0 * v[1];
        for eps in [1e-6, 0.1, 10.0] {
            let tol = 1e-15 / eps + 1e-14;
            assert!((fd_directional(&l, &[0.3, 0.4], &[1.0, 1.0], eps) + 5.0).abs() < tol);
        }
    }

    #[test]
    fn dense_hand_cases() {
        let x = dense_solve(&DenseMatrix::identity(3), &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(x, vec![4.0, 5.0, 6.0]);
        let a = DenseMatrix::from_row_major(2, 2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let x = dense_solve(&a, &[3.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
        let singular = DenseMatrix::from_row_major(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!(matches!(dense_solve(&singular, &[1.0, 1.0]), Err(Error::SingularMatrix(1))));
    }

    #[test]
    fn dense_agrees_with_thomas() {
        let mut rng = SeededRng::new(8);
        let n = 20;
        let off: Vec<f64> = (0..n - 1).map(|_| rng.standard_normal()).collect();
        let main: Vec<f64> = (0..n).map(|_| 4.0 + rng.uniform()).collect();
        let a = TridiagonalMatrix::new(off.clone(), main, off).unwrap();
        let rhs: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let x = dense_solve(&a.to_dense(), &rhs).unwrap();
        let y = solve_tridiagonal(&a, &rhs).unwrap();
        assert!(x.iter().zip(&y).all(|(u, v)| (u - v).abs() < 1e-12));
    }

    #[test]
    fn quadrature_cases() {
        assert_eq!(composite_quadrature(|_| 1.0, 0.0, 2.0, 7), 2.0);
        assert!((composite_quadrature(|s| s, 0.0, 1.0, 3) - 0.5).abs() < 1e-15);
        assert!((composite_quadrature(|s| s * s, 0.0, 1.0, 1000) - 1.0 / 3.0).abs() < 1e-7);
        let cubic = |s: f64| 4.0 * s * s * s - s + 2.0;
        assert!((composite_simpson(cubic, -1.0, 2.0, 1) - 19.5).abs() < 1e-13);
        assert!((composite_simpson(f64::exp, 0.0, 1.0, 100) - (1f64.exp() - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn fine_reference_limits() {
        let field = NeuralField::new(2);
        let grid = TimeGrid::from_nodes(vec![0.0, 0.4, 1.0, 1.7]).unwrap();
        let x_in = BatchState::from_vec(2, vec![0.5, -0.3, 1.0, 0.2]).unwrap();

        let zero = ControlPath::from_fn(grid.clone(), 2, |_| vec![0.0; 6]).unwrap();
        assert_eq!(fine_reference_solve(&field, &zero, &x_in, 8).unwrap(), x_in);

        let mut rng = SeededRng::new(2);
        let theta = ControlPath::new(
            grid,
            (0..4)
                .map(|_| ThetaVec::from_vec(2, (0..6).map(|_| rng.standard_normal()).collect()).unwrap())
                .collect(),
        )
        .unwrap();
        let coarse = solve_state(&field, &theta, &x_in).unwrap();
        let fine = fine_reference_solve(&field, &theta, &x_in, 1).unwrap();
        assert_eq!(coarse.terminal(), &fine);
    }

    #[test]
    fn richardson_differences_halve() {
        let field = NeuralField::new(2);
        let grid = TimeGrid::from_nodes(vec![0.0, 0.7, 1.5, 3.0]).unwrap();
        let theta = ControlPath::from_fn(grid, 2, |t| {
            vec![0.9 * t.sin(), -0.4, 0.3 * t, 0.7 * t.cos(), 0.2, -0.5 * (0.5 * t).sin()]
        })
        .unwrap();
        let x_in = BatchState::from_vec(2, vec![1.0, -0.5, 0.2, 0.9]).unwrap();
        let solve = |factor| fine_reference_solve(&field, &theta, &x_in, factor).unwrap();
        let (a, b, c) = (solve(256), solve(512), solve(1024));
        let coarse_gap = a.distance(&b);
        let fine_gap = b.distance(&c);
        assert!(fine_gap > 0.0);
        assert!(coarse_gap < 2.0 * fine_gap, "{coarse_gap} vs {fine_gap}");
        assert!(coarse_gap > 1.9 * fine_gap, "{coarse_gap} vs {fine_gap}");
    }
}
