//! Small dense and tridiagonal linear algebra, plus the seeded random stream
//! that every stochastic component draws from.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Pivot magnitude below which the Thomas sweep reports a singular system.
pub const PIVOT_TOLERANCE: f64 = 1e-14;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        check_len("DenseMatrix::from_row_major", rows * cols, entries.len())?;
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "matrix entries must be finite".into(),
            ));
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    /// `out = A v`
    pub fn mul_vec_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), v);
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.mul_vec_into(v, &mut out);
        out
    }

    /// `out = Aᵀ v`
    pub fn mul_transpose_vec_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &vi) in v.iter().enumerate() {
            axpy(vi, self.row(i), out);
        }
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.entries[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.entries[i * self.cols + j]
    }
}

/// Tridiagonal matrix stored by diagonals.
#[derive(Clone, Debug, PartialEq)]
pub struct TridiagonalMatrix {
    lower: Vec<f64>,
    main: Vec<f64>,
    upper: Vec<f64>,
}

impl TridiagonalMatrix {
    pub fn new(lower: Vec<f64>, main: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = main.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty tridiagonal matrix".into()));
        }
        check_len("TridiagonalMatrix lower", n - 1, lower.len())?;
        check_len("TridiagonalMatrix upper", n - 1, upper.len())?;
        Ok(Self { lower, main, upper })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            lower: vec![0.0; n.saturating_sub(1)],
            main: vec![1.0; n],
            upper: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn size(&self) -> usize {
        self.main.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn main(&self) -> &[f64] {
        &self.main
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.main[i]
        } else if j == i + 1 {
            self.upper[i]
        } else if i == j + 1 {
            self.lower[j]
        } else {
            0.0
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_len("TridiagonalMatrix::add", self.size(), other.size())?;
        let zip = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect();
        Ok(Self {
            lower: zip(&self.lower, &other.lower),
            main: zip(&self.main, &other.main),
            upper: zip(&self.upper, &other.upper),
        })
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let n = self.size();
        debug_assert_eq!(v.len(), n);
        (0..n)
            .map(|i| {
                let mut s = self.main[i] * v[i];
                if i > 0 {
                    s += self.lower[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    s += self.upper[i] * v[i + 1];
                }
                s
            })
            .collect()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.size();
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(1)..(i + 2).min(n) {
                m[(i, j)] = self.get(i, j);
            }
        }
        m
    }
}

/// Thomas algorithm without pivoting.
pub fn solve_tridiagonal(a: &TridiagonalMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = a.size();
    check_len("solve_tridiagonal rhs", n, rhs.len())?;
    let (lower, main, upper) = (a.lower(), a.main(), a.upper());

    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];

    let mut pivot = main[0];
    if pivot.abs() < PIVOT_TOLERANCE {
        return Err(Error::SingularPivot { row: 0, pivot });
    }
    if n > 1 {
        c[0] = upper[0] / pivot;
    }
    x[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = main[i] - lower[i - 1] * c[i - 1];
        if pivot.abs() < PIVOT_TOLERANCE {
            return Err(Error::SingularPivot { row: i, pivot });
        }
        if i + 1 < n {
            c[i] = upper[i] / pivot;
        }
        x[i] = (rhs[i] - lower[i - 1] * x[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

/// Deterministic random stream (ChaCha8). The word position is exposed so a
/// checkpoint can resume the exact stream.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    /// ChaCha word position, stored as a decimal string since JSON numbers
    /// cannot carry a `u128`.
    #[serde(with = "u128_string")]
    pub word_pos: u128,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.seed,
            word_pos: self.inner.get_word_pos(),
        }
    }

    pub fn from_state(state: RngState) -> Self {
        let mut rng = Self::new(state.seed);
        rng.inner.set_word_pos(state.word_pos);
        rng
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.gen()
    }

    pub(crate) fn inner_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.inner
    }
}

/// Matrix with i.i.d. `N(0, scale²)` entries.
pub fn gaussian_matrix(rng: &mut SeededRng, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
    assert!(scale > 0.0, "gaussian_matrix scale must be positive");
    let entries = (0..rows * cols)
        .map(|_| scale * rng.standard_normal())
        .collect();
    DenseMatrix {
        rows,
        cols,
        entries,
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

mod u128_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::dense_solve;
    use proptest::prelude::*;

    #[test]
    fn identity_solve() {
        let a = TridiagonalMatrix::identity(3);
        let x = solve_tridiagonal(&a, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn symmetric_two_by_two() {
        let a = TridiagonalMatrix::new(vec![1.0], vec![2.0, 2.0], vec![1.0]).unwrap();
        let x = solve_tridiagonal(&a, &[3.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn singular_pivot_is_reported() {
        let a = TridiagonalMatrix::new(vec![1.0], vec![1.0, 1.0], vec![1.0]).unwrap();
        match solve_tridiagonal(&a, &[1.0, 1.0]) {
            Err(Error::SingularPivot { row: 1, .. }) => {}
            other => panic!("expected singular pivot, got {other:?}"),
        }
        let z = TridiagonalMatrix::new(vec![], vec![0.0], vec![]).unwrap();
        assert!(matches!(
            solve_tridiagonal(&z, &[1.0]),
            Err(Error::SingularPivot { row: 0, .. })
        ));
    }

    #[test]
    fn rhs_length_checked() {
        let a = TridiagonalMatrix::identity(3);
        assert!(matches!(
            solve_tridiagonal(&a, &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn random_spd(rng: &mut SeededRng, n: usize) -> TridiagonalMatrix {
        let off: Vec<f64> = (0..n - 1).map(|_| rng.standard_normal()).collect();
        let main = (0..n)
            .map(|i| {
                let l = if i > 0 { off[i - 1].abs() } else { 0.0 };
                let u = if i + 1 < n { off[i].abs() } else { 0.0 };
                l + u + 0.5 + rng.uniform()
            })
            .collect();
        TridiagonalMatrix::new(off.clone(), main, off).unwrap()
    }

    #[test]
    fn matches_dense_oracle_on_random_spd() {
        let mut rng = SeededRng::new(32);
        let a = random_spd(&mut rng, 33);
        let rhs: Vec<f64> = (0..33).map(|_| rng.standard_normal()).collect();
        let x = solve_tridiagonal(&a, &rhs).unwrap();
        let y = dense_solve(&a.to_dense(), &rhs).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((xi - yi).abs() < 1e-12, "{xi} vs {yi}");
        }
    }

    #[test]
    fn gaussian_scale_limit_and_determinism() {
        let m = gaussian_matrix(&mut SeededRng::new(1), 4, 5, 1e-300);
        assert!(m.entries().iter().all(|v| v.abs() < 1e-290));

        let a = gaussian_matrix(&mut SeededRng::new(7), 6, 3, 1.0);
        let b = gaussian_matrix(&mut SeededRng::new(7), 6, 3, 1.0);
        let bits = |m: &DenseMatrix| m.entries().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn gaussian_sample_std() {
        let m = gaussian_matrix(&mut SeededRng::new(3), 1, 100_000, 1.0);
        let n = m.entries().len() as f64;
        let mean = m.entries().iter().sum::<f64>() / n;
        let var = m.entries().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let std = var.sqrt();
        assert!((0.99..=1.01).contains(&std), "std = {std}");
    }

    #[test]
    fn rng_state_round_trip() {
        let mut rng = SeededRng::new(11);
        for _ in 0..17 {
            rng.standard_normal();
        }
        let mut resumed = SeededRng::from_state(rng.state());
        for _ in 0..10 {
            assert_eq!(rng.standard_normal().to_bits(), resumed.standard_normal().to_bits());
        }
    }

    proptest! {
        #[test]
        fn solve_then_multiply_is_identity(seed in 0u64..1000, n in 1usize..40) {
            let mut rng = SeededRng::new(seed);
            let a = if n == 1 {
                TridiagonalMatrix::new(vec![], vec![1.0 + rng.uniform()], vec![]).unwrap()
            } else {
                random_spd(&mut rng, n)
            };
            let rhs: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
            let x = solve_tridiagonal(&a, &rhs).unwrap();
            let ax = a.mul_vec(&x);
            let res: Vec<f64> = ax.iter().zip(&rhs).map(|(u, v)| u - v).collect();
            prop_assert!(norm_inf(&res) <= 1e-10 * norm_inf(&rhs).max(1e-300));
        }
    }
}
