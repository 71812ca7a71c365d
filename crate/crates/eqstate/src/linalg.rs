//! Sparse nonnegative matrices and power iteration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PAR_THRESHOLD: usize = 1 << 14;

/// A square linear operator together with its transpose.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
    fn apply_transpose(&self, x: &[f64], out: &mut [f64]);
}

/// Square matrix in compressed sparse row form, with a cached transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    t_row_ptr: Vec<usize>,
    t_cols: Vec<usize>,
    t_vals: Vec<f64>,
}

fn csr(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    triplets.sort_by_key(|a| (a.0, a.1));
    let mut row_ptr = vec![0usize; n + 1];
    let mut cols = Vec::with_capacity(triplets.len());
    let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
    let mut last: Option<(usize, usize)> = None;
    for (r, c, v) in triplets {
        if last == Some((r, c)) {
            *vals.last_mut().unwrap() += v;
            continue;
        }
        row_ptr[r + 1] += 1;
        cols.push(c);
        vals.push(v);
        last = Some((r, c));
    }
    for i in 0..n {
        row_ptr[i + 1] += row_ptr[i];
    }
    (row_ptr, cols, vals)
}

impl SparseMatrix {
    /// Build from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if triplets.iter().any(|&(r, c, _)| r >= n || c >= n) {
            return Err(Error::contract("triplet index out of range"));
        }
        let transposed: Vec<(usize, usize, f64)> = triplets.iter().map(|&(r, c, v)| (c, r, v)).collect();
        let (row_ptr, cols, vals) = csr(n, triplets);
        let (t_row_ptr, t_cols, t_vals) = csr(n, transposed);
        Ok(SparseMatrix { n, row_ptr, cols, vals, t_row_ptr, t_cols, t_vals })
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut t = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::contract("matrix must be square"));
            }
            for (j, &v) in r.iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, t)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for (r, c, v) in self.entries() {
            out[r][c] = v;
        }
        out
    }

    /// Nonzero entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.cols[k], self.vals[k]))
        })
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.vals.iter().all(|&v| v >= 0.0)
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.apply(x, &mut out);
        out
    }

    fn spmv(n: usize, ptr: &[usize], cols: &[usize], vals: &[f64], x: &[f64], out: &mut [f64]) {
        let row = |r: usize| -> f64 {
            let mut s = 0.0;
            for k in ptr[r]..ptr[r + 1] {
                s += vals[k] * x[cols[k]];
            }
            s
        };
        if n >= PAR_THRESHOLD {
            out.par_iter_mut().enumerate().for_each(|(r, o)| *o = row(r));
        } else {
            for (r, o) in out.iter_mut().enumerate() {
                *o = row(r);
            }
        }
    }
}

impl LinearOperator for SparseMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        Self::spmv(self.n, &self.row_ptr, &self.cols, &self.vals, x, out)
    }

    fn apply_transpose(&self, x: &[f64], out: &mut [f64]) {
        Self::spmv(self.n, &self.t_row_ptr, &self.t_cols, &self.t_vals, x, out)
    }
}

/// Leading eigen-data of a nonnegative primitive operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    /// Spectral radius.
    pub lambda: f64,
    /// `log lambda`.
    pub pressure: f64,
    /// Right eigenvector, normalized by `sum h * nu = 1`.
    pub h: Vec<f64>,
    /// Left eigenvector, normalized to total mass one.
    pub nu: Vec<f64>,
    /// Modulus of the subdominant eigenvalue divided by `lambda`.
    pub gap: f64,
    /// Collatz–Wielandt bracket for `lambda` from the right iteration.
    pub bracket: (f64, f64),
    /// Collatz–Wielandt bracket from the left iteration.
    pub left_bracket: (f64, f64),
    pub iterations: usize,
    /// Cylinder depth the operator was built at (0 for a bare matrix).
    pub depth: usize,
}

/// Options for [`leading_spectrum`].
#[derive(Debug, Clone, Copy)]
pub struct PowerOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub gap_iter: usize,
}

impl Default for PowerOptions {
    fn default() -> Self {
        PowerOptions { tol: 1e-12, max_iter: 200_000, gap_iter: 400 }
    }
}

/// Power iteration returning the eigenvalue bracket, eigenvector and iteration count.
pub fn power_iteration<O: LinearOperator + ?Sized>(
    op: &O,
    transpose: bool,
    tol: f64,
    max_iter: usize,
) -> Result<((f64, f64), Vec<f64>, usize)> {
    let n = op.dim();
    if n == 0 {
        return Err(Error::contract("empty operator"));
    }
    let mut v = vec![1.0; n];
    let mut w = vec![0.0; n];
    for it in 1..=max_iter {
        if transpose {
            op.apply_transpose(&v, &mut w);
        } else {
            op.apply(&v, &mut w);
        }
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        let mut wmax = 0.0f64;
        let mut positive = true;
        for i in 0..n {
            if !(w[i] >= 0.0) {
                return Err(Error::Numerical("operator produced a negative or NaN entry".into()));
            }
            if w[i] == 0.0 {
                positive = false;
            }
            let r = w[i] / v[i];
            lo = lo.min(r);
            hi = hi.max(r);
            wmax = wmax.max(w[i]);
        }
        if wmax == 0.0 {
            return Err(Error::Numerical("operator annihilated the positive cone".into()));
        }
        for i in 0..n {
            v[i] = w[i] / wmax;
        }
        if positive && hi - lo <= tol * hi {
            return Ok(((lo, hi), v, it));
        }
        if !positive && it > n + 2 {
            return Err(Error::Numerical("operator is not irreducible".into()));
        }
    }
    Err(Error::Convergence(format!("power iteration did not reach tolerance {tol} in {max_iter} steps")))
}

/// Ratio `|lambda_2| / lambda` estimated by deflated power iteration.
pub fn subdominant_ratio<O: LinearOperator + ?Sized>(op: &O, lambda: f64, h: &[f64], nu: &[f64], iters: usize) -> f64 {
    let n = op.dim();
    if n <= 1 || iters == 0 {
        return 0.0;
    }
    let nh: f64 = nu.iter().zip(h).map(|(a, b)| a * b).sum();
    let project = |v: &mut [f64]| {
        let c: f64 = nu.iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>() / nh;
        for (x, hi) in v.iter_mut().zip(h) {
            *x -= c * hi;
        }
    };
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    let mut v: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * golden).fract() - 0.5).collect();
    project(&mut v);
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut nv = norm(&v);
    if nv == 0.0 {
        return 0.0;
    }
    let mut w = vec![0.0; n];
    let mut acc = 0.0;
    let mut count = 0usize;
    for t in 0..iters {
        op.apply(&v, &mut w);
        project(&mut w);
        let nw = norm(&w);
        if nw == 0.0 || !nw.is_finite() {
            return 0.0;
        }
        if t >= iters / 2 {
            acc += (nw / nv).ln();
            count += 1;
        }
        for (a, b) in v.iter_mut().zip(&w) {
            *a = b / nw;
        }
        nv = 1.0;
    }
    let ratio = (acc / count as f64).exp() / lambda;
    if ratio < 1e-13 {
        0.0
    } else {
        ratio.min(1.0)
    }
}

/// Leading eigenvalue, eigenvectors and subdominant ratio of a nonnegative operator.
pub fn leading_spectrum<O: LinearOperator + ?Sized>(op: &O, opts: PowerOptions) -> Result<SpectralData> {
    let (bracket, mut h, it_r) = power_iteration(op, false, opts.tol, opts.max_iter)?;
    let (left_bracket, mut nu, it_l) = power_iteration(op, true, opts.tol, opts.max_iter)?;
    let lambda = 0.5 * (bracket.0 + bracket.1);
    let s: f64 = nu.iter().sum();
    nu.iter_mut().for_each(|x| *x /= s);
    let hn: f64 = h.iter().zip(&nu).map(|(a, b)| a * b).sum();
    h.iter_mut().for_each(|x| *x /= hn);
    let gap = subdominant_ratio(op, lambda, &h, &nu, opts.gap_iter);
    Ok(SpectralData {
        lambda,
        pressure: lambda.ln(),
        h,
        nu,
        gap,
        bracket,
        left_bracket,
        iterations: it_r.max(it_l),
        depth: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_shift_matrix() {
        let m = SparseMatrix::from_dense(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        let s = leading_spectrum(&m, PowerOptions::default()).unwrap();
        assert!((s.lambda - 3.0).abs() < 1e-12 * 3.0);
        assert!((s.h[0] - 1.0).abs() < 1e-12 && (s.h[1] - 1.0).abs() < 1e-12);
        assert!((s.nu[0] - 1.0 / 3.0).abs() < 1e-12 && (s.nu[1] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.gap, 0.0);
    }

    #[test]
    fn golden_mean_matrix() {
        let m = SparseMatrix::from_dense(&[vec![1.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let s = leading_spectrum(&m, PowerOptions::default()).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((s.lambda - phi).abs() < 1e-10);
        assert!((s.gap - 1.0 / (phi * phi)).abs() < 1e-3);
    }

    #[test]
    fn transpose_matches_dense() {
        let d = vec![vec![0.0, 2.0, 1.0], vec![3.0, 0.0, 0.5], vec![1.0, 1.0, 1.0]];
        let m = SparseMatrix::from_dense(&d).unwrap();
        let x = [1.0, -2.0, 0.5];
        let mut y = [0.0; 3];
        m.apply_transpose(&x, &mut y);
        for j in 0..3 {
            let e: f64 = (0..3).map(|i| d[i][j] * x[i]).sum();
            assert!((y[j] - e).abs() < 1e-15);
        }
        assert_eq!(m.to_dense(), d);
    }

    #[test]
    fn reducible_matrix_is_rejected() {
        let m = SparseMatrix::from_dense(&[vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert!(leading_spectrum(&m, PowerOptions { max_iter: 1000, ..Default::default() }).is_err());
    }
}
