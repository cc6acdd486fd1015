//! Sparse storage plus the two direct solvers the time stepper needs: Thomas
//! elimination for 1D tridiagonal systems and banded LU with partial pivoting
//! for 2D nine-point systems.

use std::collections::BTreeMap;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl SparseMatrix {
    /// Assembles from per-row maps; duplicate entries are summed by the caller.
    pub(crate) fn from_rows(rows: Vec<BTreeMap<usize, f64>>) -> Self {
        let n = rows.len();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for row in rows {
            for (c, v) in row {
                indices.push(c);
                data.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            n,
            indptr,
            indices,
            data,
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()]
            .iter()
            .copied()
            .zip(self.data[r].iter().copied())
    }

    /// Entry `(i, j)`, zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `y += alpha * A x`.
    pub fn matvec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let s: f64 = self.row(i).map(|(c, v)| v * x[c]).sum();
            *yi += alpha * s;
        }
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: f64, other: &Self, beta: f64) -> Self {
        let rows = (0..self.n)
            .map(|i| {
                let mut row = BTreeMap::new();
                for (c, v) in self.row(i) {
                    *row.entry(c).or_insert(0.0) += alpha * v;
                }
                for (c, v) in other.row(i) {
                    *row.entry(c).or_insert(0.0) += beta * v;
                }
                row
            })
            .collect();
        Self::from_rows(rows)
    }
}

/// Solves a tridiagonal system in place. `lower[0]` and `upper[n-1]` are
/// ignored. Returns `None` on a zero pivot.
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &mut [f64],
) -> Option<()> {
    let n = diag.len();
    if n == 0 {
        return Some(());
    }
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 || !beta.is_finite() {
        return None;
    }
    rhs[0] /= beta;
    for i in 1..n {
        c[i - 1] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * c[i - 1];
        if beta == 0.0 || !beta.is_finite() {
            return None;
        }
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
    Some(())
}

/// LU factorization of a banded matrix with row pivoting.
///
/// Row `i` stores columns `i - kl ..= i + kl + ku`; the extra `kl` columns
/// hold fill-in from pivoting.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    ab: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandLu {
    fn slot(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    /// Factors the `n x n` matrix given by `entries(i) -> [(j, a_ij)]`.
    /// Returns `None` if a pivot column is numerically zero.
    pub fn factor(
        n: usize,
        kl: usize,
        ku: usize,
        entries: impl Fn(usize) -> Vec<(usize, f64)>,
    ) -> Option<Self> {
        let width = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            kl,
            ku,
            width,
            ab: vec![0.0; n * width],
            pivots: vec![0; n],
        };
        for i in 0..n {
            for (j, v) in entries(i) {
                debug_assert!(j + kl >= i && j <= i + ku, "entry ({i}, {j}) outside band");
                let s = lu.slot(i, j);
                lu.ab[s] += v;
            }
        }
        let scale = lu.ab.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.ab[lu.slot(k, k)].abs();
            for r in k + 1..=last_row {
                let v = lu.ab[lu.slot(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if !(best > 1e-300_f64.max(scale * 1e-15)) {
                return None;
            }
            lu.pivots[k] = p;
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (lu.slot(k, j), lu.slot(p, j));
                    lu.ab.swap(a, b);
                }
            }
            let pivot = lu.ab[lu.slot(k, k)];
            for r in k + 1..=last_row {
                let sr = lu.slot(r, k);
                let m = lu.ab[sr] / pivot;
                lu.ab[sr] = m;
                if m == 0.0 {
                    continue;
                }
                for j in k + 1..=last_col {
                    let (a, b) = (lu.slot(k, j), lu.slot(r, j));
                    lu.ab[b] -= m * lu.ab[a];
                }
            }
        }
        Some(lu)
    }

    pub fn solve(&self, rhs: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                rhs.swap(k, p);
            }
            let last_row = (k + self.kl).min(n - 1);
            for r in k + 1..=last_row {
                rhs[r] -= self.ab[self.slot(r, k)] * rhs[k];
            }
        }
        for k in (0..n).rev() {
            let last_col = (k + self.kl + self.ku).min(n - 1);
            let mut s = rhs[k];
            for j in k + 1..=last_col {
                s -= self.ab[self.slot(k, j)] * rhs[j];
            }
            rhs[k] = s / self.ab[self.slot(k, k)];
        }
    }
}
