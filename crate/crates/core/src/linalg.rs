//! Sparse symmetric matrices and a profile (skyline) LDLᵀ factorization.
//!
//! The factorization runs without pivoting on a reverse Cuthill-McKee
//! ordering. An optional dense border row/column (a single linear
//! constraint) is appended last with a zero diagonal, which turns the
//! factorization into a solver for bordered KKT systems. The diagonal `D`
//! gives the inertia of the (bordered) matrix by Sylvester's law.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Compressed sparse row matrix. Column indices are sorted within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds an `n × n` matrix from triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for &(j, v) in row.iter() {
                if last == Some(j) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: values.to_vec(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[a..b]
            .iter()
            .copied()
            .zip(self.values[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.col_idx[a..b].binary_search(&j) {
            Ok(k) => self.values[a + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn total_sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `x^T A x`
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| x[i] * self.row(i).map(|(j, v)| v * x[j]).sum::<f64>())
            .sum()
    }

    /// `alpha * self + beta * other` (same dimension).
    pub fn linear_combination(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> CsrMatrix {
        assert_eq!(self.n, other.n);
        let mut trip = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n {
            trip.extend(self.row(i).map(|(j, v)| (i, j, alpha * v)));
            trip.extend(other.row(i).map(|(j, v)| (i, j, beta * v)));
        }
        CsrMatrix::from_triplets(self.n, &trip)
    }

    /// Principal submatrix on the index set `keep` (in the given order).
    pub fn principal_submatrix(&self, keep: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut trip = Vec::new();
        for (new_i, &old_i) in keep.iter().enumerate() {
            for (j, v) in self.row(old_i) {
                if map[j] != usize::MAX {
                    trip.push((new_i, map[j], v));
                }
            }
        }
        CsrMatrix::from_triplets(keep.len(), &trip)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }
}

/// Reverse Cuthill-McKee ordering of the adjacency graph of `a`.
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.n();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).filter(|&(j, _)| j != i).count()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut nbrs: Vec<usize> = Vec::new();
    while let Some(seed) = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| degree[i]) {
        let start = pseudo_peripheral(a, seed, &degree);
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            nbrs.clear();
            nbrs.extend(a.row(v).map(|(j, _)| j).filter(|&j| !visited[j]));
            nbrs.sort_by_key(|&j| (degree[j], j));
            for &j in &nbrs {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(a: &CsrMatrix, start: usize) -> Vec<usize> {
    let mut level = vec![usize::MAX; a.n()];
    level[start] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for (j, _) in a.row(v) {
            if level[j] == usize::MAX {
                level[j] = level[v] + 1;
                queue.push_back(j);
            }
        }
    }
    level
}

fn pseudo_peripheral(a: &CsrMatrix, seed: usize, degree: &[usize]) -> usize {
    let mut current = seed;
    let mut ecc = 0;
    for _ in 0..8 {
        let level = bfs_levels(a, current);
        let max_level = level.iter().filter(|&&l| l != usize::MAX).max().copied().unwrap_or(0);
        if max_level <= ecc && ecc > 0 {
            break;
        }
        ecc = max_level;
        current = (0..a.n())
            .filter(|&i| level[i] == max_level)
            .min_by_key(|&i| (degree[i], i))
            .unwrap_or(current);
    }
    current
}

/// Counts of positive, negative and zero pivots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

/// `P A Pᵀ = L D Lᵀ` in variable-band storage.
#[derive(Debug, Clone)]
pub struct LdltFactor {
    n: usize,
    /// `perm[new] = old`; the border (if any) is index `n - 1` in both.
    perm: Vec<usize>,
    first: Vec<usize>,
    row_start: Vec<usize>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    bordered: bool,
    pivot_floor: f64,
}

/// Relative pivot size below which a pivot counts as zero.
pub const PIVOT_TOL: f64 = 1e-13;

impl LdltFactor {
    /// Factors `a`. Fails on a (numerically) zero pivot.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        Self::factor_impl(a, None, true)
    }

    /// Factors the bordered matrix `[[a, c], [cᵀ, 0]]`.
    pub fn factor_bordered(a: &CsrMatrix, c: &[f64]) -> Result<Self> {
        Self::factor_impl(a, Some(c), true)
    }

    /// Like [`LdltFactor::factor_bordered`] but keeps going through tiny
    /// pivots (recorded as zero in the inertia) instead of failing.
    pub fn factor_bordered_lenient(a: &CsrMatrix, c: Option<&[f64]>) -> Result<Self> {
        Self::factor_impl(a, c, false)
    }

    fn factor_impl(a: &CsrMatrix, border: Option<&[f64]>, strict: bool) -> Result<Self> {
        let na = a.n();
        if let Some(c) = border {
            if c.len() != na {
                return Err(Error::LinearSolveFailure(format!(
                    "border length {} != {}",
                    c.len(),
                    na
                )));
            }
        }
        let mut perm = reverse_cuthill_mckee(a);
        let mut iperm = vec![0usize; na];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        let n = na + usize::from(border.is_some());
        if border.is_some() {
            perm.push(na);
        }

        // Row profiles in the permuted numbering.
        let mut first: Vec<usize> = (0..n).collect();
        for old_i in 0..na {
            let i = iperm[old_i];
            for (old_j, _) in a.row(old_i) {
                let j = iperm[old_j];
                if j < first[i] {
                    first[i] = j;
                }
            }
        }
        if let Some(c) = border {
            let f = (0..na).filter(|&old| c[old] != 0.0).map(|old| iperm[old]).min();
            first[na] = f.unwrap_or(na);
        }
        let mut row_start = Vec::with_capacity(n + 1);
        row_start.push(0);
        for i in 0..n {
            row_start.push(row_start[i] + (i - first[i]));
        }
        let mut lower = vec![0.0; row_start[n]];
        let mut diag = vec![0.0; n];
        for old_i in 0..na {
            let i = iperm[old_i];
            for (old_j, v) in a.row(old_i) {
                let j = iperm[old_j];
                if j < i {
                    lower[row_start[i] + j - first[i]] = v;
                } else if j == i {
                    diag[i] = v;
                }
            }
        }
        if let Some(c) = border {
            for old in 0..na {
                let j = iperm[old];
                if c[old] != 0.0 {
                    lower[row_start[na] + j - first[na]] = c[old];
                }
            }
        }

        let scale = diag.iter().fold(0.0f64, |m, d| m.max(d.abs())).max(
            lower.iter().fold(0.0f64, |m, d| m.max(d.abs())),
        );
        let pivot_floor = PIVOT_TOL * scale.max(f64::MIN_POSITIVE);

        // Row-oriented Crout: for each row i, compute L[i, first_i..i] and D[i].
        let mut g = Vec::new();
        for i in 0..n {
            let fi = first[i];
            let ri = row_start[i];
            g.clear();
            g.resize(i - fi, 0.0);
            for j in fi..i {
                let fj = first[j];
                let rj = row_start[j];
                let k0 = fi.max(fj);
                let mut s = lower[ri + j - fi];
                // s -= sum_k (L[i,k] D[k]) L[j,k]
                let gi = &g[k0 - fi..j - fi];
                let lj = &lower[rj + k0 - fj..rj + j - fj];
                s -= gi.iter().zip(lj).map(|(a, b)| a * b).sum::<f64>();
                g[j - fi] = s;
                let dj = diag[j];
                lower[ri + j - fi] = if dj == 0.0 { 0.0 } else { s / dj };
            }
            let mut d = diag[i];
            for k in fi..i {
                d -= g[k - fi] * lower[ri + k - fi];
            }
            if d.abs() <= pivot_floor {
                if strict {
                    return Err(Error::SingularKkt { row: i, pivot: d });
                }
                d = 0.0;
            }
            diag[i] = d;
        }

        Ok(Self {
            n,
            perm,
            first,
            row_start,
            lower,
            diag,
            bordered: border.is_some(),
            pivot_floor,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_bordered(&self) -> bool {
        self.bordered
    }

    pub fn pivot_floor(&self) -> f64 {
        self.pivot_floor
    }

    pub fn inertia(&self) -> Inertia {
        let mut out = Inertia {
            positive: 0,
            negative: 0,
            zero: 0,
        };
        for &d in &self.diag {
            if d > 0.0 {
                out.positive += 1;
            } else if d < 0.0 {
                out.negative += 1;
            } else {
                out.zero += 1;
            }
        }
        out
    }

    /// Smallest pivot magnitude.
    pub fn min_abs_pivot(&self) -> f64 {
        self.diag.iter().fold(f64::INFINITY, |m, d| m.min(d.abs()))
    }

    /// Solves the factored system. `rhs` has length `dim()` (for a bordered
    /// factor the last entry is the constraint right-hand side).
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let mut y: Vec<f64> = self.perm.iter().map(|&old| rhs[old]).collect();
        for i in 0..self.n {
            let fi = self.first[i];
            let ri = self.row_start[i];
            let row = &self.lower[ri..ri + i - fi];
            let s: f64 = row.iter().zip(&y[fi..i]).map(|(l, v)| l * v).sum();
            y[i] -= s;
        }
        for (yi, &d) in y.iter_mut().zip(&self.diag) {
            *yi = if d == 0.0 { 0.0 } else { *yi / d };
        }
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let ri = self.row_start[i];
            let xi = y[i];
            for (k, l) in self.lower[ri..ri + i - fi].iter().enumerate() {
                y[fi + k] -= l * xi;
            }
        }
        let mut x = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
