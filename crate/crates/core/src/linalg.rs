//! Sparse symmetric positive-definite solves.
//!
//! Matrices are assembled from triplets, reordered with reverse
//! Cuthill–McKee and factorised with an envelope (skyline) Cholesky
//! decomposition. Every solve is followed by a residual check and, when
//! needed, a few steps of iterative refinement.

use std::collections::VecDeque;

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("relative residual {residual:e} above tolerance {tolerance:e}")]
    Residual { residual: f64, tolerance: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Accumulates symmetric entries; only `(i, j)` with `i >= j` is stored, and
/// entries given in the upper triangle are mirrored.
#[derive(Clone, Debug)]
pub struct TripletBuilder<T> {
    n: usize,
    entries: Vec<(usize, usize, T)>,
}

impl<T: Scalar> TripletBuilder<T> {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Adds `value` at `(i, j)` of a symmetric matrix. Off-diagonal values
    /// should be added once per unordered pair.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, value: T) {
        if i >= j {
            self.entries.push((i, j, value));
        } else {
            self.entries.push((j, i, value));
        }
    }

    pub fn build(mut self) -> SparseSymmetric<T> {
        self.entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut cols = Vec::with_capacity(self.entries.len());
        let mut vals: Vec<T> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in self.entries {
            if last == Some((i, j)) {
                *vals.last_mut().expect("non-empty") += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseSymmetric {
            n: self.n,
            row_ptr,
            cols,
            vals,
        }
    }
}

/// Lower triangle of a symmetric matrix in compressed row form.
#[derive(Clone, Debug)]
pub struct SparseSymmetric<T> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Scalar> SparseSymmetric<T> {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (self.cols[p], self.vals[p]))
    }

    pub fn mul(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                y[i] += v * x[j];
                if j != i {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }

    pub fn quadratic_form(&self, x: &[T]) -> T {
        self.mul(x).iter().zip(x).map(|(&a, &b)| a * b).sum()
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for i in 0..self.n {
            for (j, _) in self.row(i) {
                if j != i {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }
}

/// Reverse Cuthill–McKee ordering; `perm[new] = old`.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.sort_by_key(|&v| (adj[v].len(), v));
    for &seed in &nodes {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(adj, seed);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (adj[w].len(), w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Node of (approximately) maximal eccentricity in the component of `seed`.
fn pseudo_peripheral(adj: &[Vec<usize>], seed: usize) -> usize {
    let mut current = seed;
    let mut best_depth = 0;
    for _ in 0..8 {
        let (far, depth) = bfs_farthest(adj, current);
        if depth <= best_depth {
            break;
        }
        best_depth = depth;
        current = far;
    }
    current
}

fn bfs_farthest(adj: &[Vec<usize>], start: usize) -> (usize, usize) {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut far = (start, 0);
    while let Some(v) = queue.pop_front() {
        let d = dist[v];
        if d > far.1 || (d == far.1 && adj[v].len() < adj[far.0].len()) {
            far = (v, d);
        }
        for &w in &adj[v] {
            if dist[w] == usize::MAX {
                dist[w] = d + 1;
                queue.push_back(w);
            }
        }
    }
    far
}

/// Envelope Cholesky factor `P A P^T = L L^T`.
#[derive(Clone, Debug)]
pub struct SkylineCholesky<T> {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    /// First column stored in each (permuted) row.
    first: Vec<usize>,
    /// Start of each row in `values`.
    start: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SkylineCholesky<T> {
    pub fn factor(a: &SparseSymmetric<T>) -> Result<Self, LinalgError> {
        let n = a.dim();
        let perm = reverse_cuthill_mckee(&a.adjacency());
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }

        let mut first: Vec<usize> = (0..n).collect();
        for i in 0..n {
            for (j, _) in a.row(i) {
                let (pi, pj) = (inv[i], inv[j]);
                let (r, c) = if pi >= pj { (pi, pj) } else { (pj, pi) };
                first[r] = first[r].min(c);
            }
        }
        let mut start = vec![0usize; n + 1];
        for r in 0..n {
            start[r + 1] = start[r] + (r - first[r] + 1);
        }
        let mut values = vec![T::zero(); start[n]];
        for i in 0..n {
            for (j, v) in a.row(i) {
                let (pi, pj) = (inv[i], inv[j]);
                let (r, c) = if pi >= pj { (pi, pj) } else { (pj, pi) };
                values[start[r] + c - first[r]] += v;
            }
        }

        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let row_i = &values[start[i] + lo - fi..start[i] + j - fi];
                let row_j = &values[start[j] + lo - fj..start[j] + j - fj];
                let dot: T = row_i.iter().zip(row_j).map(|(&x, &y)| x * y).sum();
                let diag = values[start[j] + j - fj];
                let idx = start[i] + j - fi;
                values[idx] = (values[idx] - dot) / diag;
            }
            let row = &values[start[i]..start[i] + i - fi];
            let sq: T = row.iter().map(|&x| x * x).sum();
            let idx = start[i] + i - fi;
            let d = values[idx] - sq;
            if !(d > T::zero()) {
                return Err(LinalgError::NotPositiveDefinite {
                    pivot: perm[i],
                    value: d.as_f64(),
                });
            }
            values[idx] = d.sqrt();
        }

        Ok(Self {
            n,
            perm,
            first,
            start,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored factor entries.
    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut y: Vec<T> = self.perm.iter().map(|&old| b[old]).collect();
        // L y = b
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.values[self.start[i]..self.start[i] + i - fi];
            let dot: T = row.iter().zip(&y[fi..i]).map(|(&l, &x)| l * x).sum();
            y[i] = (y[i] - dot) / self.values[self.start[i] + i - fi];
        }
        // L^T x = y
        for i in (0..n).rev() {
            let fi = self.first[i];
            y[i] /= self.values[self.start[i] + i - fi];
            let xi = y[i];
            let row = &self.values[self.start[i]..self.start[i] + i - fi];
            for (k, &l) in row.iter().enumerate() {
                y[fi + k] -= l * xi;
            }
        }
        let mut x = vec![T::zero(); n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

/// Default relative residual accepted from a linear solve.
pub fn default_tolerance<T: Scalar>() -> T {
    T::lit(1e-10).max(T::lit(1e3) * T::epsilon())
}

fn norm<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// Solves `A x = b` and checks `|b - A x| <= tol |b|`, refining if needed.
pub fn solve_spd<T: Scalar>(
    a: &SparseSymmetric<T>,
    b: &[T],
    tol: T,
) -> Result<Vec<T>, LinalgError> {
    if b.len() != a.dim() {
        return Err(LinalgError::Dimension(format!(
            "rhs of length {} for a {}x{} matrix",
            b.len(),
            a.dim(),
            a.dim()
        )));
    }
    if a.dim() == 0 {
        return Ok(Vec::new());
    }
    let chol = SkylineCholesky::factor(a)?;
    solve_refined(a, &chol, b, tol)
}

/// Solve with an existing factor, followed by residual-checked refinement.
pub fn solve_refined<T: Scalar>(
    a: &SparseSymmetric<T>,
    chol: &SkylineCholesky<T>,
    b: &[T],
    tol: T,
) -> Result<Vec<T>, LinalgError> {
    let bnorm = norm(b);
    let mut x = chol.solve(b);
    if bnorm == T::zero() {
        return Ok(x);
    }
    let mut rel = T::infinity();
    for _ in 0..4 {
        let ax = a.mul(&x);
        let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
        rel = norm(&r) / bnorm;
        if rel <= tol {
            return Ok(x);
        }
        let dx = chol.solve(&r);
        for (xi, di) in x.iter_mut().zip(dx) {
            *xi += di;
        }
    }
    Err(LinalgError::Residual {
        residual: rel.as_f64(),
        tolerance: tol.as_f64(),
    })
}
