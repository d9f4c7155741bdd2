//! Compressed sparse column matrices and a quasi-definite LDL^T factorization
//! (no pivoting, static regularization) with a greedy minimum-degree ordering.

/// Column-major sparse matrix; row indices sorted within each column.
#[derive(Debug, Clone)]
pub struct CscMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    /// Builds from triplets, summing duplicates.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_unstable_by_key(|&k| (triplets[k].1, triplets[k].0));
        let mut col_ptr = vec![0usize; n_cols + 1];
        let mut row_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &k in &order {
            let (r, c, v) = triplets[k];
            debug_assert!(r < n_rows && c < n_cols);
            if last == Some((c, r)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_idx.push(r);
                values.push(v);
                last = Some((c, r));
            }
            col_ptr[c + 1] = row_idx.len();
        }
        // make col_ptr monotone (columns without entries)
        for c in 0..n_cols {
            if col_ptr[c + 1] < col_ptr[c] {
                col_ptr[c + 1] = col_ptr[c];
            }
        }
        CscMatrix { n_rows, n_cols, col_ptr, row_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// y += alpha * A x
    pub fn mul_acc(&self, x: &[f64], alpha: f64, y: &mut [f64]) {
        for c in 0..self.n_cols {
            let xc = alpha * x[c];
            if xc != 0.0 {
                for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                    y[self.row_idx[p]] += self.values[p] * xc;
                }
            }
        }
    }

    /// y += alpha * A' x
    pub fn mul_transpose_acc(&self, x: &[f64], alpha: f64, y: &mut [f64]) {
        for c in 0..self.n_cols {
            let mut acc = 0.0;
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                acc += self.values[p] * x[self.row_idx[p]];
            }
            y[c] += alpha * acc;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Greedy minimum-degree fill-reducing ordering of a symmetric pattern.
///
/// `pairs` are off-diagonal (row, col) entries of either triangle. Returns
/// `perm` with `perm[new] = old`. Ties break on the smaller vertex.
pub fn min_degree_order(n: usize, pairs: impl Iterator<Item = (usize, usize)>) -> Vec<usize> {
    use std::collections::hash_set::HashSet;
    let mut adj: Vec<HashSet<usize>> = vec![HashSet::new(); n];
    for (r, c) in pairs {
        if r != c {
            adj[r].insert(c);
            adj[c].insert(r);
        }
    }
    let mut heap: std::collections::BinaryHeap<std::cmp::Reverse<(usize, usize)>> =
        (0..n).map(|v| std::cmp::Reverse((adj[v].len(), v))).collect();
    let mut dead = vec![false; n];
    let mut perm = Vec::with_capacity(n);
    while let Some(std::cmp::Reverse((deg, v))) = heap.pop() {
        if dead[v] {
            continue;
        }
        if deg != adj[v].len() {
            // stale key, reinsert with the current degree
            heap.push(std::cmp::Reverse((adj[v].len(), v)));
            continue;
        }
        dead[v] = true;
        perm.push(v);
        let nbrs: Vec<usize> = adj[v].iter().copied().filter(|&u| !dead[u]).collect();
        for &u in &nbrs {
            adj[u].remove(&v);
        }
        for i in 0..nbrs.len() {
            for j in i + 1..nbrs.len() {
                let (a, b) = (nbrs[i], nbrs[j]);
                if adj[a].insert(b) {
                    adj[b].insert(a);
                }
            }
        }
        for &u in &nbrs {
            heap.push(std::cmp::Reverse((adj[u].len(), u)));
        }
        adj[v].clear();
    }
    perm
}

/// LDL^T factorization of a permuted symmetric quasi-definite matrix.
///
/// Input is the upper triangle in CSC form with every diagonal entry present
/// structurally. `sign[i]` gives the expected sign of D[i] (+1 / -1); pivots
/// that collapse numerically are replaced by `sign[i] * dyn_reg`.
pub struct LdlFactor {
    n: usize,
    perm: Vec<usize>,
    iperm: Vec<usize>,
    // permuted upper-triangular structure
    up_colptr: Vec<usize>,
    up_rowidx: Vec<usize>,
    up_map: Vec<usize>, // position in the original CSC values array
    etree: Vec<i64>,
    l_colptr: Vec<usize>,
    l_rowidx: Vec<usize>,
    l_values: Vec<f64>,
    d: Vec<f64>,
    sign: Vec<f64>,
    dyn_reg: f64,
    pub n_dyn_reg: usize,
    // workspaces
    work_y: Vec<f64>,
    work_marker: Vec<bool>,
    work_elim: Vec<usize>,
    work_yidx: Vec<usize>,
    work_lnz: Vec<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum LdlError {
    #[error("matrix is structurally singular at permuted column {0}")]
    MissingDiagonal(usize),
}

impl LdlFactor {
    /// Symbolic analysis: ordering, permuted pattern, elimination tree,
    /// column counts. `upper` must hold the upper triangle (r <= c).
    pub fn analyze(n: usize, upper: &CscMatrix, sign: Vec<f64>, dyn_reg: f64) -> Result<Self, LdlError> {
        let perm = min_degree_order(
            n,
            (0..upper.n_cols).flat_map(|c| {
                (upper.col_ptr[c]..upper.col_ptr[c + 1]).map(move |p| (upper.row_idx[p], c))
            }),
        );
        let mut iperm = vec![0usize; n];
        for (newi, &old) in perm.iter().enumerate() {
            iperm[old] = newi;
        }
        // permuted upper triangle: entry (r, c) -> (min(ip r, ip c), max(..))
        let mut trips: Vec<(usize, usize, usize)> = Vec::with_capacity(upper.nnz());
        for c in 0..upper.n_cols {
            for p in upper.col_ptr[c]..upper.col_ptr[c + 1] {
                let (pr, pc) = (iperm[upper.row_idx[p]], iperm[c]);
                let (r2, c2) = (pr.min(pc), pr.max(pc));
                trips.push((r2, c2, p));
            }
        }
        trips.sort_unstable_by_key(|&(r, c, _)| (c, r));
        let mut up_colptr = vec![0usize; n + 1];
        let mut up_rowidx = Vec::with_capacity(trips.len());
        let mut up_map = Vec::with_capacity(trips.len());
        for &(r, c, p) in &trips {
            up_rowidx.push(r);
            up_map.push(p);
            up_colptr[c + 1] = up_rowidx.len();
        }
        for c in 0..n {
            if up_colptr[c + 1] < up_colptr[c] {
                up_colptr[c + 1] = up_colptr[c];
            }
        }
        // elimination tree and column counts
        let mut etree = vec![-1i64; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![usize::MAX; n];
        for j in 0..n {
            work[j] = j;
            let mut has_diag = false;
            for p in up_colptr[j]..up_colptr[j + 1] {
                let mut i = up_rowidx[p];
                if i == j {
                    has_diag = true;
                    continue;
                }
                while work[i] != j {
                    if etree[i] == -1 {
                        etree[i] = j as i64;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i] as usize;
                }
            }
            if !has_diag {
                return Err(LdlError::MissingDiagonal(j));
            }
        }
        let mut l_colptr = vec![0usize; n + 1];
        for j in 0..n {
            l_colptr[j + 1] = l_colptr[j] + lnz[j];
        }
        let l_nnz = l_colptr[n];
        let perm_sign = perm.iter().map(|&old| sign[old]).collect();
        Ok(LdlFactor {
            n,
            perm,
            iperm,
            up_colptr,
            up_rowidx,
            up_map,
            etree,
            l_colptr,
            l_rowidx: vec![0; l_nnz],
            l_values: vec![0.0; l_nnz],
            d: vec![0.0; n],
            sign: perm_sign,
            dyn_reg,
            n_dyn_reg: 0,
            work_y: vec![0.0; n],
            work_marker: vec![false; n],
            work_elim: vec![0; n],
            work_yidx: vec![0; n],
            work_lnz: vec![0; n],
        })
    }

    /// Numeric factorization given the original (unpermuted) values array the
    /// symbolic pass was built against.
    pub fn factor(&mut self, values: &[f64]) {
        let n = self.n;
        self.n_dyn_reg = 0;
        self.work_lnz.iter_mut().for_each(|x| *x = 0);
        self.work_y.iter_mut().for_each(|x| *x = 0.0);
        self.work_marker.iter_mut().for_each(|x| *x = false);
        for k in 0..n {
            let mut nnz_y = 0usize;
            let mut dk = 0.0;
            for p in self.up_colptr[k]..self.up_colptr[k + 1] {
                let i = self.up_rowidx[p];
                let v = values[self.up_map[p]];
                if i == k {
                    dk += v;
                    continue;
                }
                self.work_y[i] += v; // += sums structural duplicates
                let mut b = i;
                let mut n_elim = 0usize;
                while !self.work_marker[b] {
                    self.work_marker[b] = true;
                    self.work_elim[n_elim] = b;
                    n_elim += 1;
                    match self.etree[b] {
                        -1 => break,
                        next => {
                            let next = next as usize;
                            if next >= k {
                                break;
                            }
                            b = next;
                        }
                    }
                }
                while n_elim > 0 {
                    n_elim -= 1;
                    self.work_yidx[nnz_y] = self.work_elim[n_elim];
                    nnz_y += 1;
                }
            }
            for t in (0..nnz_y).rev() {
                let j = self.work_yidx[t];
                let yj = self.work_y[j];
                self.work_y[j] = 0.0;
                self.work_marker[j] = false;
                let start = self.l_colptr[j];
                let filled = self.work_lnz[j];
                for p in start..start + filled {
                    self.work_y[self.l_rowidx[p]] -= self.l_values[p] * yj;
                }
                let slot = start + filled;
                let lkj = yj / self.d[j];
                self.l_rowidx[slot] = k;
                self.l_values[slot] = lkj;
                self.work_lnz[j] += 1;
                dk -= yj * lkj;
            }
            // pivots that collapse numerically take the expected sign
            if dk.abs() < self.dyn_reg {
                dk = self.sign[k] * self.dyn_reg;
                self.n_dyn_reg += 1;
            }
            self.d[k] = dk;
        }
    }

    /// Solves K x = b in place using the factorization.
    pub fn solve(&self, b: &mut [f64], scratch: &mut Vec<f64>) {
        let n = self.n;
        scratch.resize(n, 0.0);
        for i in 0..n {
            scratch[i] = b[self.perm[i]];
        }
        // L z = b (unit lower)
        for j in 0..n {
            let zj = scratch[j];
            if zj != 0.0 {
                for p in self.l_colptr[j]..self.l_colptr[j + 1] {
                    scratch[self.l_rowidx[p]] -= self.l_values[p] * zj;
                }
            }
        }
        for j in 0..n {
            scratch[j] /= self.d[j];
        }
        // L' x = z
        for j in (0..n).rev() {
            let mut acc = scratch[j];
            for p in self.l_colptr[j]..self.l_colptr[j + 1] {
                acc -= self.l_values[p] * scratch[self.l_rowidx[p]];
            }
            scratch[j] = acc;
        }
        for i in 0..n {
            b[self.perm[i]] = scratch[i];
        }
    }
}
