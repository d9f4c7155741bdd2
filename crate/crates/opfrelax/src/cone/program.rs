//! Canonical-form conic program: minimize c'x subject to A x = b and x in a
//! product of cones laid out as contiguous column spans.

/// One span of the variable vector.
///
/// `Psd(k)` covers k(k+1)/2 columns holding the lower triangle of a k-by-k
/// symmetric matrix column-packed with off-diagonals scaled by sqrt(2), so the
/// packed dot product equals the matrix inner product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    /// Unconstrained columns.
    Free(usize),
    NonNegative(usize),
    /// (t, u): t >= ||u||.
    SecondOrder(usize),
    /// (u, v, w): 2uv >= ||w||^2, u, v >= 0.
    RotatedSecondOrder(usize),
    /// Side length of the symmetric matrix block.
    Psd(usize),
}

impl Cone {
    /// Number of variable columns the span occupies.
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Free(d) | Cone::NonNegative(d) | Cone::SecondOrder(d) | Cone::RotatedSecondOrder(d) => d,
            Cone::Psd(k) => k * (k + 1) / 2,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProgramError {
    #[error("cone spans cover {0} columns, variable vector has {1}")]
    SpanMismatch(usize, usize),
    #[error("second-order cone of dimension {0} (needs >= 2)")]
    ConeTooSmall(usize),
    #[error("row {0} references column {1} outside the variable vector")]
    BadColumn(usize, usize),
}

/// Sparse canonical conic program.
#[derive(Debug, Clone, Default)]
pub struct ConicProgram {
    n_vars: usize,
    cones: Vec<Cone>,
    obj: Vec<f64>,
    obj_offset: f64,
    triplets: Vec<(usize, usize, f64)>,
    rhs: Vec<f64>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a cone span and returns its column range.
    pub fn add_cone(&mut self, cone: Cone) -> std::ops::Range<usize> {
        let start = self.n_vars;
        self.n_vars += cone.dim();
        self.obj.resize(self.n_vars, 0.0);
        self.cones.push(cone);
        start..self.n_vars
    }

    /// Appends an equality row sum(coeff * x[col]) = rhs; returns its index.
    pub fn add_row(&mut self, entries: &[(usize, f64)], rhs: f64) -> usize {
        let r = self.rhs.len();
        for &(col, v) in entries {
            if v != 0.0 {
                self.triplets.push((r, col, v));
            }
        }
        self.rhs.push(rhs);
        r
    }

    pub fn add_objective(&mut self, col: usize, coeff: f64) {
        self.obj[col] += coeff;
    }

    pub fn add_objective_offset(&mut self, v: f64) {
        self.obj_offset += v;
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn cones(&self) -> &[Cone] {
        &self.cones
    }

    pub fn objective(&self) -> &[f64] {
        &self.obj
    }

    pub fn objective_offset(&self) -> f64 {
        self.obj_offset
    }

    pub fn triplets(&self) -> &[(usize, usize, f64)] {
        &self.triplets
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Checks the span partition and entry bounds.
    pub fn validate(&self) -> Result<(), ProgramError> {
        let covered: usize = self.cones.iter().map(Cone::dim).sum();
        if covered != self.n_vars {
            return Err(ProgramError::SpanMismatch(covered, self.n_vars));
        }
        for c in &self.cones {
            match *c {
                Cone::SecondOrder(d) if d < 2 => return Err(ProgramError::ConeTooSmall(d)),
                Cone::RotatedSecondOrder(d) if d < 3 => return Err(ProgramError::ConeTooSmall(d)),
                _ => {}
            }
        }
        for &(r, col, _) in &self.triplets {
            if col >= self.n_vars {
                return Err(ProgramError::BadColumn(r, col));
            }
        }
        Ok(())
    }

    /// Plain-text sparse dump for external cross-validation.
    ///
    /// Header: `vars rows`, one `cone <kind> <dim>` line per span, `obj col
    /// value` lines, `rhs row value` lines, then `row col value` triplets.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        writeln!(s, "conic-program {} vars {} rows", self.n_vars, self.n_rows()).unwrap();
        for c in &self.cones {
            match *c {
                Cone::Free(d) => writeln!(s, "cone free {d}").unwrap(),
                Cone::NonNegative(d) => writeln!(s, "cone nonneg {d}").unwrap(),
                Cone::SecondOrder(d) => writeln!(s, "cone soc {d}").unwrap(),
                Cone::RotatedSecondOrder(d) => writeln!(s, "cone rsoc {d}").unwrap(),
                Cone::Psd(k) => writeln!(s, "cone psd {k}").unwrap(),
            }
        }
        for (col, &v) in self.obj.iter().enumerate() {
            if v != 0.0 {
                writeln!(s, "obj {col} {v}").unwrap();
            }
        }
        if self.obj_offset != 0.0 {
            writeln!(s, "objoffset {}", self.obj_offset).unwrap();
        }
        for (r, &v) in self.rhs.iter().enumerate() {
            if v != 0.0 {
                writeln!(s, "rhs {r} {v}").unwrap();
            }
        }
        for &(r, c, v) in &self.triplets {
            writeln!(s, "{r} {c} {v}").unwrap();
        }
        s
    }
}

/// Packed lower-triangular (svec) indexing helpers for `Cone::Psd`.
pub mod svec {
    /// sqrt(2), the off-diagonal packing scale.
    pub const SQRT2: f64 = std::f64::consts::SQRT_2;

    /// Packed length of a side-k block.
    pub fn len(k: usize) -> usize {
        k * (k + 1) / 2
    }

    /// Offset of entry (r, c) with r >= c in column-major packed order.
    pub fn offset(k: usize, r: usize, c: usize) -> usize {
        debug_assert!(r >= c && r < k);
        // columns 0..c fully stored: sum_{j<c} (k - j)
        c * k - c * (c + 1) / 2 + c + (r - c)
    }

    /// Scale applied to the matrix entry when packing.
    pub fn scale(r: usize, c: usize) -> f64 {
        if r == c {
            1.0
        } else {
            SQRT2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spans_partition() {
        let mut p = ConicProgram::new();
        let f = p.add_cone(Cone::Free(2));
        let n = p.add_cone(Cone::NonNegative(3));
        let q = p.add_cone(Cone::SecondOrder(3));
        let s = p.add_cone(Cone::Psd(2));
        assert_eq!((f.start, f.end), (0, 2));
        assert_eq!((n.start, n.end), (2, 5));
        assert_eq!((q.start, q.end), (5, 8));
        assert_eq!((s.start, s.end), (8, 11));
        p.validate().unwrap();
    }

    #[test]
    fn svec_offsets_cover_block() {
        let k = 5;
        let mut seen = vec![false; svec::len(k)];
        for c in 0..k {
            for r in c..k {
                let o = svec::offset(k, r, c);
                assert!(!seen[o]);
                seen[o] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn svec_inner_product_matches_matrix() {
        // pack two random symmetric 3x3 matrices and compare inner products
        let a = [[2.0, 0.5, -1.0], [0.5, 1.0, 0.25], [-1.0, 0.25, 3.0]];
        let b = [[1.0, -0.5, 0.0], [-0.5, 2.0, 1.5], [0.0, 1.5, -1.0]];
        let pack = |m: &[[f64; 3]; 3]| {
            let mut v = vec![0.0; svec::len(3)];
            for c in 0..3 {
                for r in c..3 {
                    v[svec::offset(3, r, c)] = svec::scale(r, c) * m[r][c];
                }
            }
            v
        };
        let va = pack(&a);
        let vb = pack(&b);
        let packed: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
        let full: f64 = (0..3)
            .flat_map(|r| (0..3).map(move |c| a[r][c] * b[r][c]))
            .sum();
        approx::assert_relative_eq!(packed, full, epsilon = 1e-14);
    }

    #[test]
    fn dump_roundtrips_dimensions() {
        let mut p = ConicProgram::new();
        p.add_cone(Cone::NonNegative(2));
        p.add_row(&[(0, 1.0), (1, 2.0)], 3.0);
        p.add_objective(0, 1.0);
        let d = p.dump();
        assert!(d.starts_with("conic-program 2 vars 1 rows"));
        assert!(d.contains("cone nonneg 2"));
        assert!(d.contains("obj 0 1"));
    }
}
