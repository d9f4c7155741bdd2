//! Primal-dual path-following interior-point solver for conic programs over
//! products of nonnegative, second-order, rotated second-order, and PSD
//! cones.
//!
//! The canonical program (min c'x, A x = b, x in K) is reduced to the
//! homogeneous self-dual embedding with slack duplication: all columns become
//! free internally and every cone span contributes identity-like rows
//! G x + s = 0 with s in the matching internal cone (rotated cones map to
//! plain second-order cones through an orthogonal change of basis). Search
//! directions use Nesterov-Todd scaling with Mehrotra predictor-corrector
//! steps; the reduced KKT system is factorized by a sparse quasi-definite
//! LDL^T with static regularization and iterative refinement.

pub mod cones;
pub mod sparse;

use crate::cone::{Cone, ConicProgram};
use cones::{ConeSpec, Scaling};
use sparse::{CscMatrix, LdlFactor};

#[derive(Debug, Clone)]
pub struct IpmSettings {
    pub max_iterations: usize,
    /// Primal/dual feasibility tolerance (scaled residuals).
    pub feas_tol: f64,
    /// Absolute/relative duality-gap tolerance.
    pub gap_tol: f64,
    /// Fraction-to-boundary step factor in (0, 1).
    pub step_fraction: f64,
    /// Certificate residual threshold for infeasibility declarations.
    pub infeas_tol: f64,
    /// Static KKT regularization.
    pub static_reg: f64,
    /// LDL dynamic pivot floor.
    pub dyn_reg: f64,
    /// Iterative refinement sweeps per KKT solve.
    pub refine_steps: usize,
    /// Ruiz equilibration passes.
    pub equilibrate_iters: usize,
    /// Collect a plain-text iteration log into the result.
    pub collect_log: bool,
}

impl Default for IpmSettings {
    fn default() -> Self {
        IpmSettings {
            max_iterations: 200,
            feas_tol: 1e-8,
            gap_tol: 1e-8,
            step_fraction: 0.99,
            infeas_tol: 1e-8,
            static_reg: 1e-8,
            dyn_reg: 5e-13,
            refine_steps: 3,
            equilibrate_iters: 4,
            collect_log: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpmStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    IterationLimit,
    NumericalFailure,
}

/// Solver output in the caller's (unscaled) coordinates.
#[derive(Debug, Clone)]
pub struct IpmResult {
    pub status: IpmStatus,
    /// Primal solution (status Optimal), or the unboundedness ray
    /// (status DualInfeasible, normalized c'x = -1).
    pub x: Vec<f64>,
    /// Equality multipliers with the convention s = c - A'y in K*;
    /// for status PrimalInfeasible this is the Farkas ray normalized
    /// to b'y = -1 with A'y in K*.
    pub y: Vec<f64>,
    /// Dual slack (physical cone copy of the dual).
    pub dual_slack: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    pub log: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum IpmError {
    #[error("program validation failed: {0}")]
    Program(#[from] crate::cone::ProgramError),
    #[error("row {0} is empty but has right-hand side {1}")]
    InconsistentZeroRow(usize, f64),
    #[error("rows {0} and {1} are identical but have different right-hand sides")]
    InconsistentDuplicateRows(usize, usize),
    #[error("KKT factorization failed: {0}")]
    Factorization(#[from] sparse::LdlError),
}

/// KKT residuals of a result against its program: (||Ax - b||_inf,
/// ||A'y + s - c||_inf, x's).
pub fn kkt_residuals(prog: &ConicProgram, result: &IpmResult) -> (f64, f64, f64) {
    let n = prog.n_vars();
    let m = prog.n_rows();
    let mut ax = vec![0.0; m];
    let mut aty = vec![0.0; n];
    for &(r, c, v) in prog.triplets() {
        ax[r] += v * result.x[c];
        aty[c] += v * result.y[r];
    }
    let pres = ax
        .iter()
        .zip(prog.rhs())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let dres = (0..n)
        .map(|j| (aty[j] + result.dual_slack[j] - prog.objective()[j]).abs())
        .fold(0.0f64, f64::max);
    let gap: f64 = result.x.iter().zip(&result.dual_slack).map(|(a, b)| a * b).sum();
    (pres, dres, gap)
}

/// Margin of a vector against the program's cone product (>= 0 means inside;
/// free spans measure -|v|, so only the zero vector is "inside").
pub fn cone_margin(prog: &ConicProgram, v: &[f64]) -> f64 {
    let mut margin = f64::INFINITY;
    let mut at = 0usize;
    for cone in prog.cones() {
        let d = cone.dim();
        let span = &v[at..at + d];
        let m = match *cone {
            Cone::Free(_) => span.iter().fold(f64::INFINITY, |a, &x| a.min(-x.abs())),
            Cone::NonNegative(_) => ConeSpec::NonNeg(d).margin(span),
            Cone::SecondOrder(_) => ConeSpec::Soc(d).margin(span),
            Cone::RotatedSecondOrder(_) => {
                let u = span[0];
                let w: f64 = span[2..].iter().map(|x| x * x).sum();
                u.min(span[1]).min(2.0 * u * span[1] - w)
            }
            Cone::Psd(k) => ConeSpec::Psd(k).margin(span),
        };
        margin = margin.min(m);
        at += d;
    }
    margin
}

/// Mechanically checks a primal infeasibility certificate: b'y = -1 and
/// A'y in the dual cone within `tol`. Returns the membership violation when
/// the certificate is accepted.
pub fn verify_infeasibility_certificate(prog: &ConicProgram, y: &[f64], tol: f64) -> Option<f64> {
    let n = prog.n_vars();
    let mut aty = vec![0.0; n];
    for &(r, c, v) in prog.triplets() {
        aty[c] += v * y[r];
    }
    let by: f64 = prog.rhs().iter().zip(y).map(|(b, y)| b * y).sum();
    if (by + 1.0).abs() > 1e-6 {
        return None;
    }
    let margin = cone_margin(prog, &aty);
    let res = (-margin).max(0.0);
    (res <= tol).then_some(res)
}

// ---------------------------------------------------------------------------
// internal reduced form

struct Reduced {
    n: usize,
    m: usize,
    p: usize,
    a: CscMatrix,
    g: CscMatrix,
    b: Vec<f64>,
    h: Vec<f64>,
    c: Vec<f64>,
    specs: Vec<ConeSpec>,
    spec_starts: Vec<usize>,
    /// Original row index of each kept equality row.
    kept_rows: Vec<usize>,
    n_rows_orig: usize,
    // scaling data
    d_col: Vec<f64>,
    d_row_a: Vec<f64>,
    d_row_g: Vec<f64>,
    sigma_obj: f64,
    sigma_rhs: f64,
}

const FRAC_1_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn reduce(prog: &ConicProgram, settings: &IpmSettings) -> Result<Reduced, IpmError> {
    prog.validate()?;
    let n = prog.n_vars();

    // presolve: drop empty rows and exact duplicates
    let m_all = prog.n_rows();
    let mut row_entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m_all];
    for &(r, c, v) in prog.triplets() {
        row_entries[r].push((c, v));
    }
    for e in &mut row_entries {
        e.sort_unstable_by_key(|&(c, _)| c);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(e.len());
        for &(c, v) in e.iter() {
            if let Some(last) = merged.last_mut() {
                if last.0 == c {
                    last.1 += v;
                    continue;
                }
            }
            merged.push((c, v));
        }
        merged.retain(|&(_, v)| v != 0.0);
        *e = merged;
    }
    let mut seen: std::collections::HashMap<Vec<(usize, u64)>, usize> =
        std::collections::HashMap::new();
    let mut kept_rows = Vec::new();
    let mut a_trip = Vec::new();
    let mut b = Vec::new();
    for r in 0..m_all {
        let rhs = prog.rhs()[r];
        if row_entries[r].is_empty() {
            if rhs.abs() > 1e-12 {
                return Err(IpmError::InconsistentZeroRow(r, rhs));
            }
            continue;
        }
        let key: Vec<(usize, u64)> =
            row_entries[r].iter().map(|&(c, v)| (c, v.to_bits())).collect();
        if let Some(&first) = seen.get(&key) {
            if (prog.rhs()[first] - rhs).abs() > 1e-12 {
                return Err(IpmError::InconsistentDuplicateRows(first, r));
            }
            continue;
        }
        seen.insert(key, r);
        let new_r = kept_rows.len();
        for &(c, v) in &row_entries[r] {
            a_trip.push((new_r, c, v));
        }
        b.push(rhs);
        kept_rows.push(r);
    }
    let m = kept_rows.len();

    // cone-membership rows
    let mut g_trip: Vec<(usize, usize, f64)> = Vec::new();
    let mut specs = Vec::new();
    let mut spec_starts = Vec::new();
    let mut at = 0usize;
    let mut p = 0usize;
    for &cone in prog.cones() {
        let d = cone.dim();
        match cone {
            Cone::Free(_) => {}
            Cone::NonNegative(_) | Cone::SecondOrder(_) | Cone::Psd(_) => {
                for i in 0..d {
                    g_trip.push((p + i, at + i, -1.0));
                }
                spec_starts.push(p);
                specs.push(match cone {
                    Cone::NonNegative(_) => ConeSpec::NonNeg(d),
                    Cone::SecondOrder(_) => ConeSpec::Soc(d),
                    Cone::Psd(k) => ConeSpec::Psd(k),
                    _ => unreachable!(),
                });
                p += d;
            }
            Cone::RotatedSecondOrder(_) => {
                // s = T x with T = [(u+v)/sqrt2; (u-v)/sqrt2; w]; G = -T
                g_trip.push((p, at, -FRAC_1_SQRT2));
                g_trip.push((p, at + 1, -FRAC_1_SQRT2));
                g_trip.push((p + 1, at, -FRAC_1_SQRT2));
                g_trip.push((p + 1, at + 1, FRAC_1_SQRT2));
                for i in 2..d {
                    g_trip.push((p + i, at + i, -1.0));
                }
                spec_starts.push(p);
                specs.push(ConeSpec::Soc(d));
                p += d;
            }
        }
        at += d;
    }

    let mut c = prog.objective().to_vec();
    let mut h = vec![0.0; p];

    // Ruiz equilibration over [A; G]; G rows scale uniformly per SOC/PSD block
    let mut d_col = vec![1.0; n];
    let mut d_row_a = vec![1.0; m];
    let mut d_row_g = vec![1.0; p];
    for _ in 0..settings.equilibrate_iters {
        let mut row_max_a = vec![0.0f64; m];
        let mut row_max_g = vec![0.0f64; p];
        let mut col_max = vec![0.0f64; n];
        for &(r, cc, v) in &a_trip {
            let val = (v * d_row_a[r] * d_col[cc]).abs();
            row_max_a[r] = row_max_a[r].max(val);
            col_max[cc] = col_max[cc].max(val);
        }
        for &(r, cc, v) in &g_trip {
            let val = (v * d_row_g[r] * d_col[cc]).abs();
            row_max_g[r] = row_max_g[r].max(val);
            col_max[cc] = col_max[cc].max(val);
        }
        for r in 0..m {
            if row_max_a[r] > 0.0 {
                d_row_a[r] /= row_max_a[r].sqrt();
            }
        }
        for (bi, spec) in specs.iter().enumerate() {
            let start = spec_starts[bi];
            let d = spec.dim();
            match spec {
                ConeSpec::NonNeg(_) => {
                    for i in start..start + d {
                        if row_max_g[i] > 0.0 {
                            d_row_g[i] /= row_max_g[i].sqrt();
                        }
                    }
                }
                _ => {
                    let mx = row_max_g[start..start + d].iter().copied().fold(0.0f64, f64::max);
                    if mx > 0.0 {
                        let f = 1.0 / mx.sqrt();
                        for i in start..start + d {
                            d_row_g[i] *= f;
                        }
                    }
                }
            }
        }
        for j in 0..n {
            if col_max[j] > 0.0 {
                d_col[j] /= col_max[j].sqrt();
            }
        }
    }
    for t in &mut a_trip {
        t.2 *= d_row_a[t.0] * d_col[t.1];
    }
    for t in &mut g_trip {
        t.2 *= d_row_g[t.0] * d_col[t.1];
    }
    for j in 0..n {
        c[j] *= d_col[j];
    }
    let sigma_obj = 1.0 / c.iter().fold(1.0f64, |mx, v| mx.max(v.abs()));
    for v in &mut c {
        *v *= sigma_obj;
    }
    for (r, v) in b.iter_mut().enumerate() {
        *v *= d_row_a[r];
    }
    let sigma_rhs = 1.0 / b.iter().fold(1.0f64, |mx, v| mx.max(v.abs()));
    for v in &mut b {
        *v *= sigma_rhs;
    }
    for v in &mut h {
        *v *= sigma_rhs;
    }

    Ok(Reduced {
        n,
        m,
        p,
        a: CscMatrix::from_triplets(m, n, &a_trip),
        g: CscMatrix::from_triplets(p, n, &g_trip),
        b,
        h,
        c,
        specs,
        spec_starts,
        kept_rows,
        n_rows_orig: m_all,
        d_col,
        d_row_a,
        d_row_g,
        sigma_obj,
        sigma_rhs,
    })
}

struct Kkt {
    factor: LdlFactor,
    base_values: Vec<f64>,
    values: Vec<f64>,
    /// (csc position, block index, local i, local j) of -W^2 entries.
    w_slots: Vec<(usize, usize, usize, usize)>,
    dim: usize,
}

fn build_kkt(red: &Reduced, settings: &IpmSettings) -> Result<Kkt, IpmError> {
    let (n, m, p) = (red.n, red.m, red.p);
    let dim = n + m + p;
    let mut trips: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..n {
        trips.push((i, i, settings.static_reg));
    }
    for i in 0..m + p {
        trips.push((n + i, n + i, -settings.static_reg));
    }
    for c in 0..red.a.n_cols {
        for pos in red.a.col_ptr[c]..red.a.col_ptr[c + 1] {
            trips.push((c, n + red.a.row_idx[pos], red.a.values[pos]));
        }
    }
    for c in 0..red.g.n_cols {
        for pos in red.g.col_ptr[c]..red.g.col_ptr[c + 1] {
            trips.push((c, n + m + red.g.row_idx[pos], red.g.values[pos]));
        }
    }
    // -W^2 placeholders, upper triangle per block
    let mut w_entries: Vec<(usize, usize, usize, usize, usize)> = Vec::new();
    for (bi, spec) in red.specs.iter().enumerate() {
        let start = n + m + red.spec_starts[bi];
        let d = spec.dim();
        match spec {
            ConeSpec::NonNeg(_) => {
                for i in 0..d {
                    trips.push((start + i, start + i, 0.0));
                    w_entries.push((start + i, start + i, bi, i, i));
                }
            }
            _ => {
                for i in 0..d {
                    for j in i..d {
                        trips.push((start + i, start + j, 0.0));
                        w_entries.push((start + i, start + j, bi, i, j));
                    }
                }
            }
        }
    }
    let upper = CscMatrix::from_triplets(dim, dim, &trips);
    let mut w_slots = Vec::with_capacity(w_entries.len());
    for (r, c, bi, li, lj) in w_entries {
        let lo = upper.col_ptr[c];
        let hi = upper.col_ptr[c + 1];
        let pos = lo + upper.row_idx[lo..hi].binary_search(&r).expect("W slot present");
        w_slots.push((pos, bi, li, lj));
    }
    let mut sign = vec![1.0; dim];
    for sgn in sign.iter_mut().skip(n) {
        *sgn = -1.0;
    }
    let factor = LdlFactor::analyze(dim, &upper, sign, settings.dyn_reg)?;
    Ok(Kkt { base_values: upper.values.clone(), values: upper.values, w_slots, factor, dim })
}

struct KktOps<'a> {
    red: &'a Reduced,
    scalings: &'a [Scaling],
}

impl KktOps<'_> {
    /// out = K0 * v with the exact (unregularized) KKT operator.
    fn mul(&self, v: &[f64], out: &mut [f64]) {
        let (n, m, _p) = (self.red.n, self.red.m, self.red.p);
        out.fill(0.0);
        self.red.a.mul_transpose_acc(&v[n..n + m], 1.0, &mut out[..n]);
        self.red.g.mul_transpose_acc(&v[n + m..], 1.0, &mut out[..n]);
        self.red.a.mul_acc(&v[..n], 1.0, &mut out[n..n + m]);
        self.red.g.mul_acc(&v[..n], 1.0, &mut out[n + m..]);
        let mut tmp1 = Vec::new();
        let mut tmp2 = Vec::new();
        for (bi, sc) in self.scalings.iter().enumerate() {
            let start = self.red.spec_starts[bi];
            let d = self.red.specs[bi].dim();
            tmp1.resize(d, 0.0);
            tmp2.resize(d, 0.0);
            sc.apply_wt(&v[n + m + start..n + m + start + d], &mut tmp1);
            sc.apply_w(&tmp1, &mut tmp2);
            for i in 0..d {
                out[n + m + start + i] -= tmp2[i];
            }
        }
    }
}

fn refined_solve(
    kkt: &mut Kkt,
    ops: &KktOps<'_>,
    rhs: &[f64],
    out: &mut Vec<f64>,
    refine_steps: usize,
    scratch: &mut Vec<f64>,
) {
    out.clear();
    out.extend_from_slice(rhs);
    kkt.factor.solve(out, scratch);
    let mut resid = vec![0.0; kkt.dim];
    let rhs_norm = inf_norm(rhs);
    for _ in 0..refine_steps {
        ops.mul(out, &mut resid);
        for i in 0..kkt.dim {
            resid[i] = rhs[i] - resid[i];
        }
        if inf_norm(&resid) <= 1e-13 * (1.0 + rhs_norm) {
            break;
        }
        kkt.factor.solve(&mut resid, scratch);
        for i in 0..kkt.dim {
            out[i] += resid[i];
        }
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-block view of a stacked cone vector.
fn blocks<'v>(red: &Reduced, v: &'v [f64]) -> impl Iterator<Item = (usize, &'v [f64])> + 'v {
    let starts = red.spec_starts.clone();
    let dims: Vec<usize> = red.specs.iter().map(ConeSpec::dim).collect();
    (0..starts.len()).map(move |bi| (bi, &v[starts[bi]..starts[bi] + dims[bi]]))
}

/// Solves a canonical conic program.
pub fn solve(prog: &ConicProgram, settings: &IpmSettings) -> Result<IpmResult, IpmError> {
    let red = reduce(prog, settings)?;
    let mut kkt = build_kkt(&red, settings)?;
    let (n, m, p) = (red.n, red.m, red.p);
    let dim = n + m + p;
    let mut log = settings.collect_log.then(String::new);
    let nu: usize = red.specs.iter().map(ConeSpec::degree).sum();

    let mut x = vec![0.0; n];
    let mut y = vec![0.0; m];
    let mut s = vec![0.0; p];
    let mut z = vec![0.0; p];
    let mut tau = 1.0f64;
    let mut kappa = 1.0f64;

    let mut scratch = Vec::new();
    let mut sol = Vec::new();

    // identity-scaled initialization solves
    {
        kkt.values.copy_from_slice(&kkt.base_values);
        for &(pos, _, li, lj) in &kkt.w_slots {
            if li == lj {
                kkt.values[pos] -= 1.0;
            }
        }
        kkt.factor.factor(&kkt.values);
        let unit_scalings: Vec<Scaling> = red
            .specs
            .iter()
            .map(|spec| {
                let d = spec.dim();
                let mut e = vec![0.0; d];
                spec.unit(&mut e);
                Scaling::compute(*spec, &e, &e).unwrap()
            })
            .collect();
        let ops = KktOps { red: &red, scalings: &unit_scalings };
        let mut rhs = vec![0.0; dim];
        rhs[n..n + m].copy_from_slice(&red.b);
        rhs[n + m..].copy_from_slice(&red.h);
        refined_solve(&mut kkt, &ops, &rhs, &mut sol, settings.refine_steps, &mut scratch);
        let x0 = sol[..n].to_vec();
        let s_target: Vec<f64> = sol[n + m..].iter().map(|v| -v).collect();
        let mut rhs2 = vec![0.0; dim];
        for j in 0..n {
            rhs2[j] = -red.c[j];
        }
        refined_solve(&mut kkt, &ops, &rhs2, &mut sol, settings.refine_steps, &mut scratch);
        let y0 = sol[n..n + m].to_vec();
        let z_target = sol[n + m..].to_vec();
        let finite =
            x0.iter().chain(&s_target).chain(&y0).chain(&z_target).all(|v| v.is_finite());
        if finite {
            x.copy_from_slice(&x0);
            y.copy_from_slice(&y0);
        }
        for (bi, spec) in red.specs.iter().enumerate() {
            let d = spec.dim();
            let start = red.spec_starts[bi];
            let mut e = vec![0.0; d];
            spec.unit(&mut e);
            for (dst, src) in [(&mut s, &s_target), (&mut z, &z_target)] {
                let span = &mut dst[start..start + d];
                if finite {
                    span.copy_from_slice(&src[start..start + d]);
                    let mg = spec.margin(span);
                    if mg <= 1e-8 {
                        for i in 0..d {
                            span[i] += (1.0 - mg) * e[i];
                        }
                    }
                } else {
                    span.copy_from_slice(&e);
                }
            }
        }
    }

    let norm_b = 1.0 + inf_norm(&red.b);
    let norm_h = 1.0 + inf_norm(&red.h);
    let norm_c = 1.0 + inf_norm(&red.c);

    let mut status = IpmStatus::IterationLimit;
    let mut iterations = settings.max_iterations;
    let mut consecutive_tiny = 0usize;

    // work vectors
    let mut r_x = vec![0.0; n];
    let mut r_y = vec![0.0; m];
    let mut r_z = vec![0.0; p];
    let mut lambda_all = vec![0.0; p];
    let mut d_comp = vec![0.0; p];
    let mut d_tilde = vec![0.0; p];
    let mut wd = vec![0.0; p];
    let mut ds = vec![0.0; p];
    let mut dz = vec![0.0; p];
    let mut ds_aff = vec![0.0; p];
    let mut dz_aff = vec![0.0; p];
    let mut wis = vec![0.0; p];
    let mut wtz = vec![0.0; p];
    let mut rhs_u = vec![0.0; dim];
    let mut rhs_v = vec![0.0; dim];
    let mut u = Vec::new();
    let mut v = Vec::new();

    for iter in 0..settings.max_iterations {
        // residuals
        r_x.fill(0.0);
        red.a.mul_transpose_acc(&y, -1.0, &mut r_x);
        red.g.mul_transpose_acc(&z, -1.0, &mut r_x);
        for j in 0..n {
            r_x[j] -= red.c[j] * tau;
        }
        r_y.fill(0.0);
        red.a.mul_acc(&x, 1.0, &mut r_y);
        for i in 0..m {
            r_y[i] -= red.b[i] * tau;
        }
        r_z.fill(0.0);
        red.g.mul_acc(&x, 1.0, &mut r_z);
        for i in 0..p {
            r_z[i] += s[i] - red.h[i] * tau;
        }
        let ctx = dot(&red.c, &x);
        let bty = dot(&red.b, &y);
        let htz = dot(&red.h, &z);
        let r_tau = kappa + ctx + bty + htz;
        let mu = (dot(&s, &z) + tau * kappa) / (nu as f64 + 1.0);

        // convergence checks on the tau-normalized iterate
        let pobj = ctx / tau;
        let dobj = -(bty + htz) / tau;
        let pres = (inf_norm(&r_y) / tau / norm_b).max(inf_norm(&r_z) / tau / norm_h);
        let dres = inf_norm(&r_x) / tau / norm_c;
        let gap_abs = dot(&s, &z) / (tau * tau);
        let relgap = gap_abs / f64::max(1.0, pobj.abs().max(dobj.abs()));
        if let Some(lg) = log.as_mut() {
            use std::fmt::Write;
            writeln!(
                lg,
                "iter {iter:3}  pobj {pobj:+.9e}  dobj {dobj:+.9e}  pres {pres:.2e}  dres {dres:.2e}  gap {gap_abs:.2e}  mu {mu:.2e}  tau {tau:.2e}  kappa {kappa:.2e}"
            )
            .unwrap();
        }
        if pres <= settings.feas_tol
            && dres <= settings.feas_tol
            && (gap_abs <= settings.gap_tol || relgap <= settings.gap_tol)
        {
            status = IpmStatus::Optimal;
            iterations = iter;
            break;
        }
        // infeasibility certificates (checked in scaled space, re-verified in
        // user space before reporting)
        let hinf = bty + htz;
        if hinf < 0.0 {
            let mut aty_gtz = vec![0.0; n];
            red.a.mul_transpose_acc(&y, 1.0, &mut aty_gtz);
            red.g.mul_transpose_acc(&z, 1.0, &mut aty_gtz);
            let quality = inf_norm(&aty_gtz) / (-hinf);
            let ynorm = inf_norm(&y).max(inf_norm(&z)) / (-hinf);
            if quality <= settings.infeas_tol * (1.0 + ynorm) {
                status = IpmStatus::PrimalInfeasible;
                iterations = iter;
                break;
            }
        }
        if ctx < 0.0 {
            let mut ax = vec![0.0; m];
            red.a.mul_acc(&x, 1.0, &mut ax);
            let mut gxs = vec![0.0; p];
            red.g.mul_acc(&x, 1.0, &mut gxs);
            for i in 0..p {
                gxs[i] += s[i];
            }
            let quality = inf_norm(&ax).max(inf_norm(&gxs)) / (-ctx);
            let xnorm = inf_norm(&x) / (-ctx);
            if quality <= settings.infeas_tol * (1.0 + xnorm) {
                status = IpmStatus::DualInfeasible;
                iterations = iter;
                break;
            }
        }

        // NT scalings
        let scalings: Vec<Scaling> = {
            let mut out = Vec::with_capacity(red.specs.len());
            let mut failed = false;
            for (bi, spec) in red.specs.iter().enumerate() {
                let start = red.spec_starts[bi];
                let d = spec.dim();
                match Scaling::compute(*spec, &s[start..start + d], &z[start..start + d]) {
                    Ok(sc) => out.push(sc),
                    Err(_) => {
                        failed = true;
                        break;
                    }
                }
            }
            if failed {
                status = IpmStatus::NumericalFailure;
                iterations = iter;
                break;
            }
            out
        };
        for (bi, sc) in scalings.iter().enumerate() {
            let start = red.spec_starts[bi];
            let lam = sc.lambda();
            lambda_all[start..start + lam.len()].copy_from_slice(&lam);
        }

        // numeric KKT refactorization
        kkt.values.copy_from_slice(&kkt.base_values);
        {
            let mut w2s: Vec<nalgebra::DMatrix<f64>> = Vec::with_capacity(scalings.len());
            for (bi, sc) in scalings.iter().enumerate() {
                w2s.push(sc.w2_dense(red.specs[bi]));
            }
            for &(pos, bi, li, lj) in &kkt.w_slots {
                kkt.values[pos] -= w2s[bi][(li, lj)];
            }
        }
        kkt.factor.factor(&kkt.values);
        let ops = KktOps { red: &red, scalings: &scalings };

        // tau-column solve
        for j in 0..n {
            rhs_u[j] = -red.c[j];
        }
        rhs_u[n..n + m].copy_from_slice(&red.b);
        rhs_u[n + m..].copy_from_slice(&red.h);
        refined_solve(&mut kkt, &ops, &rhs_u, &mut u, settings.refine_steps, &mut scratch);
        let den =
            -kappa / tau + dot(&red.c, &u[..n]) + dot(&red.b, &u[n..n + m]) + dot(&red.h, &u[n + m..]);
        if !den.is_finite() || den.abs() < 1e-300 {
            status = IpmStatus::NumericalFailure;
            iterations = iter;
            break;
        }

        let mut direction = |eta: f64,
                             d_comp: &[f64],
                             d_tau: f64,
                             kkt: &mut Kkt,
                             d_tilde: &mut [f64],
                             wd: &mut [f64],
                             v: &mut Vec<f64>,
                             scratch: &mut Vec<f64>|
         -> Option<(f64, f64, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
            // d_tilde = lambda \ d_comp ; wd = W d_tilde
            for (bi, sc) in scalings.iter().enumerate() {
                let start = red.spec_starts[bi];
                let d = red.specs[bi].dim();
                sc.jordan_solve(&d_comp[start..start + d], &mut d_tilde[start..start + d]);
                sc.apply_w(&d_tilde[start..start + d], &mut wd[start..start + d]);
            }
            for j in 0..n {
                rhs_v[j] = eta * r_x[j];
            }
            for i in 0..m {
                rhs_v[n + i] = -eta * r_y[i];
            }
            for i in 0..p {
                rhs_v[n + m + i] = -eta * r_z[i] - wd[i];
            }
            refined_solve(kkt, &ops, &rhs_v, v, settings.refine_steps, scratch);
            let num = -eta * r_tau - d_tau / tau
                - (dot(&red.c, &v[..n]) + dot(&red.b, &v[n..n + m]) + dot(&red.h, &v[n + m..]));
            let d_tau_step = num / den;
            let dx: Vec<f64> = (0..n).map(|j| v[j] + d_tau_step * u[j]).collect();
            let dy: Vec<f64> = (0..m).map(|i| v[n + i] + d_tau_step * u[n + i]).collect();
            let dz_v: Vec<f64> = (0..p).map(|i| v[n + m + i] + d_tau_step * u[n + m + i]).collect();
            // ds = W(d_tilde - W' dz)
            let mut ds_v = vec![0.0; p];
            let mut t1 = vec![0.0; p];
            for (bi, sc) in scalings.iter().enumerate() {
                let start = red.spec_starts[bi];
                let d = red.specs[bi].dim();
                sc.apply_wt(&dz_v[start..start + d], &mut t1[start..start + d]);
                for i in start..start + d {
                    t1[i] = d_tilde[i] - t1[i];
                }
                let mut t2 = vec![0.0; d];
                sc.apply_w(&t1[start..start + d], &mut t2);
                ds_v[start..start + d].copy_from_slice(&t2);
            }
            let d_kappa = (d_tau - kappa * d_tau_step) / tau;
            if !d_tau_step.is_finite() || !d_kappa.is_finite() {
                return None;
            }
            Some((d_tau_step, d_kappa, dx, dy, dz_v, ds_v))
        };

        // affine direction
        for (bi, sc) in scalings.iter().enumerate() {
            let start = red.spec_starts[bi];
            let d = red.specs[bi].dim();
            let lam = &lambda_all[start..start + d];
            let mut ll = vec![0.0; d];
            red.specs[bi].jordan_prod(lam, lam, &mut ll);
            for i in 0..d {
                d_comp[start + i] = -ll[i];
            }
            let _ = sc;
        }
        let aff = direction(1.0, &d_comp.clone(), -tau * kappa, &mut kkt, &mut d_tilde, &mut wd, &mut v, &mut scratch);
        let Some((dtau_a, dkappa_a, dx_a, dy_a, dz_a, ds_a)) = aff else {
            status = IpmStatus::NumericalFailure;
            iterations = iter;
            break;
        };
        ds_aff.copy_from_slice(&ds_a);
        dz_aff.copy_from_slice(&dz_a);

        // affine step length
        let mut alpha_aff = 1.0f64;
        for (bi, span_s) in blocks(&red, &s) {
            let start = red.spec_starts[bi];
            let d = red.specs[bi].dim();
            alpha_aff = alpha_aff
                .min(red.specs[bi].step_to_boundary(span_s, &ds_aff[start..start + d]))
                .min(red.specs[bi].step_to_boundary(&z[start..start + d], &dz_aff[start..start + d]));
        }
        if dtau_a < 0.0 {
            alpha_aff = alpha_aff.min(-tau / dtau_a);
        }
        if dkappa_a < 0.0 {
            alpha_aff = alpha_aff.min(-kappa / dkappa_a);
        }
        alpha_aff = alpha_aff.min(1.0);
        let mu_aff = {
            let mut acc = (tau + alpha_aff * dtau_a) * (kappa + alpha_aff * dkappa_a);
            for i in 0..p {
                acc += (s[i] + alpha_aff * ds_aff[i]) * (z[i] + alpha_aff * dz_aff[i]);
            }
            acc / (nu as f64 + 1.0)
        };
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // combined direction with Mehrotra correction
        for (bi, _) in red.specs.iter().enumerate() {
            let start = red.spec_starts[bi];
            let d = red.specs[bi].dim();
            let sc = &scalings[bi];
            sc.apply_w_inv(&ds_aff[start..start + d], &mut wis[start..start + d]);
            sc.apply_wt(&dz_aff[start..start + d], &mut wtz[start..start + d]);
            let mut corr = vec![0.0; d];
            red.specs[bi].jordan_prod(&wis[start..start + d], &wtz[start..start + d], &mut corr);
            let lam = &lambda_all[start..start + d];
            let mut ll = vec![0.0; d];
            red.specs[bi].jordan_prod(lam, lam, &mut ll);
            let mut e = vec![0.0; d];
            red.specs[bi].unit(&mut e);
            for i in 0..d {
                d_comp[start + i] = -ll[i] + sigma * mu * e[i] - corr[i];
            }
        }
        let d_tau_comb = -tau * kappa + sigma * mu - dtau_a * dkappa_a;
        let comb = direction(
            1.0 - sigma,
            &d_comp.clone(),
            d_tau_comb,
            &mut kkt,
            &mut d_tilde,
            &mut wd,
            &mut v,
            &mut scratch,
        );
        let Some((dtau, dkappa, dx, dy, dz_c, ds_c)) = comb else {
            status = IpmStatus::NumericalFailure;
            iterations = iter;
            break;
        };
        ds.copy_from_slice(&ds_c);
        dz.copy_from_slice(&dz_c);

        let mut alpha = 1.0f64 / settings.step_fraction; // allows full steps after scaling
        for (bi, span_s) in blocks(&red, &s) {
            let start = red.spec_starts[bi];
            let d = red.specs[bi].dim();
            alpha = alpha
                .min(red.specs[bi].step_to_boundary(span_s, &ds[start..start + d]))
                .min(red.specs[bi].step_to_boundary(&z[start..start + d], &dz[start..start + d]));
        }
        if dtau < 0.0 {
            alpha = alpha.min(-tau / dtau);
        }
        if dkappa < 0.0 {
            alpha = alpha.min(-kappa / dkappa);
        }
        alpha = (settings.step_fraction * alpha).min(1.0);
        if alpha < 1e-10 {
            consecutive_tiny += 1;
            if consecutive_tiny >= 3 {
                status = IpmStatus::NumericalFailure;
                iterations = iter;
                break;
            }
        } else {
            consecutive_tiny = 0;
        }

        for j in 0..n {
            x[j] += alpha * dx[j];
        }
        for i in 0..m {
            y[i] += alpha * dy[i];
        }
        for i in 0..p {
            s[i] += alpha * ds[i];
            z[i] += alpha * dz[i];
        }
        tau += alpha * dtau;
        kappa += alpha * dkappa;
        if !(tau.is_finite() && kappa.is_finite() && tau > 0.0 && kappa > 0.0) {
            status = IpmStatus::NumericalFailure;
            iterations = iter;
            break;
        }
    }

    Ok(finalize(prog, &red, status, &x, &y, &z, tau, iterations, log, settings))
}

#[allow(clippy::too_many_arguments)]
fn finalize(
    prog: &ConicProgram,
    red: &Reduced,
    status: IpmStatus,
    x: &[f64],
    y: &[f64],
    z: &[f64],
    tau: f64,
    iterations: usize,
    log: Option<String>,
    settings: &IpmSettings,
) -> IpmResult {
    let (n, m) = (red.n, red.m);
    // unscale: x_user = D_col x' / (sigma_rhs tau-normalization applied per status)
    let unscale_x = |xv: &[f64], scale: f64| -> Vec<f64> {
        (0..n).map(|j| red.d_col[j] * xv[j] / red.sigma_rhs * scale).collect()
    };
    // y_user(kept) = -D_rowA y' / sigma_obj (sign flip to the s = c - A'y form)
    let unscale_y = |yv: &[f64], scale: f64| -> Vec<f64> {
        let mut out = vec![0.0; red.n_rows_orig];
        for (kept_i, &orig_r) in red.kept_rows.iter().enumerate() {
            out[orig_r] = -red.d_row_a[kept_i] * yv[kept_i] / red.sigma_obj * scale;
        }
        out
    };
    // dual slack from z: s_user = -G' z (zero on free spans). G stored here is
    // the scaled G_s = D_G G D_c, so -G' (D_G z'/sigma_obj) = (-G_s' z') / (D_c sigma_obj).
    let dual_slack_from_z = |zv: &[f64], scale: f64| -> Vec<f64> {
        let mut gz = vec![0.0; n];
        red.g.mul_transpose_acc(zv, -1.0, &mut gz);
        (0..n).map(|j| gz[j] / red.d_col[j] / red.sigma_obj * scale).collect()
    };

    match status {
        IpmStatus::Optimal => {
            let xs = unscale_x(x, 1.0 / tau);
            let ys = unscale_y(y, 1.0 / tau);
            let slack = dual_slack_from_z(z, 1.0 / tau);
            let pobj: f64 = prog.objective().iter().zip(&xs).map(|(c, x)| c * x).sum();
            let dobj: f64 = prog.rhs().iter().zip(&ys).map(|(b, y)| b * y).sum();
            IpmResult {
                status,
                x: xs,
                y: ys,
                dual_slack: slack,
                primal_objective: pobj,
                dual_objective: dobj,
                iterations,
                log,
            }
        }
        IpmStatus::PrimalInfeasible => {
            // normalize the Farkas ray to b'y = -1 in user coordinates
            // (flips orientation if needed; membership is re-verified below)
            let ys = unscale_y(y, 1.0);
            let by: f64 = prog.rhs().iter().zip(&ys).map(|(b, y)| b * y).sum();
            if by.abs() < 1e-300 {
                return IpmResult {
                    status: IpmStatus::NumericalFailure,
                    x: vec![0.0; n],
                    y: ys,
                    dual_slack: vec![0.0; n],
                    primal_objective: f64::NAN,
                    dual_objective: f64::NAN,
                    iterations,
                    log,
                };
            }
            let scale = -1.0 / by;
            let ys: Vec<f64> = ys.iter().map(|v| v * scale).collect();
            // re-verify in user space; downgrade to NumericalFailure otherwise
            let ok = verify_infeasibility_certificate(prog, &ys, settings.infeas_tol.sqrt())
                .is_some();
            IpmResult {
                status: if ok { status } else { IpmStatus::NumericalFailure },
                x: vec![0.0; n],
                y: ys,
                dual_slack: vec![0.0; n],
                primal_objective: f64::INFINITY,
                dual_objective: f64::INFINITY,
                iterations,
                log,
            }
        }
        IpmStatus::DualInfeasible => {
            let xs = unscale_x(x, 1.0);
            let ctx: f64 = prog.objective().iter().zip(&xs).map(|(c, x)| c * x).sum();
            let scale = if ctx < 0.0 { -1.0 / ctx } else { 1.0 };
            let xs: Vec<f64> = xs.iter().map(|v| v * scale).collect();
            IpmResult {
                status,
                x: xs,
                y: vec![0.0; red.n_rows_orig],
                dual_slack: vec![0.0; n],
                primal_objective: f64::NEG_INFINITY,
                dual_objective: f64::NEG_INFINITY,
                iterations,
                log,
            }
        }
        IpmStatus::IterationLimit | IpmStatus::NumericalFailure => IpmResult {
            status,
            x: unscale_x(x, 1.0 / tau.max(1e-300)),
            y: unscale_y(y, 1.0 / tau.max(1e-300)),
            dual_slack: dual_slack_from_z(z, 1.0 / tau.max(1e-300)),
            primal_objective: f64::NAN,
            dual_objective: f64::NAN,
            iterations,
            log,
        },
    }
}
