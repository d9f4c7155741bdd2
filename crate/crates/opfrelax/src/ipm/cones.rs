//! Cone kernels for the interior-point solver: Nesterov-Todd scalings,
//! Jordan-algebra products, and boundary step lengths.
//!
//! Internally the solver sees only nonnegative, second-order, and PSD blocks;
//! rotated cones are mapped to plain second-order cones by an orthogonal
//! change of coordinates when the problem is reduced.

use nalgebra::DMatrix;

/// One conic block of the internal slack vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeSpec {
    NonNeg(usize),
    Soc(usize),
    /// Side of the symmetric matrix; svec length side*(side+1)/2.
    Psd(usize),
}

impl ConeSpec {
    pub fn dim(&self) -> usize {
        match *self {
            ConeSpec::NonNeg(d) | ConeSpec::Soc(d) => d,
            ConeSpec::Psd(k) => k * (k + 1) / 2,
        }
    }

    /// Contribution to the barrier degree used in the duality measure.
    pub fn degree(&self) -> usize {
        match *self {
            ConeSpec::NonNeg(d) => d,
            ConeSpec::Soc(_) => 1,
            ConeSpec::Psd(k) => k,
        }
    }

    /// Cone identity element.
    pub fn unit(&self, out: &mut [f64]) {
        out.fill(0.0);
        match *self {
            ConeSpec::NonNeg(_) => out.fill(1.0),
            ConeSpec::Soc(_) => out[0] = 1.0,
            ConeSpec::Psd(k) => {
                for i in 0..k {
                    out[svec_offset(k, i, i)] = 1.0;
                }
            }
        }
    }

    /// Strict interior margin of a point (positive inside the cone).
    pub fn margin(&self, v: &[f64]) -> f64 {
        match *self {
            ConeSpec::NonNeg(_) => v.iter().copied().fold(f64::INFINITY, f64::min),
            ConeSpec::Soc(_) => v[0] - norm(&v[1..]),
            ConeSpec::Psd(k) => {
                let m = unpack(k, v);
                min_eigenvalue(&m)
            }
        }
    }

    /// Largest step alpha with v + alpha dv remaining in the cone
    /// (f64::INFINITY when unbounded).
    pub fn step_to_boundary(&self, v: &[f64], dv: &[f64]) -> f64 {
        match *self {
            ConeSpec::NonNeg(_) => {
                let mut a = f64::INFINITY;
                for (x, d) in v.iter().zip(dv) {
                    if *d < 0.0 {
                        a = a.min(-x / d);
                    }
                }
                a
            }
            ConeSpec::Soc(_) => {
                // boundary of (v0 + a d0)^2 = ||v1 + a d1||^2 with v interior
                let a2 = dv[0] * dv[0] - dot(&dv[1..], &dv[1..]);
                let a1 = 2.0 * (v[0] * dv[0] - dot(&v[1..], &dv[1..]));
                let a0 = v[0] * v[0] - dot(&v[1..], &v[1..]);
                let mut best = if dv[0] < 0.0 { -v[0] / dv[0] } else { f64::INFINITY };
                let disc = a1 * a1 - 4.0 * a2 * a0;
                if disc >= 0.0 {
                    let sq = disc.sqrt();
                    for root in [(-a1 - sq), (-a1 + sq)] {
                        let r = if a2.abs() > 1e-300 {
                            root / (2.0 * a2)
                        } else if a1.abs() > 1e-300 {
                            -a0 / a1
                        } else {
                            continue;
                        };
                        if r > 0.0 {
                            best = best.min(r);
                        }
                    }
                    if a2.abs() <= 1e-300 && a1 < 0.0 {
                        best = best.min(-a0 / a1);
                    }
                }
                best
            }
            ConeSpec::Psd(k) => {
                let m = unpack(k, v);
                let d = unpack(k, dv);
                match nalgebra::Cholesky::new(m) {
                    Some(ch) => {
                        let l_inv_d = ch.l().solve_lower_triangular(&d).unwrap();
                        let w = ch
                            .l()
                            .solve_lower_triangular(&l_inv_d.transpose())
                            .unwrap();
                        // symmetrize against roundoff
                        let w = (&w + w.transpose()) * 0.5;
                        let lam = min_eigenvalue(&w);
                        if lam >= 0.0 {
                            f64::INFINITY
                        } else {
                            -1.0 / lam
                        }
                    }
                    None => 0.0,
                }
            }
        }
    }

    /// Jordan product u o v.
    pub fn jordan_prod(&self, u: &[f64], v: &[f64], out: &mut [f64]) {
        match *self {
            ConeSpec::NonNeg(_) => {
                for i in 0..u.len() {
                    out[i] = u[i] * v[i];
                }
            }
            ConeSpec::Soc(_) => {
                out[0] = dot(u, v);
                for i in 1..u.len() {
                    out[i] = u[0] * v[i] + v[0] * u[i];
                }
            }
            ConeSpec::Psd(k) => {
                let mu = unpack(k, u);
                let mv = unpack(k, v);
                let p = (&mu * &mv + &mv * &mu) * 0.5;
                pack(k, &p, out);
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn svec_offset(k: usize, r: usize, c: usize) -> usize {
    debug_assert!(r >= c && r < k);
    c * k - c * (c + 1) / 2 + c + (r - c)
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// svec -> symmetric matrix.
pub fn unpack(k: usize, v: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(k, k);
    for c in 0..k {
        for r in c..k {
            let val = v[svec_offset(k, r, c)];
            if r == c {
                m[(r, c)] = val;
            } else {
                m[(r, c)] = val / SQRT2;
                m[(c, r)] = val / SQRT2;
            }
        }
    }
    m
}

/// symmetric matrix -> svec.
pub fn pack(k: usize, m: &DMatrix<f64>, out: &mut [f64]) {
    for c in 0..k {
        for r in c..k {
            out[svec_offset(k, r, c)] = if r == c { m[(r, c)] } else { SQRT2 * m[(r, c)] };
        }
    }
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    nalgebra::SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Per-block Nesterov-Todd scaling state, recomputed every iteration.
#[derive(Debug, Clone)]
pub enum Scaling {
    NonNeg {
        w: Vec<f64>,
        lambda: Vec<f64>,
    },
    Soc {
        eta: f64,
        wbar: Vec<f64>,
        lambda: Vec<f64>,
    },
    Psd {
        k: usize,
        r: DMatrix<f64>,
        r_inv: DMatrix<f64>,
        /// Scaled point eigenvalues (lambda is the diagonal matrix sigma).
        sigma: Vec<f64>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum ScalingError {
    #[error("iterate left the cone interior")]
    NotInterior,
}

impl Scaling {
    /// Computes the NT scaling for a primal-dual pair strictly inside the cone.
    pub fn compute(spec: ConeSpec, s: &[f64], z: &[f64]) -> Result<Scaling, ScalingError> {
        match spec {
            ConeSpec::NonNeg(d) => {
                let mut w = vec![0.0; d];
                let mut lambda = vec![0.0; d];
                for i in 0..d {
                    if s[i] <= 0.0 || z[i] <= 0.0 {
                        return Err(ScalingError::NotInterior);
                    }
                    w[i] = (s[i] / z[i]).sqrt();
                    lambda[i] = (s[i] * z[i]).sqrt();
                }
                Ok(Scaling::NonNeg { w, lambda })
            }
            ConeSpec::Soc(d) => {
                let a = s[0] * s[0] - dot(&s[1..], &s[1..]);
                let b = z[0] * z[0] - dot(&z[1..], &z[1..]);
                if a <= 0.0 || b <= 0.0 || s[0] <= 0.0 || z[0] <= 0.0 {
                    return Err(ScalingError::NotInterior);
                }
                let (ra, rb) = (a.sqrt(), b.sqrt());
                let sb: Vec<f64> = s.iter().map(|v| v / ra).collect();
                let zb: Vec<f64> = z.iter().map(|v| v / rb).collect();
                let gamma = (0.5 * (1.0 + dot(&sb, &zb))).sqrt();
                let mut wbar = vec![0.0; d];
                wbar[0] = (sb[0] + zb[0]) / (2.0 * gamma);
                for i in 1..d {
                    wbar[i] = (sb[i] - zb[i]) / (2.0 * gamma);
                }
                let eta = (a / b).powf(0.25);
                let mut sc = Scaling::Soc { eta, wbar, lambda: vec![0.0; d] };
                let mut lambda = vec![0.0; d];
                sc.apply_wt(z, &mut lambda);
                if let Scaling::Soc { lambda: l, .. } = &mut sc {
                    *l = lambda;
                }
                Ok(sc)
            }
            ConeSpec::Psd(k) => {
                let sm = unpack(k, s);
                let zm = unpack(k, z);
                let ls = nalgebra::Cholesky::new(sm).ok_or(ScalingError::NotInterior)?;
                let lz = nalgebra::Cholesky::new(zm).ok_or(ScalingError::NotInterior)?;
                let m = lz.l().transpose() * ls.l();
                let svd = nalgebra::SVD::new(m, true, true);
                let u = svd.u.as_ref().unwrap();
                let vt = svd.v_t.as_ref().unwrap();
                let sig = &svd.singular_values;
                if sig.iter().any(|&x| x <= 0.0) {
                    return Err(ScalingError::NotInterior);
                }
                let inv_sqrt = DMatrix::from_diagonal(&sig.map(|x| 1.0 / x.sqrt()));
                let r = ls.l() * vt.transpose() * &inv_sqrt;
                let r_inv = inv_sqrt * u.transpose() * lz.l().transpose();
                Ok(Scaling::Psd {
                    k,
                    r,
                    r_inv,
                    sigma: sig.iter().copied().collect(),
                })
            }
        }
    }

    pub fn lambda(&self) -> Vec<f64> {
        match self {
            Scaling::NonNeg { lambda, .. } | Scaling::Soc { lambda, .. } => lambda.clone(),
            Scaling::Psd { k, sigma, .. } => {
                let mut v = vec![0.0; k * (k + 1) / 2];
                for (i, &s) in sigma.iter().enumerate() {
                    v[svec_offset(*k, i, i)] = s;
                }
                v
            }
        }
    }

    fn soc_boost(eta: f64, wbar: &[f64], v: &[f64], out: &mut [f64], flip: bool) {
        // W = eta * [w0, w1'; w1, I + w1 w1'/(1+w0)]; flip negates w1
        let sgn = if flip { -1.0 } else { 1.0 };
        let w0 = wbar[0];
        let w1 = &wbar[1..];
        let v1 = &v[1..];
        let t = dot(w1, v1);
        out[0] = eta * (w0 * v[0] + sgn * t);
        let coef = eta * (sgn * v[0] + t / (1.0 + w0));
        for i in 1..v.len() {
            out[i] = eta * v1[i - 1] + coef * w1[i - 1];
        }
    }

    /// out = W v (the s-side operator: s = W lambda).
    pub fn apply_w(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Scaling::NonNeg { w, .. } => {
                for i in 0..v.len() {
                    out[i] = w[i] * v[i];
                }
            }
            Scaling::Soc { eta, wbar, .. } => Self::soc_boost(*eta, wbar, v, out, false),
            Scaling::Psd { k, r, .. } => {
                let m = unpack(*k, v);
                let res = r * m * r.transpose();
                pack(*k, &res, out);
            }
        }
    }

    /// out = W' v (lambda = W' z).
    pub fn apply_wt(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Scaling::NonNeg { .. } | Scaling::Soc { .. } => self.apply_w(v, out),
            Scaling::Psd { k, r, .. } => {
                let m = unpack(*k, v);
                let res = r.transpose() * m * r;
                pack(*k, &res, out);
            }
        }
    }

    /// out = W^{-1} v.
    pub fn apply_w_inv(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Scaling::NonNeg { w, .. } => {
                for i in 0..v.len() {
                    out[i] = v[i] / w[i];
                }
            }
            Scaling::Soc { eta, wbar, .. } => Self::soc_boost(1.0 / eta, wbar, v, out, true),
            Scaling::Psd { k, r_inv, .. } => {
                let m = unpack(*k, v);
                let res = r_inv * m * r_inv.transpose();
                pack(*k, &res, out);
            }
        }
    }

    /// out = W^{-T} v.
    pub fn apply_wt_inv(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Scaling::NonNeg { .. } | Scaling::Soc { .. } => self.apply_w_inv(v, out),
            Scaling::Psd { k, r_inv, .. } => {
                let m = unpack(*k, v);
                let res = r_inv.transpose() * m * r_inv;
                pack(*k, &res, out);
            }
        }
    }

    /// Solves lambda o q = d for q, with lambda this scaling's scaled point.
    pub fn jordan_solve(&self, d: &[f64], out: &mut [f64]) {
        match self {
            Scaling::NonNeg { lambda, .. } => {
                for i in 0..d.len() {
                    out[i] = d[i] / lambda[i];
                }
            }
            Scaling::Soc { lambda, .. } => {
                let l0 = lambda[0];
                let l1 = &lambda[1..];
                let det = l0 * l0 - dot(l1, l1);
                let q0 = (l0 * d[0] - dot(l1, &d[1..])) / det;
                out[0] = q0;
                for i in 1..d.len() {
                    out[i] = (d[i] - q0 * l1[i - 1]) / l0;
                }
            }
            Scaling::Psd { k, sigma, .. } => {
                // lambda is diagonal sigma: q_rc = 2 d_rc / (sigma_r + sigma_c)
                for c in 0..*k {
                    for r in c..*k {
                        let o = svec_offset(*k, r, c);
                        out[o] = 2.0 * d[o] / (sigma[r] + sigma[c]);
                    }
                }
            }
        }
    }

    /// Dense entries of W W' (the KKT scaling block), upper triangle included.
    pub fn w2_dense(&self, spec: ConeSpec) -> DMatrix<f64> {
        match self {
            Scaling::NonNeg { w, .. } => DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                w.len(),
                w.iter().map(|x| x * x),
            )),
            Scaling::Soc { eta, wbar, .. } => {
                let d = wbar.len();
                let mut m = DMatrix::zeros(d, d);
                // W^2 = eta^2 (2 wbar wbar' - J)
                for i in 0..d {
                    for j in 0..d {
                        m[(i, j)] = 2.0 * wbar[i] * wbar[j];
                    }
                }
                m[(0, 0)] -= 1.0;
                for i in 1..d {
                    m[(i, i)] += 1.0;
                }
                m * (eta * eta)
            }
            Scaling::Psd { k, r, .. } => {
                let dim = k * (k + 1) / 2;
                let m2 = r * r.transpose();
                let mut out = DMatrix::zeros(dim, dim);
                let mut basis = DMatrix::zeros(*k, *k);
                let mut col = vec![0.0; dim];
                for c in 0..*k {
                    for rr in c..*k {
                        basis.fill(0.0);
                        if rr == c {
                            basis[(rr, c)] = 1.0;
                        } else {
                            basis[(rr, c)] = 1.0 / SQRT2;
                            basis[(c, rr)] = 1.0 / SQRT2;
                        }
                        let img = &m2 * &basis * &m2;
                        pack(*k, &img, &mut col);
                        let j = svec_offset(*k, rr, c);
                        for i in 0..dim {
                            out[(i, j)] = col[i];
                        }
                    }
                }
                // symmetrize against roundoff
                let outt = out.transpose();
                (out + outt) * 0.5
            }
            #[allow(unreachable_patterns)]
            _ => unreachable!("{spec:?}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    fn random_interior(spec: ConeSpec, rng: &mut impl Rng) -> Vec<f64> {
        let d = spec.dim();
        match spec {
            ConeSpec::NonNeg(_) => (0..d).map(|_| rng.random_range(0.1..3.0)).collect(),
            ConeSpec::Soc(_) => {
                let tail: Vec<f64> = (1..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mut v = vec![norm(&tail) + rng.random_range(0.1..2.0)];
                v.extend(tail);
                v
            }
            ConeSpec::Psd(k) => {
                let a = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
                let m = &a * a.transpose() + DMatrix::identity(k, k) * rng.random_range(0.1..1.0);
                let mut v = vec![0.0; d];
                pack(k, &m, &mut v);
                v
            }
        }
    }

    #[test]
    fn nt_scaling_identities() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for spec in [ConeSpec::NonNeg(4), ConeSpec::Soc(5), ConeSpec::Psd(4)] {
            for _ in 0..20 {
                let s = random_interior(spec, &mut rng);
                let z = random_interior(spec, &mut rng);
                let sc = Scaling::compute(spec, &s, &z).unwrap();
                let lam = sc.lambda();
                let d = spec.dim();
                // s = W lambda
                let mut s2 = vec![0.0; d];
                sc.apply_w(&lam, &mut s2);
                for i in 0..d {
                    assert!((s2[i] - s[i]).abs() < 1e-8 * (1.0 + s[i].abs()), "{spec:?} s identity");
                }
                // z = W^{-T} lambda
                let mut z2 = vec![0.0; d];
                sc.apply_wt_inv(&lam, &mut z2);
                for i in 0..d {
                    assert!((z2[i] - z[i]).abs() < 1e-8 * (1.0 + z[i].abs()), "{spec:?} z identity");
                }
                // W W' z = s
                let mut wz = vec![0.0; d];
                sc.apply_wt(&z, &mut wz);
                let mut wwz = vec![0.0; d];
                sc.apply_w(&wz, &mut wwz);
                for i in 0..d {
                    assert!((wwz[i] - s[i]).abs() < 1e-8 * (1.0 + s[i].abs()), "{spec:?} W2 identity");
                }
                // dense W2 agrees with operator composition
                let w2 = sc.w2_dense(spec);
                let zv = nalgebra::DVector::from_column_slice(&z);
                let dense = &w2 * zv;
                for i in 0..d {
                    assert!((dense[i] - s[i]).abs() < 1e-8 * (1.0 + s[i].abs()), "{spec:?} dense W2");
                }
                // inverses
                let mut inv = vec![0.0; d];
                sc.apply_w_inv(&s, &mut inv);
                for i in 0..d {
                    assert!((inv[i] - lam[i]).abs() < 1e-8 * (1.0 + lam[i].abs()));
                }
                // jordan solve inverts jordan product with lambda
                let q = random_interior(spec, &mut rng);
                let mut prod = vec![0.0; d];
                spec.jordan_prod(&lam, &q, &mut prod);
                let mut back = vec![0.0; d];
                sc.jordan_solve(&prod, &mut back);
                for i in 0..d {
                    assert!((back[i] - q[i]).abs() < 1e-7 * (1.0 + q[i].abs()), "{spec:?} jordan");
                }
            }
        }
    }

    #[test]
    fn boundary_steps() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for spec in [ConeSpec::NonNeg(4), ConeSpec::Soc(4), ConeSpec::Psd(3)] {
            for _ in 0..20 {
                let v = random_interior(spec, &mut rng);
                let dv: Vec<f64> = (0..spec.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let a = spec.step_to_boundary(&v, &dv);
                if a.is_finite() {
                    // just inside stays in the cone, just outside leaves it
                    let inside: Vec<f64> =
                        v.iter().zip(&dv).map(|(x, d)| x + 0.999 * a * d).collect();
                    let outside: Vec<f64> =
                        v.iter().zip(&dv).map(|(x, d)| x + 1.01 * a * d).collect();
                    assert!(spec.margin(&inside) >= -1e-9, "{spec:?} inside violated");
                    assert!(spec.margin(&outside) < 1e-9, "{spec:?} outside not boundary");
                } else {
                    let far: Vec<f64> = v.iter().zip(&dv).map(|(x, d)| x + 1e6 * d).collect();
                    assert!(spec.margin(&far) >= -1e-6);
                }
            }
        }
    }
}
