//! Network model: buses, branches, generators, and derived admittance data.
//!
//! All electrical quantities are stored per-unit on the system MVA base after
//! parsing; cost coefficients are converted to per-unit power as well
//! (`$ / pu^2 h`, `$ / pu h`, `$`), so downstream model builders never touch
//! the base again.

mod parse;

pub use parse::{parse_case, serialize_case, ParseError};

use std::collections::HashMap;

/// A single electrical node.
#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    /// External bus number from the case file.
    pub id: usize,
    /// Real power demand, pu.
    pub p_demand: f64,
    /// Reactive power demand, pu.
    pub q_demand: f64,
    /// Shunt conductance, pu consumed at V = 1 pu.
    pub gs_shunt: f64,
    /// Shunt susceptance, pu injected at V = 1 pu.
    pub bs_shunt: f64,
    /// Voltage magnitude lower bound, pu.
    pub v_min: f64,
    /// Voltage magnitude upper bound, pu.
    pub v_max: f64,
    /// Nominal voltage, kV (informational).
    pub base_kv: f64,
    /// Angle-reference bus flag; exactly one per network.
    pub is_slack: bool,
}

/// A transmission line or transformer (standard pi-model).
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    /// External id of the sending bus.
    pub from_bus: usize,
    /// External id of the receiving bus.
    pub to_bus: usize,
    /// Series resistance, pu.
    pub r: f64,
    /// Series reactance, pu.
    pub x: f64,
    /// Total line charging susceptance, pu.
    pub b_charge: f64,
    /// Off-nominal tap ratio on the from side (1 if none).
    pub tap: f64,
    /// Phase shift angle, degrees.
    pub shift: f64,
    /// Apparent power rating, pu; 0 means unlimited.
    pub s_max: f64,
}

/// A dispatchable generation unit with a quadratic cost curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    /// External id of the bus the unit connects to.
    pub bus: usize,
    /// Real power limits, pu.
    pub p_min: f64,
    pub p_max: f64,
    /// Reactive power limits, pu.
    pub q_min: f64,
    pub q_max: f64,
    /// Cost coefficients on per-unit power: cost = c2*p^2 + c1*p + c0 [$/h].
    pub cost_c2: f64,
    pub cost_c1: f64,
    pub cost_c0: f64,
}

/// Pi-model admittance blocks of one branch.
///
/// `g_ff + j b_ff` multiplies the from-side voltage product `c_ii`; the cross
/// blocks multiply the lifted pair oriented in the direction of the flow being
/// evaluated: from-side flows use the pair oriented from -> to, to-side flows
/// the reverse (which negates `s`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchAdmittance {
    pub g_ff: f64,
    pub b_ff: f64,
    pub g_ft: f64,
    pub b_ft: f64,
    pub g_tt: f64,
    pub b_tt: f64,
    pub g_tf: f64,
    pub b_tf: f64,
}

impl BranchAdmittance {
    /// From-side flow (p_ij, q_ij) given c_ii and the pair (c_ij, s_ij)
    /// oriented from -> to.
    pub fn from_flow(&self, c_ff: f64, c_ij: f64, s_ij: f64) -> (f64, f64) {
        (
            self.g_ff * c_ff + self.g_ft * c_ij - self.b_ft * s_ij,
            -self.b_ff * c_ff - self.b_ft * c_ij - self.g_ft * s_ij,
        )
    }

    /// To-side flow (p_ji, q_ji) given c_jj and the same from-oriented pair.
    pub fn to_flow(&self, c_tt: f64, c_ij: f64, s_ij: f64) -> (f64, f64) {
        (
            self.g_tt * c_tt + self.g_tf * c_ij + self.b_tf * s_ij,
            -self.b_tt * c_tt - self.b_tf * c_ij + self.g_tf * s_ij,
        )
    }
}

/// Linear coefficients of one side's flow on (c_self, c_pair, s_pair),
/// with the pair in canonical (lower index -> higher index) orientation.
#[derive(Debug, Clone, Copy)]
pub struct FlowCoeffs {
    pub on_c_self: f64,
    pub on_c_pair: f64,
    pub on_s_pair: f64,
}

/// Validated, per-unit network model. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Network {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    /// Derived pi-model admittance blocks, one per branch.
    adm: Vec<BranchAdmittance>,
    /// Branch endpoints as internal bus indices.
    ends: Vec<(usize, usize)>,
    /// Generator bus as internal index.
    gen_bus: Vec<usize>,
    /// External id -> internal index.
    index: HashMap<usize, usize>,
}

/// Network construction / validation failures.
#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error("branch {0} references unknown bus {1}")]
    UnknownBranchBus(usize, usize),
    #[error("generator {0} references unknown bus {1}")]
    UnknownGeneratorBus(usize, usize),
    #[error("branch {0} connects bus {1} to itself")]
    SelfLoop(usize, usize),
    #[error("branch {0} has zero impedance")]
    ZeroImpedance(usize),
    #[error("branch {0} has non-positive tap ratio {1}")]
    BadTap(usize, f64),
    #[error("bus {0} has invalid voltage bounds [{1}, {2}]")]
    BadVoltageBounds(usize, f64, f64),
    #[error("generator {0} has inverted limits")]
    InvertedGenLimits(usize),
    #[error("generator {0} has negative quadratic cost {1}")]
    NegativeQuadCost(usize, f64),
    #[error("expected exactly one slack bus, found {0}")]
    SlackCount(usize),
    #[error("network graph is not connected ({0} of {1} buses reachable from the slack)")]
    Disconnected(usize, usize),
    #[error("non-positive demand ratio {0}")]
    BadLambda(f64),
    #[error("unknown bus {0}")]
    UnknownBus(usize),
}

impl Network {
    /// Validates raw components and derives the admittance data.
    pub fn new(
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
    ) -> Result<Self, NetworkError> {
        let index: HashMap<usize, usize> = buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
        for b in &buses {
            if !(b.v_min > 0.0 && b.v_min <= b.v_max) {
                return Err(NetworkError::BadVoltageBounds(b.id, b.v_min, b.v_max));
            }
        }
        let slack_count = buses.iter().filter(|b| b.is_slack).count();
        if slack_count != 1 {
            return Err(NetworkError::SlackCount(slack_count));
        }
        let mut ends = Vec::with_capacity(branches.len());
        for (k, br) in branches.iter().enumerate() {
            let fi = *index
                .get(&br.from_bus)
                .ok_or(NetworkError::UnknownBranchBus(k, br.from_bus))?;
            let ti = *index
                .get(&br.to_bus)
                .ok_or(NetworkError::UnknownBranchBus(k, br.to_bus))?;
            if fi == ti {
                return Err(NetworkError::SelfLoop(k, br.from_bus));
            }
            if br.r == 0.0 && br.x == 0.0 {
                return Err(NetworkError::ZeroImpedance(k));
            }
            if br.tap <= 0.0 {
                return Err(NetworkError::BadTap(k, br.tap));
            }
            ends.push((fi, ti));
        }
        let mut gen_bus = Vec::with_capacity(generators.len());
        for (g, gen) in generators.iter().enumerate() {
            let gi = *index
                .get(&gen.bus)
                .ok_or(NetworkError::UnknownGeneratorBus(g, gen.bus))?;
            if gen.p_min > gen.p_max || gen.q_min > gen.q_max {
                return Err(NetworkError::InvertedGenLimits(g));
            }
            if gen.cost_c2 < 0.0 {
                return Err(NetworkError::NegativeQuadCost(g, gen.cost_c2));
            }
            gen_bus.push(gi);
        }
        // connectivity from the slack
        let nb = buses.len();
        let slack = buses.iter().position(|b| b.is_slack).unwrap();
        let mut adj = vec![Vec::new(); nb];
        for &(f, t) in &ends {
            adj[f].push(t);
            adj[t].push(f);
        }
        let mut seen = vec![false; nb];
        let mut stack = vec![slack];
        seen[slack] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        if count != nb {
            return Err(NetworkError::Disconnected(count, nb));
        }
        let adm = branches.iter().map(branch_admittances).collect();
        Ok(Network {
            base_mva,
            buses,
            branches,
            generators,
            adm,
            ends,
            gen_bus,
            index,
        })
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn n_generators(&self) -> usize {
        self.generators.len()
    }

    /// Internal index of an external bus id.
    pub fn bus_index(&self, id: usize) -> Result<usize, NetworkError> {
        self.index.get(&id).copied().ok_or(NetworkError::UnknownBus(id))
    }

    /// Internal index of the slack bus.
    pub fn slack(&self) -> usize {
        self.buses.iter().position(|b| b.is_slack).unwrap()
    }

    /// Branch endpoints as internal indices.
    pub fn branch_ends(&self, k: usize) -> (usize, usize) {
        self.ends[k]
    }

    /// Internal bus index of a generator.
    pub fn generator_bus(&self, g: usize) -> usize {
        self.gen_bus[g]
    }

    /// Derived admittance blocks of branch `k`.
    pub fn admittance(&self, k: usize) -> &BranchAdmittance {
        &self.adm[k]
    }

    /// Total self admittance at a bus: bus shunt plus the self terms of every
    /// incident branch (the diagonal of the bus admittance matrix).
    pub fn bus_shunt(&self, i: usize) -> Result<(f64, f64), NetworkError> {
        if i >= self.buses.len() {
            return Err(NetworkError::UnknownBus(i));
        }
        let mut g = self.buses[i].gs_shunt;
        let mut b = self.buses[i].bs_shunt;
        for (k, &(f, t)) in self.ends.iter().enumerate() {
            if f == i {
                g += self.adm[k].g_ff;
                b += self.adm[k].b_ff;
            }
            if t == i {
                g += self.adm[k].g_tt;
                b += self.adm[k].b_tt;
            }
        }
        Ok((g, b))
    }

    /// Generators attached to internal bus `i`.
    pub fn generators_at(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.gen_bus
            .iter()
            .enumerate()
            .filter(move |&(_, &b)| b == i)
            .map(|(g, _)| g)
    }

    /// Generation cost of unit `g` at output `p` (pu), $/h.
    pub fn gen_cost(&self, g: usize, p: f64) -> f64 {
        let gen = &self.generators[g];
        gen.cost_c2 * p * p + gen.cost_c1 * p + gen.cost_c0
    }

    /// Total real demand, pu.
    pub fn total_p_demand(&self) -> f64 {
        self.buses.iter().map(|b| b.p_demand).sum()
    }
}

/// Scales every bus demand by `lambda`, leaving all other data unchanged.
pub fn scale_demand(net: &Network, lambda: f64) -> Result<Network, NetworkError> {
    if !(lambda > 0.0) {
        return Err(NetworkError::BadLambda(lambda));
    }
    let mut out = net.clone();
    for b in &mut out.buses {
        b.p_demand *= lambda;
        b.q_demand *= lambda;
    }
    Ok(out)
}

/// Pi-model admittance blocks of a branch, including tap ratio and phase shift.
///
/// With series admittance y = 1/(r + jx), charging b_c, and complex tap
/// t = tap * e^{j shift}:
///   Y_ff = (y + j b_c/2) / tap^2,   Y_ft = -y / conj(t),
///   Y_tf = -y / t,                  Y_tt = y + j b_c/2.
pub fn branch_admittances(br: &Branch) -> BranchAdmittance {
    let d = br.r * br.r + br.x * br.x;
    let (g, b) = (br.r / d, -br.x / d);
    let t2 = br.tap * br.tap;
    let (cos_s, sin_s) = {
        let sh = br.shift.to_radians();
        (sh.cos(), sh.sin())
    };
    // -y / conj(t) = -(g + jb) * e^{j shift} / tap
    let g_ft = -(g * cos_s - b * sin_s) / br.tap;
    let b_ft = -(g * sin_s + b * cos_s) / br.tap;
    // -y / t = -(g + jb) * e^{-j shift} / tap
    let g_tf = -(g * cos_s + b * sin_s) / br.tap;
    let b_tf = -(-g * sin_s + b * cos_s) / br.tap;
    BranchAdmittance {
        g_ff: g / t2,
        b_ff: (b + br.b_charge / 2.0) / t2,
        g_ft,
        b_ft,
        g_tt: g,
        b_tt: b + br.b_charge / 2.0,
        g_tf,
        b_tf,
    }
}

/// Coefficients of the from-side flow on (c_ff, c_pair, s_pair) with the pair
/// in canonical orientation; `flip` is true when from > to.
pub fn from_flow_coeffs(adm: &BranchAdmittance, flip: bool) -> (FlowCoeffs, FlowCoeffs) {
    let sgn = if flip { -1.0 } else { 1.0 };
    (
        FlowCoeffs {
            on_c_self: adm.g_ff,
            on_c_pair: adm.g_ft,
            on_s_pair: -adm.b_ft * sgn,
        },
        FlowCoeffs {
            on_c_self: -adm.b_ff,
            on_c_pair: -adm.b_ft,
            on_s_pair: -adm.g_ft * sgn,
        },
    )
}

/// Same for the to-side flow.
pub fn to_flow_coeffs(adm: &BranchAdmittance, flip: bool) -> (FlowCoeffs, FlowCoeffs) {
    let sgn = if flip { -1.0 } else { 1.0 };
    (
        FlowCoeffs {
            on_c_self: adm.g_tt,
            on_c_pair: adm.g_tf,
            on_s_pair: adm.b_tf * sgn,
        },
        FlowCoeffs {
            on_c_self: -adm.b_tt,
            on_c_pair: -adm.b_tf,
            on_s_pair: adm.g_tf * sgn,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_bus() -> Network {
        let buses = vec![
            Bus {
                id: 1,
                p_demand: 0.0,
                q_demand: 0.0,
                gs_shunt: 0.0,
                bs_shunt: 0.0,
                v_min: 0.9,
                v_max: 1.1,
                base_kv: 135.0,
                is_slack: true,
            },
            Bus {
                id: 2,
                p_demand: 0.5,
                q_demand: 0.2,
                gs_shunt: 0.0,
                bs_shunt: 0.0,
                v_min: 0.9,
                v_max: 1.1,
                base_kv: 135.0,
                is_slack: false,
            },
        ];
        let branches = vec![Branch {
            from_bus: 1,
            to_bus: 2,
            r: 0.0,
            x: 0.1,
            b_charge: 0.0,
            tap: 1.0,
            shift: 0.0,
            s_max: 0.0,
        }];
        let gens = vec![Generator {
            bus: 1,
            p_min: 0.0,
            p_max: 2.0,
            q_min: -1.0,
            q_max: 1.0,
            cost_c2: 100.0,
            cost_c1: 2000.0,
            cost_c0: 0.0,
        }];
        Network::new(100.0, buses, branches, gens).unwrap()
    }

    #[test]
    fn lossless_line_admittance() {
        let br = Branch {
            from_bus: 1,
            to_bus: 2,
            r: 0.0,
            x: 0.1,
            b_charge: 0.0,
            tap: 1.0,
            shift: 0.0,
            s_max: 0.0,
        };
        let a = branch_admittances(&br);
        assert_relative_eq!(a.g_ff, 0.0);
        assert_relative_eq!(a.b_ff, -10.0);
        assert_relative_eq!(a.g_ft, 0.0);
        assert_relative_eq!(a.b_ft, 10.0);
    }

    #[test]
    fn series_conductance() {
        let br = Branch {
            from_bus: 1,
            to_bus: 2,
            r: 0.01,
            x: 0.1,
            b_charge: 0.0,
            tap: 1.0,
            shift: 0.0,
            s_max: 0.0,
        };
        let a = branch_admittances(&br);
        assert_relative_eq!(a.g_ff, 0.01 / (0.01f64.powi(2) + 0.1f64.powi(2)), epsilon = 1e-12);
        assert_relative_eq!(a.g_ff, 0.99009900990099, epsilon = 1e-10);
    }

    #[test]
    fn tap_scales_ff_block_by_inverse_square() {
        let mut br = Branch {
            from_bus: 1,
            to_bus: 2,
            r: 0.02,
            x: 0.2,
            b_charge: 0.04,
            tap: 1.0,
            shift: 0.0,
            s_max: 0.0,
        };
        let a1 = branch_admittances(&br);
        br.tap = 2.0;
        let a2 = branch_admittances(&br);
        assert_relative_eq!(a2.g_ff, a1.g_ff / 4.0, epsilon = 1e-14);
        assert_relative_eq!(a2.b_ff, a1.b_ff / 4.0, epsilon = 1e-14);
        // tt blocks untouched by the tap
        assert_relative_eq!(a2.g_tt, a1.g_tt, epsilon = 1e-14);
        assert_relative_eq!(a2.b_tt, a1.b_tt, epsilon = 1e-14);
    }

    #[test]
    fn mirror_symmetry_without_tap() {
        // for tap = 1, shift = 0 the to-side flow function is the from-side
        // function with the roles of the endpoints (and the s orientation)
        // swapped
        let br = Branch {
            from_bus: 1,
            to_bus: 2,
            r: 0.03,
            x: 0.25,
            b_charge: 0.06,
            tap: 1.0,
            shift: 0.0,
            s_max: 0.0,
        };
        let a = branch_admittances(&br);
        assert_relative_eq!(a.g_ff, a.g_tt);
        assert_relative_eq!(a.b_ff, a.b_tt);
        assert_relative_eq!(a.g_ft, a.g_tf);
        assert_relative_eq!(a.b_ft, a.b_tf);
        let (c_ii, c_jj, c, s) = (1.04, 0.98, 1.0, -0.08);
        let (p_to, q_to) = a.to_flow(c_jj, c, s);
        // from-side evaluated with endpoints swapped: c_self = c_jj, s -> -s
        let (p_sw, q_sw) = a.from_flow(c_jj, c, -s);
        assert_relative_eq!(p_to, p_sw, epsilon = 1e-14);
        assert_relative_eq!(q_to, q_sw, epsilon = 1e-14);
    }

    #[test]
    fn flows_match_complex_arithmetic() {
        // evaluate S_from = conj(Y_ff) |V_i|^2 + conj(Y_ft) V_i conj(V_j)
        // and S_to = conj(Y_tt) |V_j|^2 + conj(Y_tf) V_j conj(V_i) directly
        let br = Branch {
            from_bus: 1,
            to_bus: 2,
            r: 0.013,
            x: 0.173,
            b_charge: 0.09,
            tap: 0.95,
            shift: 3.5,
            s_max: 0.0,
        };
        let a = branch_admittances(&br);
        let (e_i, f_i, e_j, f_j) = (1.02, -0.11, 0.97, 0.06);
        let c_ii = e_i * e_i + f_i * f_i;
        let c_jj = e_j * e_j + f_j * f_j;
        let c_ij = e_i * e_j + f_i * f_j;
        let s_ij = e_i * f_j - f_i * e_j;

        // complex reference built independently from r, x, b_charge, tap, shift
        type C = nalgebra::Complex<f64>;
        let vi = C::new(e_i, f_i);
        let vj = C::new(e_j, f_j);
        let y = C::new(1.0, 0.0) / C::new(br.r, br.x);
        let t = C::from_polar(br.tap, br.shift.to_radians());
        let ych = C::new(0.0, br.b_charge / 2.0);
        let yff = (y + ych) / C::new(br.tap * br.tap, 0.0);
        let yft = -y / t.conj();
        let ytf = -y / t;
        let ytt = y + ych;
        assert_relative_eq!(a.g_ff, yff.re, epsilon = 1e-13);
        assert_relative_eq!(a.b_ff, yff.im, epsilon = 1e-13);
        assert_relative_eq!(a.g_ft, yft.re, epsilon = 1e-13);
        assert_relative_eq!(a.b_ft, yft.im, epsilon = 1e-13);
        assert_relative_eq!(a.g_tf, ytf.re, epsilon = 1e-13);
        assert_relative_eq!(a.b_tf, ytf.im, epsilon = 1e-13);
        assert_relative_eq!(a.g_tt, ytt.re, epsilon = 1e-13);
        assert_relative_eq!(a.b_tt, ytt.im, epsilon = 1e-13);
        let s_from = yff.conj() * (vi * vi.conj()) + yft.conj() * (vi * vj.conj());
        let s_to = ytt.conj() * (vj * vj.conj()) + ytf.conj() * (vj * vi.conj());

        let (p_f, q_f) = a.from_flow(c_ii, c_ij, s_ij);
        let (p_t, q_t) = a.to_flow(c_jj, c_ij, s_ij);
        assert_relative_eq!(p_f, s_from.re, epsilon = 1e-13);
        assert_relative_eq!(q_f, s_from.im, epsilon = 1e-13);
        assert_relative_eq!(p_t, s_to.re, epsilon = 1e-13);
        assert_relative_eq!(q_t, s_to.im, epsilon = 1e-13);
    }

    #[test]
    fn scale_demand_scales_only_demand() {
        let net = two_bus();
        let scaled = scale_demand(&net, 2.0).unwrap();
        assert_relative_eq!(scaled.buses[1].p_demand, 1.0);
        assert_relative_eq!(scaled.buses[1].q_demand, 0.4);
        assert_eq!(scaled.buses[1].v_max, net.buses[1].v_max);
        assert_eq!(scaled.branches, net.branches);
        assert_eq!(scaled.generators, net.generators);
    }

    #[test]
    fn scale_demand_identity() {
        let net = two_bus();
        let scaled = scale_demand(&net, 1.0).unwrap();
        assert_eq!(scaled.buses, net.buses);
    }

    #[test]
    fn scale_demand_rejects_nonpositive() {
        let net = two_bus();
        assert!(scale_demand(&net, 0.0).is_err());
        assert!(scale_demand(&net, -1.0).is_err());
    }

    #[test]
    fn bus_shunt_lossless_line() {
        let net = two_bus();
        let (g, b) = net.bus_shunt(0).unwrap();
        assert_relative_eq!(g, 0.0);
        assert_relative_eq!(b, -10.0);
    }

    #[test]
    fn bus_shunt_pure_shunt() {
        // 5 MW shunt on a 100 MVA base with no incident branch self terms on
        // the g side
        let mut net = two_bus();
        net.buses[0].gs_shunt = 0.05;
        let (g, _) = net.bus_shunt(0).unwrap();
        assert_relative_eq!(g, 0.05);
    }

    #[test]
    fn slack_required() {
        let mut buses = two_bus().buses;
        buses[0].is_slack = false;
        let err = Network::new(100.0, buses, two_bus().branches, two_bus().generators);
        assert!(matches!(err, Err(NetworkError::SlackCount(0))));
    }

    #[test]
    fn disconnected_rejected() {
        let mut net = two_bus();
        net.buses.push(Bus {
            id: 3,
            p_demand: 0.0,
            q_demand: 0.0,
            gs_shunt: 0.0,
            bs_shunt: 0.0,
            v_min: 0.9,
            v_max: 1.1,
            base_kv: 135.0,
            is_slack: false,
        });
        let err = Network::new(100.0, net.buses, net.branches, net.generators);
        assert!(matches!(err, Err(NetworkError::Disconnected(2, 3))));
    }
}
