//! MATPOWER-style case file parsing (text format, version 2 column layout).
//!
//! Consumed grammar: `mpc.baseMVA = <float>;` plus the matrix blocks
//! `mpc.bus`, `mpc.gen`, `mpc.branch`, `mpc.gencost`, each a bracketed list of
//! whitespace-separated numeric rows terminated by `;`. `%` starts a comment.
//! Unrecognized statements (`function ...`, `mpc.version`, named extras) are
//! skipped; columns beyond those consumed are ignored.

use super::{Branch, Bus, Generator, Network, NetworkError};

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("line {0}: {1}")]
    Syntax(usize, String),
    #[error("missing section mpc.{0}")]
    MissingSection(&'static str),
    #[error("line {0}: {1} row has {2} columns, expected at least {3}")]
    ShortRow(usize, &'static str, usize, usize),
    #[error("line {0}: piecewise-linear cost model is not supported")]
    PiecewiseCost(usize),
    #[error("line {0}: polynomial cost of degree > 2 with nonzero leading coefficients")]
    CostDegree(usize),
    #[error("gencost has {0} rows for {1} in-service generators")]
    GencostCount(usize, usize),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Numeric rows of one matrix block, each tagged with its source line.
type Rows = Vec<(usize, Vec<f64>)>;

struct RawCase {
    base_mva: Option<(usize, f64)>,
    bus: Option<Rows>,
    gen: Option<Rows>,
    branch: Option<Rows>,
    gencost: Option<Rows>,
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(p) => &line[..p],
        None => line,
    }
}

fn parse_row(lineno: usize, text: &str) -> Result<Vec<f64>, ParseError> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| ParseError::Syntax(lineno, format!("invalid number `{tok}`")))
        })
        .collect()
}

fn scan(text: &str) -> Result<RawCase, ParseError> {
    let mut raw = RawCase {
        base_mva: None,
        bus: None,
        gen: None,
        branch: None,
        gencost: None,
    };
    // currently open matrix block, if any
    let mut open: Option<(&'static str, Rows)> = None;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let mut body = strip_comment(line).trim();
        if body.is_empty() {
            continue;
        }
        if let Some((name, rows)) = open.as_mut() {
            // inside a matrix: rows until the closing bracket
            let closing = body.starts_with("];") || body == "]";
            if !closing {
                let row_text = body.trim_end_matches(';').trim_end_matches(']').trim();
                if !row_text.is_empty() {
                    rows.push((lineno, parse_row(lineno, row_text)?));
                }
                if body.ends_with("];") {
                    // single-line `row; ];` forms are not produced by MATPOWER;
                    // treat a trailing bracket as a close
                } else {
                    continue;
                }
            }
            let (name, rows) = (*name, std::mem::take(rows));
            open = None;
            match name {
                "bus" => raw.bus = Some(rows),
                "gen" => raw.gen = Some(rows),
                "branch" => raw.branch = Some(rows),
                "gencost" => raw.gencost = Some(rows),
                _ => unreachable!(),
            }
            continue;
        }
        if !body.starts_with("mpc.") {
            // function header or other MATLAB noise
            continue;
        }
        body = &body[4..];
        let eq = body
            .find('=')
            .ok_or_else(|| ParseError::Syntax(lineno, "expected `=`".into()))?;
        let key = body[..eq].trim();
        let value = body[eq + 1..].trim();
        match key {
            "baseMVA" => {
                let v = value.trim_end_matches(';').trim();
                let f = v
                    .parse::<f64>()
                    .map_err(|_| ParseError::Syntax(lineno, format!("invalid baseMVA `{v}`")))?;
                raw.base_mva = Some((lineno, f));
            }
            "bus" | "gen" | "branch" | "gencost" => {
                if !value.starts_with('[') {
                    return Err(ParseError::Syntax(lineno, "expected `[`".into()));
                }
                let name: &'static str = match key {
                    "bus" => "bus",
                    "gen" => "gen",
                    "branch" => "branch",
                    _ => "gencost",
                };
                open = Some((name, Vec::new()));
                // allow rows on the same line after `[`
                let rest = value[1..].trim();
                if let Some(stripped) = rest.strip_suffix("];") {
                    let mut rows = Vec::new();
                    for part in stripped.split(';') {
                        let part = part.trim();
                        if !part.is_empty() {
                            rows.push((lineno, parse_row(lineno, part)?));
                        }
                    }
                    let (name, _) = open.take().unwrap();
                    match name {
                        "bus" => raw.bus = Some(rows),
                        "gen" => raw.gen = Some(rows),
                        "branch" => raw.branch = Some(rows),
                        "gencost" => raw.gencost = Some(rows),
                        _ => unreachable!(),
                    }
                } else if !rest.is_empty() {
                    let (_, rows) = open.as_mut().unwrap();
                    for part in rest.split(';') {
                        let part = part.trim();
                        if !part.is_empty() {
                            rows.push((lineno, parse_row(lineno, part)?));
                        }
                    }
                }
            }
            // version string, bus names, anything else: ignored
            _ => continue,
        }
    }
    Ok(raw)
}

/// Parses MATPOWER case text into a validated per-unit [`Network`].
///
/// Out-of-service generators (status <= 0) and branches (status 0) are
/// dropped, with their gencost rows. Rows keep file order.
pub fn parse_case(text: &str) -> Result<Network, ParseError> {
    let raw = scan(text)?;
    let (_, base) = raw.base_mva.ok_or(ParseError::MissingSection("baseMVA"))?;
    let bus_rows = raw.bus.ok_or(ParseError::MissingSection("bus"))?;
    let gen_rows = raw.gen.ok_or(ParseError::MissingSection("gen"))?;
    let branch_rows = raw.branch.ok_or(ParseError::MissingSection("branch"))?;
    let gencost_rows = raw.gencost.ok_or(ParseError::MissingSection("gencost"))?;

    let mut buses = Vec::with_capacity(bus_rows.len());
    for (lineno, row) in &bus_rows {
        if row.len() < 13 {
            return Err(ParseError::ShortRow(*lineno, "bus", row.len(), 13));
        }
        buses.push(Bus {
            id: row[0] as usize,
            is_slack: row[1] as i64 == 3,
            p_demand: row[2] / base,
            q_demand: row[3] / base,
            gs_shunt: row[4] / base,
            bs_shunt: row[5] / base,
            base_kv: row[9],
            v_max: row[11],
            v_min: row[12],
        });
    }

    if gencost_rows.len() != gen_rows.len() && gencost_rows.len() != 2 * gen_rows.len() {
        return Err(ParseError::GencostCount(gencost_rows.len(), gen_rows.len()));
    }
    let mut generators = Vec::new();
    for (k, (lineno, row)) in gen_rows.iter().enumerate() {
        if row.len() < 10 {
            return Err(ParseError::ShortRow(*lineno, "gen", row.len(), 10));
        }
        if row[7] <= 0.0 {
            continue; // out of service
        }
        let (cost_lineno, cost) = &gencost_rows[k];
        if cost.len() < 4 {
            return Err(ParseError::ShortRow(*cost_lineno, "gencost", cost.len(), 4));
        }
        let model = cost[0] as i64;
        if model == 1 {
            return Err(ParseError::PiecewiseCost(*cost_lineno));
        }
        let ncost = cost[3] as usize;
        if cost.len() < 4 + ncost {
            return Err(ParseError::ShortRow(*cost_lineno, "gencost", cost.len(), 4 + ncost));
        }
        let coeffs = &cost[4..4 + ncost]; // highest degree first
        let mut c = [0.0; 3]; // c[d] = coefficient of p^d in MW terms
        for (p, &v) in coeffs.iter().rev().enumerate() {
            if p <= 2 {
                c[p] = v;
            } else if v != 0.0 {
                return Err(ParseError::CostDegree(*cost_lineno));
            }
        }
        generators.push(Generator {
            bus: row[0] as usize,
            q_max: row[3] / base,
            q_min: row[4] / base,
            p_max: row[8] / base,
            p_min: row[9] / base,
            // convert MW-based polynomial coefficients to per-unit power
            cost_c2: c[2] * base * base,
            cost_c1: c[1] * base,
            cost_c0: c[0],
        });
    }

    let mut branches = Vec::new();
    for (lineno, row) in &branch_rows {
        if row.len() < 11 {
            return Err(ParseError::ShortRow(*lineno, "branch", row.len(), 11));
        }
        if row[10] == 0.0 {
            continue; // out of service
        }
        if row[2] == 0.0 && row[3] == 0.0 {
            return Err(ParseError::Syntax(*lineno, "zero-impedance branch".into()));
        }
        branches.push(Branch {
            from_bus: row[0] as usize,
            to_bus: row[1] as usize,
            r: row[2],
            x: row[3],
            b_charge: row[4],
            s_max: row[5] / base,
            tap: if row[8] == 0.0 { 1.0 } else { row[8] },
            shift: row[9],
        });
    }

    Ok(Network::new(base, buses, branches, generators)?)
}

/// Writes a network back out in the consumed subset of the case grammar.
///
/// Quantities are converted back to MW / MVAr / MW-based cost forms so that
/// parsing the output reproduces the network field-for-field.
pub fn serialize_case(net: &Network) -> String {
    use std::fmt::Write;
    let base = net.base_mva;
    let mut s = String::new();
    writeln!(s, "function mpc = case").unwrap();
    writeln!(s, "mpc.version = '2';").unwrap();
    writeln!(s, "mpc.baseMVA = {};", fmt(base)).unwrap();
    writeln!(s, "mpc.bus = [").unwrap();
    for b in &net.buses {
        writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t1\t1\t0\t{}\t1\t{}\t{};",
            b.id,
            if b.is_slack { 3 } else { 1 },
            fmt(b.p_demand * base),
            fmt(b.q_demand * base),
            fmt(b.gs_shunt * base),
            fmt(b.bs_shunt * base),
            fmt(b.base_kv),
            fmt(b.v_max),
            fmt(b.v_min)
        )
        .unwrap();
    }
    writeln!(s, "];").unwrap();
    writeln!(s, "mpc.gen = [").unwrap();
    for g in &net.generators {
        writeln!(
            s,
            "\t{}\t0\t0\t{}\t{}\t1\t{}\t1\t{}\t{}\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0;",
            g.bus,
            fmt(g.q_max * base),
            fmt(g.q_min * base),
            fmt(base),
            fmt(g.p_max * base),
            fmt(g.p_min * base)
        )
        .unwrap();
    }
    writeln!(s, "];").unwrap();
    writeln!(s, "mpc.branch = [").unwrap();
    for b in &net.branches {
        writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t0\t0\t{}\t{}\t1\t-360\t360;",
            b.from_bus,
            b.to_bus,
            fmt(b.r),
            fmt(b.x),
            fmt(b.b_charge),
            fmt(b.s_max * base),
            fmt(b.tap),
            fmt(b.shift)
        )
        .unwrap();
    }
    writeln!(s, "];").unwrap();
    writeln!(s, "mpc.gencost = [").unwrap();
    for g in &net.generators {
        writeln!(
            s,
            "\t2\t0\t0\t3\t{}\t{}\t{};",
            fmt(g.cost_c2 / (base * base)),
            fmt(g.cost_c1 / base),
            fmt(g.cost_c0)
        )
        .unwrap();
    }
    writeln!(s, "];").unwrap();
    s
}

fn fmt(v: f64) -> String {
    // shortest representation that round-trips through f64
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const CASE14: &str = include_str!("../../../../cases/case14.m");

    const TWO_BUS: &str = "\
% minimal two-bus case
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1\t0\t135\t1\t1.1\t0.9;
\t2\t1\t50\t10\t0\t0\t1\t1\t0\t135\t1\t1.1\t0.9;
];
mpc.gen = [
\t1\t0\t0\t100\t-100\t1\t100\t1\t200\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0;
];
mpc.branch = [
\t1\t2\t0\t0.1\t0\t0\t0\t0\t0\t0\t1\t-360\t360;
];
mpc.gencost = [
\t2\t0\t0\t3\t0.1\t20\t0;
];
";

    #[test]
    fn two_bus_per_unit_conversion() {
        let net = parse_case(TWO_BUS).unwrap();
        assert_eq!(net.n_buses(), 2);
        assert_eq!(net.n_branches(), 1);
        assert_eq!(net.n_generators(), 1);
        assert_relative_eq!(net.buses[1].p_demand, 0.5);
        assert_relative_eq!(net.buses[1].q_demand, 0.1);
        assert_relative_eq!(net.generators[0].p_max, 2.0);
        // $/MW^2 0.1 -> $/pu^2 1000, $/MW 20 -> $/pu 2000
        assert_relative_eq!(net.generators[0].cost_c2, 1000.0);
        assert_relative_eq!(net.generators[0].cost_c1, 2000.0);
    }

    #[test]
    fn case14_counts() {
        let net = parse_case(CASE14).unwrap();
        // independent oracle: count the data rows of each section textually
        let count_rows = |section: &str| {
            let start = CASE14.find(&format!("mpc.{section} = [")).unwrap();
            CASE14[start..]
                .lines()
                .skip(1)
                .take_while(|l| !l.trim_start().starts_with("];"))
                .filter(|l| !l.trim().is_empty())
                .count()
        };
        assert_eq!(count_rows("bus"), 14);
        assert_eq!(count_rows("branch"), 20);
        assert_eq!(count_rows("gen"), 5);
        assert_eq!(net.n_buses(), 14);
        assert_eq!(net.n_branches(), 20);
        assert_eq!(net.n_generators(), 5);
    }

    #[test]
    fn case14_scaled_total_demand() {
        let net = parse_case(CASE14).unwrap();
        // independent oracle: sum the Pd column of the bus block textually
        let start = CASE14.find("mpc.bus = [").unwrap();
        let total_mw: f64 = CASE14[start..]
            .lines()
            .skip(1)
            .take_while(|l| !l.trim_start().starts_with("];"))
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split_whitespace().nth(2).unwrap().trim_end_matches(';').parse::<f64>().unwrap()
            })
            .sum();
        let half = crate::net::scale_demand(&net, 0.5).unwrap();
        assert_relative_eq!(half.total_p_demand(), 0.5 * total_mw / 100.0, epsilon = 1e-12);
    }

    #[test]
    fn case14_bus9_shunt() {
        let net = parse_case(CASE14).unwrap();
        let i = net.bus_index(9).unwrap();
        assert!(net.buses[i].bs_shunt > 0.0);
        let (_, b_sh) = net.bus_shunt(i).unwrap();
        // the 19 MVAr shunt element appears in the per-unit diagonal
        assert_relative_eq!(net.buses[i].bs_shunt, 0.19);
        assert!(b_sh.is_finite());
    }

    #[test]
    fn missing_gencost_is_error() {
        let truncated = TWO_BUS.split("mpc.gencost").next().unwrap();
        match parse_case(truncated) {
            Err(ParseError::MissingSection("gencost")) => {}
            other => panic!("expected missing gencost, got {other:?}"),
        }
    }

    #[test]
    fn zero_impedance_branch_is_error() {
        let bad = TWO_BUS.replace("\t1\t2\t0\t0.1", "\t1\t2\t0\t0");
        assert!(matches!(parse_case(&bad), Err(ParseError::Syntax(_, _))));
    }

    #[test]
    fn unknown_bus_reference_is_error() {
        let bad = TWO_BUS.replace("\t1\t2\t0\t0.1", "\t1\t7\t0\t0.1");
        assert!(matches!(
            parse_case(&bad),
            Err(ParseError::Network(NetworkError::UnknownBranchBus(0, 7)))
        ));
    }

    #[test]
    fn piecewise_cost_is_error() {
        let bad = TWO_BUS.replace("\t2\t0\t0\t3\t0.1\t20\t0;", "\t1\t0\t0\t2\t0\t0\t100\t20;");
        assert!(matches!(parse_case(&bad), Err(ParseError::PiecewiseCost(_))));
    }

    #[test]
    fn roundtrip_is_field_identical() {
        for text in [TWO_BUS, CASE14] {
            let net = parse_case(text).unwrap();
            let again = parse_case(&serialize_case(&net)).unwrap();
            assert_eq!(net.base_mva, again.base_mva);
            assert_eq!(net.buses, again.buses);
            assert_eq!(net.branches, again.branches);
            assert_eq!(net.generators, again.generators);
        }
    }

    #[test]
    fn linear_cost_rows_accepted() {
        let lin = TWO_BUS.replace("\t2\t0\t0\t3\t0.1\t20\t0;", "\t2\t0\t0\t2\t20\t0;");
        let net = parse_case(&lin).unwrap();
        assert_relative_eq!(net.generators[0].cost_c2, 0.0);
        assert_relative_eq!(net.generators[0].cost_c1, 2000.0);
    }
}
