//! Canonical conic programs and the SOCP / clique-SDP model builders.

mod program;
mod sdp;
mod socp;

pub use program::{Cone, ConicProgram, ProgramError};
pub use sdp::build_sdp;
pub use socp::build_socp;

use crate::ipm::{IpmResult, IpmStatus};
use std::collections::HashMap;

/// Reference to one column of the variable vector; the physical value is
/// `scale * x[col]` (packed PSD off-diagonals carry scale 1/sqrt(2)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColRef {
    pub col: usize,
    pub scale: f64,
}

impl ColRef {
    pub fn unit(col: usize) -> Self {
        ColRef { col, scale: 1.0 }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.scale * x[self.col]
    }
}

/// Canonical lifted pair {a, b} with a < b; `s` is oriented a -> b.
#[derive(Debug, Clone)]
pub struct PairVar {
    pub a: usize,
    pub b: usize,
    pub c: ColRef,
    pub s: ColRef,
}

/// Per-generator dispatch and cost-epigraph columns.
#[derive(Debug, Clone)]
pub struct GenVars {
    pub p: ColRef,
    pub q: ColRef,
    /// Epigraph of the quadratic cost term; absent for linear-cost units.
    pub t: Option<ColRef>,
}

/// Directed flow columns of one branch.
#[derive(Debug, Clone)]
pub struct FlowVars {
    pub p_from: ColRef,
    pub q_from: ColRef,
    pub p_to: ColRef,
    pub q_to: ColRef,
}

/// One PSD block of the clique SDP: the real embedding of the Hermitian
/// moment matrix of clique `members`, side `2 * members.len()`.
#[derive(Debug, Clone)]
pub struct CliqueBlock {
    pub clique_index: usize,
    pub members: Vec<usize>,
    /// First column of the packed lower-triangular span.
    pub start: usize,
    /// Side of the real symmetric block (twice the clique size).
    pub side: usize,
}

/// Ties program columns to physical quantities.
#[derive(Debug, Clone, Default)]
pub struct VariableMap {
    pub c_ii: Vec<ColRef>,
    pub pairs: Vec<PairVar>,
    pub pair_index: HashMap<(usize, usize), usize>,
    pub gens: Vec<GenVars>,
    pub flows: Vec<FlowVars>,
    pub clique_blocks: Vec<CliqueBlock>,
}

impl VariableMap {
    pub fn pair(&self, a: usize, b: usize) -> Option<&PairVar> {
        let key = (a.min(b), a.max(b));
        self.pair_index.get(&key).map(|&i| &self.pairs[i])
    }

    /// Pair value (c_ij, s_ij) oriented from `i` to `j`.
    pub fn pair_value(&self, x: &[f64], i: usize, j: usize) -> Option<(f64, f64)> {
        let p = self.pair(i, j)?;
        let c = p.c.value(x);
        let s = p.s.value(x);
        Some(if i < j { (c, s) } else { (c, -s) })
    }
}

/// Solve status of a relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelaxStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

impl std::fmt::Display for RelaxStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RelaxStatus::Optimal => "optimal",
            RelaxStatus::Infeasible => "infeasible",
            RelaxStatus::Unbounded => "unbounded",
            RelaxStatus::NumericalFailure => "numerical_failure",
        };
        f.write_str(s)
    }
}

/// Physical view of a solved relaxation.
#[derive(Debug, Clone)]
pub struct RelaxSolution {
    pub status: RelaxStatus,
    /// Total generation cost, $/h (meaningful only when optimal).
    pub objective: f64,
    pub c_ii: Vec<f64>,
    /// (a, b, c_ab, s_ab) aligned with the map's canonical pair list.
    pub pair_values: Vec<(usize, usize, f64, f64)>,
    pub p_g: Vec<f64>,
    pub q_g: Vec<f64>,
    /// (p_from, q_from, p_to, q_to) per branch, pu.
    pub flows: Vec<(f64, f64, f64, f64)>,
    /// Raw variable vector for clique-matrix assembly.
    pub raw: Vec<f64>,
    pub map: VariableMap,
}

impl RelaxSolution {
    /// Pair value (c_ij, s_ij) oriented from `i` to `j`.
    pub fn pair(&self, i: usize, j: usize) -> Option<(f64, f64)> {
        self.map.pair_value(&self.raw, i, j)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error("solution vector has {0} entries, program has {1} columns")]
    DimensionMismatch(usize, usize),
}

/// Populates physical quantities from a raw solver result.
pub fn extract_solution(
    prog: &ConicProgram,
    map: &VariableMap,
    raw: &IpmResult,
) -> Result<RelaxSolution, ExtractError> {
    let status = match raw.status {
        IpmStatus::Optimal => RelaxStatus::Optimal,
        IpmStatus::PrimalInfeasible => RelaxStatus::Infeasible,
        IpmStatus::DualInfeasible => RelaxStatus::Unbounded,
        IpmStatus::IterationLimit | IpmStatus::NumericalFailure => RelaxStatus::NumericalFailure,
    };
    if status != RelaxStatus::Optimal {
        return Ok(RelaxSolution {
            status,
            objective: f64::NAN,
            c_ii: Vec::new(),
            pair_values: Vec::new(),
            p_g: Vec::new(),
            q_g: Vec::new(),
            flows: Vec::new(),
            raw: Vec::new(),
            map: map.clone(),
        });
    }
    let x = &raw.x;
    if x.len() != prog.n_vars() {
        return Err(ExtractError::DimensionMismatch(x.len(), prog.n_vars()));
    }
    Ok(RelaxSolution {
        status,
        objective: raw.primal_objective + prog.objective_offset(),
        c_ii: map.c_ii.iter().map(|r| r.value(x)).collect(),
        pair_values: map
            .pairs
            .iter()
            .map(|p| (p.a, p.b, p.c.value(x), p.s.value(x)))
            .collect(),
        p_g: map.gens.iter().map(|g| g.p.value(x)).collect(),
        q_g: map.gens.iter().map(|g| g.q.value(x)).collect(),
        flows: map
            .flows
            .iter()
            .map(|f| {
                (
                    f.p_from.value(x),
                    f.q_from.value(x),
                    f.p_to.value(x),
                    f.q_to.value(x),
                )
            })
            .collect(),
        raw: x.clone(),
        map: map.clone(),
    })
}
