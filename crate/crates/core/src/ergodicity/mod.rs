//! Ergodicity analyses: nominal, robust (interval rates), structural (any
//! positive rates), and antithetic controller feasibility.

mod controller;
mod nominal;
mod recheck;
mod report;
mod robust;
mod structural;
mod system;

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

pub use controller::{controller_feasibility, ControllerReport, ControllerSpec};
pub use nominal::{nominal_check, nominal_check_with};
pub use recheck::{recheck_report, RecheckError};
pub use report::{
    Certificate, Counterexample, Diagnostics, ErgodicityReport, EvaluatedMatrix, Mode, NumericCertificate,
    PolynomialCertificate, ReductionInfo, StructuralWitness, Tolerances, Verdict,
};
pub use robust::{
    robust_check_bimolecular, robust_check_bimolecular_with, robust_check_constant_v, robust_check_constant_v_with,
    robust_check_unimolecular, robust_check_unimolecular_with,
};
pub use structural::{structural_check, structural_check_with};

use crate::network::{build_stoichiometry, NetworkError, ParamKind, ReactionNetwork};
use crate::par::Execution;
use crate::paramalg::{characteristic_matrix, eval_matrix, AlgebraError};
use crate::positivity::{PositivityError, SearchConfig};
use crate::spectral::{pf_eigenvalue, SpectralError, MARGINAL_BAND, METZLER_TOL};
use report::rows_of;
use system::UniSystem;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Positivity(#[from] PositivityError),
    #[error("{mode} analysis does not apply: {reason}")]
    WrongMode { mode: &'static str, reason: String },
    #[error("{count} uncertain conversion parameters give 2^{count} vertices; the limit is {limit}")]
    VertexLimitExceeded { count: usize, limit: usize },
    #[error("prerequisite failed: {0}")]
    PrerequisiteFailed(String),
    #[error("numerical inconsistency: {0}")]
    NumericalInconsistency(String),
    #[error("invalid controller specification: {0}")]
    InvalidControllerSpec(String),
}

impl From<crate::network::Violation> for AnalysisError {
    fn from(v: crate::network::Violation) -> Self {
        AnalysisError::Network(NetworkError::Invalid(vec![v]))
    }
}

/// Numeric settings shared by all analyses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalysisConfig {
    /// Strictness margin of certificate LPs.
    pub epsilon: f64,
    pub seed: u64,
    /// `None` uses `max(deg p, 2)`.
    pub handelman_degree: Option<u32>,
    pub spot_check_samples: usize,
    pub recheck_samples: usize,
    pub nilpotency_samples: usize,
    pub search_starts: usize,
    pub vertex_limit: usize,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-7,
            seed: 20_170_605,
            handelman_degree: None,
            spot_check_samples: 50,
            recheck_samples: 100,
            nilpotency_samples: 20,
            search_starts: 512,
            vertex_limit: 20,
            execution: Execution::default(),
        }
    }
}

impl AnalysisConfig {
    pub(crate) fn search(&self) -> SearchConfig {
        SearchConfig { starts: self.search_starts, seed: self.seed, local_steps: 40, execution: self.execution }
    }

    pub(crate) fn diagnostics(&self, started: Instant) -> Diagnostics {
        Diagnostics {
            seed: self.seed,
            tolerances: Tolerances { epsilon: self.epsilon, marginal_band: MARGINAL_BAND, metzler: METZLER_TOL },
            handelman_degree: self.handelman_degree,
            spot_check_samples: self.spot_check_samples,
            recheck_samples: self.recheck_samples,
            nilpotency_samples: self.nilpotency_samples,
            search_starts: self.search_starts,
            wall_time_ms: started.elapsed().as_millis() as u64,
        }
    }
}

/// Mode chosen by `auto`: any free rate → structural, any proper interval
/// → robust (bimolecular variant when `S_b` is nonempty), else nominal.
pub fn auto_mode(network: &ReactionNetwork) -> Mode {
    let used: Vec<&crate::network::RateParam> =
        network.reactions.iter().filter_map(|r| network.param(&r.rate)).collect();
    if used.iter().any(|p| p.is_free()) {
        Mode::Structural
    } else if used.iter().any(|p| p.is_uncertain()) {
        if network.is_unimolecular() {
            Mode::RobustParametric
        } else {
            Mode::Bimolecular
        }
    } else {
        Mode::Nominal
    }
}

pub fn analyze(network: &ReactionNetwork, mode: Mode, cfg: &AnalysisConfig) -> Result<ErgodicityReport, AnalysisError> {
    match mode {
        Mode::Nominal => nominal_check_with(network, cfg),
        Mode::RobustParametric => {
            if network.is_unimolecular() {
                robust_check_unimolecular_with(network, cfg)
            } else {
                robust_check_bimolecular_with(network, cfg)
            }
        }
        Mode::RobustConstantV => robust_check_constant_v_with(network, cfg),
        Mode::Structural => structural_check_with(network, cfg),
        Mode::Bimolecular => robust_check_bimolecular_with(network, cfg),
    }
}

/// Outcome of a pipeline before timing and mode are attached.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Draft {
    pub verdict: Verdict,
    pub certificate: Option<Certificate>,
    pub counterexample: Option<Counterexample>,
    pub reduction: Option<ReductionInfo>,
    pub notes: Vec<String>,
}

impl Draft {
    pub fn inconclusive(note: impl Into<String>) -> Self {
        Self { verdict: Verdict::Inconclusive, certificate: None, counterexample: None, reduction: None, notes: vec![note.into()] }
    }

    pub fn certified(certificate: Certificate) -> Self {
        Self { verdict: Verdict::Certified, certificate: Some(certificate), counterexample: None, reduction: None, notes: Vec::new() }
    }

    pub fn refuted(counterexample: Counterexample) -> Self {
        Self {
            verdict: Verdict::Refuted,
            certificate: None,
            counterexample: Some(counterexample),
            reduction: None,
            notes: Vec::new(),
        }
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn finish(mut self, mode: Mode, cfg: &AnalysisConfig, started: Instant) -> ErgodicityReport {
        if matches!(self.verdict, Verdict::Certified) {
            self.notes.push("irreducibility of the state space is assumed, not checked".into());
        }
        ErgodicityReport {
            mode,
            verdict: self.verdict,
            certificate: self.certificate,
            counterexample: self.counterexample,
            reduction: self.reduction,
            notes: self.notes,
            diagnostics: cfg.diagnostics(started),
        }
    }
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Name-level assignment realizing per-channel rates of `sys`, or `None`
/// when channels sharing a parameter name need different values. Reactions
/// dropped by a reduction take `dropped(name)` unless already assigned.
pub(crate) fn realize(
    network: &ReactionNetwork,
    sys: &UniSystem,
    channel_values: &[f64],
    dropped: impl Fn(&str) -> f64,
) -> Option<BTreeMap<String, f64>> {
    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    for (ch, &val) in sys.channels.iter().zip(channel_values) {
        let name = &network.reactions[ch.reaction].rate;
        match out.get(name) {
            Some(&old) if !close(old, val) => return None,
            Some(_) => {}
            None => {
                out.insert(name.clone(), val);
            }
        }
    }
    if let Some(r) = &sys.reduction {
        for &k in &r.dropped_reactions {
            let name = &network.reactions[k].rate;
            if !out.contains_key(name) {
                out.insert(name.clone(), dropped(name));
            }
        }
    }
    Some(out)
}

/// Characteristic matrix of the network at `assignment` and its PF eigenvalue.
pub(crate) fn evaluate_a(
    network: &ReactionNetwork,
    assignment: &BTreeMap<String, f64>,
) -> Result<(DMatrix<f64>, f64), AnalysisError> {
    let a = eval_matrix(&characteristic_matrix(network)?, assignment)?;
    let lambda = pf_eigenvalue(&a)?;
    Ok((a, lambda))
}

/// A counterexample when `A` itself is not Hurwitz at `assignment`.
pub(crate) fn genuine_instability(
    network: &ReactionNetwork,
    assignment: BTreeMap<String, f64>,
) -> Result<Option<Counterexample>, AnalysisError> {
    let (a, lambda) = evaluate_a(network, &assignment)?;
    Ok((lambda >= -MARGINAL_BAND).then(|| Counterexample { assignment, matrix: rows_of(&a), lambda_pf: lambda }))
}

pub(crate) fn ensure_analyzable(network: &ReactionNetwork) -> Result<(), AnalysisError> {
    network.ensure_valid()?;
    build_stoichiometry(network)?;
    Ok(())
}

/// Parameter names of first-order reactions, in declaration order.
pub(crate) fn first_order_names(network: &ReactionNetwork) -> Vec<String> {
    network
        .params
        .iter()
        .filter(|p| network.reactions.iter().any(|r| r.order() == 1 && r.rate == p.name))
        .map(|p| p.name.clone())
        .collect()
}

/// True when a rate is bounded away from zero on its domain.
pub(crate) fn strictly_positive(network: &ReactionNetwork, name: &str) -> bool {
    match network.param(name).map(|p| p.kind) {
        Some(ParamKind::Interval { lo, .. }) => lo > 0.0,
        Some(_) => true,
        None => false,
    }
}
