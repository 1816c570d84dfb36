use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::paramalg::{MultiPoly, ParamMatrix};
use crate::positivity::{ParamBox, PositivityCertificate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Nominal,
    RobustParametric,
    RobustConstantV,
    Structural,
    Bimolecular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    Refuted,
    Inconclusive,
}

pub(crate) fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub(crate) fn matrix_of(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}

/// A numeric matrix together with the parameter values it was evaluated at.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluatedMatrix {
    pub point: BTreeMap<String, f64>,
    pub matrix: Vec<Vec<f64>>,
}

/// `v > 0` with `vᵀM ≤ −ε𝟙` for every listed matrix and `vᵀS_b = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NumericCertificate {
    pub v: Vec<f64>,
    pub matrices: Vec<EvaluatedMatrix>,
    /// Columns of `S_b`; empty for unimolecular networks.
    pub kernel: Vec<Vec<i64>>,
    pub epsilon: f64,
    /// For reduced systems, `v` lifted back to species coordinates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lifted: Option<Vec<f64>>,
}

/// Hurwitz stability of `M(ρ)` on a box, certified by an anchor point and
/// positivity of `(−1)^d det M(ρ)`, with the adjugate vector
/// `v(ρ)ᵀ = (−1)^{d+1} 𝟙ᵀ Adj M(ρ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolynomialCertificate {
    pub matrix: ParamMatrix,
    pub domain: ParamBox,
    pub pinned: BTreeMap<String, f64>,
    pub determinant: MultiPoly,
    pub v: Vec<MultiPoly>,
    pub positivity: PositivityCertificate,
    pub anchor: EvaluatedMatrix,
    pub anchor_lambda_pf: f64,
    pub spot_checks: usize,
}

/// Witness for structural stability of the (possibly reduced) system.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructuralWitness {
    /// `"f"`: unit-rate test with ±1 conversions; `"e"`: orthant
    /// determinant test; `"tied"`: determinant test over shared names.
    pub statement: String,
    pub labels: Vec<String>,
    /// `A(𝟙, 𝟙, 0)`.
    pub a_one: Vec<Vec<f64>>,
    pub lambda_pf: f64,
    pub hurwitz_vector: Option<Vec<f64>>,
    /// Rows `e_{r(k)}ᵀ` of `W_ct`, as reactant indices.
    pub w_ct: Vec<usize>,
    /// Columns of `S_ct`.
    pub s_ct: Vec<Vec<i64>>,
    /// `−W_ct A⁻¹ S_ct` at unit rates.
    pub coupling: Vec<Vec<f64>>,
    /// Exact entries of `coupling`, as rational strings.
    pub coupling_exact: Vec<Vec<String>>,
    pub nilpotent: bool,
    pub cycle: Option<Vec<usize>>,
    pub spectral_radius: f64,
    pub determinant: Option<MultiPoly>,
    pub orthant: Option<PositivityCertificate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", content = "data", rename_all = "snake_case")]
pub enum Certificate {
    NumericVector(NumericCertificate),
    PolynomialVector(PolynomialCertificate),
    VertexCommonV(NumericCertificate),
    Structural(StructuralWitness),
}

/// Parameter values at which the characteristic matrix is not Hurwitz.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub assignment: BTreeMap<String, f64>,
    pub matrix: Vec<Vec<f64>>,
    pub lambda_pf: f64,
}

/// Left-nullspace reduction of a bimolecular network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionInfo {
    pub basis: Vec<Vec<i64>>,
    pub kept_species: Vec<String>,
    pub dropped_species: Vec<String>,
    /// Basis row paired with each kept species.
    pub row_of: Vec<usize>,
    /// Reduced characteristic matrix with symbolic rates.
    pub matrix: ParamMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tolerances {
    pub epsilon: f64,
    pub marginal_band: f64,
    pub metzler: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub seed: u64,
    pub tolerances: Tolerances,
    pub handelman_degree: Option<u32>,
    pub spot_check_samples: usize,
    pub recheck_samples: usize,
    pub nilpotency_samples: usize,
    pub search_starts: usize,
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErgodicityReport {
    pub mode: Mode,
    pub verdict: Verdict,
    pub certificate: Option<Certificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Counterexample>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reduction: Option<ReductionInfo>,
    pub notes: Vec<String>,
    pub diagnostics: Diagnostics,
}

impl ErgodicityReport {
    pub fn is_certified(&self) -> bool {
        self.verdict == Verdict::Certified
    }

    pub fn structural_witness(&self) -> Option<&StructuralWitness> {
        match &self.certificate {
            Some(Certificate::Structural(w)) => Some(w),
            _ => None,
        }
    }
}
