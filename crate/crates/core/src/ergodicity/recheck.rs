//! Independent validation of finished reports.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::report::{matrix_of, Certificate, ErgodicityReport, Mode, NumericCertificate, PolynomialCertificate, StructuralWitness, Verdict};
use super::{AnalysisConfig, AnalysisError};
use crate::network::{build_stoichiometry, classify_unimolecular, ReactionNetwork};
use crate::paramalg::{characteristic_matrix, det_poly, eval_matrix, upper_bound_matrix, AlgebraError};
use crate::positivity::PositivityCertificate;
use crate::spectral::{pf_eigenvalue, SpectralError, MARGINAL_BAND};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecheckError {
    #[error("certified report carries no certificate")]
    MissingCertificate,
    #[error("refuted report carries no counterexample")]
    MissingCounterexample,
    #[error("recheck failed: {0}")]
    Failed(String),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

impl From<AlgebraError> for RecheckError {
    fn from(e: AlgebraError) -> Self {
        RecheckError::Analysis(e.into())
    }
}

impl From<SpectralError> for RecheckError {
    fn from(e: SpectralError) -> Self {
        RecheckError::Analysis(e.into())
    }
}

fn fail(msg: impl Into<String>) -> RecheckError {
    RecheckError::Failed(msg.into())
}

fn left_product(v: &[f64], m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.ncols()).map(|j| (0..m.nrows()).map(|i| v[i] * m[(i, j)]).sum()).collect()
}

/// Re-derives the claims of `report` without reusing the analysis code
/// paths: LP residuals at the stated matrices, fresh random points for
/// polynomial certificates, topological sorting for nilpotency, and the
/// eigenvalue of `A` at counterexamples.
pub fn recheck_report(network: &ReactionNetwork, report: &ErgodicityReport, cfg: &AnalysisConfig) -> Result<(), RecheckError> {
    match report.verdict {
        Verdict::Inconclusive => Ok(()),
        Verdict::Refuted => {
            let cx = report.counterexample.as_ref().ok_or(RecheckError::MissingCounterexample)?;
            let a = eval_matrix(&characteristic_matrix(network)?, &cx.assignment)?;
            if (&a - matrix_of(&cx.matrix)).amax() > 1e-9 * a.amax().max(1.0) {
                return Err(fail("counterexample matrix does not match A at its assignment"));
            }
            let lambda = pf_eigenvalue(&a)?;
            if lambda < -MARGINAL_BAND {
                return Err(fail(format!("A is Hurwitz at the counterexample (λ_PF = {lambda:.3e})")));
            }
            Ok(())
        }
        Verdict::Certified => match report.certificate.as_ref().ok_or(RecheckError::MissingCertificate)? {
            Certificate::NumericVector(c) | Certificate::VertexCommonV(c) => numeric(network, report.mode, c),
            Certificate::PolynomialVector(c) => polynomial(c, cfg),
            Certificate::Structural(w) => structural(w, report.reduction.is_none().then_some(network)),
        },
    }
}

fn numeric(network: &ReactionNetwork, mode: Mode, c: &NumericCertificate) -> Result<(), RecheckError> {
    if c.v.iter().any(|&x| !(x > 0.0)) {
        return Err(fail("v is not positive"));
    }
    let vmax = c.v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    for em in &c.matrices {
        let m = matrix_of(&em.matrix);
        if let Some((j, r)) = left_product(&c.v, &m).into_iter().enumerate().find(|&(_, r)| r > -c.epsilon / 2.0) {
            return Err(fail(format!("(vᵀM)_{j} = {r:e} exceeds −ε/2 at {:?}", em.point)));
        }
        if let Some(expected) = expected_matrix(network, mode, c, &em.point)? {
            if (&expected - &m).amax() > 1e-9 * expected.amax().max(1.0) {
                return Err(fail(format!("stated matrix does not match the network at {:?}", em.point)));
            }
        }
    }
    for s in &c.kernel {
        let r: f64 = c.v.iter().zip(s).map(|(x, &z)| x * z as f64).sum();
        if r.abs() > 1e-9 * vmax.max(1.0) {
            return Err(fail(format!("vᵀS_b = {r:e} is not zero")));
        }
    }
    if let Some(lifted) = &c.lifted {
        if lifted.iter().any(|&x| !(x > 0.0)) {
            return Err(fail("lifted v is not positive"));
        }
        let st = build_stoichiometry(network).map_err(AnalysisError::from)?;
        let lmax = lifted.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        for j in 0..st.second.ncols() {
            let r: f64 = (0..lifted.len()).map(|i| lifted[i] * st.second[(i, j)] as f64).sum();
            if r.abs() > 1e-9 * lmax.max(1.0) {
                return Err(fail(format!("lifted vᵀS_b = {r:e} is not zero")));
            }
        }
    }
    Ok(())
}

/// The matrix the certificate should hold at `point`, recomputed from the
/// network, when it is in species coordinates.
fn expected_matrix(
    network: &ReactionNetwork,
    mode: Mode,
    c: &NumericCertificate,
    point: &BTreeMap<String, f64>,
) -> Result<Option<DMatrix<f64>>, RecheckError> {
    if c.lifted.is_some() || c.v.len() != network.num_species() {
        return Ok(None);
    }
    let m = match mode {
        Mode::Nominal => characteristic_matrix(network)?,
        _ => upper_bound_matrix(network, &classify_unimolecular(network).map_err(AnalysisError::from)?)?,
    };
    Ok(Some(eval_matrix(&m, point)?))
}

fn polynomial(c: &PolynomialCertificate, cfg: &AnalysisConfig) -> Result<(), RecheckError> {
    let d = c.matrix.rows();
    let det = det_poly(&c.matrix)?;
    let signed = if d % 2 == 0 { det } else { -det };
    if (&signed - &c.determinant).max_abs_coeff() > 1e-9 * signed.max_abs_coeff().max(1.0) {
        return Err(fail("stated determinant does not match the matrix"));
    }
    if let PositivityCertificate::Handelman(h) = &c.positivity {
        let scale = c.determinant.max_abs_coeff().max(1.0);
        if h.delta <= 0.0 || h.terms.iter().any(|t| t.coeff < 0.0) || h.check(&c.determinant) > 1e-7 * scale {
            return Err(fail("Handelman certificate does not reproduce the determinant"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xc0ffee);
    for _ in 0..cfg.recheck_samples {
        let x: Vec<f64> = c
            .matrix
            .vars()
            .iter()
            .map(|n| {
                let (lo, hi) = c.domain.get(n).copied().unwrap_or_else(|| (c.pinned[n], c.pinned[n]));
                if hi > lo { rng.random_range(lo..=hi) } else { lo }
            })
            .collect();
        let m = c.matrix.eval_point(&x);
        let v: Vec<f64> = c.v.iter().map(|p| p.eval(&x)).collect();
        let scale = v.iter().fold(0.0_f64, |s, y| s.max(y.abs())) * m.amax().max(1.0);
        if v.iter().any(|&y| !(y > 0.0)) {
            return Err(fail(format!("v(ρ) is not positive at {x:?}")));
        }
        if let Some(r) = left_product(&v, &m).into_iter().find(|&r| r >= 1e-12 * scale) {
            return Err(fail(format!("v(ρ)ᵀA⁺(ρ) has entry {r:e} ≥ 0 at {x:?}")));
        }
    }
    Ok(())
}

/// Kahn's algorithm; true when the graph `i → j` for `support[i][j]` is acyclic.
fn acyclic(support: &[Vec<bool>]) -> bool {
    let n = support.len();
    let mut indeg = vec![0usize; n];
    for row in support {
        for (j, &e) in row.iter().enumerate() {
            indeg[j] += usize::from(e);
        }
    }
    let mut queue: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut seen = 0;
    while let Some(i) = queue.pop() {
        seen += 1;
        for j in 0..n {
            if support[i][j] {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    queue.push(j);
                }
            }
        }
    }
    seen == n
}

fn structural(w: &StructuralWitness, network: Option<&ReactionNetwork>) -> Result<(), RecheckError> {
    let a = matrix_of(&w.a_one);
    if let Some(n) = network {
        if a.nrows() != n.num_species() {
            return Err(fail("witness dimension does not match the network"));
        }
    }
    let positive_det = |what: &str| -> Result<(), RecheckError> {
        match &w.determinant {
            Some(p) if !p.is_zero() && p.coefficients_nonnegative() => Ok(()),
            Some(p) if w.statement == "f" && p.used_vars().is_empty() && p.constant_term() > 0.0 => Ok(()),
            _ => match &w.orthant {
                Some(PositivityCertificate::NonnegativeCoefficients { .. }) => {
                    Err(fail(format!("{what}: determinant has a negative coefficient")))
                }
                _ => Err(fail(format!("{what}: no positivity proof for the determinant"))),
            },
        }
    };
    match w.statement.as_str() {
        "tied" => positive_det("tied statement"),
        "f" | "e" => {
            let v = w.hurwitz_vector.as_ref().ok_or_else(|| fail("missing Hurwitz vector for A(1, 1, 0)"))?;
            if v.iter().any(|&x| !(x > 0.0)) {
                return Err(fail("Hurwitz vector is not positive"));
            }
            if let Some(r) = left_product(v, &a).into_iter().find(|&r| r >= 0.0) {
                return Err(fail(format!("vᵀA(1, 1, 0) has entry {r:e} ≥ 0")));
            }
            let support: Vec<Vec<bool>> = w.coupling.iter().map(|r| r.iter().map(|&x| x > 1e-12).collect()).collect();
            if !acyclic(&support) {
                return Err(fail("coupling support graph has a cycle"));
            }
            if w.statement == "e" {
                positive_det("statement e")?;
            }
            Ok(())
        }
        other => Err(fail(format!("unknown structural statement `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahn_detects_cycles() {
        assert!(acyclic(&[vec![false, true], vec![false, false]]));
        assert!(!acyclic(&[vec![false, true], vec![true, false]]));
        assert!(!acyclic(&[vec![true]]));
        assert!(acyclic(&[]));
    }
}
