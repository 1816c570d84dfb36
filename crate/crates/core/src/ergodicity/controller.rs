use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{ensure_analyzable, evaluate_a, AnalysisConfig, AnalysisError};
use crate::network::ReactionNetwork;
use crate::paramalg::{eval_vector, offset_vector};
use crate::spectral::{is_hurwitz_metzler, HurwitzVerdict};

/// Antithetic integral controller: `∅ → Z1 @ μ`, `X_ℓ → X_ℓ + Z2 @ θ`,
/// `Z1 + Z2 → ∅ @ η`, `Z1 → Z1 + X_act @ k`. Species are 0-based indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControllerSpec {
    pub controlled: usize,
    pub actuated: usize,
    pub mu: f64,
    pub theta: f64,
    pub eta: f64,
    pub k: f64,
}

impl ControllerSpec {
    pub fn new(controlled: usize, mu: f64, theta: f64) -> Self {
        Self { controlled, actuated: 0, mu, theta, eta: 1.0, k: 1.0 }
    }

    pub fn setpoint(&self) -> f64 {
        self.mu / self.theta
    }

    pub fn validate(&self, d: usize) -> Result<(), AnalysisError> {
        for (name, idx) in [("controlled", self.controlled), ("actuated", self.actuated)] {
            if idx >= d {
                return Err(AnalysisError::InvalidControllerSpec(format!(
                    "{name} species index {idx} is out of range for {d} species"
                )));
            }
        }
        for (name, x) in [("mu", self.mu), ("theta", self.theta), ("eta", self.eta), ("k", self.k)] {
            if !(x.is_finite() && x > 0.0) {
                return Err(AnalysisError::InvalidControllerSpec(format!("{name} = {x} must be positive and finite")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControllerReport {
    pub output_controllable: bool,
    /// Solution of `wᵀA + e_ℓᵀ = 0`.
    pub w: Vec<f64>,
    /// Hurwitz certificate `v`; the bound below depends on this choice.
    pub v: Vec<f64>,
    /// Largest `c` with `vᵀ(A + cI) ≤ 0`.
    pub c: f64,
    pub setpoint_lower_bound: f64,
    pub requested_setpoint: f64,
    pub feasible: bool,
    pub lambda_pf: f64,
    pub notes: Vec<String>,
}

/// Checks whether the antithetic controller `spec` makes the closed loop
/// ergodic with mean of species `ℓ` converging to `μ/θ`.
pub fn controller_feasibility(
    network: &ReactionNetwork,
    spec: &ControllerSpec,
    cfg: &AnalysisConfig,
) -> Result<ControllerReport, AnalysisError> {
    ensure_analyzable(network)?;
    let d = network.num_species();
    spec.validate(d)?;
    if !network.is_unimolecular() {
        return Err(AnalysisError::PrerequisiteFailed("the open-loop network must be unimolecular".into()));
    }
    if let Some(p) = network.reactions.iter().map(|r| network.param(&r.rate).expect("validated")).find(|p| p.pinned_value().is_none()) {
        return Err(AnalysisError::PrerequisiteFailed(format!("rate `{}` is not fixed", p.name)));
    }
    let values = network.pinned_assignment();
    let (a, _) = evaluate_a(network, &values)?;
    let h = is_hurwitz_metzler(&a, cfg.epsilon)?;
    if h.verdict != HurwitzVerdict::Stable {
        return Err(AnalysisError::PrerequisiteFailed(format!(
            "A is not Hurwitz (λ_PF = {:.6})",
            h.lambda_pf
        )));
    }
    let lp_v = h.certificate.expect("stable verdict carries a vector");
    let (v, c) = widest_margin(&a, lp_v);
    let b0 = eval_vector(&offset_vector(network)?, &values)?;

    let mut rhs = DVector::zeros(d);
    rhs[spec.controlled] = -1.0;
    let w = a
        .transpose()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| AnalysisError::NumericalInconsistency("Hurwitz A is numerically singular".into()))?;
    let scale = w.amax().max(1.0);
    let tol = 1e-9 * scale;
    let output_controllable = w.iter().all(|&x| x >= -tol) && w[spec.actuated] > tol;

    let vb0: f64 = v.iter().zip(b0.iter()).map(|(x, y)| x * y).sum();
    let bound = vb0 / (c * v[spec.controlled]) + 0.0;
    let requested = spec.setpoint();
    let mut notes = vec!["the set-point bound depends on the certificate v and need not be the tightest one".to_string()];
    if !output_controllable {
        notes.push(format!(
            "w = {:?} violates w ≥ 0 with a positive actuated entry",
            w.iter().copied().collect::<Vec<_>>()
        ));
    }
    Ok(ControllerReport {
        output_controllable,
        w: w.iter().map(|&x| if x.abs() <= tol { 0.0 } else { x }).collect(),
        v,
        c,
        setpoint_lower_bound: bound,
        requested_setpoint: requested,
        feasible: output_controllable && requested > bound,
        lambda_pf: h.lambda_pf,
        notes,
    })
}

/// Largest `c` with `vᵀ(A + cI) ≤ 0`.
fn margin(a: &DMatrix<f64>, v: &[f64]) -> f64 {
    let d = v.len();
    (0..d)
        .map(|j| -(0..d).map(|i| v[i] * a[(i, j)]).sum::<f64>() / v[j])
        .fold(f64::INFINITY, f64::min)
}

/// Among the LP vector, `−A⁻ᵀ𝟙` and the left Perron vector, the positive
/// one with the largest margin.
fn widest_margin(a: &DMatrix<f64>, lp_v: Vec<f64>) -> (Vec<f64>, f64) {
    let d = a.nrows();
    let mut candidates = vec![lp_v];
    if let Some(x) = a.transpose().lu().solve(&DVector::from_element(d, -1.0)) {
        candidates.push(x.iter().copied().collect());
    }
    if let Some(p) = left_perron(a) {
        candidates.push(p);
    }
    candidates
        .into_iter()
        .filter(|v| v.iter().all(|&x| x.is_finite() && x > 0.0))
        .map(|v| {
            let top = v.iter().fold(0.0_f64, |m, &x| m.max(x));
            let v: Vec<f64> = v.iter().map(|x| x / top).collect();
            let c = margin(a, &v);
            (v, c)
        })
        .fold(None, |best: Option<(Vec<f64>, f64)>, cand| match best {
            Some(b) if b.1 >= cand.1 => Some(b),
            _ => Some(cand),
        })
        .expect("the LP vector is positive")
}

/// Power iteration on `(A + sI)ᵀ`, which is nonnegative for a large shift.
fn left_perron(a: &DMatrix<f64>) -> Option<Vec<f64>> {
    let d = a.nrows();
    let shift = (0..d).map(|i| -a[(i, i)]).fold(0.0_f64, f64::max) + 1.0;
    let m = (a + DMatrix::identity(d, d) * shift).transpose();
    let mut x = DVector::from_element(d, 1.0);
    for _ in 0..10_000 {
        let y = &m * &x;
        let n = y.amax();
        if !(n > 0.0) {
            return None;
        }
        let y = y / n;
        let done = (&y - &x).amax() < 1e-13;
        x = y;
        if done {
            break;
        }
    }
    (x.min() > 1e-9).then(|| x.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_network;

    fn gene(extra: &str) -> ReactionNetwork {
        parse_network(&format!(
            "species: mRNA, Protein
param k2 = 1
param g1 = 1
param g2 = 1
{extra}reaction: mRNA -> mRNA + Protein @ k2
reaction: mRNA -> 0 @ g1
reaction: Protein -> 0 @ g2
"
        ))
        .unwrap()
    }

    #[test]
    fn gene_expression_is_output_controllable() {
        let r = controller_feasibility(&gene(""), &ControllerSpec::new(1, 3.0, 1.0), &AnalysisConfig::default()).unwrap();
        assert!(r.output_controllable);
        assert!((r.w[0] - 1.0).abs() < 1e-12 && (r.w[1] - 1.0).abs() < 1e-12);
        assert_eq!(r.setpoint_lower_bound, 0.0);
        assert!(r.c >= 0.5 - 1e-9, "margin {}", r.c);
        assert!(r.feasible);
    }

    #[test]
    fn decoupled_actuation_is_not_controllable() {
        let n = parse_network("species: A, B\nparam g = 1\nreaction: A -> 0 @ g\nreaction: B -> 0 @ g\n").unwrap();
        let r = controller_feasibility(&n, &ControllerSpec::new(1, 1.0, 1.0), &AnalysisConfig::default()).unwrap();
        assert!(!r.output_controllable);
        assert!(!r.feasible);
    }

    #[test]
    fn unstable_open_loop_fails_prerequisite() {
        let n = parse_network("species: X\nparam b = 2\nparam g = 1\nreaction: X -> 2 X @ b\nreaction: X -> 0 @ g\n").unwrap();
        let e = controller_feasibility(&n, &ControllerSpec::new(0, 1.0, 1.0), &AnalysisConfig::default());
        assert!(matches!(e, Err(AnalysisError::PrerequisiteFailed(_))));
    }

    #[test]
    fn bound_with_constitutive_production() {
        let r = controller_feasibility(
            &gene("param b = 2\nreaction: 0 -> mRNA @ b\n"),
            &ControllerSpec::new(1, 1.0, 1.0),
            &AnalysisConfig::default(),
        )
        .unwrap();
        let expect = (r.v[0] * 2.0) / (r.c * r.v[1]);
        assert!((r.setpoint_lower_bound - expect).abs() < 1e-12);
        assert!(r.setpoint_lower_bound > 0.0);
    }
}
