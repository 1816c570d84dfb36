use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::report::{
    rows_of, Certificate, EvaluatedMatrix, ErgodicityReport, Mode, NumericCertificate, PolynomialCertificate,
};
use super::system::UniSystem;
use super::{ensure_analyzable, genuine_instability, realize, strictly_positive, AnalysisConfig, AnalysisError, Draft};
use crate::network::{build_stoichiometry, ParamKind, RateParam, ReactionNetwork, UniKind};
use crate::par::map_indexed;
use crate::paramalg::{adjugate_vector, det_poly, matrix_from_channels, AlgebraError, ChannelRate, ParamMatrix};
use crate::positivity::{certify_positive_on_box_with, ParamBox, PositivityStatus};
use crate::spectral::{
    is_hurwitz_metzler, pf_eigenvalue, solve_strict_feasibility, FeasibilityProblem, HurwitzVerdict, MARGINAL_BAND,
};

fn unbounded(p: &RateParam, reaction: usize, kind: UniKind) -> AlgebraError {
    let (kind, bound) = match kind {
        UniKind::Degradation => ("degradation", "lower"),
        UniKind::Catalytic => ("catalytic", "upper"),
        UniKind::Conversion => ("conversion", "lower and upper"),
    };
    AlgebraError::UnboundedParameter { name: p.name.clone(), reaction, kind, bound }
}

/// Worst-case data of a first-order system over the interval box.
struct WorstCase {
    /// Rate per channel; `None` for symbolic conversion rates.
    fixed: Vec<Option<f64>>,
    matrix: ParamMatrix,
    domain: ParamBox,
    pinned: BTreeMap<String, f64>,
}

impl WorstCase {
    fn build(network: &ReactionNetwork, sys: &UniSystem) -> Result<Self, AnalysisError> {
        let mut fixed = Vec::with_capacity(sys.channels.len());
        let mut rates = Vec::with_capacity(sys.channels.len());
        let mut vars: Vec<String> = Vec::new();
        let mut domain = ParamBox::new();
        let mut pinned = BTreeMap::new();
        for (ch, &kind) in sys.channels.iter().zip(&sys.kinds) {
            let p = network.rate_of(ch.reaction);
            let value = match kind {
                UniKind::Degradation => Some(p.lower().ok_or_else(|| unbounded(p, ch.reaction, kind))?),
                UniKind::Catalytic => Some(p.upper().ok_or_else(|| unbounded(p, ch.reaction, kind))?),
                UniKind::Conversion => match p.kind {
                    ParamKind::Free => return Err(unbounded(p, ch.reaction, kind).into()),
                    _ if p.pinned_value().is_some() => {
                        let x = p.pinned_value().expect("checked");
                        pinned.insert(p.name.clone(), x);
                        Some(x)
                    }
                    ParamKind::Interval { lo, hi } => {
                        if !vars.contains(&p.name) {
                            vars.push(p.name.clone());
                            domain.insert(p.name.clone(), (lo, hi));
                        }
                        None
                    }
                    ParamKind::Fixed { value } => Some(value),
                },
            };
            fixed.push(value);
            rates.push(match value {
                Some(x) => ChannelRate::Value(x),
                None => ChannelRate::Symbol(p.name.clone()),
            });
        }
        let channels = sys.with_rates(|i| rates[i].clone());
        let kinds: BTreeMap<String, ParamKind> = vars
            .iter()
            .map(|v| (v.clone(), network.param(v).expect("declared").kind))
            .collect();
        let matrix = matrix_from_channels(sys.dim, &channels, vars, kinds);
        Ok(Self { fixed, matrix, domain, pinned })
    }

    fn point_map(&self, point: &[f64]) -> BTreeMap<String, f64> {
        self.matrix.vars().iter().cloned().zip(point.iter().copied()).collect()
    }

    fn channel_values(&self, sys: &UniSystem, network: &ReactionNetwork, point: &BTreeMap<String, f64>) -> Vec<f64> {
        sys.channels
            .iter()
            .zip(&self.fixed)
            .map(|(ch, f)| f.unwrap_or_else(|| point[&network.reactions[ch.reaction].rate]))
            .collect()
    }

    fn midpoint(&self) -> Vec<f64> {
        self.matrix.vars().iter().map(|v| 0.5 * (self.domain[v].0 + self.domain[v].1)).collect()
    }
}

fn default_rate(network: &ReactionNetwork, name: &str) -> f64 {
    network.param(name).and_then(RateParam::lower).unwrap_or(1.0)
}

/// Turns a box point where the worst-case matrix fails into a refutation
/// when it is realizable by one value per parameter name and `A` itself is
/// unstable there.
fn try_refute(
    network: &ReactionNetwork,
    sys: &UniSystem,
    wc: &WorstCase,
    point: &BTreeMap<String, f64>,
    why: String,
) -> Result<Draft, AnalysisError> {
    let values = wc.channel_values(sys, network, point);
    let Some(assignment) = realize(network, sys, &values, |n| default_rate(network, n)) else {
        return Ok(Draft::inconclusive(format!(
            "{why}, but the worst-case rates are not realizable by one value per shared parameter name"
        )));
    };
    Ok(match genuine_instability(network, assignment)? {
        Some(cx) => Draft::refuted(cx).note(why),
        None => Draft::inconclusive(format!("{why}, but the characteristic matrix itself is Hurwitz there")),
    })
}

fn numeric_certificate(sys: &UniSystem, v: Vec<f64>, matrices: Vec<EvaluatedMatrix>, eps: f64) -> NumericCertificate {
    let lifted = sys.reduction.as_ref().map(|_| sys.lift(&v));
    NumericCertificate { v, matrices, kernel: Vec::new(), epsilon: eps, lifted }
}

/// Parametric pipeline on a first-order system: anchor test at the box
/// midpoint, then positivity of `(−1)^d det A⁺` on the box.
fn parametric(network: &ReactionNetwork, sys: &UniSystem, cfg: &AnalysisConfig) -> Result<Draft, AnalysisError> {
    let wc = WorstCase::build(network, sys)?;
    let mid = wc.midpoint();
    let mid_map = wc.point_map(&mid);
    let a_mid = wc.matrix.eval_point(&mid);
    let h = is_hurwitz_metzler(&a_mid, cfg.epsilon)?;
    let mut anchor_point = wc.pinned.clone();
    anchor_point.extend(mid_map.clone());
    match h.verdict {
        HurwitzVerdict::Unstable => {
            return try_refute(network, sys, &wc, &mid_map, format!("worst-case matrix has λ_PF = {:.6}", h.lambda_pf))
        }
        HurwitzVerdict::Marginal => {
            return Ok(Draft::inconclusive(format!(
                "worst-case λ_PF = {:.3e} lies in the marginal band ±{MARGINAL_BAND:e}",
                h.lambda_pf
            )))
        }
        HurwitzVerdict::Stable => {}
    }
    let anchor = EvaluatedMatrix { point: anchor_point, matrix: rows_of(&a_mid) };
    if wc.domain.is_empty() {
        let v = h.certificate.expect("stable verdict carries a vector");
        return Ok(Draft::certified(Certificate::NumericVector(numeric_certificate(sys, v, vec![anchor], cfg.epsilon))));
    }

    let det = det_poly(&wc.matrix)?;
    let p = if sys.dim % 2 == 0 { det } else { -det };
    let degree = cfg.handelman_degree.unwrap_or_else(|| p.degree().max(2));
    let verdict = certify_positive_on_box_with(&p, &wc.domain, degree, &cfg.search())?;
    match verdict.status {
        PositivityStatus::Certified => {
            let v = adjugate_vector(&wc.matrix)?;
            spot_check(&wc, &v, cfg)?;
            Ok(Draft::certified(Certificate::PolynomialVector(PolynomialCertificate {
                matrix: wc.matrix.clone(),
                domain: wc.domain.clone(),
                pinned: wc.pinned.clone(),
                determinant: p,
                v,
                positivity: verdict.certificate.expect("certified verdict carries a certificate"),
                anchor,
                anchor_lambda_pf: h.lambda_pf,
                spot_checks: cfg.spot_check_samples,
            })))
        }
        PositivityStatus::Counterexample { point, value } => {
            let a = eval_at(&wc.matrix, &point);
            let lambda = pf_eigenvalue(&a)?;
            if lambda < -MARGINAL_BAND {
                return Ok(Draft::inconclusive(format!(
                    "(−1)^d det A⁺ = {value:.3e} at a box point where λ_PF = {lambda:.3e}; numerically unresolved"
                )));
            }
            try_refute(network, sys, &wc, &point, format!("(−1)^d det A⁺ = {value:.3e} ≤ 0 inside the box"))
        }
        PositivityStatus::Inconclusive { max_degree } => Ok(Draft::inconclusive(format!(
            "no counterexample found and no Handelman certificate up to degree {max_degree}"
        ))),
    }
}

fn eval_at(m: &ParamMatrix, point: &BTreeMap<String, f64>) -> DMatrix<f64> {
    let x: Vec<f64> = m.vars().iter().map(|v| point[v]).collect();
    m.eval_point(&x)
}

/// Re-evaluates `v(ρ) > 0` and `v(ρ)ᵀA⁺(ρ) < 0` at random box points.
fn spot_check(wc: &WorstCase, v: &[crate::paramalg::MultiPoly], cfg: &AnalysisConfig) -> Result<(), AnalysisError> {
    let vars = wc.matrix.vars();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5907);
    let points: Vec<Vec<f64>> = (0..cfg.spot_check_samples)
        .map(|_| {
            vars.iter()
                .map(|n| {
                    let (lo, hi) = wc.domain[n];
                    if hi > lo { rng.random_range(lo..=hi) } else { lo }
                })
                .collect()
        })
        .collect();
    let failures = map_indexed(cfg.execution, points.len(), |i| {
        let x = &points[i];
        let a = wc.matrix.eval_point(x);
        let vx: Vec<f64> = v.iter().map(|p| p.eval(x)).collect();
        let scale = vx.iter().fold(0.0_f64, |m, y| m.max(y.abs())).max(1e-300);
        let positive = vx.iter().all(|&y| y > 0.0);
        let decreasing = (0..a.ncols()).all(|j| (0..a.nrows()).map(|i| vx[i] * a[(i, j)]).sum::<f64>() < 1e-12 * scale);
        (!(positive && decreasing)).then(|| x.clone())
    });
    match failures.into_iter().flatten().next() {
        None => Ok(()),
        Some(x) => Err(AnalysisError::NumericalInconsistency(format!(
            "adjugate vector fails its spot check at {:?}",
            wc.point_map(&x)
        ))),
    }
}

pub fn robust_check_unimolecular(network: &ReactionNetwork) -> Result<ErgodicityReport, AnalysisError> {
    robust_check_unimolecular_with(network, &AnalysisConfig::default())
}

/// Robust ergodicity of a unimolecular network over its interval box.
pub fn robust_check_unimolecular_with(network: &ReactionNetwork, cfg: &AnalysisConfig) -> Result<ErgodicityReport, AnalysisError> {
    let started = Instant::now();
    ensure_analyzable(network)?;
    if !network.is_unimolecular() {
        return Err(AnalysisError::WrongMode {
            mode: "robust unimolecular",
            reason: "the network has bimolecular reactions".into(),
        });
    }
    let sys = UniSystem::unimolecular(network)?;
    Ok(parametric(network, &sys, cfg)?.finish(Mode::RobustParametric, cfg, started))
}

pub fn robust_check_constant_v(network: &ReactionNetwork) -> Result<ErgodicityReport, AnalysisError> {
    robust_check_constant_v_with(network, &AnalysisConfig::default())
}

/// Common-vector LP over the vertices of the conversion-rate box. Also
/// valid for rates that vary in time inside the box.
pub fn robust_check_constant_v_with(network: &ReactionNetwork, cfg: &AnalysisConfig) -> Result<ErgodicityReport, AnalysisError> {
    let started = Instant::now();
    ensure_analyzable(network)?;
    Ok(constant_v(network, cfg)?.finish(Mode::RobustConstantV, cfg, started))
}

fn constant_v(network: &ReactionNetwork, cfg: &AnalysisConfig) -> Result<Draft, AnalysisError> {
    let st = build_stoichiometry(network)?;
    let sys = UniSystem::unimolecular(network)?;
    let wc = WorstCase::build(network, &sys)?;
    let vars = wc.matrix.vars().to_vec();
    if vars.len() > cfg.vertex_limit {
        return Err(AnalysisError::VertexLimitExceeded { count: vars.len(), limit: cfg.vertex_limit });
    }
    let vertices: Vec<Vec<f64>> = (0..1usize << vars.len())
        .map(|mask| {
            vars.iter()
                .enumerate()
                .map(|(i, v)| if mask >> i & 1 == 1 { wc.domain[v].1 } else { wc.domain[v].0 })
                .collect()
        })
        .collect();
    let matrices = map_indexed(cfg.execution, vertices.len(), |i| wc.matrix.eval_point(&vertices[i]));

    if vars.is_empty() && st.second.ncols() == 0 {
        let a = &matrices[0];
        let h = is_hurwitz_metzler(a, cfg.epsilon)?;
        let evaluated = EvaluatedMatrix { point: wc.pinned.clone(), matrix: rows_of(a) };
        return match h.verdict {
            HurwitzVerdict::Stable => Ok(Draft::certified(Certificate::VertexCommonV(numeric_certificate(
                &sys,
                h.certificate.expect("stable verdict carries a vector"),
                vec![evaluated],
                cfg.epsilon,
            )))),
            HurwitzVerdict::Unstable => {
                try_refute(network, &sys, &wc, &BTreeMap::new(), format!("worst-case matrix has λ_PF = {:.6}", h.lambda_pf))
            }
            HurwitzVerdict::Marginal => Ok(Draft::inconclusive(format!(
                "worst-case λ_PF = {:.3e} lies in the marginal band ±{MARGINAL_BAND:e}",
                h.lambda_pf
            ))),
        };
    }

    let mut p = FeasibilityProblem::positive_cone(sys.dim, cfg.epsilon);
    for a in &matrices {
        p.add_strict_left_product(a);
    }
    if st.second.ncols() > 0 {
        p.add_left_kernel(&st.second.map(|x| x as f64));
    }
    Ok(match solve_strict_feasibility(&p)? {
        Some(v) => {
            let evaluated = vertices
                .iter()
                .zip(&matrices)
                .map(|(x, a)| {
                    let mut point = wc.pinned.clone();
                    point.extend(wc.point_map(x));
                    EvaluatedMatrix { point, matrix: rows_of(a) }
                })
                .collect();
            let mut cert = numeric_certificate(&sys, v, evaluated, cfg.epsilon);
            cert.kernel = (0..st.second.ncols()).map(|j| st.second.column(j).iter().copied().collect()).collect();
            Draft::certified(Certificate::VertexCommonV(cert))
                .note("the common vector also certifies rates varying in time inside the box")
        }
        None => Draft::inconclusive(format!(
            "no common v over the {} vertices; this test is only sufficient",
            vertices.len()
        )),
    })
}

pub fn robust_check_bimolecular(network: &ReactionNetwork) -> Result<ErgodicityReport, AnalysisError> {
    robust_check_bimolecular_with(network, &AnalysisConfig::default())
}

/// Robust ergodicity of a network with bimolecular reactions: a common
/// vector in the left null space of `S_b` over all vertices, otherwise the
/// parametric pipeline on the left-nullspace reduction.
pub fn robust_check_bimolecular_with(network: &ReactionNetwork, cfg: &AnalysisConfig) -> Result<ErgodicityReport, AnalysisError> {
    let started = Instant::now();
    ensure_analyzable(network)?;
    if network.is_unimolecular() {
        let mut r = robust_check_unimolecular_with(network, cfg)?;
        r.notes.push("no bimolecular reactions; the unimolecular analysis was used".into());
        return Ok(r);
    }
    let mut notes = Vec::new();
    match constant_v(network, cfg) {
        Ok(d) if d.verdict == super::Verdict::Certified => return Ok(d.finish(Mode::Bimolecular, cfg, started)),
        Ok(_) => notes.push("no common vector in the left null space of S_b over the vertices".to_string()),
        Err(AnalysisError::VertexLimitExceeded { count, limit }) => {
            notes.push(format!("vertex test skipped: {count} uncertain conversion rates exceed the limit {limit}"))
        }
        Err(e) => return Err(e),
    }
    let mut draft = match UniSystem::reduced(network, |n| strictly_positive(network, n))? {
        Err(reason) => Draft::inconclusive(reason),
        Ok(sys) => {
            let mut d = parametric(network, &sys, cfg)?;
            d.reduction = sys.reduction_info(network);
            d
        }
    };
    notes.append(&mut draft.notes);
    draft.notes = notes;
    Ok(draft.finish(Mode::Bimolecular, cfg, started))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ergodicity::Verdict;
    use crate::parse::parse_network;

    fn toy(k_hi: f64) -> ReactionNetwork {
        parse_network(&format!(
            "species: X1, X2, X3
param g1 = 2
param g2 = 2
param k1 in [0.1, 10]
param k2 = {k_hi}
param k3 = {k_hi}
reaction: X1 -> 0 @ g1
reaction: X2 -> 0 @ g2
reaction: X3 -> X1 @ k1
reaction: X1 -> X1 + X2 @ k2
reaction: X2 -> X2 + X3 @ k3
"
        ))
        .unwrap()
    }

    #[test]
    fn toy_box_is_certified() {
        let r = robust_check_unimolecular(&toy(1.0)).unwrap();
        assert_eq!(r.verdict, Verdict::Certified, "{:?}", r.notes);
        let Some(Certificate::PolynomialVector(c)) = &r.certificate else { panic!() };
        // (−1)^3 det = 3 k1
        for x in [0.1, 1.0, 10.0] {
            assert!((c.determinant.eval(&[x]) - 3.0 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn toy_box_with_large_catalysis_is_refuted() {
        let r = robust_check_unimolecular(&toy(3.0)).unwrap();
        assert_eq!(r.verdict, Verdict::Refuted);
        assert!(r.counterexample.unwrap().lambda_pf >= 0.0);
    }

    #[test]
    fn constant_v_agrees_on_fixed_network() {
        let n = parse_network("species: X, Y\nparam a = 1\nparam b = 2\nreaction: X -> Y @ a\nreaction: Y -> 0 @ b\n").unwrap();
        let r = robust_check_constant_v(&n).unwrap();
        assert_eq!(r.verdict, Verdict::Certified);
    }

    #[test]
    fn full_rank_s_b_is_inconclusive() {
        let n = parse_network(
            "species: A, B\nparam g = 1\nparam k = 1\nreaction: A -> 0 @ g\nreaction: B -> 0 @ g\nreaction: A + B -> 2 A @ k\nreaction: A + B -> 2 B @ k\nreaction: A + B -> 0 @ k\n",
        )
        .unwrap();
        let r = robust_check_bimolecular(&n).unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }
}
