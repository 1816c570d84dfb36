use std::time::Instant;

use nalgebra::DMatrix;

use super::report::{rows_of, Certificate, Counterexample, EvaluatedMatrix, Mode, NumericCertificate, ReductionInfo};
use super::system::UniSystem;
use super::{ensure_analyzable, evaluate_a, first_order_names, AnalysisConfig, AnalysisError, Draft};
use crate::network::{build_stoichiometry, ReactionNetwork};
use crate::paramalg::eval_matrix;
use crate::spectral::{is_hurwitz_metzler, solve_strict_feasibility, FeasibilityProblem, HurwitzVerdict, MARGINAL_BAND};

pub fn nominal_check(network: &ReactionNetwork) -> Result<super::ErgodicityReport, AnalysisError> {
    nominal_check_with(network, &AnalysisConfig::default())
}

/// Ergodicity at the pinned rate values. Unimolecular networks get the
/// exact Hurwitz verdict; bimolecular ones the LP `{v ≥ 𝟙, vᵀS_b = 0,
/// vᵀA ≤ −ε𝟙}`, falling back to the reduced Hurwitz test.
pub fn nominal_check_with(network: &ReactionNetwork, cfg: &AnalysisConfig) -> Result<super::ErgodicityReport, AnalysisError> {
    let started = Instant::now();
    ensure_analyzable(network)?;
    let names = first_order_names(network);
    let mut assignment = std::collections::BTreeMap::new();
    for name in &names {
        let p = network.param(name).expect("validated");
        match p.pinned_value() {
            Some(x) => {
                assignment.insert(name.clone(), x);
            }
            None => {
                return Err(AnalysisError::WrongMode {
                    mode: "nominal",
                    reason: format!("rate `{name}` is not fixed"),
                })
            }
        }
    }
    let (a, lambda) = evaluate_a(network, &assignment)?;
    let st = build_stoichiometry(network)?;
    let evaluated = EvaluatedMatrix { point: assignment.clone(), matrix: rows_of(&a) };

    let draft = if st.second.ncols() == 0 {
        let h = is_hurwitz_metzler(&a, cfg.epsilon)?;
        match h.verdict {
            HurwitzVerdict::Stable => Draft::certified(Certificate::NumericVector(NumericCertificate {
                v: h.certificate.expect("stable verdict carries a vector"),
                matrices: vec![evaluated],
                kernel: Vec::new(),
                epsilon: cfg.epsilon,
                lifted: None,
            })),
            HurwitzVerdict::Unstable => {
                Draft::refuted(Counterexample { assignment, matrix: rows_of(&a), lambda_pf: h.lambda_pf })
            }
            HurwitzVerdict::Marginal => Draft::inconclusive(format!(
                "λ_PF(A) = {:.3e} lies in the marginal band ±{MARGINAL_BAND:e}",
                h.lambda_pf
            )),
        }
    } else {
        let s_b = st.second.map(|x| x as f64);
        let mut p = FeasibilityProblem::positive_cone(a.nrows(), cfg.epsilon);
        p.add_strict_left_product(&a);
        p.add_left_kernel(&s_b);
        match solve_strict_feasibility(&p)? {
            Some(v) => Draft::certified(Certificate::NumericVector(NumericCertificate {
                v,
                matrices: vec![evaluated],
                kernel: (0..st.second.ncols()).map(|j| st.second.column(j).iter().copied().collect()).collect(),
                epsilon: cfg.epsilon,
                lifted: None,
            })),
            None => bimolecular_fallback(network, &assignment, &a, lambda, cfg)?,
        }
    };
    Ok(draft.finish(Mode::Nominal, cfg, started))
}

fn bimolecular_fallback(
    network: &ReactionNetwork,
    assignment: &std::collections::BTreeMap<String, f64>,
    a: &DMatrix<f64>,
    lambda: f64,
    cfg: &AnalysisConfig,
) -> Result<Draft, AnalysisError> {
    let refutation = || Counterexample { assignment: assignment.clone(), matrix: rows_of(a), lambda_pf: lambda };
    let (mut draft, reduction): (Draft, Option<ReductionInfo>) = match UniSystem::reduced(network, |name| assignment.get(name).is_some_and(|&x| x > 0.0))? {
        Err(reason) => {
            let d = if lambda > MARGINAL_BAND {
                Draft::refuted(refutation()).note("A itself is not Hurwitz at the nominal rates")
            } else {
                Draft::inconclusive(format!("no v > 0 with vᵀS_b = 0 and vᵀA < 0; {reason}"))
            };
            (d, None)
        }
        Ok(sys) => {
            let reduced = eval_matrix(&sys.symbolic_matrix(network), assignment)?;
            let h = is_hurwitz_metzler(&reduced, cfg.epsilon)?;
            let d = match h.verdict {
                HurwitzVerdict::Unstable if lambda >= -MARGINAL_BAND => {
                    Draft::refuted(refutation()).note(format!("reduced matrix has λ_PF = {:.6}", h.lambda_pf))
                }
                HurwitzVerdict::Unstable => Draft::inconclusive(format!(
                    "reduced matrix is unstable (λ_PF = {:.6}) but A itself is Hurwitz (λ_PF = {lambda:.6}); \
                     no genuine instability witness",
                    h.lambda_pf
                )),
                HurwitzVerdict::Marginal => Draft::inconclusive(format!(
                    "reduced λ_PF = {:.3e} lies in the marginal band",
                    h.lambda_pf
                )),
                HurwitzVerdict::Stable => Draft::inconclusive(
                    "reduced matrix is Hurwitz, but the lifted vector misses the strictness margin on dropped columns",
                ),
            };
            (d, sys.reduction_info(network))
        }
    };
    draft.reduction = reduction;
    Ok(draft)
}
