use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::report::{rows_of, Certificate, ErgodicityReport, Mode, StructuralWitness};
use super::system::UniSystem;
use super::{ensure_analyzable, first_order_names, genuine_instability, realize, AnalysisConfig, AnalysisError, Draft};
use crate::network::{build_stoichiometry, ReactionNetwork, UniKind};
use crate::paramalg::{det_poly, matrix_from_channels, ChannelRate, MultiPoly, ParamMatrix};
use crate::positivity::{positive_on_orthant_with, PositivityStatus};
use crate::spectral::exact::{hurwitz_metzler_exact, inverse, rank, to_f64, Rat};
use crate::spectral::{
    find_cycle, inverse_support, pf_eigenvalue, solve_strict_feasibility, FeasibilityProblem, MARGINAL_BAND,
};

/// Catalytic rate used when `A(𝟙, 𝟙, 0)` itself is not Hurwitz.
const SMALL_CATALYSIS: f64 = 1e-6;

pub fn structural_check(network: &ReactionNetwork) -> Result<ErgodicityReport, AnalysisError> {
    structural_check_with(network, &AnalysisConfig::default())
}

/// Ergodicity for every choice of positive first-order rates. Declared
/// values and intervals are ignored.
pub fn structural_check_with(network: &ReactionNetwork, cfg: &AnalysisConfig) -> Result<ErgodicityReport, AnalysisError> {
    let started = Instant::now();
    ensure_analyzable(network)?;
    let st = build_stoichiometry(network)?;
    let mut notes = Vec::new();
    if first_order_names(network).iter().any(|n| !network.param(n).is_some_and(|p| p.is_free())) {
        notes.push("declared rate values and intervals are ignored; every positive rate is admitted".to_string());
    }
    let sys = if st.second.ncols() == 0 {
        UniSystem::unimolecular(network)?
    } else {
        match UniSystem::reduced(network, |_| true)? {
            Ok(s) => s,
            Err(reason) => {
                let mut d = Draft::inconclusive(reason);
                notes.append(&mut d.notes);
                d.notes = notes;
                return Ok(d.finish(Mode::Structural, cfg, started));
            }
        }
    };
    let mut draft = analyze_system(network, &sys, cfg)?;
    draft.reduction = sys.reduction_info(network);
    notes.append(&mut draft.notes);
    draft.notes = notes;
    Ok(draft.finish(Mode::Structural, cfg, started))
}

fn is_unit_conversion(stoich: &[i64]) -> bool {
    stoich.iter().filter(|&&z| z == -1).count() == 1
        && stoich.iter().filter(|&&z| z == 1).count() == 1
        && stoich.iter().all(|&z| (-1..=1).contains(&z))
}

fn channel_matrix<F: Fn(usize, UniKind) -> ChannelRate>(sys: &UniSystem, vars: Vec<String>, rate: F) -> ParamMatrix {
    let channels = sys.with_rates(|i| rate(i, sys.kinds[i]));
    matrix_from_channels(sys.dim, &channels, vars, BTreeMap::new())
}

/// `−W_ct A⁻¹ S_ct` exactly, for nonsingular integer `A`.
fn coupling_exact(a: &DMatrix<i64>, w_ct: &[usize], s_ct: &[Vec<i64>]) -> Option<Vec<Vec<Rat>>> {
    let inv = inverse(a)?;
    Some(
        w_ct.iter()
            .map(|&r| {
                s_ct.iter()
                    .map(|s| -s.iter().enumerate().fold(Rat::from_integer(0.into()), |acc, (i, &z)| acc + &inv[r][i] * Rat::from_integer(z.into())))
                    .collect()
            })
            .collect(),
    )
}

fn coupling_numeric(a: &DMatrix<f64>, w_ct: &[usize], s_ct: &[Vec<i64>]) -> Option<DMatrix<f64>> {
    let inv = a.clone().try_inverse()?;
    let n = w_ct.len();
    Some(DMatrix::from_fn(n, n, |p, q| -s_ct[q].iter().enumerate().map(|(i, &z)| inv[(w_ct[p], i)] * z as f64).sum::<f64>()))
}

fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone().complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Snaps `approx` to a small-denominator rational `r` when `rI − M` is
/// exactly singular, so that rational radii are reported exactly.
fn snap_radius(exact: &[Vec<Rat>], approx: f64) -> f64 {
    let n = exact.len();
    for q in 1..=64i64 {
        let p = (approx * q as f64).round();
        if (p / q as f64 - approx).abs() > 1e-9 * approx.max(1.0) {
            continue;
        }
        let r = Rat::new((p as i64).into(), q.into());
        let rows: Vec<Vec<Rat>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { &r - &exact[i][j] } else { -exact[i][j].clone() }).collect())
            .collect();
        if rank(&rows) < n {
            return to_f64(&r);
        }
    }
    approx
}

/// Per-channel rates: degradation and conversion at `cv(i)`, catalysis at `ct`.
fn rates(sys: &UniSystem, ct: f64, cv: impl Fn(usize) -> f64) -> Vec<f64> {
    (0..sys.channels.len())
        .map(|i| match sys.kinds[i] {
            UniKind::Degradation => 1.0,
            UniKind::Catalytic => ct,
            UniKind::Conversion => cv(i),
        })
        .collect()
}

fn analyze_system(network: &ReactionNetwork, sys: &UniSystem, cfg: &AnalysisConfig) -> Result<Draft, AnalysisError> {
    let d = sys.dim;
    let mut a_int = DMatrix::<i64>::zeros(d, d);
    let mut w_ct = Vec::new();
    let mut s_ct = Vec::new();
    for (ch, &kind) in sys.channels.iter().zip(&sys.kinds) {
        if kind == UniKind::Catalytic {
            w_ct.push(ch.reactant);
            s_ct.push(ch.stoich.clone());
        } else {
            for (i, &z) in ch.stoich.iter().enumerate() {
                a_int[(i, ch.reactant)] += z;
            }
        }
    }
    let a_one = a_int.map(|x| x as f64);
    let hurwitz = hurwitz_metzler_exact(&a_int);
    let lambda = pf_eigenvalue(&a_one)?;
    let hurwitz_vector = if hurwitz {
        let mut p = FeasibilityProblem::positive_cone(d, cfg.epsilon);
        p.add_strict_left_product(&a_one);
        solve_strict_feasibility(&p)?
    } else {
        None
    };
    let exact = if hurwitz { coupling_exact(&a_int, &w_ct, &s_ct) } else { None };
    let coupling: Vec<Vec<f64>> = exact.as_ref().map_or_else(Vec::new, |m| m.iter().map(|r| r.iter().map(to_f64).collect()).collect());
    let support: Vec<Vec<bool>> =
        exact.as_ref().map_or_else(Vec::new, |m| m.iter().map(|r| r.iter().map(|x| *x != Rat::from_integer(0.into())).collect()).collect());
    let cycle = if hurwitz { find_cycle(&support) } else { None };
    let rho = match (&cycle, &exact) {
        (Some(_), Some(m)) => snap_radius(m, spectral_radius(&super::report::matrix_of(&coupling))),
        _ => 0.0,
    };
    let unit_det = {
        let det = det_poly(&ParamMatrix::from_numeric(&a_one))?;
        if d % 2 == 0 { det } else { -det }
    };
    let mut witness = StructuralWitness {
        statement: "f".into(),
        labels: sys.labels.clone(),
        a_one: rows_of(&a_one),
        lambda_pf: lambda,
        hurwitz_vector,
        w_ct: w_ct.clone(),
        s_ct: s_ct.clone(),
        coupling,
        coupling_exact: exact.as_ref().map_or_else(Vec::new, |m| m.iter().map(|r| r.iter().map(|x| x.to_string()).collect()).collect()),
        nilpotent: hurwitz && cycle.is_none(),
        cycle: cycle.clone(),
        spectral_radius: rho,
        determinant: Some(unit_det),
        orthant: None,
    };

    if !hurwitz {
        let why = format!("A(1, 1, 0) is not Hurwitz (λ_PF = {lambda:.6})");
        return refute(network, sys, rates(sys, SMALL_CATALYSIS, |_| 1.0), why, witness, cfg);
    }
    let unit_conversions = sys
        .channels
        .iter()
        .zip(&sys.kinds)
        .all(|(c, &k)| k != UniKind::Conversion || is_unit_conversion(&c.stoich));
    if unit_conversions {
        return match cycle {
            None => Ok(Draft::certified(Certificate::Structural(witness))),
            Some(c) => {
                let why = format!("coupling matrix has a cycle of length {} and spectral radius {rho:.6}", c.len());
                refute(network, sys, rates(sys, 2.0 / rho, |_| 1.0), why, witness, cfg)
            }
        };
    }

    // conversions with general coefficients: determinant over the orthant
    witness.statement = "e".into();
    let symbols = conversion_symbols(network, sys);
    let vars: Vec<String> = symbols.iter().flatten().cloned().collect();
    let a_cv = channel_matrix(sys, vars.clone(), |i, k| match k {
        UniKind::Degradation => ChannelRate::Value(1.0),
        UniKind::Catalytic => ChannelRate::Value(0.0),
        UniKind::Conversion => ChannelRate::Symbol(symbols[i].clone().expect("conversion symbol")),
    });
    let det = det_poly(&a_cv)?;
    let p = if d % 2 == 0 { det } else { -det };
    let orth = positive_on_orthant_with(&p, &cfg.search());
    witness.determinant = Some(p.clone());
    witness.orthant = orth.certificate.clone();
    match orth.status {
        PositivityStatus::Counterexample { point, value } => {
            let why = format!("(−1)^d det A(1, ρ_cv, 0) = {value:.3e} at conversion rates {point:?}");
            let vals = rates(sys, SMALL_CATALYSIS, |i| point[symbols[i].as_ref().expect("conversion symbol")]);
            refute(network, sys, vals, why, witness, cfg)
        }
        PositivityStatus::Inconclusive { .. } => {
            Ok(Draft::inconclusive("positivity of (−1)^d det A(1, ρ_cv, 0) on the orthant is undecided"))
        }
        PositivityStatus::Certified => {
            // support of −A⁻¹ is the same for every positive rate choice
            let reach = inverse_support(&a_one);
            let comb: Vec<Vec<bool>> = w_ct
                .iter()
                .map(|&r| s_ct.iter().map(|s| s.iter().enumerate().any(|(i, &z)| z > 0 && reach[r][i])).collect())
                .collect();
            if comb != support {
                return Err(AnalysisError::NumericalInconsistency(
                    "combinatorial coupling support disagrees with the exact unit-rate coupling".into(),
                ));
            }
            if let Some(bad) = sampled_support_mismatch(&a_cv, &w_ct, &s_ct, &comb, cfg) {
                return Ok(Draft::inconclusive(format!(
                    "sampled coupling support at conversion rates {bad:?} disagrees with the combinatorial support"
                )));
            }
            match cycle {
                None => Ok(Draft::certified(Certificate::Structural(witness))),
                Some(c) => {
                    let why = format!("coupling matrix has a cycle of length {} and spectral radius {rho:.6}", c.len());
                    refute(network, sys, rates(sys, 2.0 / rho, |_| 1.0), why, witness, cfg)
                }
            }
        }
    }
}

/// One symbol per conversion channel; shared names are split per reaction.
fn conversion_symbols(network: &ReactionNetwork, sys: &UniSystem) -> Vec<Option<String>> {
    let name = |i: usize| network.reactions[sys.channels[i].reaction].rate.clone();
    let mut count: BTreeMap<String, usize> = BTreeMap::new();
    for i in 0..sys.channels.len() {
        *count.entry(name(i)).or_default() += 1;
    }
    (0..sys.channels.len())
        .map(|i| {
            (sys.kinds[i] == UniKind::Conversion).then(|| {
                let n = name(i);
                if count[&n] == 1 { n } else { format!("{n}#{}", sys.channels[i].reaction) }
            })
        })
        .collect()
}

fn sampled_support_mismatch(
    a_cv: &ParamMatrix,
    w_ct: &[usize],
    s_ct: &[Vec<i64>],
    comb: &[Vec<bool>],
    cfg: &AnalysisConfig,
) -> Option<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x2e11);
    for _ in 0..cfg.nilpotency_samples {
        let x: Vec<f64> = a_cv.vars().iter().map(|_| 10f64.powf(rng.random_range(-2.0..=2.0))).collect();
        let m = coupling_numeric(&a_cv.eval_point(&x), w_ct, s_ct)?;
        let scale = m.iter().fold(1.0_f64, |s, v| s.max(v.abs()));
        let sampled: Vec<Vec<bool>> =
            (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)] > 1e-9 * scale).collect()).collect();
        if sampled != comb {
            return Some(x);
        }
    }
    None
}

/// Refutes with per-channel `values` when they are realizable by names and
/// `A` is genuinely unstable; otherwise retries with tied names.
fn refute(
    network: &ReactionNetwork,
    sys: &UniSystem,
    values: Vec<f64>,
    why: String,
    witness: StructuralWitness,
    cfg: &AnalysisConfig,
) -> Result<Draft, AnalysisError> {
    if let Some(assignment) = realize(network, sys, &values, |_| 1.0) {
        if let Some(cx) = genuine_instability(network, assignment)? {
            let mut d = Draft::refuted(cx).note(why);
            d.certificate = Some(Certificate::Structural(witness));
            return Ok(d);
        }
    }
    tied(network, sys, why, witness, cfg)
}

/// Analysis over parameter names, used when a per-channel refutation is
/// not realizable because channels share a rate.
fn tied(
    network: &ReactionNetwork,
    sys: &UniSystem,
    why: String,
    mut witness: StructuralWitness,
    cfg: &AnalysisConfig,
) -> Result<Draft, AnalysisError> {
    let m = sys.symbolic_matrix(network);
    let ones: BTreeMap<String, f64> = m.vars().iter().map(|v| (v.clone(), 1.0)).collect();
    let full = |point: &BTreeMap<String, f64>| -> BTreeMap<String, f64> {
        let vals: Vec<f64> = sys
            .channels
            .iter()
            .map(|c| point.get(&network.reactions[c.reaction].rate).copied().unwrap_or(1.0))
            .collect();
        realize(network, sys, &vals, |_| 1.0).expect("name-level values are consistent")
    };
    let anchor = m.eval_point(&vec![1.0; m.vars().len()]);
    let lambda = pf_eigenvalue(&anchor)?;
    if lambda >= -MARGINAL_BAND {
        return Ok(match genuine_instability(network, full(&ones))? {
            Some(cx) => {
                let mut d = Draft::refuted(cx).note(format!("{why}; with shared names the unit-rate system is unstable"));
                d.certificate = Some(Certificate::Structural(witness));
                d
            }
            None => Draft::inconclusive(format!("{why}; the unit-rate reduced system is not Hurwitz but A is")),
        });
    }
    let det = det_poly(&m)?;
    let p: MultiPoly = if sys.dim % 2 == 0 { det } else { -det };
    let orth = positive_on_orthant_with(&p, &cfg.search());
    Ok(match orth.status {
        PositivityStatus::Certified => {
            witness.statement = "tied".into();
            witness.determinant = Some(p);
            witness.orthant = orth.certificate;
            Draft::certified(Certificate::Structural(witness)).note(format!(
                "the per-channel analysis fails ({why}), but with shared rate names the determinant keeps its sign"
            ))
        }
        PositivityStatus::Counterexample { point, value } => match genuine_instability(network, full(&point))? {
            Some(cx) => {
                let mut d = Draft::refuted(cx).note(format!("{why}; (−1)^d det = {value:.3e} over shared names"));
                d.certificate = Some(Certificate::Structural(witness));
                d
            }
            None => Draft::inconclusive(format!("{why}; the determinant sign change is not an instability of A")),
        },
        PositivityStatus::Inconclusive { .. } => Draft::inconclusive(format!(
            "{why}, but that rate choice is not realizable with shared names, and positivity over names is undecided"
        )),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ergodicity::Verdict;
    use crate::parse::parse_network;

    #[test]
    fn toy_catalytic_is_refuted_with_two_cycle() {
        let n = parse_network(
            "species: X1, X2, X3
param g1 free
param g2 free
param k1 free
param k2 free
param k3 free
reaction: X1 -> 0 @ g1
reaction: X2 -> 0 @ g2
reaction: X3 -> X1 @ k1
reaction: X1 -> X1 + X2 @ k2
reaction: X2 -> X2 + X3 @ k3
",
        )
        .unwrap();
        let r = structural_check(&n).unwrap();
        assert_eq!(r.verdict, Verdict::Refuted);
        let w = r.structural_witness().unwrap();
        assert_eq!(w.coupling, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(w.cycle.as_ref().unwrap().len(), 2);
        assert_eq!(w.spectral_radius, 1.0);
    }

    #[test]
    fn general_conversion_uses_orthant_test() {
        // X -> 2 Y has conversion coefficient 2
        let n = parse_network(
            "species: X, Y
param a free
param b free
param c free
reaction: X -> 2 Y @ a
reaction: Y -> 0 @ b
reaction: X -> 0 @ c
",
        )
        .unwrap();
        let r = structural_check(&n).unwrap();
        assert_eq!(r.verdict, Verdict::Certified, "{:?}", r.notes);
        assert_eq!(r.structural_witness().unwrap().statement, "e");
    }

    #[test]
    fn shared_name_needs_tied_analysis() {
        // per channel X -> 2X could outrun X -> 0; with one shared name it
        // cannot, since the net drift is −k
        let n = parse_network(
            "species: X
param k free
reaction: X -> 2 X @ k
reaction: X -> 0 @ k
reaction: X -> 0 @ k
",
        )
        .unwrap();
        let r = structural_check(&n).unwrap();
        assert_eq!(r.verdict, Verdict::Certified, "{:?}", r.notes);
        assert_eq!(r.structural_witness().unwrap().statement, "tied");
    }
}
