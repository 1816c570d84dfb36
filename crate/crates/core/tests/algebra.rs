use std::collections::BTreeMap;

use nalgebra::DMatrix;
use proptest::prelude::*;

use ergocert::network::{classify_unimolecular, RateParam, Reaction, ReactionNetwork};
use ergocert::paramalg::{adjugate_vector, characteristic_matrix, det_poly, eval_matrix, upper_bound_matrix, MultiPoly, ParamMatrix};
use ergocert::spectral::{is_hurwitz_metzler, HurwitzVerdict};

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("p{i}")).collect()
}

/// Affine entry `c0 + Σ ci·pi`.
fn affine(vars: &[String], coeffs: &[f64]) -> MultiPoly {
    let n = vars.len();
    let mut terms = vec![(vec![0; n], coeffs[0])];
    for i in 0..n {
        let mut e = vec![0; n];
        e[i] = 1;
        terms.push((e, coeffs[i + 1]));
    }
    MultiPoly::from_terms(vars, terms)
}

fn affine_matrix() -> impl Strategy<Value = (ParamMatrix, Vec<Vec<f64>>)> {
    (1usize..=6, 0usize..=4).prop_flat_map(|(d, n)| {
        (
            prop::collection::vec(prop::collection::vec(-2.0f64..2.0, n + 1), d * d),
            prop::collection::vec(prop::collection::vec(0.1f64..3.0, n), 20),
        )
            .prop_map(move |(entries, points)| {
                let vars = names(n);
                let mut m = ParamMatrix::zeros(d, d, vars.clone(), BTreeMap::new());
                for i in 0..d {
                    for j in 0..d {
                        m.set(i, j, &affine(&vars, &entries[i * d + j]));
                    }
                }
                (m, points)
            })
    })
}

/// Cofactor expansion along the first row.
fn cofactor_det(m: &DMatrix<f64>) -> f64 {
    let d = m.nrows();
    if d == 0 {
        return 1.0;
    }
    (0..d)
        .map(|j| {
            let minor = m.clone().remove_row(0).remove_column(j);
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * m[(0, j)] * cofactor_det(&minor)
        })
        .sum()
}

/// Largest real eigenvalue part, taken over the diagonal blocks of the
/// Frobenius normal form (found by Floyd-Warshall closure).
fn pf_oracle(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut r: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| i == j || m[(i, j)] > 0.0).collect()).collect();
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                r[i][j] = r[i][j] || (r[i][k] && r[k][j]);
            }
        }
    }
    (0..n)
        .map(|i| {
            let block: Vec<usize> = (0..n).filter(|&j| r[i][j] && r[j][i]).collect();
            let b = m.select_rows(&block).select_columns(&block);
            b.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn determinant_and_adjugate_identity((m, points) in affine_matrix()) {
        let d = m.rows();
        let det = det_poly(&m).unwrap();
        let adj = adjugate_vector(&m).unwrap();
        prop_assert!(det.degree() as usize <= d);
        for x in &points {
            let a = m.eval_point(x);
            let exact = cofactor_det(&a);
            let scale = a.amax().max(1.0).powi(d as i32);
            prop_assert!((det.eval(x) - exact).abs() <= 1e-9 * scale);
            // vᵀA = −(−1)^d det · 𝟙ᵀ for v = (−1)^{d+1} 𝟙ᵀ Adj
            let v: Vec<f64> = adj.iter().map(|p| p.eval(x)).collect();
            let sign = if d % 2 == 0 { 1.0 } else { -1.0 };
            for j in 0..d {
                let lhs: f64 = (0..d).map(|i| v[i] * a[(i, j)]).sum();
                prop_assert!((lhs + sign * exact).abs() <= 1e-9 * scale * d as f64);
            }
        }
    }

    #[test]
    fn lp_and_eigenvalue_agree(d in 1usize..=6, entries in prop::collection::vec((0.0f64..1.0, 0u8..3), 36), diag in prop::collection::vec(-3.0f64..0.5, 6)) {
        let m = DMatrix::from_fn(d, d, |i, j| {
            if i == j { diag[i] } else {
                let (x, keep) = entries[i * 6 + j];
                if keep == 0 { 0.0 } else { x }
            }
        });
        let lambda = pf_oracle(&m);
        prop_assume!(lambda.abs() > 1e-3);
        let h = is_hurwitz_metzler(&m, 1e-7).unwrap();
        prop_assert_eq!(h.verdict == HurwitzVerdict::Stable, lambda < 0.0);
        prop_assert!((h.lambda_pf - lambda).abs() < 1e-6);
        if let Some(v) = h.certificate {
            for j in 0..d {
                let r: f64 = (0..d).map(|i| v[i] * m[(i, j)]).sum();
                prop_assert!(r < 0.0);
            }
        }
    }

    #[test]
    fn upper_bound_dominates(spec in interval_network(), u in prop::collection::vec(0.0f64..=1.0, 12)) {
        let network = spec;
        let class = classify_unimolecular(&network).unwrap();
        let a_sym = characteristic_matrix(&network).unwrap();
        let plus = upper_bound_matrix(&network, &class).unwrap();
        let draw: BTreeMap<String, f64> = network
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let (lo, hi) = (p.lower().unwrap(), p.upper().unwrap());
                (p.name.clone(), lo + u[i % u.len()] * (hi - lo))
            })
            .collect();
        let a = eval_matrix(&a_sym, &draw).unwrap();
        let ap = eval_matrix(&plus, &draw).unwrap();
        for (x, y) in a.iter().zip(ap.iter()) {
            prop_assert!(*x <= *y + 1e-12);
        }
        prop_assert!(pf_oracle(&a) <= pf_oracle(&ap) + 1e-9);
    }
}

/// Unimolecular network with one interval parameter per reaction.
fn interval_network() -> impl Strategy<Value = ReactionNetwork> {
    (1usize..=4).prop_flat_map(|d| {
        prop::collection::vec((0u8..4, 0..d, 0..d, 0.1f64..2.0, 0.0f64..2.0), 1..=8).prop_map(move |raw| {
            let species: Vec<String> = (0..d).map(|i| format!("X{i}")).collect();
            let mut params = Vec::new();
            let mut reactions = Vec::new();
            for (k, (kind, i, j, lo, w)) in raw.into_iter().enumerate() {
                let rate = format!("k{k}");
                params.push(RateParam::interval(&rate, lo, lo + w));
                let j = if i == j { (j + 1) % d } else { j };
                let r = match (kind, d > 1) {
                    (0, _) => Reaction::new([(i, 1)], [], rate),
                    (1, true) => Reaction::new([(i, 1)], [(i, 1), (j, 1)], rate),
                    (2, true) => Reaction::new([(i, 1)], [(j, 1)], rate),
                    _ => Reaction::new([(i, 1)], [(i, 2)], rate),
                };
                reactions.push(r);
            }
            ReactionNetwork::new(species, params, reactions)
        })
    })
}
