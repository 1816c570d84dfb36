use nalgebra::DMatrix;
use serde::Serialize;

use super::lp::{solve_strict_feasibility, FeasibilityProblem};
use super::SpectralError;

/// Off-diagonal tolerance for the Metzler property.
pub const METZLER_TOL: f64 = 1e-12;
/// `|λ_PF|` at or below this is reported as marginal.
pub const MARGINAL_BAND: f64 = 1e-5;

fn require_square(m: &DMatrix<f64>) -> Result<(), SpectralError> {
    if m.is_square() {
        Ok(())
    } else {
        Err(SpectralError::NotSquare { rows: m.nrows(), cols: m.ncols() })
    }
}

pub fn is_metzler(m: &DMatrix<f64>) -> bool {
    m.is_square()
        && (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] >= -METZLER_TOL))
}

fn check_metzler(m: &DMatrix<f64>) -> Result<(), SpectralError> {
    require_square(m)?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let x = m[(i, j)];
            if !x.is_finite() {
                return Err(SpectralError::NonFinite);
            }
            if i != j && x < -METZLER_TOL {
                return Err(SpectralError::NotMetzler { row: i, col: j, value: x });
            }
        }
    }
    Ok(())
}

/// Largest real part of the spectrum (the Perron-Frobenius eigenvalue for
/// Metzler input). `-∞` for the empty matrix.
///
/// Computed per strongly connected block, so defective eigenvalues shared
/// between blocks of a reducible matrix do not cost accuracy.
pub fn pf_eigenvalue(m: &DMatrix<f64>) -> Result<f64, SpectralError> {
    check_metzler(m)?;
    let support: Vec<Vec<bool>> =
        (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| i != j && m[(i, j)] > 0.0).collect()).collect();
    Ok(strong_components(&support)
        .iter()
        .map(|block| block_eigenvalue(&m.select_rows(block).select_columns(block)))
        .fold(f64::NEG_INFINITY, f64::max)
        + 0.0)
}

fn block_eigenvalue(b: &DMatrix<f64>) -> f64 {
    if b.nrows() == 1 {
        return b[(0, 0)];
    }
    let lambda = b.clone().complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    if lambda.is_finite() {
        lambda
    } else {
        power_iteration(b)
    }
}

/// Strongly connected components of the graph `i → j` for `support[i][j]`.
pub fn strong_components(support: &[Vec<bool>]) -> Vec<Vec<usize>> {
    let n = support.len();
    let reach: Vec<Vec<bool>> = (0..n)
        .map(|s| {
            let mut seen = vec![false; n];
            seen[s] = true;
            let mut stack = vec![s];
            while let Some(i) = stack.pop() {
                for j in 0..n {
                    if support[i][j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen
        })
        .collect();
    let mut assigned = vec![false; n];
    let mut out = Vec::new();
    for i in 0..n {
        if !assigned[i] {
            let block: Vec<usize> = (i..n).filter(|&j| reach[i][j] && reach[j][i]).collect();
            for &j in &block {
                assigned[j] = true;
            }
            out.push(block);
        }
    }
    out
}

/// PF eigenvalue via power iteration on the nonnegative shift `M + sI`.
fn power_iteration(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let s = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max) + 1.0;
    let shifted = m + DMatrix::identity(n, n) * s;
    let mut x = nalgebra::DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut rho = 0.0;
    for _ in 0..100_000 {
        let y = &shifted * &x;
        let norm = y.norm();
        if norm == 0.0 {
            return -s;
        }
        let next = y / norm;
        let converged = (norm - rho).abs() <= 1e-14 * norm;
        rho = norm;
        x = next;
        if converged {
            break;
        }
    }
    rho - s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HurwitzVerdict {
    Stable,
    Unstable,
    Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HurwitzCheck {
    pub verdict: HurwitzVerdict,
    pub lambda_pf: f64,
    /// `v ≥ 𝟙` with `vᵀM ≤ −ε𝟙`, when the LP found one.
    pub certificate: Option<Vec<f64>>,
}

/// Hurwitz test for a Metzler matrix by two independent methods: the
/// eigenvalue and the LP `{v ≥ 𝟙, vᵀM ≤ −ε𝟙}`. They must agree outside the
/// marginal band.
pub fn is_hurwitz_metzler(m: &DMatrix<f64>, epsilon: f64) -> Result<HurwitzCheck, SpectralError> {
    let lambda = pf_eigenvalue(m)?;
    let mut p = FeasibilityProblem::positive_cone(m.nrows(), epsilon);
    p.add_strict_left_product(m);
    let v = solve_strict_feasibility(&p)?;
    let verdict = if lambda < -MARGINAL_BAND {
        HurwitzVerdict::Stable
    } else if lambda > MARGINAL_BAND {
        HurwitzVerdict::Unstable
    } else {
        HurwitzVerdict::Marginal
    };
    let consistent = match verdict {
        HurwitzVerdict::Stable => v.is_some(),
        HurwitzVerdict::Unstable => v.is_none(),
        HurwitzVerdict::Marginal => true,
    };
    if !consistent {
        return Err(SpectralError::NumericalInconsistency { lambda_pf: lambda, lp_feasible: v.is_some() });
    }
    Ok(HurwitzCheck { verdict, lambda_pf: lambda, certificate: v })
}

/// Directed cycle in the graph with an edge `i → j` whenever
/// `support[i][j]`, including self-loops.
pub fn find_cycle(support: &[Vec<bool>]) -> Option<Vec<usize>> {
    let n = support.len();
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; n];
    let mut parent = vec![usize::MAX; n];
    for root in 0..n {
        if state[root] != 0 {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        state[root] = 1;
        while let Some(&mut (u, ref mut next)) = stack.last_mut() {
            if *next < n {
                let v = *next;
                *next += 1;
                if !support[u][v] {
                    continue;
                }
                if state[v] == 1 {
                    let mut cycle = vec![u];
                    let mut w = u;
                    while w != v {
                        w = parent[w];
                        cycle.push(w);
                    }
                    cycle.reverse();
                    return Some(cycle);
                }
                if state[v] == 0 {
                    state[v] = 1;
                    parent[v] = u;
                    stack.push((v, 0));
                }
            } else {
                state[u] = 2;
                stack.pop();
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralRadius {
    pub rho: f64,
    /// Decided from the support graph: nilpotent iff acyclic.
    pub nilpotent: bool,
    /// A cycle of the support graph when not nilpotent.
    pub cycle: Option<Vec<usize>>,
}

/// Spectral radius of a nonnegative matrix; entries above `METZLER_TOL`
/// form the support graph.
pub fn spectral_radius_nonneg(m: &DMatrix<f64>) -> Result<SpectralRadius, SpectralError> {
    require_square(m)?;
    let n = m.nrows();
    for i in 0..n {
        for j in 0..n {
            let x = m[(i, j)];
            if !x.is_finite() {
                return Err(SpectralError::NonFinite);
            }
            if x < -METZLER_TOL {
                return Err(SpectralError::NegativeEntry { row: i, col: j, value: x });
            }
        }
    }
    let support: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| m[(i, j)] > METZLER_TOL).collect()).collect();
    match find_cycle(&support) {
        None => Ok(SpectralRadius { rho: 0.0, nilpotent: true, cycle: None }),
        Some(cycle) => {
            let rho = m.clone().complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
            Ok(SpectralRadius { rho, nilpotent: false, cycle: Some(cycle) })
        }
    }
}

/// Support of `−A⁻¹` for a Hurwitz Metzler `A`: entry `(i, j)` is positive
/// iff `i = j` or `i` is reachable from `j` along positive off-diagonal
/// entries (`A[k][l] > 0` is an edge `l → k`).
pub fn inverse_support(a: &DMatrix<f64>) -> Vec<Vec<bool>> {
    let n = a.nrows();
    let mut reach = vec![vec![false; n]; n];
    for j in 0..n {
        let mut stack = vec![j];
        reach[j][j] = true;
        while let Some(l) = stack.pop() {
            for k in 0..n {
                if k != l && a[(k, l)] > METZLER_TOL && !reach[k][j] {
                    reach[k][j] = true;
                    stack.push(k);
                }
            }
        }
    }
    reach
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn components_and_defective_blocks() {
        let s = vec![vec![false, true, false], vec![true, false, true], vec![false, false, false]];
        assert_eq!(strong_components(&s), vec![vec![0, 1], vec![2]]);
        // Jordan block at 0: exact through the block split
        let j = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(pf_eigenvalue(&j).unwrap(), 0.0);
    }

    #[test]
    fn metzler_examples() {
        assert!(is_metzler(&DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -2.0])));
        assert!(!is_metzler(&DMatrix::from_row_slice(2, 2, &[-1.0, -0.5, 0.0, -1.0])));
        assert!(is_metzler(&-DMatrix::<f64>::identity(3, 3)));
    }

    #[test]
    fn pf_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -2.0]);
        assert!((pf_eigenvalue(&a).unwrap() + 1.0).abs() < 1e-12);
        assert!((pf_eigenvalue(&-DMatrix::<f64>::identity(4, 4)).unwrap() + 1.0).abs() < 1e-12);
        let p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!((pf_eigenvalue(&p).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            pf_eigenvalue(&DMatrix::from_row_slice(2, 2, &[-1.0, -0.5, 0.0, -1.0])),
            Err(SpectralError::NotMetzler { .. })
        ));
    }

    #[test]
    fn power_iteration_agrees() {
        let a = DMatrix::from_row_slice(3, 3, &[-2.0, 0.0, 1.0, 1.0, -2.0, 0.0, 0.0, 1.0, -1.0]);
        let lam = pf_eigenvalue(&a).unwrap();
        assert!((power_iteration(&a) - lam).abs() < 1e-8);
    }

    #[test]
    fn hurwitz_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -2.0]);
        let h = is_hurwitz_metzler(&a, 1e-7).unwrap();
        assert_eq!(h.verdict, HurwitzVerdict::Stable);
        let v = h.certificate.unwrap();
        let va = nalgebra::RowDVector::from_vec(v) * &a;
        assert!(va.iter().all(|&x| x <= -1e-7 + 1e-12));

        let b = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 2.0, -1.0]);
        let h = is_hurwitz_metzler(&b, 1e-7).unwrap();
        assert_eq!(h.verdict, HurwitzVerdict::Unstable);
        assert!((h.lambda_pf - 1.0).abs() < 1e-12);

        let h = is_hurwitz_metzler(&-DMatrix::<f64>::identity(3, 3), 1e-7).unwrap();
        assert_eq!(h.certificate, Some(vec![1.0; 3]));
    }

    #[test]
    fn zero_matrix_is_marginal() {
        let h = is_hurwitz_metzler(&DMatrix::zeros(2, 2), 1e-7).unwrap();
        assert_eq!(h.verdict, HurwitzVerdict::Marginal);
        assert!(h.certificate.is_none());
    }

    #[test]
    fn radius_examples() {
        let p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let r = spectral_radius_nonneg(&p).unwrap();
        assert!(!r.nilpotent);
        assert_eq!(r.cycle.as_ref().map(Vec::len), Some(2));
        assert!((r.rho - 1.0).abs() < 1e-12);
        let z = spectral_radius_nonneg(&DMatrix::zeros(3, 3)).unwrap();
        assert!(z.nilpotent && z.rho == 0.0);
    }

    #[test]
    fn self_loop_is_a_cycle() {
        assert_eq!(find_cycle(&[vec![true]]), Some(vec![0]));
        assert_eq!(find_cycle(&[vec![false, true], vec![false, false]]), None);
    }

    #[test]
    fn inverse_support_matches_numeric() {
        let a = DMatrix::from_row_slice(3, 3, &[-1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0]);
        let inv = -a.clone().try_inverse().unwrap();
        let s = inverse_support(&a);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(s[i][j], inv[(i, j)] > 1e-12, "({i},{j})");
            }
        }
    }
}
