//! Dense two-phase simplex and the strict-feasibility encoding built on it.

use serde::Serialize;

use super::SpectralError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

/// `minimize cᵀx` subject to row constraints, with `x_j ≥ 0` unless the
/// variable is marked free.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<(Vec<f64>, Relation, f64)>,
    pub free: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

const PIV_TOL: f64 = 1e-9;
const MAX_ITER: usize = 50_000;

impl LinearProgram {
    pub fn new(n: usize) -> Self {
        Self { objective: vec![0.0; n], rows: Vec::new(), free: vec![false; n] }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, rel: Relation, rhs: f64) {
        assert_eq!(coeffs.len(), self.num_vars(), "row length");
        self.rows.push((coeffs, rel, rhs));
    }

    pub fn solve(&self) -> LpOutcome {
        Tableau::build(self).run(self)
    }
}

struct Tableau {
    /// `m` constraint rows followed by the objective row; last column is the rhs.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n_struct: usize,
    first_artificial: usize,
    /// Maps original variables to (positive column, optional negative column).
    map: Vec<(usize, Option<usize>)>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let mut map = Vec::with_capacity(n);
        let mut n_struct = 0;
        for j in 0..n {
            if lp.free[j] {
                map.push((n_struct, Some(n_struct + 1)));
                n_struct += 2;
            } else {
                map.push((n_struct, None));
                n_struct += 1;
            }
        }
        // normalize: scale rows to unit max-norm and make rhs nonnegative
        let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::with_capacity(lp.rows.len());
        for (a, rel, b) in &lp.rows {
            let mut coeffs = vec![0.0; n_struct];
            for (j, &(p, q)) in map.iter().enumerate() {
                coeffs[p] = a[j];
                if let Some(q) = q {
                    coeffs[q] = -a[j];
                }
            }
            let scale = coeffs.iter().fold(b.abs(), |m, x| m.max(x.abs()));
            let scale = if scale > 0.0 { scale } else { 1.0 };
            let mut rel = *rel;
            let mut b = b / scale;
            coeffs.iter_mut().for_each(|x| *x /= scale);
            if b < 0.0 {
                b = -b;
                coeffs.iter_mut().for_each(|x| *x = -*x);
                rel = match rel {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
            }
            rows.push((coeffs, rel, b));
        }
        let m = rows.len();
        let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let n_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
        let first_artificial = n_struct + n_slack;
        let width = first_artificial + n_art + 1;
        let mut t = vec![vec![0.0; width]; m + 1];
        let mut basis = vec![0; m];
        let (mut s, mut a) = (n_struct, first_artificial);
        for (i, (coeffs, rel, b)) in rows.into_iter().enumerate() {
            t[i][..n_struct].copy_from_slice(&coeffs);
            t[i][width - 1] = b;
            match rel {
                Relation::Le => {
                    t[i][s] = 1.0;
                    basis[i] = s;
                    s += 1;
                }
                Relation::Ge => {
                    t[i][s] = -1.0;
                    s += 1;
                    t[i][a] = 1.0;
                    basis[i] = a;
                    a += 1;
                }
                Relation::Eq => {
                    t[i][a] = 1.0;
                    basis[i] = a;
                    a += 1;
                }
            }
        }
        Self { t, basis, n_struct, first_artificial, map }
    }

    fn m(&self) -> usize {
        self.basis.len()
    }

    fn width(&self) -> usize {
        self.t[0].len()
    }

    fn set_objective(&mut self, cost: &[f64]) {
        let w = self.width();
        let m = self.m();
        let mut row = vec![0.0; w];
        row[..cost.len()].copy_from_slice(cost);
        for i in 0..m {
            let cb = cost.get(self.basis[i]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for j in 0..w {
                    row[j] -= cb * self.t[i][j];
                }
            }
        }
        self.t[m] = row;
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width();
        let p = self.t[r][c];
        for j in 0..w {
            self.t[r][j] /= p;
        }
        let pivot_row = self.t[r].clone();
        for i in 0..self.t.len() {
            if i == r {
                continue;
            }
            let f = self.t[i][c];
            if f != 0.0 {
                for j in 0..w {
                    self.t[i][j] -= f * pivot_row[j];
                }
                self.t[i][c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Runs simplex iterations on the current objective row; columns at or
    /// beyond `limit` never enter. Returns false when unbounded.
    fn iterate(&mut self, limit: usize) -> bool {
        let m = self.m();
        let rhs = self.width() - 1;
        let mut bland = false;
        let mut stall = 0;
        let mut last = f64::INFINITY;
        for _ in 0..MAX_ITER {
            let obj = &self.t[m];
            let entering = if bland {
                (0..limit).find(|&j| obj[j] < -PIV_TOL)
            } else {
                (0..limit).filter(|&j| obj[j] < -PIV_TOL).min_by(|&a, &b| obj[a].total_cmp(&obj[b]))
            };
            let Some(c) = entering else { return true };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.t[i][c];
                if a > PIV_TOL {
                    let ratio = self.t[i][rhs].max(0.0) / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-12 || (ratio <= br + 1e-12 && self.basis[i] < self.basis[bi]) {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = best else { return false };
            self.pivot(r, c);
            let value = -self.t[m][rhs];
            if value < last - 1e-12 {
                last = value;
                stall = 0;
            } else {
                stall += 1;
                if stall > 50 {
                    bland = true;
                }
            }
        }
        true
    }

    fn run(mut self, lp: &LinearProgram) -> LpOutcome {
        let m = self.m();
        let w = self.width();
        let n_art = w - 1 - self.first_artificial;
        if n_art > 0 {
            let mut cost = vec![0.0; w - 1];
            for c in cost.iter_mut().skip(self.first_artificial) {
                *c = 1.0;
            }
            self.set_objective(&cost);
            self.iterate(w - 1);
            let infeas = -self.t[m][w - 1];
            if infeas > 1e-9 {
                return LpOutcome::Infeasible;
            }
            // drive zero-level artificials out of the basis
            let mut i = 0;
            while i < self.m() {
                if self.basis[i] >= self.first_artificial {
                    let col = (0..self.first_artificial).find(|&j| self.t[i][j].abs() > PIV_TOL);
                    match col {
                        Some(j) => self.pivot(i, j),
                        None => {
                            self.t.remove(i);
                            self.basis.remove(i);
                            continue;
                        }
                    }
                }
                i += 1;
            }
        }
        let mut cost = vec![0.0; self.n_struct];
        for (j, &(p, q)) in self.map.iter().enumerate() {
            cost[p] = lp.objective[j];
            if let Some(q) = q {
                cost[q] = -lp.objective[j];
            }
        }
        self.set_objective(&cost);
        if !self.iterate(self.first_artificial) {
            return LpOutcome::Unbounded;
        }
        let rhs = self.width() - 1;
        let mut col = vec![0.0; self.n_struct];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.n_struct {
                col[b] = self.t[i][rhs];
            }
        }
        let x: Vec<f64> = self.map.iter().map(|&(p, q)| col[p] - q.map_or(0.0, |q| col[q])).collect();
        let value = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
        LpOutcome::Optimal { x, value }
    }
}

/// Linear system with strict rows `aᵀx < b` (enforced as `aᵀx ≤ b − ε`),
/// non-strict rows `aᵀx ≤ b`, equalities, and per-variable lower bounds
/// (`None` = free). The bounded variables' sum is minimized, which keeps
/// the relaxation bounded for cone-type problems normalized by `x ≥ 𝟙`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityProblem {
    pub dim: usize,
    pub strict: Vec<(Vec<f64>, f64)>,
    pub nonstrict: Vec<(Vec<f64>, f64)>,
    pub equalities: Vec<(Vec<f64>, f64)>,
    pub lower: Vec<Option<f64>>,
    pub epsilon: f64,
}

impl FeasibilityProblem {
    /// Problem in `dim` variables normalized by `x ≥ 𝟙`.
    pub fn positive_cone(dim: usize, epsilon: f64) -> Self {
        Self {
            dim,
            strict: Vec::new(),
            nonstrict: Vec::new(),
            equalities: Vec::new(),
            lower: vec![Some(1.0); dim],
            epsilon,
        }
    }

    /// Adds `xᵀM < 0` column by column.
    pub fn add_strict_left_product(&mut self, m: &nalgebra::DMatrix<f64>) {
        for j in 0..m.ncols() {
            self.strict.push((m.column(j).iter().copied().collect(), 0.0));
        }
    }

    /// Adds `xᵀM = 0` column by column.
    pub fn add_left_kernel(&mut self, m: &nalgebra::DMatrix<f64>) {
        for j in 0..m.ncols() {
            self.equalities.push((m.column(j).iter().copied().collect(), 0.0));
        }
    }

    /// Largest violation of the stated constraints at `x`, with strict rows
    /// measured against `b − ε`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let dot = |a: &[f64]| a.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
        let mut worst: f64 = 0.0;
        for (a, b) in &self.strict {
            worst = worst.max(dot(a) - (b - self.epsilon));
        }
        for (a, b) in &self.nonstrict {
            worst = worst.max(dot(a) - b);
        }
        for (a, b) in &self.equalities {
            worst = worst.max((dot(a) - b).abs());
        }
        for (xi, lo) in x.iter().zip(&self.lower) {
            if let Some(lo) = lo {
                worst = worst.max(lo - xi);
            }
        }
        worst
    }
}

/// Finds a point satisfying `p`, or `Ok(None)` when infeasible.
pub fn solve_strict_feasibility(p: &FeasibilityProblem) -> Result<Option<Vec<f64>>, SpectralError> {
    // x = lo + y with y ≥ 0 for bounded variables; free ones stay free
    let shift: Vec<f64> = p.lower.iter().map(|l| l.unwrap_or(0.0)).collect();
    let mut lp = LinearProgram::new(p.dim);
    for j in 0..p.dim {
        if p.lower[j].is_some() {
            lp.objective[j] = 1.0;
        } else {
            lp.free[j] = true;
        }
    }
    let shifted = |a: &[f64], b: f64| -> f64 { b - a.iter().zip(&shift).map(|(x, y)| x * y).sum::<f64>() };
    for (a, b) in &p.strict {
        lp.add_row(a.clone(), Relation::Le, shifted(a, *b - p.epsilon));
    }
    for (a, b) in &p.nonstrict {
        lp.add_row(a.clone(), Relation::Le, shifted(a, *b));
    }
    for (a, b) in &p.equalities {
        lp.add_row(a.clone(), Relation::Eq, shifted(a, *b));
    }
    match lp.solve() {
        LpOutcome::Infeasible => Ok(None),
        LpOutcome::Unbounded => Err(SpectralError::UnboundedRelaxation),
        LpOutcome::Optimal { x, .. } => {
            let x: Vec<f64> = x.iter().zip(&shift).map(|(y, s)| y + s).collect();
            let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let viol = p.max_violation(&x);
            if viol > 1e-9 * scale {
                return Err(SpectralError::InaccurateSolution { violation: viol });
            }
            Ok(Some(x))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn textbook_lp() {
        // max 3x + 5y s.t. x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-3.0, -5.0];
        lp.add_row(vec![1.0, 0.0], Relation::Le, 4.0);
        lp.add_row(vec![0.0, 2.0], Relation::Le, 12.0);
        lp.add_row(vec![3.0, 2.0], Relation::Le, 18.0);
        match lp.solve() {
            LpOutcome::Optimal { x, value } => {
                assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
                assert!((value + 36.0).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.add_row(vec![1.0], Relation::Ge, 2.0);
        lp.add_row(vec![1.0], Relation::Le, 1.0);
        assert_eq!(lp.solve(), LpOutcome::Infeasible);

        let mut lp = LinearProgram::new(1);
        lp.objective = vec![-1.0];
        assert_eq!(lp.solve(), LpOutcome::Unbounded);
    }

    #[test]
    fn free_variables_and_equalities() {
        let mut lp = LinearProgram::new(2);
        lp.free = vec![true, false];
        lp.objective = vec![0.0, 1.0];
        lp.add_row(vec![1.0, 1.0], Relation::Eq, -3.0);
        match lp.solve() {
            LpOutcome::Optimal { x, .. } => assert!((x[0] + 3.0).abs() < 1e-9 && x[1].abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn scalar_strict_feasibility() {
        let mut p = FeasibilityProblem::positive_cone(1, 1e-7);
        p.add_strict_left_product(&DMatrix::from_element(1, 1, -1.0));
        assert_eq!(solve_strict_feasibility(&p).unwrap(), Some(vec![1.0]));
    }

    #[test]
    fn permutation_is_infeasible() {
        let mut p = FeasibilityProblem::positive_cone(2, 1e-7);
        p.add_strict_left_product(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        assert_eq!(solve_strict_feasibility(&p).unwrap(), None);
    }

    #[test]
    fn sir_reduced_gives_ones() {
        let mut p = FeasibilityProblem::positive_cone(2, 1e-7);
        p.add_strict_left_product(&DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -2.0]));
        let v = solve_strict_feasibility(&p).unwrap().unwrap();
        assert!((v[0] - 1.0).abs() < 1e-12 && (v[1] - 1.0).abs() < 1e-12);
    }
}
