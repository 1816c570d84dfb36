//! Positivity of polynomials on boxes (Handelman certificates found by LP)
//! and on the open positive orthant.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::par::{map_indexed, Execution};
use crate::paramalg::{binomial, MultiPoly};
use crate::spectral::{LinearProgram, LpOutcome, Relation};

/// Closed box, one interval per variable name.
pub type ParamBox = BTreeMap<String, (f64, f64)>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PositivityError {
    #[error("variable `{0}` has no interval in the box")]
    MissingVariable(String),
    #[error("interval of `{name}` is [{lo}, {hi}]; need finite lo <= hi")]
    InvalidInterval { name: String, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PositivityStatus {
    Certified,
    Counterexample { point: BTreeMap<String, f64>, value: f64 },
    Inconclusive { max_degree: u32 },
}

/// One product `c · Π tᵢ^{aᵢ} (1 − tᵢ)^{bᵢ}` in normalized coordinates
/// `tᵢ = (xᵢ − loᵢ) / (hiᵢ − loᵢ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HandelmanTerm {
    pub a: Vec<u32>,
    pub b: Vec<u32>,
    pub coeff: f64,
}

/// `p − δ = Σ c_{ab} Π tᵢ^{aᵢ}(1 − tᵢ)^{bᵢ}` with `c ≥ 0`, `δ > 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HandelmanCertificate {
    pub degree: u32,
    pub variables: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Values substituted for variables with degenerate intervals.
    pub pinned: BTreeMap<String, f64>,
    pub delta: f64,
    pub terms: Vec<HandelmanTerm>,
    pub reconstruction_error: f64,
}

impl HandelmanCertificate {
    /// The represented polynomial `δ + Σ c_{ab} Π tᵢ^{aᵢ}(1 − tᵢ)^{bᵢ}` in
    /// the normalized coordinates.
    pub fn reconstruct(&self) -> MultiPoly {
        let mut acc = MultiPoly::constant(&self.variables, self.delta);
        for term in &self.terms {
            acc = &acc + &product_poly(&self.variables, &term.a, &term.b).scale(term.coeff);
        }
        acc
    }

    /// Largest coefficient gap between `p` (over the box's original
    /// coordinates) and the reconstruction.
    pub fn check(&self, p: &MultiPoly) -> f64 {
        let q = normalized(p, &self.pinned, &self.variables, &self.lower, &self.upper);
        coefficient_gap(&q, &self.reconstruct())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PositivityCertificate {
    Handelman(HandelmanCertificate),
    /// Every coefficient is nonnegative and at least one is positive.
    NonnegativeCoefficients { positive_terms: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityVerdict {
    pub status: PositivityStatus,
    pub certificate: Option<PositivityCertificate>,
}

impl PositivityVerdict {
    pub fn is_certified(&self) -> bool {
        matches!(self.status, PositivityStatus::Certified)
    }

    fn counterexample(point: BTreeMap<String, f64>, value: f64) -> Self {
        Self { status: PositivityStatus::Counterexample { point, value }, certificate: None }
    }
}

/// Settings for the sampling stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchConfig {
    pub starts: usize,
    pub seed: u64,
    pub local_steps: usize,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { starts: 512, seed: 0x5eed, local_steps: 40, execution: Execution::default() }
    }
}

/// LP columns beyond this are not attempted.
const MAX_HANDELMAN_TERMS: usize = 20_000;

fn coefficient_gap(a: &MultiPoly, b: &MultiPoly) -> f64 {
    (a - b).max_abs_coeff()
}

fn product_poly(vars: &[String], a: &[u32], b: &[u32]) -> MultiPoly {
    let n = vars.len();
    let mut terms: Vec<(Vec<u32>, f64)> = vec![(vec![0; n], 1.0)];
    for i in 0..n {
        if a[i] == 0 && b[i] == 0 {
            continue;
        }
        let mut next = Vec::with_capacity(terms.len() * (b[i] as usize + 1));
        for (e, c) in &terms {
            for j in 0..=b[i] {
                let mut ne = e.clone();
                ne[i] = a[i] + j;
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                next.push((ne, c * sign * binomial(b[i], j)));
            }
        }
        terms = next;
    }
    MultiPoly::from_terms(vars, terms)
}

fn normalized(p: &MultiPoly, pinned: &BTreeMap<String, f64>, vars: &[String], lo: &[f64], hi: &[f64]) -> MultiPoly {
    let reduced = p.substitute(pinned).with_vars(vars);
    let width: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| h - l).collect();
    reduced.affine_change(lo, &width)
}

/// Splits the box into pinned values and proper intervals over `p`'s
/// variables.
fn split_box(p: &MultiPoly, domain: &ParamBox) -> Result<Prepared, PositivityError> {
    let mut pinned = BTreeMap::new();
    let mut vars = Vec::new();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for v in p.vars() {
        let &(l, h) = domain.get(v).ok_or_else(|| PositivityError::MissingVariable(v.clone()))?;
        if !(l.is_finite() && h.is_finite() && l <= h) {
            return Err(PositivityError::InvalidInterval { name: v.clone(), lo: l, hi: h });
        }
        if l == h {
            pinned.insert(v.clone(), l);
        } else {
            vars.push(v.clone());
            lo.push(l);
            hi.push(h);
        }
    }
    let q = normalized(p, &pinned, &vars, &lo, &hi);
    Ok(Prepared { pinned, vars, lo, hi, q })
}

struct Prepared {
    pinned: BTreeMap<String, f64>,
    vars: Vec<String>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// `p` in normalized coordinates on `[0, 1]^n`.
    q: MultiPoly,
}

impl Prepared {
    fn point(&self, t: &[f64]) -> BTreeMap<String, f64> {
        let mut out = self.pinned.clone();
        for (i, v) in self.vars.iter().enumerate() {
            out.insert(v.clone(), self.lo[i] + (self.hi[i] - self.lo[i]) * t[i]);
        }
        out
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

fn primes(n: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(n);
    let mut k = 2u64;
    while out.len() < n {
        if out.iter().all(|&p| k % p != 0) {
            out.push(k);
        }
        k += 1;
    }
    out
}

/// Deterministic start points in `[0, 1]^n`: box corners (up to 2^10 of
/// them), the centre, then the Halton sequence.
fn start_points(n: usize, count: usize) -> Vec<Vec<f64>> {
    let mut pts = Vec::with_capacity(count);
    pts.push(vec![0.5; n]);
    if n <= 10 {
        for mask in 0..(1usize << n) {
            pts.push((0..n).map(|i| if mask >> i & 1 == 1 { 1.0 } else { 0.0 }).collect());
        }
    }
    let bases = primes(n);
    let mut i = 1u64;
    while pts.len() < count.max(1) {
        pts.push(bases.iter().map(|&b| radical_inverse(i, b)).collect());
        i += 1;
    }
    pts
}

/// Projected gradient descent on `[lo, hi]^n`, stopping early once the
/// value is nonpositive.
fn local_descent(q: &MultiPoly, grad: &[MultiPoly], start: Vec<f64>, steps: usize, lo: f64, hi: f64) -> (Vec<f64>, f64) {
    let mut t = start;
    let mut val = q.eval(&t);
    let mut step = 0.25 * (hi - lo);
    for _ in 0..steps {
        if val <= 0.0 {
            break;
        }
        let g: Vec<f64> = grad.iter().map(|d| d.eval(&t)).collect();
        let gnorm = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if gnorm == 0.0 {
            break;
        }
        let mut improved = false;
        for _ in 0..30 {
            let cand: Vec<f64> = t.iter().zip(&g).map(|(x, d)| (x - step * d / gnorm).clamp(lo, hi)).collect();
            let cv = q.eval(&cand);
            if cv < val {
                t = cand;
                val = cv;
                improved = true;
                step *= 1.5;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (t, val)
}

/// Best local minimum over `starts`; returns the first start index
/// attaining it for determinism.
fn multistart(q: &MultiPoly, starts: Vec<Vec<f64>>, cfg: &SearchConfig, lo: f64, hi: f64) -> (Vec<f64>, f64) {
    let grad: Vec<MultiPoly> = (0..q.vars().len()).map(|i| q.derivative(i)).collect();
    let results = map_indexed(cfg.execution, starts.len(), |i| {
        local_descent(q, &grad, starts[i].clone(), cfg.local_steps, lo, hi)
    });
    results
        .into_iter()
        .reduce(|best, cur| if cur.1 < best.1 { cur } else { best })
        .unwrap_or((Vec::new(), f64::INFINITY))
}

/// Searches for a nonpositive point of `p` on the box.
pub fn search_counterexample_on_box(
    p: &MultiPoly,
    domain: &ParamBox,
    cfg: &SearchConfig,
) -> Result<Option<(BTreeMap<String, f64>, f64)>, PositivityError> {
    let prep = split_box(p, domain)?;
    let n = prep.vars.len();
    let (t, _) = if n == 0 { (Vec::new(), prep.q.constant_term()) } else {
        multistart(&prep.q, start_points(n, cfg.starts), cfg, 0.0, 1.0)
    };
    let point = prep.point(&t);
    let value = p.eval_named(&point).expect("point covers all variables");
    Ok((value <= 0.0).then_some((point, value)))
}

/// Handelman certificate at exactly `degree`, if the LP finds one with
/// `δ > 0`.
pub fn handelman_at_degree(p: &MultiPoly, domain: &ParamBox, degree: u32) -> Result<Option<HandelmanCertificate>, PositivityError> {
    let prep = split_box(p, domain)?;
    Ok(handelman_prepared(&prep, degree))
}

fn exponent_vectors(n: usize, max_total: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![0; n]];
    for i in 0..n {
        let mut next = Vec::new();
        for e in &out {
            let used: u32 = e.iter().sum();
            for k in 0..=(max_total - used) {
                let mut ne = e.clone();
                ne[i] = k;
                next.push(ne);
            }
        }
        out = next;
    }
    out
}

fn handelman_prepared(prep: &Prepared, degree: u32) -> Option<HandelmanCertificate> {
    let n = prep.vars.len();
    let q = &prep.q;
    if q.degree() > degree {
        return None;
    }
    let pairs: Vec<(Vec<u32>, Vec<u32>)> = exponent_vectors(2 * n, degree)
        .into_iter()
        .map(|ab| (ab[..n].to_vec(), ab[n..].to_vec()))
        .collect();
    if pairs.len() > MAX_HANDELMAN_TERMS {
        return None;
    }
    let monomials = exponent_vectors(n, degree);
    let index: BTreeMap<&[u32], usize> = monomials.iter().enumerate().map(|(i, e)| (e.as_slice(), i)).collect();
    let products: Vec<MultiPoly> = pairs.iter().map(|(a, b)| product_poly(&prep.vars, a, b)).collect();

    // columns: c_0..c_{K-1} ≥ 0, then δ (free); maximize δ
    let k = pairs.len();
    let mut lp = LinearProgram::new(k + 1);
    lp.free[k] = true;
    lp.objective[k] = -1.0;
    let mut rows = vec![vec![0.0; k + 1]; monomials.len()];
    for (col, prod) in products.iter().enumerate() {
        for (e, c) in prod.terms() {
            rows[index[e]][col] = c;
        }
    }
    rows[0][k] = 1.0;
    for (r, e) in monomials.iter().enumerate() {
        lp.add_row(std::mem::take(&mut rows[r]), Relation::Eq, q.coeff(e));
    }
    let LpOutcome::Optimal { x, .. } = lp.solve() else { return None };
    let scale = q.max_abs_coeff().max(1.0);
    let delta = x[k];
    if delta <= 1e-10 * scale {
        return None;
    }
    let terms: Vec<HandelmanTerm> = pairs
        .into_iter()
        .zip(&x[..k])
        .filter(|(_, &c)| c > 0.0)
        .map(|((a, b), &c)| HandelmanTerm { a, b, coeff: c })
        .collect();
    let mut cert = HandelmanCertificate {
        degree,
        variables: prep.vars.clone(),
        lower: prep.lo.clone(),
        upper: prep.hi.clone(),
        pinned: prep.pinned.clone(),
        delta,
        terms,
        reconstruction_error: 0.0,
    };
    cert.reconstruction_error = coefficient_gap(q, &cert.reconstruct());
    (cert.reconstruction_error <= 1e-8 * scale).then_some(cert)
}

/// Decides `p > 0` on the box: counterexample search first, then Handelman
/// LPs of increasing degree from `deg p` up to `max_degree`.
pub fn certify_positive_on_box(p: &MultiPoly, domain: &ParamBox, max_degree: u32) -> Result<PositivityVerdict, PositivityError> {
    certify_positive_on_box_with(p, domain, max_degree, &SearchConfig::default())
}

pub fn certify_positive_on_box_with(
    p: &MultiPoly,
    domain: &ParamBox,
    max_degree: u32,
    cfg: &SearchConfig,
) -> Result<PositivityVerdict, PositivityError> {
    if let Some((point, value)) = search_counterexample_on_box(p, domain, cfg)? {
        return Ok(PositivityVerdict::counterexample(point, value));
    }
    let prep = split_box(p, domain)?;
    for degree in prep.q.degree()..=max_degree {
        if let Some(cert) = handelman_prepared(&prep, degree) {
            return Ok(PositivityVerdict {
                status: PositivityStatus::Certified,
                certificate: Some(PositivityCertificate::Handelman(cert)),
            });
        }
    }
    Ok(PositivityVerdict { status: PositivityStatus::Inconclusive { max_degree }, certificate: None })
}

/// Grid points per variable for the orthant search, `10^-3 ..= 10^3`.
const ORTHANT_GRID: [f64; 7] = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3];
const MAX_GRID_POINTS: usize = 4096;

/// Decides `p > 0` on the open positive orthant. Sound but incomplete: the
/// coefficient-sign test certifies; sampling can only refute.
pub fn positive_on_orthant(p: &MultiPoly) -> PositivityVerdict {
    positive_on_orthant_with(p, &SearchConfig::default())
}

pub fn positive_on_orthant_with(p: &MultiPoly, cfg: &SearchConfig) -> PositivityVerdict {
    let n = p.vars().len();
    let named = |x: &[f64]| -> BTreeMap<String, f64> { p.vars().iter().cloned().zip(x.iter().copied()).collect() };
    if p.is_zero() {
        return PositivityVerdict::counterexample(named(&vec![1.0; n]), 0.0);
    }
    if p.coefficients_nonnegative() {
        return PositivityVerdict {
            status: PositivityStatus::Certified,
            certificate: Some(PositivityCertificate::NonnegativeCoefficients { positive_terms: p.num_terms() }),
        };
    }
    if n == 0 {
        return PositivityVerdict::counterexample(BTreeMap::new(), p.constant_term());
    }

    // log coordinates u = log10 x on [-3, 3]
    let mut starts: Vec<Vec<f64>> = Vec::new();
    let grid_total = ORTHANT_GRID.len().checked_pow(n as u32).unwrap_or(usize::MAX);
    if grid_total <= MAX_GRID_POINTS {
        for mut idx in 0..grid_total {
            let mut u = Vec::with_capacity(n);
            for _ in 0..n {
                u.push(ORTHANT_GRID[idx % ORTHANT_GRID.len()].log10());
                idx /= ORTHANT_GRID.len();
            }
            starts.push(u);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.starts {
        starts.push((0..n).map(|_| rng.random_range(-3.0..=3.0)).collect());
    }

    // p(10^u) as a function of u has gradient ln10 · xᵢ ∂ᵢp
    let grad: Vec<MultiPoly> = (0..n).map(|i| p.derivative(i)).collect();
    let results = map_indexed(cfg.execution, starts.len(), |i| {
        let mut u = starts[i].clone();
        let to_x = |u: &[f64]| u.iter().map(|v| 10f64.powf(*v)).collect::<Vec<_>>();
        let mut x = to_x(&u);
        let mut val = p.eval(&x);
        let mut step = 0.5;
        for _ in 0..cfg.local_steps {
            if val <= 0.0 {
                break;
            }
            let g: Vec<f64> = (0..n).map(|k| x[k] * grad[k].eval(&x)).collect();
            let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if gnorm == 0.0 || !gnorm.is_finite() {
                break;
            }
            let mut improved = false;
            for _ in 0..20 {
                let cand: Vec<f64> = u.iter().zip(&g).map(|(a, d)| (a - step * d / gnorm).clamp(-4.0, 4.0)).collect();
                let cx = to_x(&cand);
                let cv = p.eval(&cx);
                if cv < val {
                    u = cand;
                    x = cx;
                    val = cv;
                    improved = true;
                    step *= 1.5;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        (x, val)
    });
    let (x, val) = results
        .into_iter()
        .reduce(|best, cur| if cur.1 < best.1 { cur } else { best })
        .expect("at least one start");
    if val <= 0.0 {
        return PositivityVerdict::counterexample(named(&x), p.eval(&x));
    }
    PositivityVerdict { status: PositivityStatus::Inconclusive { max_degree: p.degree() }, certificate: None }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(n: &[&str]) -> Vec<String> {
        n.iter().map(|s| s.to_string()).collect()
    }

    fn boxed(items: &[(&str, f64, f64)]) -> ParamBox {
        items.iter().map(|&(n, l, h)| (n.to_string(), (l, h))).collect()
    }

    #[test]
    fn toy_determinant_is_positive() {
        // (-1)^3 k1 (2 - 4) = 2 k1 on [0.1, 1]
        let v = vars(&["k1"]);
        let p = MultiPoly::var(&v, 0).scale(2.0);
        let verdict = certify_positive_on_box(&p, &boxed(&[("k1", 0.1, 1.0)]), 2).unwrap();
        assert!(verdict.is_certified());
        let Some(PositivityCertificate::Handelman(cert)) = verdict.certificate else { panic!() };
        assert!(cert.check(&p) < 1e-8);
        assert!(cert.delta > 0.0);
    }

    #[test]
    fn negative_somewhere() {
        let v = vars(&["x"]);
        let p = &MultiPoly::var(&v, 0) - &MultiPoly::constant(&v, 2.0);
        let verdict = certify_positive_on_box(&p, &boxed(&[("x", 0.0, 1.0)]), 2).unwrap();
        match verdict.status {
            PositivityStatus::Counterexample { point, value } => {
                assert!(value <= -1.0);
                assert_eq!(p.eval_named(&point).unwrap(), value);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_certifies_at_degree_zero() {
        let p = MultiPoly::constant(&[], 1.0);
        let verdict = certify_positive_on_box(&p, &ParamBox::new(), 0).unwrap();
        let Some(PositivityCertificate::Handelman(cert)) = verdict.certificate else { panic!() };
        assert_eq!(cert.degree, 0);
    }

    #[test]
    fn missing_variable_is_an_error() {
        let p = MultiPoly::var(&vars(&["x"]), 0);
        assert_eq!(
            certify_positive_on_box(&p, &ParamBox::new(), 2),
            Err(PositivityError::MissingVariable("x".into()))
        );
    }

    #[test]
    fn interior_minimum_found() {
        // (x - 0.5)^2 - 0.01 dips below zero near the centre only
        let v = vars(&["x", "y"]);
        let x = &MultiPoly::var(&v, 0) - &MultiPoly::constant(&v, 0.37);
        let p = &(&x * &x) - &MultiPoly::constant(&v, 1e-4);
        let found = search_counterexample_on_box(&p, &boxed(&[("x", 0.0, 1.0), ("y", 0.0, 1.0)]), &SearchConfig::default())
            .unwrap();
        assert!(found.is_some());
    }

    #[test]
    fn product_needs_higher_degree_box() {
        // xy + 0.1 on [-1, 1]^2: positive everywhere only when min xy = -1 < -0.1 fails
        let v = vars(&["x", "y"]);
        let p = &(&MultiPoly::var(&v, 0) * &MultiPoly::var(&v, 1)) + &MultiPoly::constant(&v, 1.5);
        let b = boxed(&[("x", -1.0, 1.0), ("y", -1.0, 1.0)]);
        assert!(certify_positive_on_box(&p, &b, 2).unwrap().is_certified());
        assert!(handelman_at_degree(&p, &b, 3).unwrap().is_some());
    }

    #[test]
    fn degenerate_interval_is_substituted() {
        let v = vars(&["x", "g"]);
        let p = &MultiPoly::var(&v, 0) * &MultiPoly::var(&v, 1);
        let b = boxed(&[("x", 1.0, 2.0), ("g", 3.0, 3.0)]);
        let verdict = certify_positive_on_box(&p, &b, 2).unwrap();
        let Some(PositivityCertificate::Handelman(cert)) = verdict.certificate else { panic!() };
        assert_eq!(cert.variables, vec!["x".to_string()]);
        assert_eq!(cert.pinned.get("g"), Some(&3.0));
        assert!(cert.check(&p) < 1e-8);
    }

    #[test]
    fn orthant_examples() {
        let v = vars(&["k1", "k2", "k3", "g1", "g2"]);
        let var = |i| MultiPoly::var(&v, i);
        let k2k3 = &var(1) * &var(2);
        let g1g2 = &var(3) * &var(4);
        let pos = &var(0) * &(&k2k3 + &g1g2);
        assert!(positive_on_orthant(&pos).is_certified());
        let mixed = &var(0) * &(&k2k3 - &g1g2);
        match positive_on_orthant(&mixed).status {
            PositivityStatus::Counterexample { point, value } => {
                assert!(value <= 0.0);
                assert!(mixed.eval_named(&point).unwrap() <= 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn orthant_positive_but_mixed_signs_is_inconclusive() {
        // (x - 1)^2 + 1 = x^2 - 2x + 2
        let v = vars(&["x"]);
        let x = MultiPoly::var(&v, 0);
        let p = &(&(&x * &x) - &x.scale(2.0)) + &MultiPoly::constant(&v, 2.0);
        assert!(matches!(positive_on_orthant(&p).status, PositivityStatus::Inconclusive { .. }));
    }

    #[test]
    fn halton_is_in_unit_cube() {
        for p in start_points(3, 100) {
            assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
        }
        assert_eq!(start_points(2, 10).len(), 10);
    }
}
