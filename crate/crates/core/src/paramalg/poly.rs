use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

/// Sparse multivariate polynomial with real coefficients over an ordered
/// list of named variables. Exponent vectors have one entry per variable;
/// zero coefficients are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiPoly {
    vars: Vec<String>,
    terms: BTreeMap<Vec<u32>, f64>,
}

/// Sums whose magnitude falls below this fraction of the summands are
/// treated as exact cancellation.
const CANCEL: f64 = 8.0 * f64::EPSILON;

fn accumulate(terms: &mut BTreeMap<Vec<u32>, f64>, exp: Vec<u32>, c: f64) {
    if c == 0.0 {
        return;
    }
    match terms.entry(exp) {
        std::collections::btree_map::Entry::Vacant(e) => {
            e.insert(c);
        }
        std::collections::btree_map::Entry::Occupied(mut e) => {
            let old = *e.get();
            let s = old + c;
            if s == 0.0 || s.abs() <= CANCEL * old.abs().max(c.abs()) {
                e.remove();
            } else {
                *e.get_mut() = s;
            }
        }
    }
}

impl MultiPoly {
    pub fn zero(vars: &[String]) -> Self {
        Self { vars: vars.to_vec(), terms: BTreeMap::new() }
    }

    pub fn constant(vars: &[String], c: f64) -> Self {
        let mut p = Self::zero(vars);
        accumulate(&mut p.terms, vec![0; vars.len()], c);
        p
    }

    /// The polynomial `x_i`.
    pub fn var(vars: &[String], i: usize) -> Self {
        let mut exp = vec![0; vars.len()];
        exp[i] = 1;
        let mut p = Self::zero(vars);
        p.terms.insert(exp, 1.0);
        p
    }

    pub fn named_var(vars: &[String], name: &str) -> Option<Self> {
        vars.iter().position(|v| v == name).map(|i| Self::var(vars, i))
    }

    pub fn from_terms(vars: &[String], terms: impl IntoIterator<Item = (Vec<u32>, f64)>) -> Self {
        let mut p = Self::zero(vars);
        for (e, c) in terms {
            assert_eq!(e.len(), vars.len(), "exponent vector length");
            accumulate(&mut p.terms, e, c);
        }
        p
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.terms.iter().map(|(e, &c)| (e.as_slice(), c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, exp: &[u32]) -> f64 {
        self.terms.get(exp).copied().unwrap_or(0.0)
    }

    pub fn constant_term(&self) -> f64 {
        self.coeff(&vec![0; self.vars.len()])
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Variables that actually occur in some term.
    pub fn used_vars(&self) -> Vec<usize> {
        (0..self.vars.len()).filter(|&i| self.terms.keys().any(|e| e[i] > 0)).collect()
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        assert_eq!(point.len(), self.vars.len(), "point dimension");
        self.terms
            .iter()
            .map(|(e, c)| c * e.iter().zip(point).map(|(&k, x)| x.powi(k as i32)).product::<f64>())
            .sum()
    }

    /// Sum of absolute term values at `point`; a scale for rounding error in
    /// [`MultiPoly::eval`].
    pub fn eval_magnitude(&self, point: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| (c * e.iter().zip(point).map(|(&k, x)| x.powi(k as i32)).product::<f64>()).abs())
            .sum()
    }

    /// Evaluates with values looked up by variable name.
    pub fn eval_named(&self, assignment: &BTreeMap<String, f64>) -> Result<f64, String> {
        let point = self
            .vars
            .iter()
            .map(|v| assignment.get(v).copied().ok_or_else(|| v.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.eval(&point))
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero(&self.vars);
        for (e, &c) in &self.terms {
            accumulate(&mut out.terms, e.clone(), c * s);
        }
        out
    }

    /// Re-expresses the polynomial over `vars`, which must contain every
    /// variable that occurs in `self`.
    pub fn with_vars(&self, vars: &[String]) -> Self {
        if vars == self.vars.as_slice() {
            return self.clone();
        }
        let map: Vec<Option<usize>> = self.vars.iter().map(|v| vars.iter().position(|w| w == v)).collect();
        let mut out = Self::zero(vars);
        for (e, &c) in &self.terms {
            let mut ne = vec![0; vars.len()];
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    let j = map[i].unwrap_or_else(|| panic!("variable `{}` missing", self.vars[i]));
                    ne[j] = k;
                }
            }
            accumulate(&mut out.terms, ne, c);
        }
        out
    }

    fn aligned(&self, other: &Self) -> (Self, Self) {
        if self.vars == other.vars {
            return (self.clone(), other.clone());
        }
        let mut vars = self.vars.clone();
        for v in &other.vars {
            if !vars.contains(v) {
                vars.push(v.clone());
            }
        }
        (self.with_vars(&vars), other.with_vars(&vars))
    }

    /// Fixes the named variables to values and drops them from the variable
    /// list.
    pub fn substitute(&self, values: &BTreeMap<String, f64>) -> Self {
        let keep: Vec<usize> = (0..self.vars.len()).filter(|&i| !values.contains_key(&self.vars[i])).collect();
        let vars: Vec<String> = keep.iter().map(|&i| self.vars[i].clone()).collect();
        let mut out = Self::zero(&vars);
        for (e, &c) in &self.terms {
            let mut factor = c;
            for (i, &k) in e.iter().enumerate() {
                if let Some(&x) = values.get(&self.vars[i]) {
                    factor *= x.powi(k as i32);
                }
            }
            accumulate(&mut out.terms, keep.iter().map(|&i| e[i]).collect(), factor);
        }
        out
    }

    /// `p(offset + scale * t)`, componentwise, as a polynomial in `t` over the
    /// same variable names.
    pub fn affine_change(&self, offset: &[f64], scale: &[f64]) -> Self {
        let n = self.vars.len();
        let mut out = Self::zero(&self.vars);
        for (e, &c) in &self.terms {
            // expand prod_i (o_i + s_i t_i)^{e_i} one variable at a time
            let mut partial: Vec<(Vec<u32>, f64)> = vec![(vec![0; n], c)];
            for i in 0..n {
                let k = e[i];
                if k == 0 {
                    continue;
                }
                let mut next = Vec::with_capacity(partial.len() * (k as usize + 1));
                for (pe, pc) in &partial {
                    for j in 0..=k {
                        let coef = binomial(k, j) * offset[i].powi((k - j) as i32) * scale[i].powi(j as i32);
                        if coef == 0.0 {
                            continue;
                        }
                        let mut ne = pe.clone();
                        ne[i] = j;
                        next.push((ne, pc * coef));
                    }
                }
                partial = next;
            }
            for (pe, pc) in partial {
                accumulate(&mut out.terms, pe, pc);
            }
        }
        out
    }

    pub fn derivative(&self, i: usize) -> Self {
        let mut out = Self::zero(&self.vars);
        for (e, &c) in &self.terms {
            if e[i] > 0 {
                let mut ne = e.clone();
                ne[i] -= 1;
                accumulate(&mut out.terms, ne, c * f64::from(e[i]));
            }
        }
        out
    }

    pub fn gradient(&self, point: &[f64]) -> Vec<f64> {
        (0..self.vars.len()).map(|i| self.derivative(i).eval(point)).collect()
    }

    /// True when every coefficient is nonnegative.
    pub fn coefficients_nonnegative(&self) -> bool {
        self.terms.values().all(|&c| c >= 0.0)
    }
}

pub(crate) fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

impl Add for &MultiPoly {
    type Output = MultiPoly;
    fn add(self, rhs: &MultiPoly) -> MultiPoly {
        let (mut a, b) = self.aligned(rhs);
        for (e, c) in b.terms {
            accumulate(&mut a.terms, e, c);
        }
        a
    }
}

impl Sub for &MultiPoly {
    type Output = MultiPoly;
    fn sub(self, rhs: &MultiPoly) -> MultiPoly {
        let (mut a, b) = self.aligned(rhs);
        for (e, c) in b.terms {
            accumulate(&mut a.terms, e, -c);
        }
        a
    }
}

impl Mul for &MultiPoly {
    type Output = MultiPoly;
    fn mul(self, rhs: &MultiPoly) -> MultiPoly {
        let (a, b) = self.aligned(rhs);
        let mut out = MultiPoly::zero(&a.vars);
        for (ea, ca) in &a.terms {
            for (eb, cb) in &b.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
                accumulate(&mut out.terms, e, ca * cb);
            }
        }
        out
    }
}

impl Neg for &MultiPoly {
    type Output = MultiPoly;
    fn neg(self) -> MultiPoly {
        self.scale(-1.0)
    }
}

macro_rules! owned_binop {
    ($tr:ident, $f:ident) => {
        impl $tr for MultiPoly {
            type Output = MultiPoly;
            fn $f(self, rhs: MultiPoly) -> MultiPoly {
                (&self).$f(&rhs)
            }
        }
    };
}
owned_binop!(Add, add);
owned_binop!(Sub, sub);
owned_binop!(Mul, mul);

impl Neg for MultiPoly {
    type Output = MultiPoly;
    fn neg(self) -> MultiPoly {
        self.scale(-1.0)
    }
}

impl fmt::Display for MultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        // highest degree first reads more naturally
        let mut terms: Vec<_> = self.terms.iter().collect();
        terms.sort_by(|a, b| b.0.iter().sum::<u32>().cmp(&a.0.iter().sum::<u32>()).then(b.0.cmp(a.0)));
        for (n, (e, &c)) in terms.into_iter().enumerate() {
            let mono: Vec<String> = e
                .iter()
                .enumerate()
                .filter(|(_, &k)| k > 0)
                .map(|(i, &k)| if k == 1 { self.vars[i].clone() } else { format!("{}^{k}", self.vars[i]) })
                .collect();
            let (sign, mag) = if c < 0.0 { ("-", -c) } else { ("+", c) };
            if n == 0 {
                if sign == "-" {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            if mono.is_empty() {
                write!(f, "{mag}")?;
            } else if mag == 1.0 {
                write!(f, "{}", mono.join("*"))?;
            } else {
                write!(f, "{mag}*{}", mono.join("*"))?;
            }
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct TermRepr<'a> {
    exponents: &'a [u32],
    coeff: f64,
}

impl Serialize for MultiPoly {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("MultiPoly", 3)?;
        st.serialize_field("variables", &self.vars)?;
        let terms: Vec<TermRepr<'_>> =
            self.terms.iter().map(|(e, &c)| TermRepr { exponents: e, coeff: c }).collect();
        st.serialize_field("terms", &terms)?;
        st.serialize_field("text", &self.to_string())?;
        st.end()
    }
}
