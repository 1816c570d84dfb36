use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use super::poly::MultiPoly;
use crate::network::{
    build_stoichiometry, NetworkError, ParamKind, ReactionNetwork, UniClass, UniKind,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AlgebraError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("no value for parameter `{0}`")]
    MissingParameter(String),
    #[error("parameter `{name}` of {kind} reaction {reaction} needs a finite {bound} bound")]
    UnboundedParameter { name: String, reaction: usize, kind: &'static str, bound: &'static str },
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
}

/// Rate of one first-order channel: either a named parameter or a number.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ChannelRate {
    Symbol(String),
    Value(f64),
}

/// A first-order reaction channel `X_reactant -> ...` with net change
/// `stoich`. Channel lists describe `S_u W(ρ)` column by column, which lets
/// the same construction serve original and reduced systems.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Channel {
    pub reaction: usize,
    pub reactant: usize,
    pub stoich: Vec<i64>,
    pub rate: ChannelRate,
}

/// Matrix with affine polynomial entries over named parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamMatrix {
    rows: usize,
    cols: usize,
    vars: Vec<String>,
    entries: Vec<MultiPoly>,
    domain: BTreeMap<String, ParamKind>,
}

impl ParamMatrix {
    pub fn zeros(rows: usize, cols: usize, vars: Vec<String>, domain: BTreeMap<String, ParamKind>) -> Self {
        let entries = vec![MultiPoly::zero(&vars); rows * cols];
        Self { rows, cols, vars, entries, domain }
    }

    pub fn from_numeric(m: &DMatrix<f64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols(), Vec::new(), BTreeMap::new());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.entries[i * m.ncols() + j] = MultiPoly::constant(&[], m[(i, j)]);
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn domain(&self) -> &BTreeMap<String, ParamKind> {
        &self.domain
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &MultiPoly {
        &self.entries[i * self.cols + j]
    }

    /// Stores `p`, re-expressed over this matrix's variables.
    pub fn set(&mut self, i: usize, j: usize, p: &MultiPoly) {
        self.entries[i * self.cols + j] = p.with_vars(&self.vars);
    }

    pub fn max_degree(&self) -> u32 {
        self.entries.iter().map(MultiPoly::degree).max().unwrap_or(0)
    }

    /// Variables occurring in at least one entry.
    pub fn used_vars(&self) -> Vec<String> {
        (0..self.vars.len())
            .filter(|&v| self.entries.iter().any(|p| p.used_vars().contains(&v)))
            .map(|v| self.vars[v].clone())
            .collect()
    }

    /// Evaluates at a point given in the order of [`ParamMatrix::vars`].
    pub fn eval_point(&self, point: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).eval(point))
    }

    pub fn substitute(&self, values: &BTreeMap<String, f64>) -> Self {
        let entries: Vec<MultiPoly> = self.entries.iter().map(|p| p.substitute(values)).collect();
        let vars: Vec<String> = self.vars.iter().filter(|v| !values.contains_key(*v)).cloned().collect();
        let domain = self.domain.iter().filter(|(k, _)| !values.contains_key(*k)).map(|(k, v)| (k.clone(), *v)).collect();
        Self { rows: self.rows, cols: self.cols, vars, entries, domain }
    }

    /// Sub-matrix on the given row and column index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut out = Self::zeros(rows.len(), cols.len(), self.vars.clone(), self.domain.clone());
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                out.entries[a * cols.len() + b] = self.get(i, j).clone();
            }
        }
        out
    }

    /// `L * self` for an integer matrix `L`.
    pub fn left_mul_int(&self, l: &DMatrix<i64>) -> Self {
        assert_eq!(l.ncols(), self.rows, "dimension mismatch");
        let mut out = Self::zeros(l.nrows(), self.cols, self.vars.clone(), self.domain.clone());
        for i in 0..l.nrows() {
            for j in 0..self.cols {
                let mut acc = MultiPoly::zero(&self.vars);
                for k in 0..self.rows {
                    if l[(i, k)] != 0 {
                        acc = &acc + &self.get(k, j).scale(l[(i, k)] as f64);
                    }
                }
                out.entries[i * self.cols + j] = acc;
            }
        }
        out
    }

    fn minor_rows_cols(&self, rows: &[usize], cols: &[usize]) -> MultiPoly {
        let n = rows.len();
        debug_assert_eq!(n, cols.len());
        if n == 0 {
            return MultiPoly::constant(&self.vars, 1.0);
        }
        // Row-by-row Leibniz expansion with memoization over the set of used
        // columns; no division, so the result has exact polynomial structure.
        let mut layer: BTreeMap<u64, MultiPoly> = BTreeMap::from([(0u64, MultiPoly::constant(&self.vars, 1.0))]);
        for &r in rows {
            let mut next: BTreeMap<u64, MultiPoly> = BTreeMap::new();
            for (&mask, partial) in &layer {
                for (cj, &c) in cols.iter().enumerate() {
                    let bit = 1u64 << cj;
                    if mask & bit != 0 {
                        continue;
                    }
                    let entry = self.get(r, c);
                    if entry.is_zero() {
                        continue;
                    }
                    let inversions = (mask >> (cj + 1)).count_ones();
                    let mut term = partial * entry;
                    if inversions % 2 == 1 {
                        term = -term;
                    }
                    let slot = next.entry(mask | bit).or_insert_with(|| MultiPoly::zero(&self.vars));
                    *slot = &*slot + &term;
                }
            }
            layer = next;
            if layer.is_empty() {
                return MultiPoly::zero(&self.vars);
            }
        }
        layer.remove(&((1u64 << n) - 1)).unwrap_or_else(|| MultiPoly::zero(&self.vars))
    }

    fn require_square(&self) -> Result<usize, AlgebraError> {
        if self.is_square() {
            Ok(self.rows)
        } else {
            Err(AlgebraError::NotSquare { rows: self.rows, cols: self.cols })
        }
    }
}

impl fmt::Display for ParamMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| self.get(i, j).to_string()).collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    variables: Vec<String>,
    entries: Vec<Vec<String>>,
}

impl Serialize for ParamMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        MatrixRepr {
            rows: self.rows,
            cols: self.cols,
            variables: self.vars.clone(),
            entries: (0..self.rows)
                .map(|i| (0..self.cols).map(|j| self.get(i, j).to_string()).collect())
                .collect(),
        }
        .serialize(serializer)
    }
}

/// Builds `Σ_k ζ_k ρ_k e_{r(k)}ᵀ` from a channel list. `vars` must contain
/// every symbolic rate.
pub fn matrix_from_channels(
    d: usize,
    channels: &[Channel],
    vars: Vec<String>,
    domain: BTreeMap<String, ParamKind>,
) -> ParamMatrix {
    let mut m = ParamMatrix::zeros(d, d, vars, domain);
    for ch in channels {
        let rate = match &ch.rate {
            ChannelRate::Symbol(name) => MultiPoly::named_var(&m.vars, name)
                .unwrap_or_else(|| panic!("channel rate `{name}` not among matrix variables")),
            ChannelRate::Value(x) => MultiPoly::constant(&m.vars, *x),
        };
        let j = ch.reactant;
        for (i, &z) in ch.stoich.iter().enumerate() {
            if z != 0 {
                let idx = i * d + j;
                m.entries[idx] = &m.entries[idx] + &rate.scale(z as f64);
            }
        }
    }
    m
}

/// Numeric counterpart of [`matrix_from_channels`] with one rate per channel.
pub fn numeric_from_channels(d: usize, channels: &[Channel], rates: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    for (ch, &r) in channels.iter().zip(rates) {
        for (i, &z) in ch.stoich.iter().enumerate() {
            m[(i, ch.reactant)] += z as f64 * r;
        }
    }
    m
}

/// First-order channels of a network, with symbolic rates.
pub fn first_order_channels(network: &ReactionNetwork) -> Result<Vec<Channel>, AlgebraError> {
    network.ensure_valid()?;
    let d = network.num_species();
    Ok(network
        .reactions
        .iter()
        .enumerate()
        .filter(|(_, r)| r.order() == 1)
        .map(|(k, r)| Channel {
            reaction: k,
            reactant: r.sole_reactant().expect("first-order reaction"),
            stoich: r.stoichiometry(d),
            rate: ChannelRate::Symbol(r.rate.clone()),
        })
        .collect())
}

fn vars_in_param_order(network: &ReactionNetwork, reactions: impl IntoIterator<Item = usize>) -> Vec<String> {
    let used: Vec<String> = reactions.into_iter().map(|k| network.reactions[k].rate.clone()).collect();
    network.params.iter().filter(|p| used.contains(&p.name)).map(|p| p.name.clone()).collect()
}

fn domain_of(network: &ReactionNetwork, vars: &[String]) -> BTreeMap<String, ParamKind> {
    vars.iter().filter_map(|v| network.param(v).map(|p| (v.clone(), p.kind))).collect()
}

/// `A(ρ_u) = S_u W(ρ_u)` with one variable per distinct first-order rate name.
pub fn characteristic_matrix(network: &ReactionNetwork) -> Result<ParamMatrix, AlgebraError> {
    let channels = first_order_channels(network)?;
    let vars = vars_in_param_order(network, channels.iter().map(|c| c.reaction));
    let domain = domain_of(network, &vars);
    Ok(matrix_from_channels(network.num_species(), &channels, vars, domain))
}

/// `b₀(ρ₀) = S₀ w₀(ρ₀)`.
pub fn offset_vector(network: &ReactionNetwork) -> Result<Vec<MultiPoly>, AlgebraError> {
    network.ensure_valid()?;
    let st = build_stoichiometry(network)?;
    let vars = vars_in_param_order(network, st.zeroth_reactions.iter().copied());
    let d = network.num_species();
    let mut b = vec![MultiPoly::zero(&vars); d];
    for (j, &k) in st.zeroth_reactions.iter().enumerate() {
        let rate = MultiPoly::named_var(&vars, &network.reactions[k].rate).expect("zeroth-order rate");
        for (i, bi) in b.iter_mut().enumerate() {
            let z = st.zeroth[(i, j)];
            if z != 0 {
                *bi = &*bi + &rate.scale(z as f64);
            }
        }
    }
    Ok(b)
}

/// Channels of the worst-case matrix: degradation rates at their lower
/// bounds, catalytic rates at their upper bounds, conversion rates symbolic.
/// Substitution is per reaction, so a name shared between classes is
/// bounded separately in each role.
pub fn upper_bound_channels(network: &ReactionNetwork, class: &UniClass) -> Result<Vec<Channel>, AlgebraError> {
    let mut channels = first_order_channels(network)?;
    for ch in &mut channels {
        let p = network.rate_of(ch.reaction);
        let kind = class.kind_of(ch.reaction).unwrap_or(UniKind::Degradation);
        ch.rate = match kind {
            UniKind::Degradation => ChannelRate::Value(p.lower().ok_or_else(|| AlgebraError::UnboundedParameter {
                name: p.name.clone(),
                reaction: ch.reaction,
                kind: "degradation",
                bound: "lower",
            })?),
            UniKind::Catalytic => ChannelRate::Value(p.upper().ok_or_else(|| AlgebraError::UnboundedParameter {
                name: p.name.clone(),
                reaction: ch.reaction,
                kind: "catalytic",
                bound: "upper",
            })?),
            UniKind::Conversion => ChannelRate::Symbol(p.name.clone()),
        };
    }
    Ok(channels)
}

/// `A⁺(ρ_cv)`. Conversion rates stay symbolic even when pinned; their
/// domain entries record the admissible values.
pub fn upper_bound_matrix(network: &ReactionNetwork, class: &UniClass) -> Result<ParamMatrix, AlgebraError> {
    let channels = upper_bound_channels(network, class)?;
    let vars = vars_in_param_order(
        network,
        channels.iter().filter(|c| matches!(c.rate, ChannelRate::Symbol(_))).map(|c| c.reaction),
    );
    let domain = domain_of(network, &vars);
    Ok(matrix_from_channels(network.num_species(), &channels, vars, domain))
}

pub fn eval_matrix(m: &ParamMatrix, assignment: &BTreeMap<String, f64>) -> Result<DMatrix<f64>, AlgebraError> {
    let point = m
        .vars
        .iter()
        .map(|v| assignment.get(v).copied().ok_or_else(|| AlgebraError::MissingParameter(v.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(m.eval_point(&point))
}

pub fn eval_vector(v: &[MultiPoly], assignment: &BTreeMap<String, f64>) -> Result<DVector<f64>, AlgebraError> {
    let vals = v
        .iter()
        .map(|p| p.eval_named(assignment).map_err(AlgebraError::MissingParameter))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DVector::from_vec(vals))
}

/// Exact symbolic determinant.
pub fn det_poly(m: &ParamMatrix) -> Result<MultiPoly, AlgebraError> {
    let n = m.require_square()?;
    let idx: Vec<usize> = (0..n).collect();
    Ok(m.minor_rows_cols(&idx, &idx))
}

/// Classical adjugate, `Adj(M)[i][j] = (-1)^{i+j} det(M without row j, column i)`.
pub fn adjugate(m: &ParamMatrix) -> Result<ParamMatrix, AlgebraError> {
    let n = m.require_square()?;
    let mut out = ParamMatrix::zeros(n, n, m.vars.clone(), m.domain.clone());
    for i in 0..n {
        for j in 0..n {
            let rows: Vec<usize> = (0..n).filter(|&r| r != j).collect();
            let cols: Vec<usize> = (0..n).filter(|&c| c != i).collect();
            let mut c = m.minor_rows_cols(&rows, &cols);
            if (i + j) % 2 == 1 {
                c = -c;
            }
            out.entries[i * n + j] = c;
        }
    }
    Ok(out)
}

/// `v(ρ)ᵀ = (-1)^{d+1} 𝟙ᵀ Adj(M(ρ))`. Component `j` equals
/// `(-1)^{d+1} det(M with row j replaced by ones)`.
pub fn adjugate_vector(m: &ParamMatrix) -> Result<Vec<MultiPoly>, AlgebraError> {
    let n = m.require_square()?;
    let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
    let ones = MultiPoly::constant(&m.vars, 1.0);
    (0..n)
        .map(|j| {
            let mut r = m.clone();
            for c in 0..n {
                r.entries[j * n + c] = ones.clone();
            }
            det_poly(&r).map(|p| p.scale(sign))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{classify_unimolecular, RateParam, Reaction};

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    /// Toy model with catalytic X1 -> X1 + X2 and X2 -> X2 + X3 and the
    /// conversion X3 -> X1.
    fn toy(g: (f64, f64), k2: (f64, f64), k3: (f64, f64)) -> ReactionNetwork {
        ReactionNetwork::new(
            names(&["X1", "X2", "X3"]),
            vec![
                RateParam::interval("g1", g.0, g.1),
                RateParam::interval("g2", g.0, g.1),
                RateParam::interval("k1", 0.1, 10.0),
                RateParam::interval("k2", k2.0, k2.1),
                RateParam::interval("k3", k3.0, k3.1),
            ],
            vec![
                Reaction::new([(0, 1)], [], "g1"),
                Reaction::new([(1, 1)], [], "g2"),
                Reaction::new([(2, 1)], [(0, 1)], "k1"),
                Reaction::new([(0, 1)], [(0, 1), (1, 1)], "k2"),
                Reaction::new([(1, 1)], [(1, 1), (2, 1)], "k3"),
            ],
        )
    }

    #[test]
    fn single_degradation() {
        let n = ReactionNetwork::new(names(&["X"]), vec![RateParam::free("g")], vec![Reaction::new([(0, 1)], [], "g")]);
        let a = characteristic_matrix(&n).unwrap();
        assert_eq!(a.get(0, 0).to_string(), "-g");
    }

    #[test]
    fn offset_additivity() {
        let n = ReactionNetwork::new(
            names(&["X"]),
            vec![RateParam::fixed("k1", 1.0), RateParam::fixed("k2", 2.0)],
            vec![Reaction::new([], [(0, 1)], "k1"), Reaction::new([], [(0, 1)], "k2")],
        );
        let b = offset_vector(&n).unwrap();
        assert_eq!(b[0].to_string(), "k1 + k2");
        let empty = ReactionNetwork::new(names(&["X"]), vec![], vec![]);
        assert!(offset_vector(&empty).unwrap()[0].is_zero());
    }

    #[test]
    fn toy_upper_bound_determinant() {
        let n = toy((2.0, 3.0), (0.5, 1.0), (0.5, 1.0));
        let class = classify_unimolecular(&n).unwrap();
        let ap = upper_bound_matrix(&n, &class).unwrap();
        assert_eq!(ap.vars(), &names(&["k1"])[..]);
        let det = det_poly(&ap).unwrap();
        // k1 (k2+ k3+ - g1- g2-) = k1 (1 - 4)
        assert_eq!(det.num_terms(), 1);
        assert!((det.coeff(&[1]) + 3.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_degradation_rejected() {
        let n = ReactionNetwork::new(names(&["X"]), vec![RateParam::free("g")], vec![Reaction::new([(0, 1)], [], "g")]);
        let class = classify_unimolecular(&n).unwrap();
        assert!(matches!(upper_bound_matrix(&n, &class), Err(AlgebraError::UnboundedParameter { .. })));
    }

    #[test]
    fn diagonal_adjugate_vector() {
        let v = names(&["a", "b"]);
        let mut m = ParamMatrix::zeros(2, 2, v.clone(), BTreeMap::new());
        m.set(0, 0, &-MultiPoly::var(&v, 0));
        m.set(1, 1, &-MultiPoly::var(&v, 1));
        assert_eq!(det_poly(&m).unwrap().to_string(), "a*b");
        let w = adjugate_vector(&m).unwrap();
        assert_eq!(w[0].to_string(), "b");
        assert_eq!(w[1].to_string(), "a");
        let one = ParamMatrix::from_numeric(&DMatrix::from_element(1, 1, -2.0));
        assert_eq!(adjugate_vector(&one).unwrap()[0].constant_term(), 1.0);
    }

    #[test]
    fn numeric_toy_determinant() {
        let m = DMatrix::from_row_slice(3, 3, &[-2.0, 0.0, 1.0, 1.0, -2.0, 0.0, 0.0, 1.0, -1.0]);
        let d = det_poly(&ParamMatrix::from_numeric(&m)).unwrap();
        assert!((d.constant_term() + 3.0).abs() < 1e-12);
    }

    #[test]
    fn missing_parameter_reported() {
        let n = toy((2.0, 3.0), (0.5, 1.0), (0.5, 1.0));
        let a = characteristic_matrix(&n).unwrap();
        assert_eq!(eval_matrix(&a, &BTreeMap::new()), Err(AlgebraError::MissingParameter("g1".into())));
    }
}
