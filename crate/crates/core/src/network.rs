//! Reaction network data model: species, mass-action reactions, rate
//! parameters, stoichiometry partitioning and the classification of
//! first-order reactions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

/// How much is known about a rate parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamKind {
    Fixed { value: f64 },
    Interval { lo: f64, hi: f64 },
    /// Any positive value.
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateParam {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParamKind,
}

impl RateParam {
    pub fn fixed(name: impl Into<String>, value: f64) -> Self {
        Self { name: name.into(), kind: ParamKind::Fixed { value } }
    }

    pub fn interval(name: impl Into<String>, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), kind: ParamKind::Interval { lo, hi } }
    }

    pub fn free(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: ParamKind::Free }
    }

    /// The single admissible value, for `Fixed` parameters and degenerate
    /// intervals `[x, x]`.
    pub fn pinned_value(&self) -> Option<f64> {
        match self.kind {
            ParamKind::Fixed { value } => Some(value),
            ParamKind::Interval { lo, hi } if lo == hi => Some(lo),
            _ => None,
        }
    }

    pub fn lower(&self) -> Option<f64> {
        match self.kind {
            ParamKind::Fixed { value } => Some(value),
            ParamKind::Interval { lo, .. } => Some(lo),
            ParamKind::Free => None,
        }
    }

    pub fn upper(&self) -> Option<f64> {
        match self.kind {
            ParamKind::Fixed { value } => Some(value),
            ParamKind::Interval { hi, .. } => Some(hi),
            ParamKind::Free => None,
        }
    }

    pub fn is_free(&self) -> bool {
        matches!(self.kind, ParamKind::Free)
    }

    /// True for proper intervals (`lo < hi`).
    pub fn is_uncertain(&self) -> bool {
        matches!(self.kind, ParamKind::Interval { lo, hi } if lo < hi)
    }
}

/// A multiset of species, stored as `(species index, multiplicity)` pairs
/// sorted by species index with no zero multiplicities.
pub type Complex = Vec<(usize, u32)>;

fn normalize_complex(items: impl IntoIterator<Item = (usize, u32)>) -> Complex {
    let mut merged: BTreeMap<usize, u32> = BTreeMap::new();
    for (s, m) in items {
        if m > 0 {
            *merged.entry(s).or_default() += m;
        }
    }
    merged.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub reactants: Complex,
    pub products: Complex,
    /// Name of the rate parameter in the network's parameter table.
    pub rate: String,
}

impl Reaction {
    pub fn new(
        reactants: impl IntoIterator<Item = (usize, u32)>,
        products: impl IntoIterator<Item = (usize, u32)>,
        rate: impl Into<String>,
    ) -> Self {
        Self {
            reactants: normalize_complex(reactants),
            products: normalize_complex(products),
            rate: rate.into(),
        }
    }

    /// Total reactant multiplicity, i.e. the degree of the mass-action
    /// propensity.
    pub fn order(&self) -> u32 {
        self.reactants.iter().map(|&(_, m)| m).sum()
    }

    pub fn reactant_multiplicity(&self, species: usize) -> u32 {
        self.reactants.iter().find(|&&(s, _)| s == species).map_or(0, |&(_, m)| m)
    }

    /// Net change `products - reactants` over `d` species.
    pub fn stoichiometry(&self, d: usize) -> Vec<i64> {
        let mut z = vec![0i64; d];
        for &(s, m) in &self.products {
            z[s] += i64::from(m);
        }
        for &(s, m) in &self.reactants {
            z[s] -= i64::from(m);
        }
        z
    }

    /// The reactant species of a first-order reaction.
    pub fn sole_reactant(&self) -> Option<usize> {
        match self.reactants.as_slice() {
            [(s, 1)] => Some(*s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReactionNetwork {
    pub species: Vec<String>,
    pub params: Vec<RateParam>,
    pub reactions: Vec<Reaction>,
}

/// A problem found by [`validate_network`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    EmptySpecies,
    DuplicateSpecies { name: String },
    DuplicateParameter { name: String },
    UnsupportedOrder { reaction: usize, order: u32 },
    MissingParameter { reaction: usize, name: String },
    SpeciesOutOfRange { reaction: usize, index: usize },
    NonpositiveRate { name: String },
    InvalidInterval { name: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptySpecies => write!(f, "the species list is empty"),
            Violation::DuplicateSpecies { name } => write!(f, "species `{name}` declared twice"),
            Violation::DuplicateParameter { name } => write!(f, "parameter `{name}` declared twice"),
            Violation::UnsupportedOrder { reaction, order } => {
                write!(f, "reaction {reaction} has order {order} (at most 2 supported)")
            }
            Violation::MissingParameter { reaction, name } => {
                write!(f, "reaction {reaction} uses undeclared parameter `{name}`")
            }
            Violation::SpeciesOutOfRange { reaction, index } => {
                write!(f, "reaction {reaction} references species index {index}")
            }
            Violation::NonpositiveRate { name } => write!(f, "fixed rate `{name}` is not positive"),
            Violation::InvalidInterval { name } => write!(f, "interval of `{name}` is malformed"),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NetworkError {
    #[error("reaction {reaction} has order {order}; at most bimolecular reactions are supported")]
    UnsupportedOrder { reaction: usize, order: u32 },
    #[error("first-order reaction {reaction} has {negatives} negative stoichiometric entries")]
    Classification { reaction: usize, negatives: usize },
    #[error("invalid network: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl ReactionNetwork {
    pub fn new(species: Vec<String>, params: Vec<RateParam>, reactions: Vec<Reaction>) -> Self {
        Self { species, params, reactions }
    }

    pub fn num_species(&self) -> usize {
        self.species.len()
    }

    pub fn param(&self, name: &str) -> Option<&RateParam> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s == name)
    }

    /// Parameter of reaction `k`. Panics if the network has not been validated.
    pub fn rate_of(&self, k: usize) -> &RateParam {
        let name = &self.reactions[k].rate;
        self.param(name).unwrap_or_else(|| panic!("undeclared parameter `{name}`"))
    }

    pub fn reactions_of_order(&self, order: u32) -> Vec<usize> {
        (0..self.reactions.len()).filter(|&k| self.reactions[k].order() == order).collect()
    }

    pub fn is_unimolecular(&self) -> bool {
        self.reactions.iter().all(|r| r.order() <= 1)
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate_network(self)
    }

    pub fn ensure_valid(&self) -> Result<(), NetworkError> {
        let v = validate_network(self);
        if v.is_empty() {
            Ok(())
        } else {
            Err(NetworkError::Invalid(v))
        }
    }

    /// Full `d x K` stoichiometric matrix in reaction order.
    pub fn stoichiometry_matrix(&self) -> DMatrix<i64> {
        let d = self.num_species();
        let mut s = DMatrix::zeros(d, self.reactions.len());
        for (k, r) in self.reactions.iter().enumerate() {
            for (i, z) in r.stoichiometry(d).into_iter().enumerate() {
                s[(i, k)] = z;
            }
        }
        s
    }

    /// Parameter names referenced by more than one reaction of the given
    /// set of reaction indices.
    pub fn shared_rates(&self, reactions: &[usize]) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut shared = BTreeSet::new();
        for &k in reactions {
            let name = &self.reactions[k].rate;
            if !seen.insert(name.clone()) {
                shared.insert(name.clone());
            }
        }
        shared
    }

    /// Assignment of every pinned parameter to its value.
    pub fn pinned_assignment(&self) -> BTreeMap<String, f64> {
        self.params
            .iter()
            .filter_map(|p| p.pinned_value().map(|v| (p.name.clone(), v)))
            .collect()
    }
}

/// Reports every structural problem with a network. Never fails.
pub fn validate_network(network: &ReactionNetwork) -> Vec<Violation> {
    let mut out = Vec::new();
    let d = network.num_species();
    if d == 0 {
        out.push(Violation::EmptySpecies);
    }
    let mut seen = BTreeSet::new();
    for s in &network.species {
        if !seen.insert(s.as_str()) {
            out.push(Violation::DuplicateSpecies { name: s.clone() });
        }
    }
    let mut seen = BTreeSet::new();
    for p in &network.params {
        if !seen.insert(p.name.as_str()) {
            out.push(Violation::DuplicateParameter { name: p.name.clone() });
        }
        match p.kind {
            ParamKind::Fixed { value } if !(value > 0.0 && value.is_finite()) => {
                out.push(Violation::NonpositiveRate { name: p.name.clone() });
            }
            ParamKind::Interval { lo, hi }
                if !(lo >= 0.0 && hi > 0.0 && lo <= hi && hi.is_finite()) =>
            {
                out.push(Violation::InvalidInterval { name: p.name.clone() });
            }
            _ => {}
        }
    }
    for (k, r) in network.reactions.iter().enumerate() {
        let order = r.order();
        if order > 2 {
            out.push(Violation::UnsupportedOrder { reaction: k, order });
        }
        if network.param(&r.rate).is_none() {
            out.push(Violation::MissingParameter { reaction: k, name: r.rate.clone() });
        }
        for &(s, _) in r.reactants.iter().chain(&r.products) {
            if s >= d {
                out.push(Violation::SpeciesOutOfRange { reaction: k, index: s });
            }
        }
    }
    out
}

/// Stoichiometric matrix split by reaction order. Columns within each block
/// follow the original reaction order; `*_reactions` map columns back to
/// reaction indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Stoichiometry {
    pub zeroth: DMatrix<i64>,
    pub first: DMatrix<i64>,
    pub second: DMatrix<i64>,
    pub zeroth_reactions: Vec<usize>,
    pub first_reactions: Vec<usize>,
    pub second_reactions: Vec<usize>,
}

impl Stoichiometry {
    /// `[S0 Su Sb]` as one matrix.
    pub fn concatenated(&self) -> DMatrix<i64> {
        let d = self.zeroth.nrows();
        let n = self.zeroth.ncols() + self.first.ncols() + self.second.ncols();
        let mut out = DMatrix::zeros(d, n);
        let mut c = 0;
        for block in [&self.zeroth, &self.first, &self.second] {
            for j in 0..block.ncols() {
                out.set_column(c, &block.column(j));
                c += 1;
            }
        }
        out
    }

    /// Reaction indices in concatenated column order.
    pub fn column_reactions(&self) -> Vec<usize> {
        self.zeroth_reactions
            .iter()
            .chain(&self.first_reactions)
            .chain(&self.second_reactions)
            .copied()
            .collect()
    }
}

pub fn build_stoichiometry(network: &ReactionNetwork) -> Result<Stoichiometry, NetworkError> {
    let d = network.num_species();
    let mut idx: [Vec<usize>; 3] = Default::default();
    for (k, r) in network.reactions.iter().enumerate() {
        let order = r.order();
        if order > 2 {
            return Err(NetworkError::UnsupportedOrder { reaction: k, order });
        }
        idx[order as usize].push(k);
    }
    let block = |ks: &[usize]| {
        let mut m = DMatrix::zeros(d, ks.len());
        for (j, &k) in ks.iter().enumerate() {
            for (i, z) in network.reactions[k].stoichiometry(d).into_iter().enumerate() {
                m[(i, j)] = z;
            }
        }
        m
    };
    let [z, u, b] = idx;
    Ok(Stoichiometry {
        zeroth: block(&z),
        first: block(&u),
        second: block(&b),
        zeroth_reactions: z,
        first_reactions: u,
        second_reactions: b,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UniKind {
    Degradation,
    Catalytic,
    Conversion,
}

impl UniKind {
    pub fn short(self) -> &'static str {
        match self {
            UniKind::Degradation => "dg",
            UniKind::Catalytic => "ct",
            UniKind::Conversion => "cv",
        }
    }
}

/// Classifies one first-order stoichiometric column. Zero columns count as
/// degradation. Returns `Err(negatives)` for columns with two or more
/// negative entries.
pub fn classify_column(col: &[i64]) -> Result<UniKind, usize> {
    let neg = col.iter().filter(|&&z| z < 0).count();
    let pos = col.iter().filter(|&&z| z > 0).count();
    match (neg, pos) {
        (_, 0) if neg <= 1 => Ok(UniKind::Degradation),
        (0, _) => Ok(UniKind::Catalytic),
        (1, _) => Ok(UniKind::Conversion),
        _ => Err(neg),
    }
}

/// Partition of the first-order reactions (by original reaction index).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct UniClass {
    pub dg: Vec<usize>,
    pub ct: Vec<usize>,
    pub cv: Vec<usize>,
}

impl UniClass {
    pub fn kind_of(&self, reaction: usize) -> Option<UniKind> {
        if self.dg.contains(&reaction) {
            Some(UniKind::Degradation)
        } else if self.ct.contains(&reaction) {
            Some(UniKind::Catalytic)
        } else if self.cv.contains(&reaction) {
            Some(UniKind::Conversion)
        } else {
            None
        }
    }
}

pub fn classify_unimolecular(network: &ReactionNetwork) -> Result<UniClass, NetworkError> {
    let d = network.num_species();
    let mut class = UniClass::default();
    for (k, r) in network.reactions.iter().enumerate() {
        let order = r.order();
        if order > 2 {
            return Err(NetworkError::UnsupportedOrder { reaction: k, order });
        }
        if order != 1 {
            continue;
        }
        match classify_column(&r.stoichiometry(d)) {
            Ok(UniKind::Degradation) => class.dg.push(k),
            Ok(UniKind::Catalytic) => class.ct.push(k),
            Ok(UniKind::Conversion) => class.cv.push(k),
            Err(negatives) => return Err(NetworkError::Classification { reaction: k, negatives }),
        }
    }
    Ok(class)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    pub(crate) fn sir() -> ReactionNetwork {
        let params = ["gs", "gi", "gr", "kir", "krs", "beta"]
            .iter()
            .map(|n| RateParam::free(*n))
            .collect();
        ReactionNetwork::new(
            sp(&["S", "I", "R"]),
            params,
            vec![
                Reaction::new([(0, 1)], [], "gs"),
                Reaction::new([(1, 1)], [], "gi"),
                Reaction::new([(2, 1)], [], "gr"),
                Reaction::new([(1, 1)], [(2, 1)], "kir"),
                Reaction::new([(2, 1)], [(0, 1)], "krs"),
                Reaction::new([(0, 1), (1, 1)], [(1, 2)], "beta"),
            ],
        )
    }

    #[test]
    fn sir_bimolecular_column() {
        let s = build_stoichiometry(&sir()).unwrap();
        assert_eq!(s.second, DMatrix::from_column_slice(3, 1, &[-1, 1, 0]));
        assert_eq!(s.first.ncols(), 5);
        assert_eq!(s.zeroth.ncols(), 0);
    }

    #[test]
    fn empty_network_has_empty_blocks() {
        let n = ReactionNetwork::new(sp(&["X", "Y"]), vec![], vec![]);
        let s = build_stoichiometry(&n).unwrap();
        for m in [&s.zeroth, &s.first, &s.second] {
            assert_eq!((m.nrows(), m.ncols()), (2, 0));
        }
    }

    #[test]
    fn birth_death_blocks() {
        let n = ReactionNetwork::new(
            sp(&["X"]),
            vec![RateParam::fixed("k", 1.0), RateParam::fixed("g", 1.0)],
            vec![Reaction::new([], [(0, 1)], "k"), Reaction::new([(0, 1)], [], "g")],
        );
        let s = build_stoichiometry(&n).unwrap();
        assert_eq!(s.zeroth, DMatrix::from_element(1, 1, 1));
        assert_eq!(s.first, DMatrix::from_element(1, 1, -1));
        assert_eq!(s.second.ncols(), 0);
    }

    #[test]
    fn third_order_is_rejected() {
        let n = ReactionNetwork::new(
            sp(&["X"]),
            vec![RateParam::fixed("k", 1.0)],
            vec![Reaction::new([(0, 3)], [], "k")],
        );
        assert_eq!(
            build_stoichiometry(&n),
            Err(NetworkError::UnsupportedOrder { reaction: 0, order: 3 })
        );
        assert_eq!(n.validate(), vec![Violation::UnsupportedOrder { reaction: 0, order: 3 }]);
    }

    #[test]
    fn sir_classification() {
        let c = classify_unimolecular(&sir()).unwrap();
        assert_eq!(c.dg, vec![0, 1, 2]);
        assert_eq!(c.cv, vec![3, 4]);
        assert!(c.ct.is_empty());
    }

    #[test]
    fn zero_column_is_degradation() {
        assert_eq!(classify_column(&[0, 0]), Ok(UniKind::Degradation));
        assert_eq!(classify_column(&[-1, 0]), Ok(UniKind::Degradation));
        assert_eq!(classify_column(&[1, 1]), Ok(UniKind::Catalytic));
        assert_eq!(classify_column(&[-1, 2]), Ok(UniKind::Conversion));
        assert_eq!(classify_column(&[-1, -1, 1]), Err(2));
    }

    #[test]
    fn double_reactant_counts_as_bimolecular() {
        let n = ReactionNetwork::new(
            sp(&["X"]),
            vec![RateParam::fixed("k", 1.0)],
            vec![Reaction::new([(0, 1), (0, 1)], [], "k")],
        );
        assert_eq!(n.reactions[0].reactants, vec![(0, 2)]);
        assert_eq!(n.reactions_of_order(2), vec![0]);
        assert!(classify_unimolecular(&n).unwrap().dg.is_empty());
    }

    #[test]
    fn validation_reports() {
        assert!(sir().validate().is_empty());
        let n = ReactionNetwork::new(
            vec![],
            vec![RateParam::fixed("g", 0.0), RateParam::interval("h", 2.0, 1.0)],
            vec![Reaction::new([], [], "missing")],
        );
        let v = n.validate();
        assert!(v.contains(&Violation::EmptySpecies));
        assert!(v.contains(&Violation::NonpositiveRate { name: "g".into() }));
        assert!(v.contains(&Violation::InvalidInterval { name: "h".into() }));
        assert!(v.contains(&Violation::MissingParameter { reaction: 0, name: "missing".into() }));
    }
}
