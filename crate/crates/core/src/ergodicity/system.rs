//! First-order systems handed to the analysis pipelines: either the
//! network's own first-order part, or the image of a bimolecular network
//! under its left-nullspace reduction.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::report::ReductionInfo;
use crate::network::{build_stoichiometry, classify_column, NetworkError, ParamKind, ReactionNetwork, UniKind};
use crate::paramalg::{first_order_channels, matrix_from_channels, Channel, ChannelRate, ParamMatrix};
use crate::spectral::left_nullspace_basis;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Reduction {
    pub basis: DMatrix<i64>,
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
    pub row_of: Vec<usize>,
    /// Reactions whose channel vanished with a dropped column.
    pub dropped_reactions: Vec<usize>,
}

/// `dim`-dimensional first-order system. Channel rates are symbolic
/// parameter names of the underlying network.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct UniSystem {
    pub dim: usize,
    pub labels: Vec<String>,
    pub channels: Vec<Channel>,
    pub kinds: Vec<UniKind>,
    pub reduction: Option<Reduction>,
}

fn classify(channels: &[Channel]) -> Result<Vec<UniKind>, NetworkError> {
    channels
        .iter()
        .map(|c| {
            classify_column(&c.stoich)
                .map_err(|negatives| NetworkError::Classification { reaction: c.reaction, negatives })
        })
        .collect()
}

impl UniSystem {
    pub fn unimolecular(network: &ReactionNetwork) -> Result<Self, NetworkError> {
        let channels = first_order_channels(network).map_err(|e| match e {
            crate::paramalg::AlgebraError::Network(n) => n,
            other => unreachable!("{other}"),
        })?;
        let kinds = classify(&channels)?;
        Ok(Self { dim: network.num_species(), labels: network.species.clone(), channels, kinds, reduction: None })
    }

    /// Left-nullspace reduction. `strictly_positive(name)` tells whether a
    /// rate is bounded away from zero on the analysed domain, which is
    /// needed for a dropped column to be strictly negative.
    pub fn reduced(
        network: &ReactionNetwork,
        strictly_positive: impl Fn(&str) -> bool,
    ) -> Result<Result<Self, String>, NetworkError> {
        network.ensure_valid()?;
        let st = build_stoichiometry(network)?;
        if st.second.ncols() == 0 {
            return Self::unimolecular(network).map(Ok);
        }
        let d = network.num_species();
        let basis = left_nullspace_basis(&st.second);
        let m = basis.nrows();
        if m == 0 {
            return Ok(Err("S_b has full row rank, so no v > 0 satisfies vᵀS_b = 0".into()));
        }
        if basis.iter().any(|&x| x < 0) {
            return Ok(Err("the left null space of S_b has no nonnegative basis".into()));
        }
        if let Some(j) = (0..d).find(|&j| (0..m).all(|i| basis[(i, j)] == 0)) {
            return Ok(Err(format!("species `{}` is not covered by the left null space of S_b", network.species[j])));
        }
        let all = first_order_channels(network).map_err(|e| match e {
            crate::paramalg::AlgebraError::Network(n) => n,
            other => unreachable!("{other}"),
        })?;
        let project = |z: &[i64]| -> Vec<i64> { (0..m).map(|i| (0..d).map(|j| basis[(i, j)] * z[j]).sum()).collect() };
        let projected: Vec<Vec<i64>> = all.iter().map(|c| project(&c.stoich)).collect();

        // columns negative for every ṽ > 0 may be dropped; keep just enough of them to square the block
        let auto: Vec<bool> = (0..d)
            .map(|j| {
                let mine: Vec<usize> = (0..all.len()).filter(|&k| all[k].reactant == j).collect();
                let nonpositive = mine.iter().all(|&k| projected[k].iter().all(|&x| x <= 0));
                let strict = mine.iter().any(|&k| {
                    projected[k].iter().any(|&x| x < 0) && strictly_positive(&network.reactions[all[k].reaction].rate)
                });
                !mine.is_empty() && nonpositive && strict
            })
            .collect();
        let required: Vec<usize> = (0..d).filter(|&j| !auto[j]).collect();
        let optional: Vec<usize> = (0..d).filter(|&j| auto[j]).collect();
        if required.len() > m {
            return Ok(Err(format!(
                "after dropping automatically negative columns the reduced block is {m}x{}, not square",
                required.len()
            )));
        }
        let mut reason = String::from("no row/column pairing makes the reduced block Metzler");
        let mut chosen = None;
        for extra in combinations(optional.len(), m - required.len()).take(COMBINATION_LIMIT) {
            let mut kept: Vec<usize> = required.iter().copied().chain(extra.iter().map(|&i| optional[i])).collect();
            kept.sort_unstable();
            match metzler_pairing(&kept, &all, &projected, m) {
                Ok(row_of) => {
                    chosen = Some((kept, row_of));
                    break;
                }
                Err(Some(j)) => {
                    reason = format!(
                        "reduced column of `{}` has negative entries in several rows; the block is not Metzler",
                        network.species[j]
                    )
                }
                Err(None) => {}
            }
        }
        let Some((kept, row_of)) = chosen else {
            return Ok(Err(reason));
        };
        let dropped: Vec<usize> = (0..d).filter(|j| !kept.contains(j)).collect();

        let mut channels = Vec::new();
        let mut dropped_reactions = Vec::new();
        for (k, ch) in all.iter().enumerate() {
            match kept.iter().position(|&j| j == ch.reactant) {
                Some(c) => channels.push(Channel {
                    reaction: ch.reaction,
                    reactant: c,
                    stoich: (0..m).map(|p| projected[k][row_of[p]]).collect(),
                    rate: ch.rate.clone(),
                }),
                None => dropped_reactions.push(ch.reaction),
            }
        }
        let kinds = classify(&channels)?;
        let labels = kept.iter().map(|&j| network.species[j].clone()).collect();
        Ok(Ok(Self {
            dim: m,
            labels,
            channels,
            kinds,
            reduction: Some(Reduction { basis, kept, dropped, row_of, dropped_reactions }),
        }))
    }

    /// Channels with the rates given by `rate_of(channel index)`.
    pub fn with_rates(&self, rate_of: impl Fn(usize) -> ChannelRate) -> Vec<Channel> {
        self.channels
            .iter()
            .enumerate()
            .map(|(i, c)| Channel { rate: rate_of(i), ..c.clone() })
            .collect()
    }

    /// Matrix over the parameter names (shared names stay tied).
    pub fn symbolic_matrix(&self, network: &ReactionNetwork) -> ParamMatrix {
        let mut vars: Vec<String> = Vec::new();
        for c in &self.channels {
            if let ChannelRate::Symbol(s) = &c.rate {
                if !vars.contains(s) {
                    vars.push(s.clone());
                }
            }
        }
        let domain: BTreeMap<String, ParamKind> =
            vars.iter().filter_map(|v| network.param(v).map(|p| (v.clone(), p.kind))).collect();
        matrix_from_channels(self.dim, &self.channels, vars, domain)
    }

    pub fn reduction_info(&self, network: &ReactionNetwork) -> Option<ReductionInfo> {
        self.reduction.as_ref().map(|r| ReductionInfo {
            basis: (0..r.basis.nrows()).map(|i| r.basis.row(i).iter().copied().collect()).collect(),
            kept_species: r.kept.iter().map(|&j| network.species[j].clone()).collect(),
            dropped_species: r.dropped.iter().map(|&j| network.species[j].clone()).collect(),
            row_of: r.row_of.clone(),
            matrix: self.symbolic_matrix(network),
        })
    }

    /// Lifts a reduced vector `ṽ` (indexed like the system) to
    /// `v = (S_b^⊥)ᵀ ṽ` in species coordinates.
    pub fn lift(&self, v: &[f64]) -> Vec<f64> {
        match &self.reduction {
            None => v.to_vec(),
            Some(r) => {
                let d = r.basis.ncols();
                let mut by_row = vec![0.0; r.basis.nrows()];
                for (c, &row) in r.row_of.iter().enumerate() {
                    by_row[row] = v[c];
                }
                (0..d).map(|j| (0..by_row.len()).map(|i| r.basis[(i, j)] as f64 * by_row[i]).sum()).collect()
            }
        }
    }
}

const COMBINATION_LIMIT: usize = 4096;

/// `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut next = (k <= n).then(|| (0..k).collect::<Vec<_>>());
    std::iter::from_fn(move || {
        let current = next.take()?;
        let mut c = current.clone();
        if let Some(i) = (0..k).rev().find(|&i| c[i] < n - k + i) {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            next = Some(c);
        }
        Some(current)
    })
}

/// Row for each kept column such that every negative entry sits on the
/// diagonal. `Err(Some(j))` names a species whose column has negatives in
/// several rows.
fn metzler_pairing(kept: &[usize], all: &[Channel], projected: &[Vec<i64>], m: usize) -> Result<Vec<usize>, Option<usize>> {
    let mut forced: Vec<Option<usize>> = vec![None; m];
    for (c, &j) in kept.iter().enumerate() {
        let mut rows: Vec<usize> = (0..all.len())
            .filter(|&k| all[k].reactant == j)
            .flat_map(|k| (0..m).filter(move |&i| projected[k][i] < 0))
            .collect();
        rows.sort_unstable();
        rows.dedup();
        match rows.len() {
            0 => {}
            1 => forced[c] = Some(rows[0]),
            _ => return Err(Some(j)),
        }
    }
    pairing(&forced, m).ok_or(None)
}

/// Perfect matching of columns to rows honouring forced assignments.
fn pairing(forced: &[Option<usize>], m: usize) -> Option<Vec<usize>> {
    let mut row_owner: Vec<Option<usize>> = vec![None; m];
    for (c, f) in forced.iter().enumerate() {
        if let Some(r) = *f {
            if row_owner[r].is_some() {
                return None;
            }
            row_owner[r] = Some(c);
        }
    }
    let mut row_of: Vec<Option<usize>> = forced.to_vec();
    // the remaining columns take the remaining rows in order, which is a
    // valid matching since free columns accept any row
    let mut free_rows = (0..m).filter(|&r| row_owner[r].is_none());
    for slot in row_of.iter_mut() {
        if slot.is_none() {
            *slot = free_rows.next();
        }
    }
    row_of.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paramalg::eval_matrix;
    use crate::parse::parse_network;

    const SIR: &str = "species: S, I, R
param gs free
param gi free
param gr free
param kir free
param krs free
param beta free
reaction: S -> 0 @ gs
reaction: I -> 0 @ gi
reaction: R -> 0 @ gr
reaction: I -> R @ kir
reaction: R -> S @ krs
reaction: S + I -> 2 I @ beta
";

    #[test]
    fn sir_reduces_to_two_species() {
        let n = parse_network(SIR).unwrap();
        let sys = UniSystem::reduced(&n, |_| true).unwrap().unwrap();
        assert_eq!(sys.labels, vec!["I", "R"]);
        let m = sys.symbolic_matrix(&n);
        let ones: BTreeMap<String, f64> = m.vars().iter().map(|v| (v.clone(), 1.0)).collect();
        assert_eq!(eval_matrix(&m, &ones).unwrap(), DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -2.0]));
        assert_eq!(sys.lift(&[1.0, 1.0]), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn pairing_respects_forced_rows() {
        assert_eq!(pairing(&[None, Some(0)], 2), Some(vec![1, 0]));
        assert_eq!(pairing(&[Some(0), Some(0)], 2), None);
    }
}
