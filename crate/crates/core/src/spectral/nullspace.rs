use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_traits::{Signed, Zero};

use super::exact::{integerize, rank, rat, right_null_space, to_i64, Rat};

/// Integer basis of the left null space of `s_b` (rows `y` with
/// `yᵀ S_b = 0`). Nonnegative rows are preferred: when the extreme rays of
/// `{y ≥ 0 : yᵀ S_b = 0}` span the null space, an independent subset of them
/// is returned. Otherwise the basis comes from exact elimination, each row
/// flipped so that a row with no positive entries becomes nonnegative.
/// Rows are sorted by the index of their first nonzero entry.
pub fn left_nullspace_basis(s_b: &DMatrix<i64>) -> DMatrix<i64> {
    let d = s_b.nrows();
    let st: Vec<Vec<Rat>> = (0..s_b.ncols()).map(|j| (0..d).map(|i| rat(s_b[(i, j)])).collect()).collect();
    let kernel = right_null_space(&st, d);
    let k = kernel.len();

    let mut rows: Vec<Vec<i64>> = match nonnegative_basis(s_b, k) {
        Some(rows) => rows,
        None => kernel
            .iter()
            .map(|v| {
                let mut ints = integerize(v);
                if ints.iter().all(|x| !x.is_positive()) {
                    ints.iter_mut().for_each(|x| *x = -x.clone());
                }
                to_i64(&ints).expect("nullspace entries fit in i64")
            })
            .collect(),
    };
    rows.sort_by_key(|r| (r.iter().position(|&x| x != 0).unwrap_or(d), r.iter().map(|x| -x).collect::<Vec<_>>()));
    let mut out = DMatrix::zeros(rows.len(), d);
    for (i, r) in rows.iter().enumerate() {
        for (j, &x) in r.iter().enumerate() {
            out[(i, j)] = x;
        }
    }
    out
}

/// Extreme rays of the cone `{y ≥ 0 : yᵀ S_b = 0}` by the double description
/// method, then a greedy independent subset. `None` when they do not span a
/// space of dimension `k`.
fn nonnegative_basis(s_b: &DMatrix<i64>, k: usize) -> Option<Vec<Vec<i64>>> {
    let d = s_b.nrows();
    let mut rays: Vec<Vec<BigInt>> = (0..d)
        .map(|i| (0..d).map(|j| BigInt::from(i64::from(i == j))).collect())
        .collect();
    for c in 0..s_b.ncols() {
        let a: Vec<BigInt> = (0..d).map(|i| BigInt::from(s_b[(i, c)])).collect();
        let dot = |r: &[BigInt]| r.iter().zip(&a).map(|(x, y)| x * y).sum::<BigInt>();
        let vals: Vec<BigInt> = rays.iter().map(|r| dot(r)).collect();
        let mut next: Vec<Vec<BigInt>> = Vec::new();
        for (r, v) in rays.iter().zip(&vals) {
            if v.is_zero() {
                next.push(r.clone());
            }
        }
        for (p, vp) in rays.iter().zip(&vals) {
            if !vp.is_positive() {
                continue;
            }
            for (n, vn) in rays.iter().zip(&vals) {
                if !vn.is_negative() {
                    continue;
                }
                // combination with zero inner product; support minimality
                // keeps only extreme rays
                let comb: Vec<Rat> = p
                    .iter()
                    .zip(n)
                    .map(|(x, y)| Rat::from_integer(vp * y - vn * x))
                    .collect();
                let ints = integerize(&comb);
                if !next.contains(&ints) {
                    next.push(ints);
                }
            }
        }
        // discard rays whose support strictly contains another ray's
        let supports: Vec<Vec<bool>> = next.iter().map(|r| r.iter().map(|x| !x.is_zero()).collect()).collect();
        rays = next
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                !supports.iter().enumerate().any(|(j, s)| {
                    j != *i && s != &supports[*i] && s.iter().zip(&supports[*i]).all(|(a, b)| !a || *b)
                })
            })
            .map(|(_, r)| r.clone())
            .collect();
        if rays.len() > 4096 {
            return None;
        }
    }
    rays.sort_by_key(|r| (r.iter().filter(|x| !x.is_zero()).count(), r.iter().position(|x| !x.is_zero())));
    let mut chosen: Vec<Vec<BigInt>> = Vec::new();
    let mut chosen_rat: Vec<Vec<Rat>> = Vec::new();
    for r in rays {
        let row: Vec<Rat> = r.iter().map(|x| Rat::from_integer(x.clone())).collect();
        chosen_rat.push(row);
        if rank(&chosen_rat) == chosen_rat.len() {
            chosen.push(r);
        } else {
            chosen_rat.pop();
        }
        if chosen.len() == k {
            break;
        }
    }
    if chosen.len() < k {
        return None;
    }
    chosen.iter().map(|r| to_i64(r)).collect()
}
