//! Empirical entropies of the flavors used by the key-rate bounds.
//!
//! Everything is base 2 and per symbol unless stated otherwise, with
//! `0 log 0 = 0` and `0/0 = 0`.

use std::collections::BTreeMap;

use crate::counts::{CountKind, CountTable};
use crate::error::{Error, Result};
use crate::seq::SymbolSequence;

/// A count table normalized to a probability distribution.
#[derive(Debug, Clone)]
pub struct EmpiricalLaw {
    probs: Vec<f64>,
}

impl EmpiricalLaw {
    pub fn from_counts(counts: &CountTable) -> Result<Self> {
        let total = counts.total();
        if total == 0 {
            return Err(Error::EmptyCountTable);
        }
        let probs = counts.cells().iter().map(|&c| c as f64 / total as f64).collect();
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn entropy(&self) -> f64 {
        -self.probs.iter().map(|&p| xlog2(p)).sum::<f64>()
    }
}

#[inline]
fn xlog2(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

fn h_from_counts<I: Iterator<Item = u64>>(counts: I, total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    -counts.map(|c| xlog2(c as f64 / n)).sum::<f64>()
}

/// Conditional empirical entropy `H(X | Z)` of a symbol-state count table:
/// `-sum n(x,z)/n * log2(n(x,z)/n(z))`, in bits per symbol.
pub fn cond_entropy(counts: &CountTable) -> Result<f64> {
    if !matches!(counts.kind(), CountKind::SymbolState) {
        return Err(Error::InvalidInput("cond_entropy expects a symbol-state count table".into()));
    }
    let n = counts.total();
    if n == 0 {
        return Err(Error::EmptyCountTable);
    }
    let mut h = 0.0;
    for z in 0..counts.states() {
        let nz = counts.state_total(z);
        if nz == 0 {
            continue;
        }
        for a in 0..counts.alpha() {
            let c = counts.get_symbol_state(z, a);
            if c > 0 {
                h -= (c as f64 / n as f64) * ((c as f64 / nz as f64).log2());
            }
        }
    }
    Ok(h)
}

/// Order-`ell` conditional empirical entropy of `x` under the cyclic
/// (periodic-extension) law: `H(X_ell | X_0..X_{ell-1})` from the
/// `(ell+1)`-gram statistics with indices mod `n`. Equals the marginal
/// entropy at `ell = 0` and agrees with `cond_entropy` of cyclic
/// shift-register counts.
pub fn markov_cond_entropy(x: &SymbolSequence, ell: usize) -> f64 {
    let n = x.len();
    if n == 0 {
        return 0.0;
    }
    let mut joint: BTreeMap<Vec<u16>, u64> = BTreeMap::new();
    let mut marginal: BTreeMap<Vec<u16>, u64> = BTreeMap::new();
    for i in 0..n {
        let mut w = Vec::with_capacity(ell + 1);
        for j in 0..=ell {
            w.push(x.symbols()[(i + j) % n]);
        }
        *marginal.entry(w[..ell].to_vec()).or_insert(0) += 1;
        *joint.entry(w).or_insert(0) += 1;
    }
    let hj = h_from_counts(joint.values().copied(), n as u64);
    let hm = h_from_counts(marginal.values().copied(), n as u64);
    hj - hm
}

fn block_histogram(x: &SymbolSequence, ell: usize) -> Result<BTreeMap<&[u16], u64>> {
    if ell == 0 || !x.len().is_multiple_of(ell) {
        return Err(Error::BlockLengthMismatch { block_len: ell, n: x.len() });
    }
    let mut map = BTreeMap::new();
    for b in 0..x.len() / ell {
        *map.entry(&x.symbols()[b * ell..(b + 1) * ell]).or_insert(0) += 1;
    }
    Ok(map)
}

/// `H(X^ell) / ell`: empirical entropy of the non-overlapping `ell`-block
/// law, per symbol.
pub fn block_entropy(x: &SymbolSequence, ell: usize) -> Result<f64> {
    let hist = block_histogram(x, ell)?;
    let m = (x.len() / ell) as u64;
    Ok(h_from_counts(hist.values().copied(), m) / ell as f64)
}

/// `H(X^ell | Y^ell) / ell` with the blocks of `y` aligned to the blocks
/// of `x`, per symbol.
pub fn conditional_block_entropy(
    x: &SymbolSequence,
    y: &SymbolSequence,
    ell: usize,
) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { expected: x.len(), got: y.len() });
    }
    if ell == 0 || !x.len().is_multiple_of(ell) {
        return Err(Error::BlockLengthMismatch { block_len: ell, n: x.len() });
    }
    let m = (x.len() / ell) as u64;
    let mut joint: BTreeMap<(&[u16], &[u16]), u64> = BTreeMap::new();
    for b in 0..x.len() / ell {
        let xs = &x.symbols()[b * ell..(b + 1) * ell];
        let ys = &y.symbols()[b * ell..(b + 1) * ell];
        *joint.entry((ys, xs)).or_insert(0) += 1;
    }
    let hj = h_from_counts(joint.values().copied(), m);
    let hy = block_entropy(y, ell)? * ell as f64;
    Ok((hj - hy) / ell as f64)
}
