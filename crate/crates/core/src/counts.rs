//! Occurrence-count tables.
//!
//! A `CountTable` is what a counter discriminator gathers: joint
//! symbol/state counts, block counts keyed by the states at block
//! boundaries, or the side-information variants of either. Equality of
//! count tables defines type classes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on the number of table cells (guards `alpha^block_len` blowup).
pub const MAX_TABLE_CELLS: u128 = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CountKind {
    /// `n(x, z)`: one cell per (state, symbol).
    SymbolState,
    /// `n(x, y, z)`: one cell per (state, SI symbol, symbol).
    SiSymbolState,
    /// `m(z, z', x^l)`: one cell per (start state, end state, block).
    Block { block_len: usize },
    /// `m(z, z', y^l, x^l)`: block counts keyed additionally by the aligned
    /// SI block.
    SiBlock { block_len: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CountTable {
    kind_tag: CountKindTag,
    block_len: usize,
    alpha: usize,
    states: usize,
    si_alpha: usize,
    counts: Vec<u64>,
}

// CountKind with the block length factored out, so the table can expose a
// plain copyable kind without generic parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
enum CountKindTag {
    SymbolState,
    SiSymbolState,
    Block,
    SiBlock,
}

/// `base^exp` with the table-cell budget enforced.
pub fn checked_pow(base: usize, exp: usize) -> Result<usize> {
    let mut v: u128 = 1;
    for _ in 0..exp {
        v = v.saturating_mul(base as u128);
        if v > MAX_TABLE_CELLS {
            return Err(Error::CountBudgetExceeded { requested: v, cap: MAX_TABLE_CELLS });
        }
    }
    Ok(v as usize)
}

impl CountTable {
    pub fn zeroed(kind: CountKind, alpha: usize, states: usize, si_alpha: usize) -> Result<Self> {
        let (tag, block_len) = match kind {
            CountKind::SymbolState => (CountKindTag::SymbolState, 1),
            CountKind::SiSymbolState => (CountKindTag::SiSymbolState, 1),
            CountKind::Block { block_len } => (CountKindTag::Block, block_len),
            CountKind::SiBlock { block_len } => (CountKindTag::SiBlock, block_len),
        };
        let mut t = Self { kind_tag: tag, block_len, alpha, states, si_alpha, counts: Vec::new() };
        let cells = t.cell_count()?;
        t.counts = vec![0; cells];
        Ok(t)
    }

    fn cell_count(&self) -> Result<usize> {
        let cells: u128 = match self.kind_tag {
            CountKindTag::SymbolState => (self.states * self.alpha) as u128,
            CountKindTag::SiSymbolState => (self.states * self.si_alpha * self.alpha) as u128,
            CountKindTag::Block => {
                self.states as u128 * self.states as u128 * checked_pow(self.alpha, self.block_len)? as u128
            }
            CountKindTag::SiBlock => {
                self.states as u128
                    * self.states as u128
                    * checked_pow(self.si_alpha, self.block_len)? as u128
                    * checked_pow(self.alpha, self.block_len)? as u128
            }
        };
        if cells > MAX_TABLE_CELLS {
            return Err(Error::CountBudgetExceeded { requested: cells, cap: MAX_TABLE_CELLS });
        }
        Ok(cells as usize)
    }

    pub fn kind(&self) -> CountKind {
        match self.kind_tag {
            CountKindTag::SymbolState => CountKind::SymbolState,
            CountKindTag::SiSymbolState => CountKind::SiSymbolState,
            CountKindTag::Block => CountKind::Block { block_len: self.block_len },
            CountKindTag::SiBlock => CountKind::SiBlock { block_len: self.block_len },
        }
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn si_alpha(&self) -> usize {
        self.si_alpha
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn cells(&self) -> &[u64] {
        &self.counts
    }

    /// Sum of all cells: `n` for symbol kinds, `m = n / block_len` for block
    /// kinds (and a multiple of `n` for cycle-averaged cyclic collection).
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn ss_index(&self, state: usize, symbol: usize) -> usize {
        debug_assert!(matches!(self.kind_tag, CountKindTag::SymbolState));
        state * self.alpha + symbol
    }

    fn siss_index(&self, state: usize, si: usize, symbol: usize) -> usize {
        debug_assert!(matches!(self.kind_tag, CountKindTag::SiSymbolState));
        (state * self.si_alpha + si) * self.alpha + symbol
    }

    pub fn get_symbol_state(&self, state: usize, symbol: usize) -> u64 {
        self.counts[self.ss_index(state, symbol)]
    }

    pub fn inc_symbol_state(&mut self, state: usize, symbol: usize) {
        let i = self.ss_index(state, symbol);
        self.counts[i] += 1;
    }

    pub fn get_si_symbol_state(&self, state: usize, si: usize, symbol: usize) -> u64 {
        self.counts[self.siss_index(state, si, symbol)]
    }

    pub fn inc_si_symbol_state(&mut self, state: usize, si: usize, symbol: usize) {
        let i = self.siss_index(state, si, symbol);
        self.counts[i] += 1;
    }

    fn block_index(&self, z: usize, z2: usize, block: usize) -> usize {
        debug_assert!(matches!(self.kind_tag, CountKindTag::Block));
        let nb = self.alpha.pow(self.block_len as u32);
        (z * self.states + z2) * nb + block
    }

    fn si_block_index(&self, z: usize, z2: usize, yblock: usize, block: usize) -> usize {
        debug_assert!(matches!(self.kind_tag, CountKindTag::SiBlock));
        let nbx = self.alpha.pow(self.block_len as u32);
        let nby = self.si_alpha.pow(self.block_len as u32);
        ((z * self.states + z2) * nby + yblock) * nbx + block
    }

    pub fn get_block(&self, z: usize, z2: usize, block: usize) -> u64 {
        self.counts[self.block_index(z, z2, block)]
    }

    pub fn inc_block(&mut self, z: usize, z2: usize, block: usize) {
        let i = self.block_index(z, z2, block);
        self.counts[i] += 1;
    }

    pub fn get_si_block(&self, z: usize, z2: usize, yblock: usize, block: usize) -> u64 {
        self.counts[self.si_block_index(z, z2, yblock, block)]
    }

    pub fn inc_si_block(&mut self, z: usize, z2: usize, yblock: usize, block: usize) {
        let i = self.si_block_index(z, z2, yblock, block);
        self.counts[i] += 1;
    }

    /// `n(z)`: total count collected at `state`.
    pub fn state_total(&self, state: usize) -> u64 {
        match self.kind_tag {
            CountKindTag::SymbolState => {
                (0..self.alpha).map(|a| self.get_symbol_state(state, a)).sum()
            }
            CountKindTag::SiSymbolState => (0..self.si_alpha)
                .flat_map(|y| (0..self.alpha).map(move |a| (y, a)))
                .map(|(y, a)| self.get_si_symbol_state(state, y, a))
                .sum(),
            _ => panic!("state_total is defined for symbol-state kinds"),
        }
    }

    /// `n(x)`: marginal count of `symbol` over all states (symbol-state kind).
    pub fn symbol_total(&self, symbol: usize) -> u64 {
        match self.kind_tag {
            CountKindTag::SymbolState => {
                (0..self.states).map(|z| self.get_symbol_state(z, symbol)).sum()
            }
            _ => panic!("symbol_total is defined for the symbol-state kind"),
        }
    }

    /// Rebuild a table from raw row-major cells (header decoding).
    pub fn from_cells(
        kind: CountKind,
        alpha: usize,
        states: usize,
        si_alpha: usize,
        cells: Vec<u64>,
    ) -> Result<Self> {
        let mut t = CountTable::zeroed(kind, alpha, states, si_alpha)?;
        if cells.len() != t.counts.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} cells, got {}",
                t.counts.len(),
                cells.len()
            )));
        }
        t.counts = cells;
        Ok(t)
    }

    /// Entrywise sum; shards collected over disjoint segments of a sequence
    /// merge with this (non-cyclic collection only).
    pub fn merge(&self, other: &CountTable) -> Result<CountTable> {
        if self.kind_tag != other.kind_tag
            || self.alpha != other.alpha
            || self.states != other.states
            || self.si_alpha != other.si_alpha
            || self.block_len != other.block_len
        {
            return Err(Error::InvalidInput("cannot merge count tables of different shapes".into()));
        }
        let counts = self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect();
        Ok(CountTable { counts, ..self.clone() })
    }
}

/// Lexicographic id of a block of symbols (most significant symbol first),
/// so numeric order of ids equals lexicographic order of blocks.
pub fn block_id(symbols: &[u16], alpha: usize) -> usize {
    symbols.iter().fold(0usize, |acc, &s| acc * alpha + s as usize)
}

/// Inverse of [`block_id`].
pub fn block_symbols(id: usize, alpha: usize, block_len: usize) -> Vec<u16> {
    let mut out = vec![0u16; block_len];
    let mut v = id;
    for i in (0..block_len).rev() {
        out[i] = (v % alpha) as u16;
        v /= alpha;
    }
    debug_assert_eq!(v, 0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_id_roundtrip_and_order() {
        let alpha = 3;
        let a = block_id(&[0, 2, 1], alpha);
        assert_eq!(block_symbols(a, alpha, 3), vec![0, 2, 1]);
        // lexicographic order matches numeric order
        assert!(block_id(&[0, 1], 2) < block_id(&[1, 0], 2));
    }

    #[test]
    fn cell_budget_enforced() {
        let err = CountTable::zeroed(CountKind::Block { block_len: 40 }, 2, 1, 0);
        assert!(matches!(err, Err(Error::CountBudgetExceeded { .. })));
    }

    #[test]
    fn merge_requires_same_shape() {
        let a = CountTable::zeroed(CountKind::SymbolState, 2, 1, 0).unwrap();
        let b = CountTable::zeroed(CountKind::SymbolState, 2, 2, 0).unwrap();
        assert!(a.merge(&b).is_err());
        assert!(a.merge(&a).is_ok());
    }
}
