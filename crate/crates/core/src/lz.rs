//! Incremental (LZ78) parsing and coding, joint parsing with side
//! information, and the phrase-classification lower bound.
//!
//! The bitstream format is fixed for bit-exact reproducibility: each
//! complete phrase costs `ceil(log2 j)` pointer bits, where `j` counts
//! the dictionary entries available at emission time (the empty phrase
//! plus every earlier phrase, so the first pointer is free), followed by
//! `ceil(log2 alpha)` bits for the new symbol. After the last complete
//! phrase a single flag bit tells whether a trailing incomplete phrase
//! follows; if it does, its dictionary pointer is appended. `LZ(x)` is
//! the total emitted length in bits. Streams are only self-delimiting
//! for `alpha >= 2`, so encoding a unary alphabet is rejected.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::bits::{width_for, BitString};
use crate::error::{Error, Result};
use crate::fsm::{run_discriminator, FsmSpec, StateTrace};
use crate::seq::SymbolSequence;

/// Dictionary trie of distinct phrases. Node 0 is the empty phrase; every
/// other node is one complete phrase (its id is its insertion order).
#[derive(Debug, Clone, Default)]
pub struct Lz78Trie {
    children: Vec<BTreeMap<u32, usize>>,
    parent: Vec<(usize, u32)>,
}

impl Lz78Trie {
    pub fn new() -> Self {
        Self { children: vec![BTreeMap::new()], parent: vec![(0, 0)] }
    }

    /// Number of phrases, counting the empty phrase.
    pub fn len(&self) -> usize {
        self.children.len()
    }

    pub fn is_empty(&self) -> bool {
        self.children.len() == 1
    }

    pub fn child(&self, node: usize, symbol: u32) -> Option<usize> {
        self.children[node].get(&symbol).copied()
    }

    pub fn insert(&mut self, node: usize, symbol: u32) -> usize {
        let id = self.children.len();
        self.children.push(BTreeMap::new());
        self.parent.push((node, symbol));
        self.children[node].insert(symbol, id);
        id
    }

    /// Symbols along the path from the root to `node`.
    pub fn phrase(&self, node: usize) -> Vec<u32> {
        let mut out = Vec::new();
        let mut cur = node;
        while cur != 0 {
            let (p, s) = self.parent[cur];
            out.push(s);
            cur = p;
        }
        out.reverse();
        out
    }

    pub fn depth(&self, node: usize) -> usize {
        let mut d = 0;
        let mut cur = node;
        while cur != 0 {
            cur = self.parent[cur].0;
            d += 1;
        }
        d
    }
}

/// Result of the incremental parse. `phrases` covers all of `x` in order,
/// including a possibly incomplete trailing phrase; `c` counts only the
/// complete (distinct) phrases.
#[derive(Debug, Clone)]
pub struct ParseResult {
    pub phrases: Vec<(usize, usize)>,
    pub c: usize,
    pub last_incomplete: bool,
    pub dictionary: Lz78Trie,
    x: SymbolSequence,
}

impl ParseResult {
    pub fn sequence(&self) -> &SymbolSequence {
        &self.x
    }
}

/// Greedy incremental parse: each phrase is the shortest prefix of the
/// remaining input that is not yet in the dictionary.
pub fn lz78_parse(x: &SymbolSequence) -> ParseResult {
    let mut trie = Lz78Trie::new();
    let mut phrases = Vec::new();
    let mut cur = 0usize;
    let mut start = 0usize;
    for i in 0..x.len() {
        let a = x.get(i) as u32;
        match trie.child(cur, a) {
            Some(node) => cur = node,
            None => {
                trie.insert(cur, a);
                phrases.push((start, i - start + 1));
                start = i + 1;
                cur = 0;
            }
        }
    }
    let c = phrases.len();
    let last_incomplete = cur != 0;
    if last_incomplete {
        phrases.push((start, x.len() - start));
    }
    ParseResult { phrases, c, last_incomplete, dictionary: trie, x: x.clone() }
}

/// Emitted length in bits of [`lz78_encode`] without building the stream.
pub fn lz78_length(x: &SymbolSequence) -> Result<u64> {
    let pr = lz78_parse(x);
    let symw = symbol_width(x.alpha())? as u64;
    let mut bits = 1u64; // trailing flag
    for t in 0..pr.c as u64 {
        bits += width_for(t + 1) as u64 + symw;
    }
    if pr.last_incomplete {
        bits += width_for(pr.c as u64 + 1) as u64;
    }
    Ok(bits)
}

fn symbol_width(alpha: usize) -> Result<usize> {
    if alpha < 2 {
        return Err(Error::AlphabetTooSmall { min: 2, got: alpha });
    }
    Ok(width_for(alpha as u64))
}

pub fn lz78_encode(x: &SymbolSequence) -> Result<BitString> {
    let symw = symbol_width(x.alpha())?;
    let mut out = BitString::new();
    let mut trie = Lz78Trie::new();
    let mut cur = 0usize;
    for i in 0..x.len() {
        let a = x.get(i) as u32;
        match trie.child(cur, a) {
            Some(node) => cur = node,
            None => {
                let t = trie.len() as u64 - 1; // complete phrases so far
                out.push_uint(cur as u64, width_for(t + 1));
                out.push_uint(a as u64, symw);
                trie.insert(cur, a);
                cur = 0;
            }
        }
    }
    out.push(cur != 0);
    if cur != 0 {
        out.push_uint(cur as u64, width_for(trie.len() as u64));
    }
    Ok(out)
}

pub fn lz78_decode(bits: &BitString, alpha: usize) -> Result<SymbolSequence> {
    let symw = symbol_width(alpha)?;
    let mut phrases: Vec<Vec<u16>> = vec![Vec::new()];
    let mut out: Vec<u16> = Vec::new();
    let mut r = bits.reader();
    loop {
        let t = phrases.len() as u64 - 1;
        let ptrw = width_for(t + 1);
        let rem = r.remaining();
        if rem == 1 {
            if r.read_bit()? {
                return Err(Error::MalformedBitstream(
                    "incomplete-phrase flag without pointer".into(),
                ));
            }
            break;
        } else if rem == 1 + ptrw {
            if !r.read_bit()? {
                return Err(Error::MalformedBitstream("trailing bits after end flag".into()));
            }
            let p = r.read_uint(ptrw)? as usize;
            if p == 0 || p > t as usize {
                return Err(Error::MalformedBitstream(format!(
                    "incomplete-phrase pointer {p} out of range"
                )));
            }
            out.extend_from_slice(&phrases[p]);
            break;
        } else if rem > ptrw + symw {
            let p = r.read_uint(ptrw)? as usize;
            if p > t as usize {
                return Err(Error::MalformedBitstream(format!("pointer {p} out of range")));
            }
            let a = r.read_uint(symw)?;
            if a as usize >= alpha {
                return Err(Error::MalformedBitstream(format!("symbol {a} out of range")));
            }
            let mut w = phrases[p].clone();
            w.push(a as u16);
            out.extend_from_slice(&w);
            phrases.push(w);
        } else {
            return Err(Error::MalformedBitstream("truncated stream".into()));
        }
    }
    SymbolSequence::new(alpha, out)
}

/// Joint parse of the paired sequence `(x, y)` with the per-y-phrase
/// bookkeeping used by the conditional bounds: `c_xy` complete joint
/// phrases, `c_y` distinct y-projections (in order of first appearance),
/// and `c_l[l]` x-phrases aligned with the `l`-th distinct y-projection.
#[derive(Debug, Clone)]
pub struct JointParseResult {
    pub joint_phrases: Vec<(usize, usize)>,
    pub c_xy: usize,
    pub last_incomplete: bool,
    pub y_phrase_index: Vec<usize>,
    pub c_y: usize,
    pub c_l: Vec<u64>,
    x: SymbolSequence,
    y: SymbolSequence,
}

impl JointParseResult {
    pub fn sequences(&self) -> (&SymbolSequence, &SymbolSequence) {
        (&self.x, &self.y)
    }
}

pub fn joint_parse(x: &SymbolSequence, y: &SymbolSequence) -> Result<JointParseResult> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { expected: x.len(), got: y.len() });
    }
    let beta = y.alpha() as u32;
    let mut trie = Lz78Trie::new();
    let mut joint_phrases = Vec::new();
    let mut cur = 0usize;
    let mut start = 0usize;
    for i in 0..x.len() {
        let pair = x.get(i) as u32 * beta + y.get(i) as u32;
        match trie.child(cur, pair) {
            Some(node) => cur = node,
            None => {
                trie.insert(cur, pair);
                joint_phrases.push((start, i - start + 1));
                start = i + 1;
                cur = 0;
            }
        }
    }
    let c_xy = joint_phrases.len();
    let last_incomplete = cur != 0;
    if last_incomplete {
        joint_phrases.push((start, x.len() - start));
    }
    // classify complete joint phrases by their y-projection, in order of
    // first appearance
    let mut proj_ids: BTreeMap<Vec<u16>, usize> = BTreeMap::new();
    let mut n_distinct = 0usize;
    let mut y_phrase_index = Vec::with_capacity(c_xy);
    for &(s, len) in joint_phrases.iter().take(c_xy) {
        let proj = y.symbols()[s..s + len].to_vec();
        let id = *proj_ids.entry(proj).or_insert_with(|| {
            n_distinct += 1;
            n_distinct - 1
        });
        y_phrase_index.push(id);
    }
    let c_y = n_distinct;
    let mut c_l = vec![0u64; c_y];
    for &id in &y_phrase_index {
        c_l[id] += 1;
    }
    Ok(JointParseResult {
        joint_phrases,
        c_xy,
        last_incomplete,
        y_phrase_index,
        c_y,
        c_l,
        x: x.clone(),
        y: y.clone(),
    })
}

/// `u(x|y) = sum_l c_l log2 c_l`: the bit budget of conditional
/// compression when the encrypter lacks the side information.
pub fn conditional_lz_length(jp: &JointParseResult) -> f64 {
    jp.c_l.iter().map(|&c| xlog2x(c)).sum()
}

fn xlog2x(c: u64) -> f64 {
    if c <= 1 {
        0.0
    } else {
        let c = c as f64;
        c * c.log2()
    }
}

/// Phrase counts keyed by `(class, start state, end state)` where the
/// class is the phrase length (plain parse) or the distinct-y-phrase id
/// (joint parse). Only complete phrases are classified.
#[derive(Debug, Clone, Serialize)]
pub struct PhraseClassTable {
    pub by_y_phrase: bool,
    pub counts: BTreeMap<(usize, usize, usize), u64>,
    pub total: u64,
}

/// Tag each complete phrase of the parse with `(length, z, z')` under one
/// left-to-right run of a time-invariant machine over `x`.
pub fn classify_phrases(pr: &ParseResult, fsm: &FsmSpec) -> Result<PhraseClassTable> {
    if fsm.period() != 1 {
        return Err(Error::PeriodicNotAllowed { period: fsm.period() });
    }
    let states = state_path(fsm, &pr.x, None)?;
    let mut counts = BTreeMap::new();
    for &(s, len) in pr.phrases.iter().take(pr.c) {
        *counts.entry((len, states[s], states[s + len])).or_insert(0) += 1;
    }
    Ok(PhraseClassTable { by_y_phrase: false, counts, total: pr.c as u64 })
}

/// SI variant: tag each complete joint phrase with `(y-phrase id, z, z')`
/// under one run of an SI-driven machine over `(x, y)`.
pub fn classify_phrases_si(jp: &JointParseResult, fsm: &FsmSpec) -> Result<PhraseClassTable> {
    if fsm.period() != 1 {
        return Err(Error::PeriodicNotAllowed { period: fsm.period() });
    }
    let states = state_path(fsm, &jp.x, Some(&jp.y))?;
    let mut counts = BTreeMap::new();
    for (t, &(s, len)) in jp.joint_phrases.iter().take(jp.c_xy).enumerate() {
        let l = jp.y_phrase_index[t];
        *counts.entry((l, states[s], states[s + len])).or_insert(0) += 1;
    }
    Ok(PhraseClassTable { by_y_phrase: true, counts, total: jp.c_xy as u64 })
}

fn state_path(fsm: &FsmSpec, x: &SymbolSequence, y: Option<&SymbolSequence>) -> Result<Vec<usize>> {
    // reuse the discriminator walk when there is an output table; otherwise
    // step the next-state table directly
    if fsm.has_output() {
        let StateTrace { states, .. } = run_discriminator(fsm, x, y)?;
        return Ok(states);
    }
    if x.alpha() != fsm.alpha() {
        return Err(Error::AlphabetMismatch { expected: fsm.alpha(), got: x.alpha() });
    }
    let mut states = Vec::with_capacity(x.len() + 1);
    let mut z = fsm.initial_state();
    states.push(z);
    for i in 0..x.len() {
        let si = y.map_or(0, |y| y.get(i));
        z = fsm.next_state(0, z, x.get(i), si);
        states.push(z);
    }
    Ok(states)
}

/// `sum c log2 c` over the class table: a lower bound on the log-size of
/// any acceptance set that is closed under within-class phrase
/// substitution. The dictionary-discriminator case is the `s = 1`
/// parameterization (all states collapse, so classes are lengths alone).
pub fn appendix_bound(table: &PhraseClassTable) -> f64 {
    table.counts.values().map(|&c| xlog2x(c)).sum()
}

// ---------------------------------------------------------------------------
// Conditional LZ78 coding (decoder shares y)
// ---------------------------------------------------------------------------

/// Dictionary nodes whose y-projection matches `y` at position `p`, in
/// insertion order (the empty phrase always qualifies). Both codec sides
/// can compute this from the shared trie and `y` alone.
fn y_compatible_nodes(trie: &Lz78Trie, y: &SymbolSequence, p: usize, beta: usize) -> Vec<usize> {
    let mut out = Vec::new();
    'node: for node in 0..trie.len() {
        let pairs = trie.phrase(node);
        if p + pairs.len() > y.len() {
            continue;
        }
        for (j, &pair) in pairs.iter().enumerate() {
            if (pair as usize) % beta != y.get(p + j) {
                continue 'node;
            }
        }
        out.push(node);
    }
    out
}

/// Encode `x` against side information `y` known to the decoder: the
/// joint parse is walked phrase by phrase, each phrase costing an index
/// into the y-compatible dictionary subset plus one innovation symbol of
/// `x` (the aligned `y` symbol is free). Same trailing-flag convention as
/// [`lz78_encode`].
pub fn conditional_lz_encode(x: &SymbolSequence, y: &SymbolSequence) -> Result<BitString> {
    let symw = symbol_width(x.alpha())?;
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { expected: x.len(), got: y.len() });
    }
    let beta = y.alpha();
    let mut trie = Lz78Trie::new();
    let mut out = BitString::new();
    let mut p = 0usize;
    while p < x.len() {
        let candidates = y_compatible_nodes(&trie, y, p, beta);
        let mut cur = 0usize;
        let mut i = p;
        loop {
            if i == x.len() {
                // trailing incomplete phrase: flag plus pointer among the
                // y-compatible candidates at this position
                out.push(true);
                let pos = candidates
                    .iter()
                    .position(|&n| n == cur)
                    .expect("walked nodes are y-compatible");
                out.push_uint(pos as u64, width_for(candidates.len() as u64));
                return Ok(out);
            }
            let pair = (x.get(i) * beta + y.get(i)) as u32;
            match trie.child(cur, pair) {
                Some(node) => {
                    cur = node;
                    i += 1;
                }
                None => {
                    let pos = candidates
                        .iter()
                        .position(|&n| n == cur)
                        .expect("walked nodes are y-compatible");
                    out.push_uint(pos as u64, width_for(candidates.len() as u64));
                    out.push_uint(x.get(i) as u64, symw);
                    trie.insert(cur, pair);
                    p = i + 1;
                    break;
                }
            }
        }
    }
    out.push(false);
    Ok(out)
}

pub fn conditional_lz_decode(
    bits: &BitString,
    y: &SymbolSequence,
    alpha: usize,
) -> Result<SymbolSequence> {
    let symw = symbol_width(alpha)?;
    let beta = y.alpha();
    let mut trie = Lz78Trie::new();
    let mut out: Vec<u16> = Vec::new();
    let mut r = bits.reader();
    let mut p = 0usize;
    while p < y.len() {
        let candidates = y_compatible_nodes(&trie, y, p, beta);
        let candw = width_for(candidates.len() as u64);
        let rem = r.remaining();
        if rem == 1 + candw {
            if !r.read_bit()? {
                return Err(Error::MalformedBitstream("trailing bits after end flag".into()));
            }
            let pos = r.read_uint(candw)? as usize;
            let node = *candidates.get(pos).ok_or_else(|| {
                Error::MalformedBitstream("incomplete-phrase pointer out of range".into())
            })?;
            let pairs = trie.phrase(node);
            if node == 0 || p + pairs.len() != y.len() {
                return Err(Error::MalformedBitstream(
                    "incomplete phrase does not reach the end".into(),
                ));
            }
            for &pair in &pairs {
                out.push((pair as usize / beta) as u16);
            }
            return SymbolSequence::new(alpha, out);
        } else if rem > candw + symw {
            let pos = r.read_uint(candw)? as usize;
            let node = *candidates
                .get(pos)
                .ok_or_else(|| Error::MalformedBitstream("pointer out of range".into()))?;
            let a = r.read_uint(symw)?;
            if a as usize >= alpha {
                return Err(Error::MalformedBitstream(format!("symbol {a} out of range")));
            }
            let pairs = trie.phrase(node);
            let len = pairs.len();
            if p + len + 1 > y.len() {
                return Err(Error::MalformedBitstream("phrase overruns the sequence".into()));
            }
            for &pair in &pairs {
                out.push((pair as usize / beta) as u16);
            }
            out.push(a as u16);
            let innovation_pair = a as u32 * beta as u32 + y.get(p + len) as u32;
            trie.insert(node, innovation_pair);
            p += len + 1;
        } else {
            return Err(Error::MalformedBitstream("truncated stream".into()));
        }
    }
    if r.remaining() != 1 || r.read_bit()? {
        return Err(Error::MalformedBitstream("expected a clean end flag".into()));
    }
    SymbolSequence::new(alpha, out)
}
