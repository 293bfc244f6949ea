//! Finite-state discriminators: data model, execution, count collection,
//! and the built-in run-length machinery.
//!
//! A machine has `s` states, a next-state table (optionally periodically
//! time-varying and optionally driven by a side-information symbol), and
//! an optional binary output table. With an output table it acts as an
//! accept/reject discriminator: a sequence is accepted iff every output
//! bit is 0. Without one it acts as a counter discriminator: it gathers a
//! [`CountTable`] and acceptance is a predicate on the counts.

use num_bigint::BigUint;
use num_traits::One;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::counts::{block_id, CountKind, CountTable};
use crate::error::{Error, Result};
use crate::seq::{Alphabet, SymbolSequence};

/// Default cap on machine sizes built programmatically (shift registers).
pub const DEFAULT_STATE_BUDGET: u128 = 1 << 20;

/// A deterministic finite-state machine specification.
///
/// The next-state table is total over
/// `(phase, state, symbol[, si symbol])`; the output table, when present,
/// is total over `(state, symbol[, si symbol])` and does not depend on
/// the phase. `period == 1` with no SI recovers the plain time-invariant
/// machine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FsmSpec {
    state_count: usize,
    initial_state: usize,
    period: usize,
    alpha: usize,
    si_alpha: usize,
    next: Vec<u32>,
    output: Option<Vec<u8>>,
}

impl FsmSpec {
    pub fn new(
        state_count: usize,
        initial_state: usize,
        period: usize,
        alpha: usize,
        si_alpha: usize,
        next: Vec<u32>,
        output: Option<Vec<u8>>,
    ) -> Result<Self> {
        if state_count == 0 || period == 0 || alpha == 0 {
            return Err(Error::InvalidInput(
                "state count, period and alphabet size must be positive".into(),
            ));
        }
        if initial_state >= state_count {
            return Err(Error::InvalidFsmSpec {
                path: "initial".into(),
                reason: format!("state {initial_state} out of range 0..{state_count}"),
            });
        }
        let si_dim = si_alpha.max(1);
        let want = period * state_count * alpha * si_dim;
        if next.len() != want {
            return Err(Error::InvalidFsmSpec {
                path: "next".into(),
                reason: format!("expected {want} entries, got {}", next.len()),
            });
        }
        if let Some(&bad) = next.iter().find(|&&z| z as usize >= state_count) {
            return Err(Error::InvalidFsmSpec {
                path: "next".into(),
                reason: format!("state {bad} out of range 0..{state_count}"),
            });
        }
        if let Some(out) = &output {
            let want = state_count * alpha * si_dim;
            if out.len() != want {
                return Err(Error::InvalidFsmSpec {
                    path: "output".into(),
                    reason: format!("expected {want} entries, got {}", out.len()),
                });
            }
            if out.iter().any(|&b| b > 1) {
                return Err(Error::InvalidFsmSpec {
                    path: "output".into(),
                    reason: "output bits must be 0 or 1".into(),
                });
            }
        }
        Ok(Self { state_count, initial_state, period, alpha, si_alpha, next, output })
    }

    /// Time-invariant SI-free machine from closures.
    pub fn from_fns(
        state_count: usize,
        initial_state: usize,
        alpha: usize,
        g: impl Fn(usize, usize) -> usize,
        f: Option<&dyn Fn(usize, usize) -> bool>,
    ) -> Result<Self> {
        let mut next = Vec::with_capacity(state_count * alpha);
        for z in 0..state_count {
            for a in 0..alpha {
                next.push(g(z, a) as u32);
            }
        }
        let output = f.map(|f| {
            let mut out = Vec::with_capacity(state_count * alpha);
            for z in 0..state_count {
                for a in 0..alpha {
                    out.push(f(z, a) as u8);
                }
            }
            out
        });
        Self::new(state_count, initial_state, 1, alpha, 0, next, output)
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn with_initial_state(mut self, z0: usize) -> Result<Self> {
        if z0 >= self.state_count {
            return Err(Error::InvalidFsmSpec {
                path: "initial".into(),
                reason: format!("state {z0} out of range 0..{}", self.state_count),
            });
        }
        self.initial_state = z0;
        Ok(self)
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn si_alpha(&self) -> usize {
        self.si_alpha
    }

    pub fn uses_si(&self) -> bool {
        self.si_alpha > 0
    }

    pub fn has_output(&self) -> bool {
        self.output.is_some()
    }

    #[inline]
    pub fn next_state(&self, phase: usize, state: usize, symbol: usize, si: usize) -> usize {
        let si_dim = self.si_alpha.max(1);
        let idx = ((phase * self.state_count + state) * self.alpha + symbol) * si_dim + si;
        self.next[idx] as usize
    }

    #[inline]
    pub fn output_bit(&self, state: usize, symbol: usize, si: usize) -> bool {
        let si_dim = self.si_alpha.max(1);
        let out = self.output.as_ref().expect("machine has an output table");
        out[(state * self.alpha + symbol) * si_dim + si] != 0
    }

    fn check_inputs(&self, x: &SymbolSequence, y: Option<&SymbolSequence>) -> Result<()> {
        if x.alpha() != self.alpha {
            return Err(Error::AlphabetMismatch { expected: self.alpha, got: x.alpha() });
        }
        match (self.si_alpha, y) {
            (0, None) => {}
            (0, Some(_)) => {
                return Err(Error::SideInformation("machine does not take side information".into()))
            }
            (_, None) => {
                return Err(Error::SideInformation("machine requires a side-information sequence".into()))
            }
            (beta, Some(y)) => {
                if y.alpha() != beta {
                    return Err(Error::AlphabetMismatch { expected: beta, got: y.alpha() });
                }
                if y.len() != x.len() {
                    return Err(Error::LengthMismatch { expected: x.len(), got: y.len() });
                }
            }
        }
        Ok(())
    }

    /// State after consuming `x` (and `y`) starting from `state` at `phase`.
    fn walk(&self, mut state: usize, mut phase: usize, x: &[u16], y: Option<&[u16]>) -> usize {
        for (i, &a) in x.iter().enumerate() {
            let si = y.map_or(0, |y| y[i] as usize);
            state = self.next_state(phase, state, a as usize, si);
            phase = (phase + 1) % self.period;
        }
        state
    }
}

/// The recorded response of a discriminator run: the state sequence
/// `z_0..z_n` (one past the last consumed symbol), the output bits, the
/// verdict, and the index of the first rejecting output if any.
///
/// The verdict always equals full evaluation of the recursion; an early
/// stop would only truncate the recorded outputs, never flip the verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateTrace {
    pub states: Vec<usize>,
    pub outputs: Option<Vec<u8>>,
    pub accepted: bool,
    pub first_reject: Option<usize>,
}

/// Run an output-table discriminator over `x` (with aligned side
/// information `y` when the machine takes it). Accepts iff every output
/// bit is zero.
pub fn run_discriminator(
    fsm: &FsmSpec,
    x: &SymbolSequence,
    y: Option<&SymbolSequence>,
) -> Result<StateTrace> {
    if !fsm.has_output() {
        return Err(Error::MissingOutputTable);
    }
    fsm.check_inputs(x, y)?;
    let n = x.len();
    let mut states = Vec::with_capacity(n + 1);
    let mut outputs = Vec::with_capacity(n);
    let mut z = fsm.initial_state;
    let mut first_reject = None;
    states.push(z);
    for i in 0..n {
        let a = x.get(i);
        let si = y.map_or(0, |y| y.get(i));
        let u = fsm.output_bit(z, a, si);
        outputs.push(u as u8);
        if u && first_reject.is_none() {
            first_reject = Some(i);
        }
        z = fsm.next_state(i % fsm.period, z, a, si);
        states.push(z);
    }
    Ok(StateTrace { states, outputs: Some(outputs), accepted: first_reject.is_none(), first_reject })
}

/// Collect joint symbol/state counts `n(x, z)` (or `n(x, y, z)`).
///
/// Non-cyclic mode pairs each symbol with the state reached from the
/// machine's initial state. Cyclic mode instead counts over the periodic
/// extension of `x`: the machine is run over repeated copies of `x` until
/// the state at position 0 revisits an earlier pass-start state, and the
/// counts cover exactly one cycle of that orbit. For a machine that
/// resynchronizes within one pass (shift registers always do) this is the
/// plain one-pass collection with `z_0` redefined to the state reached
/// after consuming all of `x`, and the counts sum to `n`; in general they
/// sum to a multiple of `n`.
pub fn collect_counts(
    fsm: &FsmSpec,
    x: &SymbolSequence,
    y: Option<&SymbolSequence>,
    cyclic: bool,
) -> Result<CountTable> {
    if fsm.period != 1 {
        return Err(Error::PeriodicNotAllowed { period: fsm.period });
    }
    fsm.check_inputs(x, y)?;
    let kind = if fsm.uses_si() { CountKind::SiSymbolState } else { CountKind::SymbolState };
    let mut table = CountTable::zeroed(kind, fsm.alpha, fsm.state_count, fsm.si_alpha)?;
    let n = x.len();
    if n == 0 {
        return Ok(table);
    }
    let ys = y.map(|y| y.symbols());
    let count_pass = |table: &mut CountTable, start: usize| -> usize {
        let mut z = start;
        for i in 0..n {
            let a = x.get(i);
            let si = ys.map_or(0, |y| y[i] as usize);
            if fsm.uses_si() {
                table.inc_si_symbol_state(z, si, a);
            } else {
                table.inc_symbol_state(z, a);
            }
            z = fsm.next_state(0, z, a, si);
        }
        z
    };
    if !cyclic {
        count_pass(&mut table, fsm.initial_state);
        return Ok(table);
    }
    // Find the cycle of pass-start states, then count over one full cycle.
    let mut starts = vec![fsm.initial_state];
    loop {
        let end = fsm.walk(*starts.last().unwrap(), 0, x.symbols(), ys);
        if let Some(pos) = starts.iter().position(|&s| s == end) {
            for t in pos..starts.len() {
                count_pass(&mut table, starts[t]);
            }
            return Ok(table);
        }
        starts.push(end);
    }
}

/// Collect block counts `m(z, z', x^l)` over non-overlapping blocks of
/// `block_len` symbols (keyed additionally by the aligned SI block when
/// the machine takes side information). `block_len` must divide `|x|` and
/// be a multiple of the machine period.
pub fn collect_block_counts(
    fsm: &FsmSpec,
    x: &SymbolSequence,
    block_len: usize,
    y: Option<&SymbolSequence>,
) -> Result<CountTable> {
    fsm.check_inputs(x, y)?;
    if block_len == 0 || !x.len().is_multiple_of(block_len) {
        return Err(Error::BlockLengthMismatch { block_len, n: x.len() });
    }
    if !block_len.is_multiple_of(fsm.period) {
        return Err(Error::BlockPeriodMismatch { block_len, period: fsm.period });
    }
    let kind = if fsm.uses_si() {
        CountKind::SiBlock { block_len }
    } else {
        CountKind::Block { block_len }
    };
    let mut table = CountTable::zeroed(kind, fsm.alpha, fsm.state_count, fsm.si_alpha)?;
    let m = x.len() / block_len;
    let mut z = fsm.initial_state;
    for b in 0..m {
        let lo = b * block_len;
        let xs = &x.symbols()[lo..lo + block_len];
        let ys = y.map(|y| &y.symbols()[lo..lo + block_len]);
        // phase is lo % period == 0 since period | block_len
        let z2 = fsm.walk(z, 0, xs, ys);
        let bid = block_id(xs, fsm.alpha);
        if let Some(ys) = ys {
            table.inc_si_block(z, z2, block_id(ys, fsm.si_alpha), bid);
        } else {
            table.inc_block(z, z2, bid);
        }
        z = z2;
    }
    Ok(table)
}

/// End state reached from `z` on a block (used to check the block-count
/// consistency rule: a cell may be nonzero only when its `z'` matches).
pub fn block_end_state(fsm: &FsmSpec, z: usize, xs: &[u16], ys: Option<&[u16]>) -> usize {
    fsm.walk(z, 0, xs, ys)
}

/// The order-`ell` shift-register machine: `alpha^ell` states encoding the
/// last `ell` symbols (most recent in the least significant digit); the
/// next state appends the input and drops the oldest symbol. `ell = 0`
/// yields the single-state machine. No output table.
pub fn build_shift_register_fsm(ell: usize, alpha: usize) -> Result<FsmSpec> {
    build_shift_register_fsm_with_budget(ell, alpha, DEFAULT_STATE_BUDGET)
}

pub fn build_shift_register_fsm_with_budget(
    ell: usize,
    alpha: usize,
    budget: u128,
) -> Result<FsmSpec> {
    if alpha == 0 {
        return Err(Error::AlphabetTooSmall { min: 1, got: 0 });
    }
    let mut states: u128 = 1;
    for _ in 0..ell {
        states = states.saturating_mul(alpha as u128);
        if states > budget {
            return Err(Error::StateBudgetExceeded { requested: states, cap: budget });
        }
    }
    let s = states as usize;
    let modulus = s;
    FsmSpec::from_fns(s, 0, alpha, |z, a| (z * alpha + a) % modulus, None)
}

/// Discriminator for run-length constrained binary sequences: accepts iff
/// every run of zeroes terminated by a one has length in `[d, k]` and no
/// run (terminated or not) exceeds `k`. The state is the current run
/// length, the initial state is `d` (a fresh sequence may begin mid-run),
/// and `(0, 2)` reproduces the three-state machine with
/// `g(z, 0) = (z + 1) mod 3`, `g(z, 1) = 0`, `f(z, x) = 1` iff
/// `z = 2 and x = 0`.
pub fn build_dk_discriminator(d: usize, k: usize) -> Result<FsmSpec> {
    if d > k {
        return Err(Error::InvalidRunLength { d, k });
    }
    let s = k + 1;
    FsmSpec::from_fns(
        s,
        d,
        2,
        |z, a| if a == 0 { (z + 1) % s } else { 0 },
        Some(&|z: usize, a: usize| if a == 0 { z == k } else { z < d }),
    )
}

/// Capacity of the `(d, k)` constraint in bits per symbol: `log2` of the
/// largest eigenvalue of the constraint graph's adjacency matrix, by
/// power iteration (on the matrix shifted by the identity, which makes the
/// iteration converge even for periodic graphs) with tolerance `1e-9` and
/// an iteration cap of `10^6`.
pub fn dk_capacity(d: usize, k: usize) -> Result<f64> {
    if d > k {
        return Err(Error::InvalidRunLength { d, k });
    }
    let s = k + 1;
    // adjacency[r][r'] = 1 iff a symbol moves run-length state r to r'
    let mut adj = vec![vec![0.0f64; s]; s];
    for r in 0..s {
        if r >= d {
            adj[r][0] += 1.0; // emit a one
        }
        if r < k {
            adj[r][r + 1] += 1.0; // extend the run of zeroes
        }
    }
    let mut v = vec![1.0f64; s];
    let mut lambda_prev = 0.0f64;
    for _ in 0..1_000_000u32 {
        let mut w = vec![0.0f64; s];
        for r in 0..s {
            for r2 in 0..s {
                w[r2] += v[r] * adj[r][r2];
            }
            w[r] += v[r]; // identity shift
        }
        let norm: f64 = w.iter().sum();
        if norm == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let vsum: f64 = v.iter().sum();
        let lambda = norm / vsum;
        for e in &mut w {
            *e /= norm;
        }
        v = w;
        if (lambda - lambda_prev).abs() < 1e-9 {
            return Ok((lambda - 1.0).log2());
        }
        lambda_prev = lambda;
    }
    Ok((lambda_prev - 1.0).log2())
}

/// Number of length-`n` binary strings accepted by the `(d, k)`
/// discriminator, computed by the transfer matrix of the constraint graph
/// (no enumeration).
pub fn dk_accepted_count(d: usize, k: usize, n: usize) -> Result<BigUint> {
    if d > k {
        return Err(Error::InvalidRunLength { d, k });
    }
    let s = k + 1;
    let mut v = vec![BigUint::default(); s];
    v[d] = BigUint::one();
    for _ in 0..n {
        let mut w = vec![BigUint::default(); s];
        for r in 0..s {
            if v[r] == BigUint::default() {
                continue;
            }
            if r >= d {
                w[0] += &v[r];
            }
            if r < k {
                w[r + 1] += &v[r];
            }
        }
        v = w;
    }
    Ok(v.into_iter().sum())
}

/// Time-invariant equivalent of a periodic machine: `s * l` states indexed
/// by `(phase, state)`.
pub fn unroll_periodic(fsm: &FsmSpec) -> FsmSpec {
    let s = fsm.state_count;
    let l = fsm.period;
    let si_dim = fsm.si_alpha.max(1);
    let mut next = Vec::with_capacity(l * s * fsm.alpha * si_dim);
    for phase in 0..l {
        for z in 0..s {
            for a in 0..fsm.alpha {
                for si in 0..si_dim {
                    let z2 = fsm.next_state(phase, z, a, si);
                    next.push((((phase + 1) % l) * s + z2) as u32);
                }
            }
        }
    }
    let output = fsm.output.as_ref().map(|out| {
        let mut big = Vec::with_capacity(l * s * fsm.alpha * si_dim);
        for _phase in 0..l {
            big.extend_from_slice(out);
        }
        big
    });
    FsmSpec::new(s * l, fsm.initial_state, 1, fsm.alpha, fsm.si_alpha, next, output)
        .expect("unrolled machine is valid by construction")
}

/// Deterministic pseudo-random machine, for sweeps over machine classes.
pub fn random_machine(
    rng: &mut impl Rng,
    state_count: usize,
    alpha: usize,
    si_alpha: usize,
    period: usize,
    with_output: bool,
    reject_prob: f64,
) -> FsmSpec {
    let si_dim = si_alpha.max(1);
    let next: Vec<u32> = (0..period * state_count * alpha * si_dim)
        .map(|_| rng.gen_range(0..state_count) as u32)
        .collect();
    let output = with_output.then(|| {
        (0..state_count * alpha * si_dim)
            .map(|_| (rng.gen::<f64>() < reject_prob) as u8)
            .collect()
    });
    FsmSpec::new(state_count, 0, period, alpha, si_alpha, next, output)
        .expect("random machine is valid by construction")
}

// ---------------------------------------------------------------------------
// Machine spec files (JSON)
// ---------------------------------------------------------------------------

/// On-disk machine description. `next` is a nested array with the full
/// shape `[phase][state][symbol][si]`; the phase level is omitted when
/// `period == 1` and the si level when there is no SI alphabet. `output`,
/// when present, has shape `[state][symbol][si]` with the same si
/// collapsing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FsmFile {
    pub alphabet: Vec<String>,
    pub states: usize,
    pub initial: usize,
    #[serde(default = "default_period", skip_serializing_if = "is_one")]
    pub period: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub si_alphabet: Option<Vec<String>>,
    pub next: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<Value>,
}

fn default_period() -> usize {
    1
}

#[allow(clippy::trivially_copy_pass_by_ref)]
fn is_one(v: &usize) -> bool {
    *v == 1
}

fn flatten_table(
    value: &Value,
    dims: &[(usize, &str)],
    max: u64,
    field: &str,
    out: &mut Vec<u64>,
) -> Result<()> {
    fn rec(
        value: &Value,
        dims: &[(usize, &str)],
        max: u64,
        path: &mut String,
        out: &mut Vec<u64>,
    ) -> Result<()> {
        if dims.is_empty() {
            let entry = value.as_u64().ok_or_else(|| Error::InvalidFsmSpec {
                path: path.clone(),
                reason: format!("expected a non-negative integer, got {value}"),
            })?;
            if entry > max {
                return Err(Error::InvalidFsmSpec {
                    path: path.clone(),
                    reason: format!("entry {entry} out of range 0..={max}"),
                });
            }
            out.push(entry);
            return Ok(());
        }
        let (dim, _name) = dims[0];
        let arr = value.as_array().ok_or_else(|| Error::InvalidFsmSpec {
            path: path.clone(),
            reason: format!("expected an array of length {dim}"),
        })?;
        if arr.len() != dim {
            return Err(Error::InvalidFsmSpec {
                path: path.clone(),
                reason: format!("expected length {dim}, got {}", arr.len()),
            });
        }
        for (i, v) in arr.iter().enumerate() {
            let mark = path.len();
            path.push_str(&format!("[{i}]"));
            rec(v, &dims[1..], max, path, out)?;
            path.truncate(mark);
        }
        Ok(())
    }
    let mut path = field.to_string();
    rec(value, dims, max, &mut path, out)
}

fn nest_table(flat: &[u64], dims: &[usize]) -> Value {
    if dims.is_empty() {
        return Value::from(flat[0]);
    }
    let stride = flat.len() / dims[0];
    Value::Array(
        (0..dims[0])
            .map(|i| nest_table(&flat[i * stride..(i + 1) * stride], &dims[1..]))
            .collect(),
    )
}

impl FsmFile {
    /// Validate and build the machine plus its declared alphabets.
    pub fn parse(&self) -> Result<(FsmSpec, Alphabet, Option<Alphabet>)> {
        let alphabet = Alphabet::new(self.alphabet.clone())?;
        let si_alphabet = match &self.si_alphabet {
            Some(glyphs) => Some(Alphabet::new(glyphs.clone())?),
            None => None,
        };
        let alpha = alphabet.size();
        let si_alpha = si_alphabet.as_ref().map_or(0, |a| a.size());
        if self.states == 0 {
            return Err(Error::InvalidFsmSpec { path: "states".into(), reason: "must be >= 1".into() });
        }
        if self.period == 0 {
            return Err(Error::InvalidFsmSpec { path: "period".into(), reason: "must be >= 1".into() });
        }
        if self.initial >= self.states {
            return Err(Error::InvalidFsmSpec {
                path: "initial".into(),
                reason: format!("state {} out of range 0..{}", self.initial, self.states),
            });
        }
        let mut dims: Vec<(usize, &str)> = Vec::new();
        if self.period > 1 {
            dims.push((self.period, "phase"));
        }
        dims.push((self.states, "state"));
        dims.push((alpha, "symbol"));
        if si_alpha > 0 {
            dims.push((si_alpha, "si"));
        }
        let mut next_flat = Vec::new();
        flatten_table(&self.next, &dims, self.states as u64 - 1, "next", &mut next_flat)?;
        let next: Vec<u32> = next_flat.iter().map(|&v| v as u32).collect();
        let output = match &self.output {
            None => None,
            Some(value) => {
                let mut out_dims: Vec<(usize, &str)> = vec![(self.states, "state"), (alpha, "symbol")];
                if si_alpha > 0 {
                    out_dims.push((si_alpha, "si"));
                }
                let mut flat = Vec::new();
                flatten_table(value, &out_dims, 1, "output", &mut flat)?;
                Some(flat.iter().map(|&v| v as u8).collect())
            }
        };
        let spec = FsmSpec::new(self.states, self.initial, self.period, alpha, si_alpha, next, output)?;
        Ok((spec, alphabet, si_alphabet))
    }

    /// Render a machine back into the on-disk shape.
    pub fn from_spec(fsm: &FsmSpec, alphabet: &Alphabet, si_alphabet: Option<&Alphabet>) -> Self {
        let si_dim = fsm.si_alpha.max(1);
        let mut dims = Vec::new();
        if fsm.period > 1 {
            dims.push(fsm.period);
        }
        dims.push(fsm.state_count);
        dims.push(fsm.alpha);
        if fsm.si_alpha > 0 {
            dims.push(fsm.si_alpha);
        }
        let next_flat: Vec<u64> = fsm.next.iter().map(|&v| v as u64).collect();
        let next = nest_table(&next_flat, &dims);
        let output = fsm.output.as_ref().map(|out| {
            let mut out_dims = vec![fsm.state_count, fsm.alpha];
            if fsm.si_alpha > 0 {
                out_dims.push(fsm.si_alpha);
            }
            let flat: Vec<u64> = out.iter().map(|&v| v as u64).collect();
            debug_assert_eq!(flat.len(), fsm.state_count * fsm.alpha * si_dim);
            nest_table(&flat, &out_dims)
        });
        FsmFile {
            alphabet: alphabet.glyphs().to_vec(),
            states: fsm.state_count,
            initial: fsm.initial_state,
            period: fsm.period,
            si_alphabet: si_alphabet.map(|a| a.glyphs().to_vec()),
            next,
            output,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seq(s: &str) -> SymbolSequence {
        SymbolSequence::from_str_binary(s).unwrap()
    }

    fn example1_machine() -> FsmSpec {
        FsmSpec::from_fns(
            3,
            0,
            2,
            |z, a| if a == 0 { (z + 1) % 3 } else { 0 },
            Some(&|z: usize, a: usize| z == 2 && a == 0),
        )
        .unwrap()
    }

    #[test]
    fn dk_02_reproduces_the_three_state_machine() {
        assert_eq!(build_dk_discriminator(0, 2).unwrap(), example1_machine());
    }

    #[test]
    fn dk_runs_match_expectations() {
        let m = build_dk_discriminator(0, 2).unwrap();
        assert!(!run_discriminator(&m, &seq("0001"), None).unwrap().accepted);
        assert!(run_discriminator(&m, &seq("0101"), None).unwrap().accepted);
        assert!(!run_discriminator(&m, &seq("1000"), None).unwrap().accepted);
        assert!(run_discriminator(&m, &seq("0010"), None).unwrap().accepted);
        let t = run_discriminator(&m, &seq("0001"), None).unwrap();
        assert_eq!(t.first_reject, Some(2));
        assert_eq!(t.states.len(), 5);
    }

    #[test]
    fn dk_13_rejects_adjacent_ones() {
        let m = build_dk_discriminator(1, 3).unwrap();
        assert!(!run_discriminator(&m, &seq("11"), None).unwrap().accepted);
        // hand enumeration of accepted length-2 strings: 00, 01, 10
        let accepted: Vec<String> = ["00", "01", "10", "11"]
            .iter()
            .filter(|s| run_discriminator(&m, &seq(s), None).unwrap().accepted)
            .map(|s| s.to_string())
            .collect();
        assert_eq!(accepted, vec!["00", "01", "10"]);
    }

    #[test]
    fn dk_02_accepts_13_of_16() {
        let m = build_dk_discriminator(0, 2).unwrap();
        let mut count = 0;
        for v in 0u32..16 {
            let x = SymbolSequence::new(2, (0..4).map(|i| ((v >> (3 - i)) & 1) as u16).collect())
                .unwrap();
            if run_discriminator(&m, &x, None).unwrap().accepted {
                count += 1;
            }
        }
        assert_eq!(count, 13);
        assert_eq!(dk_accepted_count(0, 2, 4).unwrap(), BigUint::from(13u32));
    }

    #[test]
    fn dk_transfer_matrix_counts() {
        let want = [2u32, 4, 7, 13];
        for (i, &w) in want.iter().enumerate() {
            assert_eq!(dk_accepted_count(0, 2, i + 1).unwrap(), BigUint::from(w));
        }
    }

    #[test]
    fn dk_capacities() {
        assert!((dk_capacity(0, 1).unwrap() - 0.694242).abs() < 1e-6);
        assert!((dk_capacity(0, 2).unwrap() - 0.879146).abs() < 1e-6);
        // (0,0) forbids every zero: only the all-ones string survives.
        assert!((dk_capacity(0, 0).unwrap() - 0.0).abs() < 1e-9);
        assert!(dk_capacity(2, 1).is_err());
    }

    #[test]
    fn shift_register_shapes() {
        let m = build_shift_register_fsm(1, 2).unwrap();
        assert_eq!(m.state_count(), 2);
        for z in 0..2 {
            for a in 0..2 {
                assert_eq!(m.next_state(0, z, a, 0), a);
            }
        }
        let m0 = build_shift_register_fsm(0, 2).unwrap();
        assert_eq!(m0.state_count(), 1);
        assert_eq!(m0.next_state(0, 0, 1, 0), 0);
        let m2 = build_shift_register_fsm(2, 2).unwrap();
        // from state "01" on input 1 -> state "11"
        assert_eq!(m2.next_state(0, 0b01, 1, 0), 0b11);
        assert!(matches!
            (build_shift_register_fsm(40, 2), Err(Error::StateBudgetExceeded { .. })));
    }

    #[test]
    fn counts_single_state_histogram() {
        let m = build_shift_register_fsm(0, 2).unwrap();
        let t = collect_counts(&m, &seq("0101"), None, false).unwrap();
        assert_eq!(t.get_symbol_state(0, 0), 2);
        assert_eq!(t.get_symbol_state(0, 1), 2);
        assert_eq!(t.total(), 4);
    }

    #[test]
    fn counts_cyclic_alternation() {
        let m = build_shift_register_fsm(1, 2).unwrap();
        let t = collect_counts(&m, &seq("0101"), None, true).unwrap();
        assert_eq!(t.get_symbol_state(0, 1), 2);
        assert_eq!(t.get_symbol_state(1, 0), 2);
        assert_eq!(t.get_symbol_state(0, 0), 0);
        assert_eq!(t.get_symbol_state(1, 1), 0);
        assert_eq!(t.total(), 4);
    }

    #[test]
    fn counts_empty_sequence() {
        let m = build_shift_register_fsm(1, 2).unwrap();
        let t = collect_counts(&m, &seq(""), None, true).unwrap();
        assert_eq!(t.total(), 0);
    }

    #[test]
    fn counts_reject_periodic_machines() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_machine(&mut rng, 2, 2, 0, 2, false, 0.0);
        assert!(matches!(
            collect_counts(&m, &seq("0101"), None, false),
            Err(Error::PeriodicNotAllowed { .. })
        ));
    }

    #[test]
    fn block_counts_examples() {
        let m = build_shift_register_fsm(0, 2).unwrap();
        let t = collect_block_counts(&m, &seq("0101"), 2, None).unwrap();
        assert_eq!(t.get_block(0, 0, block_id(&[0, 1], 2)), 2);
        assert_eq!(t.total(), 2);

        let t = collect_block_counts(&m, &seq("0110"), 2, None).unwrap();
        assert_eq!(t.get_block(0, 0, block_id(&[0, 1], 2)), 1);
        assert_eq!(t.get_block(0, 0, block_id(&[1, 0], 2)), 1);

        // the (0,2) machine over two 2-blocks of 0101: a single nonzero cell,
        // and every nonzero cell's end state matches the walk
        let dk = build_dk_discriminator(0, 2).unwrap();
        let t = collect_block_counts(&dk, &seq("0101"), 2, None).unwrap();
        let mut nonzero = 0;
        for z in 0..3 {
            for z2 in 0..3 {
                for b in 0..4 {
                    let c = t.get_block(z, z2, b);
                    if c > 0 {
                        nonzero += 1;
                        let bs = crate::counts::block_symbols(b, 2, 2);
                        assert_eq!(block_end_state(&dk, z, &bs, None), z2);
                    }
                }
            }
        }
        assert_eq!(nonzero, 1);
        assert_eq!(t.get_block(0, 0, block_id(&[0, 1], 2)), 2);

        assert!(collect_block_counts(&m, &seq("010"), 2, None).is_err());
    }

    #[test]
    fn count_conservation_and_shard_merge() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m = random_machine(&mut rng, 3, 2, 0, 1, false, 0.0);
            let bits: Vec<u16> = (0..12).map(|_| rng.gen_range(0..2u16)).collect();
            let x = SymbolSequence::new(2, bits.clone()).unwrap();
            let t = collect_counts(&m, &x, None, false).unwrap();
            assert_eq!(t.total(), 12);
            let n0: u64 = (0..3).map(|z| t.state_total(z)).sum();
            let n1: u64 = (0..2).map(|a| t.symbol_total(a)).sum();
            assert_eq!(n0, 12);
            assert_eq!(n1, 12);

            // split at an arbitrary point; resume the second shard from the
            // state reached by the first
            let cut = rng.gen_range(0..=12usize);
            let x1 = SymbolSequence::new(2, bits[..cut].to_vec()).unwrap();
            let x2 = SymbolSequence::new(2, bits[cut..].to_vec()).unwrap();
            let t1 = collect_counts(&m, &x1, None, false).unwrap();
            let z_mid = run_after(&m, &x1);
            let m2 = m.clone().with_initial_state(z_mid).unwrap();
            let t2 = collect_counts(&m2, &x2, None, false).unwrap();
            assert_eq!(t1.merge(&t2).unwrap(), t);
        }
    }

    fn run_after(m: &FsmSpec, x: &SymbolSequence) -> usize {
        m.walk(m.initial_state(), 0, x.symbols(), None)
    }

    #[test]
    fn output_machines_embed_into_counter_machines() {
        // reject iff some forbidden (symbol, state) pair has count >= 1
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..40 {
            let s = rng.gen_range(2..=4);
            let m = random_machine(&mut rng, s, 2, 0, 1, true, 0.25);
            for n in 0..=8usize {
                for v in 0..(1u32 << n) {
                    let x = SymbolSequence::new(
                        2,
                        (0..n).map(|i| ((v >> (n - 1 - i)) & 1) as u16).collect(),
                    )
                    .unwrap();
                    let trace = run_discriminator(&m, &x, None).unwrap();
                    let counts = collect_counts(&m, &x, None, false).unwrap();
                    let mut forbidden_hit = false;
                    for z in 0..s {
                        for a in 0..2 {
                            if m.output_bit(z, a, 0) && counts.get_symbol_state(z, a) >= 1 {
                                forbidden_hit = true;
                            }
                        }
                    }
                    assert_eq!(trace.accepted, !forbidden_hit);
                }
            }
        }
    }

    #[test]
    fn periodic_unrolling_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let l = rng.gen_range(2..=3);
            let m = random_machine(&mut rng, 2, 2, 0, l, true, 0.2);
            let u = unroll_periodic(&m);
            assert_eq!(u.state_count(), 2 * l);
            for n in 0..=12usize {
                let bits: Vec<u16> = (0..n).map(|_| rng.gen_range(0..2u16)).collect();
                let x = SymbolSequence::new(2, bits).unwrap();
                let a = run_discriminator(&m, &x, None).unwrap();
                let b = run_discriminator(&u, &x, None).unwrap();
                assert_eq!(a.accepted, b.accepted);
                assert_eq!(a.outputs, b.outputs);
                // unrolled states project back onto the original states
                for (i, (&zu, &zm)) in b.states.iter().zip(&a.states).enumerate() {
                    assert_eq!(zu % 2, zm % 2, "position {i}");
                    assert_eq!(zu / 2, i % l);
                    let _ = zm;
                }
            }
        }
    }

    #[test]
    fn determinism() {
        let m = build_dk_discriminator(0, 2).unwrap();
        let x = seq("0110100101");
        let a = run_discriminator(&m, &x, None).unwrap();
        let b = run_discriminator(&m, &x, None).unwrap();
        assert_eq!(a, b);
        let c1 = collect_counts(&m, &x, None, true).unwrap();
        let c2 = collect_counts(&m, &x, None, true).unwrap();
        assert_eq!(c1, c2);
    }

    #[test]
    fn fsm_file_roundtrip_and_validation() {
        let m = build_dk_discriminator(0, 2).unwrap();
        let file = FsmFile::from_spec(&m, &Alphabet::binary(), None);
        let text = serde_json::to_string_pretty(&file).unwrap();
        let parsed: FsmFile = serde_json::from_str(&text).unwrap();
        let (m2, alpha, si) = parsed.parse().unwrap();
        assert_eq!(m2, m);
        assert_eq!(alpha.size(), 2);
        assert!(si.is_none());

        // out-of-range entry reports its index path
        let bad = serde_json::json!({
            "alphabet": ["0", "1"],
            "states": 2,
            "initial": 0,
            "next": [[0, 1], [1, 5]],
        });
        let bad: FsmFile = serde_json::from_value(bad).unwrap();
        match bad.parse().unwrap_err() {
            Error::InvalidFsmSpec { path, .. } => assert_eq!(path, "next[1][1]"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn periodic_unrolled_states_dimension_check() {
        // a periodic machine parsed from its file form keeps the phase level
        let m = {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            random_machine(&mut rng, 2, 2, 0, 2, false, 0.0)
        };
        let file = FsmFile::from_spec(&m, &Alphabet::binary(), None);
        let (m2, _, _) = file.parse().unwrap();
        assert_eq!(m2, m);
    }
}
