//! Brute-force ground truth: acceptance sets, cryptogram preimages, the
//! perfect-secrecy verdict, and the eavesdropper guessing loop.
//!
//! Everything here enumerates exactly, under explicit budgets, with hard
//! errors instead of silent truncation.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::counts::CountTable;
use crate::crypto::{
    decrypt, encrypt, enumerate_keys, preimage_set, Cryptogram, Key, SchemeSpec,
};
use crate::error::{Error, Result};
use crate::fsm::{
    build_dk_discriminator, collect_block_counts, collect_counts, run_discriminator, FsmFile,
    FsmSpec,
};
use crate::seq::{Alphabet, SymbolSequence};

/// Enumeration budgets: hard caps on the sequence space and the key
/// space.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Budgets {
    pub sequence_space: u128,
    pub key_space: u128,
}

impl Default for Budgets {
    fn default() -> Self {
        Self { sequence_space: 1 << 24, key_space: 1 << 20 }
    }
}

/// Acceptance predicate of a counter discriminator.
#[derive(Debug, Clone)]
pub enum CountPredicate {
    /// Accept iff the gathered table equals this one.
    CountsEqual(CountTable),
    /// Accept iff the marginal empirical entropy of the candidate matches
    /// `h0` within `tol`.
    EntropyEquals { h0: f64, tol: f64 },
}

/// A discriminator the verifier can run.
#[derive(Debug, Clone)]
pub enum Discriminator {
    /// Output-table machine: accept iff every output bit is 0.
    OutputFsm(FsmSpec),
    /// Run-length (d, k) screen over the binary alphabet.
    Dk { d: usize, k: usize },
    /// Counter machine plus a predicate on its counts.
    Counter { fsm: FsmSpec, cyclic: bool, predicate: CountPredicate },
    /// Block-count machine plus an equality target.
    BlockCounter { fsm: FsmSpec, block_len: usize, target: CountTable },
}

impl Discriminator {
    pub fn alpha(&self) -> usize {
        match self {
            Discriminator::OutputFsm(fsm) => fsm.alpha(),
            Discriminator::Dk { .. } => 2,
            Discriminator::Counter { fsm, .. } => fsm.alpha(),
            Discriminator::BlockCounter { fsm, .. } => fsm.alpha(),
        }
    }

    pub fn accepts(&self, x: &SymbolSequence, y: Option<&SymbolSequence>) -> Result<bool> {
        match self {
            Discriminator::OutputFsm(fsm) => Ok(run_discriminator(fsm, x, y)?.accepted),
            Discriminator::Dk { d, k } => {
                let fsm = build_dk_discriminator(*d, *k)?;
                Ok(run_discriminator(&fsm, x, y)?.accepted)
            }
            Discriminator::Counter { fsm, cyclic, predicate } => {
                let counts = collect_counts(fsm, x, y, *cyclic)?;
                Ok(match predicate {
                    CountPredicate::CountsEqual(target) => counts == *target,
                    CountPredicate::EntropyEquals { h0, tol } => {
                        let h = crate::entropy::markov_cond_entropy(x, 0);
                        (h - h0).abs() <= *tol
                    }
                })
            }
            Discriminator::BlockCounter { fsm, block_len, target } => {
                if !x.len().is_multiple_of(*block_len) {
                    return Ok(false);
                }
                let counts = collect_block_counts(fsm, x, *block_len, y)?;
                Ok(counts == *target)
            }
        }
    }
}

fn index_to_sequence(v: u128, n: usize, alpha: usize) -> SymbolSequence {
    let mut symbols = vec![0u16; n];
    let mut rem = v;
    for i in (0..n).rev() {
        symbols[i] = (rem % alpha as u128) as u16;
        rem /= alpha as u128;
    }
    SymbolSequence::new(alpha, symbols).expect("indices are in range")
}

/// All length-`n` sequences the discriminator accepts (given `y` for
/// SI-driven machines), enumerated exactly. `jobs` shards the sequence
/// space; shard unions are order-independent.
pub fn enumerate_acceptance_set(
    disc: &Discriminator,
    n: usize,
    y: Option<&SymbolSequence>,
    budgets: &Budgets,
    jobs: usize,
) -> Result<BTreeSet<SymbolSequence>> {
    let alpha = disc.alpha();
    let mut space: u128 = 1;
    for _ in 0..n {
        space = space.saturating_mul(alpha as u128);
        if space > budgets.sequence_space {
            return Err(Error::EnumerationBudgetExceeded {
                requested: space,
                cap: budgets.sequence_space,
            });
        }
    }
    let jobs = jobs.max(1).min(space.max(1) as usize);
    if jobs <= 1 {
        let mut out = BTreeSet::new();
        for v in 0..space {
            let x = index_to_sequence(v, n, alpha);
            if disc.accepts(&x, y)? {
                out.insert(x);
            }
        }
        return Ok(out);
    }
    let chunk = space / jobs as u128 + 1;
    let results = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for j in 0..jobs {
            let lo = chunk * j as u128;
            let hi = (lo + chunk).min(space);
            handles.push(scope.spawn(move || -> Result<BTreeSet<SymbolSequence>> {
                let mut out = BTreeSet::new();
                for v in lo..hi {
                    let x = index_to_sequence(v, n, alpha);
                    if disc.accepts(&x, y)? {
                        out.insert(x);
                    }
                }
                Ok(out)
            }));
        }
        handles.into_iter().map(|h| h.join().expect("enumeration shard panicked")).collect::<Vec<_>>()
    });
    let mut out = BTreeSet::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// The verdict, with the three equivalent formulations all recorded.
#[derive(Debug, Clone, Serialize)]
pub struct SecrecyVerdict {
    pub accept_set_size: u64,
    pub preimage_size: u64,
    pub intersection_size: u64,
    pub perfectly_secure: bool,
    /// Lexicographically smallest accepted plaintext outside the
    /// preimage, when insecure.
    pub witness: Option<SymbolSequence>,
    pub invalid_decrypts: u64,
    pub cryptogram: Cryptogram,
    /// Whether `T^{-1}(W)` was confirmed identical across every
    /// encryption key (only attempted when the key space is small enough
    /// to square).
    pub preimage_key_independent: Option<bool>,
}

/// Encrypt `x` under `key`, enumerate the acceptance set and the key
/// preimage of the cryptogram, and decide perfect secrecy:
/// the scenario is secure iff the acceptance set is contained in the
/// preimage, iff their intersection has the acceptance set's size.
pub fn check_perfect_secrecy(
    disc: &Discriminator,
    spec: &SchemeSpec,
    x: &SymbolSequence,
    y: Option<&SymbolSequence>,
    key: &Key,
    budgets: &Budgets,
    jobs: usize,
) -> Result<SecrecyVerdict> {
    if !disc.accepts(x, y)? {
        return Err(Error::InconsistentScenario(
            "the plaintext is rejected by the discriminator".into(),
        ));
    }
    let w = encrypt(spec, x, y, key)?;
    let accept = enumerate_acceptance_set(disc, x.len(), y, budgets, jobs)?;
    let pre = preimage_set(spec, &w, y, budgets.key_space)?;

    // confirm key-independence of the preimage when squaring is cheap
    let keys = enumerate_keys(spec, &w, budgets.key_space)?;
    let preimage_key_independent = if keys.len() as u128 * keys.len() as u128 <= budgets.key_space
    {
        let mut same = true;
        'outer: for k2 in &keys {
            let w2 = encrypt(spec, x, y, k2)?;
            let pre2 = preimage_set(spec, &w2, y, budgets.key_space)?;
            if pre2.candidates != pre.candidates {
                same = false;
                break 'outer;
            }
        }
        Some(same)
    } else {
        None
    };

    let intersection = accept.intersection(&pre.candidates).count() as u64;
    let perfectly_secure = intersection == accept.len() as u64;
    let witness = if perfectly_secure {
        None
    } else {
        accept.iter().find(|a| !pre.candidates.contains(*a)).cloned()
    };
    Ok(SecrecyVerdict {
        accept_set_size: accept.len() as u64,
        preimage_size: pre.candidates.len() as u64,
        intersection_size: intersection,
        perfectly_secure,
        witness,
        invalid_decrypts: pre.invalid_decrypts,
        cryptogram: w,
        preimage_key_independent,
    })
}

/// One deduplicated candidate from the guessing loop.
#[derive(Debug, Clone, Serialize)]
pub struct GuessCandidate {
    pub plaintext: SymbolSequence,
    /// How many keys decrypt to this plaintext.
    pub key_hits: u64,
    /// Index (in key order) of the first key that produced it.
    pub first_key_index: usize,
}

/// Replay the eavesdropper loop: try every key in order, decrypt, screen
/// through the discriminator, and report the accepted candidates in key
/// order with duplicates collapsed.
pub fn guessing_attack(
    spec: &SchemeSpec,
    w: &Cryptogram,
    disc: &Discriminator,
    y: Option<&SymbolSequence>,
    budgets: &Budgets,
) -> Result<Vec<GuessCandidate>> {
    let keys = enumerate_keys(spec, w, budgets.key_space)?;
    let mut out: Vec<GuessCandidate> = Vec::new();
    for (i, k) in keys.iter().enumerate() {
        let Ok(cand) = decrypt(spec, w, y, k) else { continue };
        if !disc.accepts(&cand, y)? {
            continue;
        }
        match out.iter_mut().find(|g| g.plaintext == cand) {
            Some(g) => g.key_hits += 1,
            None => out.push(GuessCandidate { plaintext: cand, key_hits: 1, first_key_index: i }),
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Scenario files
// ---------------------------------------------------------------------------

pub const SCENARIO_MAGIC: &str = "keyrate-scenario-v1";

/// On-disk scenario: input, discriminator, scheme, and budgets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub magic: String,
    pub alphabet: Vec<String>,
    pub x: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub si_alphabet: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<String>,
    pub discriminator: DiscriminatorSpec,
    pub scheme: SchemeFile,
    /// Which key of the key space encrypts `x` (index in enumeration
    /// order; keys are drawn from the declared space).
    #[serde(default)]
    pub key_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budgets: Option<Budgets>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum DiscriminatorSpec {
    Dk { d: usize, k: usize },
    OutputFsm { fsm: FsmFile },
    Counter { fsm: FsmFile, #[serde(default)] cyclic: bool, predicate: PredicateSpec },
    BlockCounter { fsm: FsmFile, block_len: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum PredicateSpec {
    /// Accept iff the counts equal those of the scenario's `x`.
    CountsOfX,
    /// Accept iff the marginal empirical entropy equals that of `x`.
    EntropyOfX { tol: f64 },
    EntropyEquals { h0: f64, tol: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum SchemeFile {
    /// `keys`, when present, restricts the key space to the listed bit
    /// strings (written as 0/1 strings).
    RawOtp { #[serde(default, skip_serializing_if = "Option::is_none")] keys: Option<Vec<String>> },
    Lz78Otp,
    TypeOtp { fsm: FsmFile },
    BlockTypeOtp { fsm: FsmFile, block_len: usize },
    MarkovTypeOtp { order: usize },
    CondLzOtp,
}

/// A fully resolved scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub x: SymbolSequence,
    pub y: Option<SymbolSequence>,
    pub alphabet: Alphabet,
    pub discriminator: Discriminator,
    pub scheme: SchemeSpec,
    pub key: Key,
    pub budgets: Budgets,
}

fn parse_bit_key(s: &str) -> Result<BitString> {
    let mut bits = BitString::new();
    for c in s.chars() {
        match c {
            '0' => bits.push(false),
            '1' => bits.push(true),
            other => {
                return Err(Error::InvalidInput(format!("key strings are 0/1 strings, got {other:?}")))
            }
        }
    }
    Ok(bits)
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text)
            .map_err(|e| Error::InconsistentScenario(format!("scenario file: {e}")))?;
        if file.magic != SCENARIO_MAGIC {
            return Err(Error::InconsistentScenario(format!("bad magic tag {:?}", file.magic)));
        }
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Validate and resolve everything against the declared alphabets.
    pub fn resolve(&self) -> Result<Scenario> {
        let alphabet = Alphabet::new(self.alphabet.clone())?;
        let x = SymbolSequence::from_glyph_chars(&self.x, &alphabet)?;
        let y = match (&self.si_alphabet, &self.y) {
            (Some(glyphs), Some(ys)) => {
                let si_alpha = Alphabet::new(glyphs.clone())?;
                Some(SymbolSequence::from_glyph_chars(ys, &si_alpha)?)
            }
            (None, None) => None,
            _ => {
                return Err(Error::InconsistentScenario(
                    "y and si_alphabet must be given together".into(),
                ))
            }
        };
        let budgets = self.budgets.unwrap_or_default();

        let discriminator = match &self.discriminator {
            DiscriminatorSpec::Dk { d, k } => Discriminator::Dk { d: *d, k: *k },
            DiscriminatorSpec::OutputFsm { fsm } => {
                let (fsm, _, _) = fsm.parse()?;
                if !fsm.has_output() {
                    return Err(Error::MissingOutputTable);
                }
                Discriminator::OutputFsm(fsm)
            }
            DiscriminatorSpec::Counter { fsm, cyclic, predicate } => {
                let (fsm, _, _) = fsm.parse()?;
                let predicate = match predicate {
                    PredicateSpec::CountsOfX => CountPredicate::CountsEqual(collect_counts(
                        &fsm,
                        &x,
                        y.as_ref(),
                        *cyclic,
                    )?),
                    PredicateSpec::EntropyOfX { tol } => CountPredicate::EntropyEquals {
                        h0: crate::entropy::markov_cond_entropy(&x, 0),
                        tol: *tol,
                    },
                    PredicateSpec::EntropyEquals { h0, tol } => {
                        CountPredicate::EntropyEquals { h0: *h0, tol: *tol }
                    }
                };
                Discriminator::Counter { fsm, cyclic: *cyclic, predicate }
            }
            DiscriminatorSpec::BlockCounter { fsm, block_len } => {
                let (fsm, _, _) = fsm.parse()?;
                let target = collect_block_counts(&fsm, &x, *block_len, y.as_ref())?;
                Discriminator::BlockCounter { fsm, block_len: *block_len, target }
            }
        };

        let scheme = match &self.scheme {
            SchemeFile::RawOtp { keys } => {
                let key_set = match keys {
                    Some(list) => {
                        let mut parsed = Vec::with_capacity(list.len());
                        for k in list {
                            parsed.push(parse_bit_key(k)?);
                        }
                        Some(parsed)
                    }
                    None => None,
                };
                SchemeSpec::RawOtp { alpha: alphabet.size(), key_set }
            }
            SchemeFile::Lz78Otp => SchemeSpec::Lz78Otp { alpha: alphabet.size() },
            SchemeFile::TypeOtp { fsm } => {
                let (fsm, _, _) = fsm.parse()?;
                SchemeSpec::TypeOtp { fsm }
            }
            SchemeFile::BlockTypeOtp { fsm, block_len } => {
                let (fsm, _, _) = fsm.parse()?;
                SchemeSpec::BlockTypeOtp { fsm, block_len: *block_len }
            }
            SchemeFile::MarkovTypeOtp { order } => {
                SchemeSpec::MarkovTypeOtp { order: *order, alpha: alphabet.size() }
            }
            SchemeFile::CondLzOtp => SchemeSpec::CondLzOtp {
                alpha: alphabet.size(),
                si_alpha: y.as_ref().map_or(0, |y| y.alpha()),
            },
        };

        // the scenario key: key_index into the enumerated space of the
        // cryptogram this x produces; draw via a trial encryption
        let probe_key = first_key(&scheme, &x, y.as_ref())?;
        let w = encrypt(&scheme, &x, y.as_ref(), &probe_key)?;
        let keys = enumerate_keys(&scheme, &w, budgets.key_space)?;
        let key = keys
            .get(self.key_index)
            .cloned()
            .ok_or_else(|| Error::KeyOutOfRange(format!("key index {} out of range", self.key_index)))?;

        Ok(Scenario { x, y, alphabet, discriminator, scheme, key, budgets })
    }
}

fn first_key(spec: &SchemeSpec, x: &SymbolSequence, y: Option<&SymbolSequence>) -> Result<Key> {
    use num_bigint::BigUint;
    Ok(match crate::crypto::key_space(spec, x, y)? {
        crate::crypto::KeySpace::Bits(w) => {
            let mut bits = BitString::new();
            for _ in 0..w {
                bits.push(false);
            }
            Key::Bits(bits)
        }
        crate::crypto::KeySpace::Modulus(_) => Key::Residue(BigUint::from(0u32)),
        crate::crypto::KeySpace::Explicit(keys) => Key::Bits(
            keys.first()
                .cloned()
                .ok_or_else(|| Error::KeyOutOfRange("empty key set".into()))?,
        ),
    })
}

impl Scenario {
    pub fn run(&self, jobs: usize) -> Result<SecrecyVerdict> {
        check_perfect_secrecy(
            &self.discriminator,
            &self.scheme,
            &self.x,
            self.y.as_ref(),
            &self.key,
            &self.budgets,
            jobs,
        )
    }
}

/// The bundled run-length scenario: the 8-key one-time pad against the
/// (0, 2) screen on `x = 1111`.
pub fn example_dk_scenario() -> ScenarioFile {
    ScenarioFile {
        magic: SCENARIO_MAGIC.to_string(),
        alphabet: vec!["0".into(), "1".into()],
        x: "1111".into(),
        si_alphabet: None,
        y: None,
        discriminator: DiscriminatorSpec::Dk { d: 0, k: 2 },
        scheme: SchemeFile::RawOtp {
            keys: Some(
                ["1111", "1000", "1100", "1001", "0000", "0111", "0011", "0110"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
            ),
        },
        key_index: 0,
        budgets: None,
    }
}
