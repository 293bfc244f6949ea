//! One-time pads and the compress-then-pad schemes.
//!
//! Bitstream schemes pad with bitwise XOR. Type schemes pad the
//! enumerative rank additively modulo the exact class size, so the
//! cryptogram body is uniform over `{0..M-1}` under a uniform key and
//! the key preimage is exactly the type class; their type header travels
//! in the clear. Modular key spaces make non-power-of-two sizes exact,
//! so no rounding of key entropy is needed anywhere.

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::bits::{log2_biguint, width_for, BitString};
use crate::codec::{deserialize_counts, serialize_counts};
use crate::error::{Error, Result};
use crate::fsm::{build_shift_register_fsm, FsmSpec};
use crate::lz::{conditional_lz_decode, conditional_lz_encode, lz78_decode, lz78_encode};
use crate::seq::SymbolSequence;
use crate::typeclass::{ClassKind, TypeClassDescriptor};

/// Bitwise modulo-2 sum of equal-length strings (an involution).
pub fn otp(bits: &BitString, key: &BitString) -> Result<BitString> {
    bits.xor(key)
}

/// An encryption scheme with all of its parameters.
#[derive(Debug, Clone)]
pub enum SchemeSpec {
    /// Fixed-width symbol packing XORed with key bits; `key_set`
    /// restricts the key space to an explicit list.
    RawOtp { alpha: usize, key_set: Option<Vec<BitString>> },
    /// LZ78 bitstream XORed with `LZ(x)` key bits (the body length leaks
    /// `LZ(x)`; that is intentional and surfaced in reports).
    Lz78Otp { alpha: usize },
    /// Modular pad on the rank inside the symbol-state class of `fsm`.
    TypeOtp { fsm: FsmSpec },
    /// Modular pad on the rank inside the block-count class.
    BlockTypeOtp { fsm: FsmSpec, block_len: usize },
    /// Modular pad on the rank inside the order-`order` shift-register
    /// class.
    MarkovTypeOtp { order: usize, alpha: usize },
    /// Conditional-LZ bitstream XORed with key bits (needs `y` on both
    /// sides).
    CondLzOtp { alpha: usize, si_alpha: usize },
}

impl SchemeSpec {
    pub fn id(&self) -> &'static str {
        match self {
            SchemeSpec::RawOtp { .. } => "raw-otp",
            SchemeSpec::Lz78Otp { .. } => "lz78-otp",
            SchemeSpec::TypeOtp { .. } => "type-otp",
            SchemeSpec::BlockTypeOtp { .. } => "block-type-otp",
            SchemeSpec::MarkovTypeOtp { .. } => "markov-type-otp",
            SchemeSpec::CondLzOtp { .. } => "condlz-otp",
        }
    }

    pub fn uses_si(&self) -> bool {
        matches!(self, SchemeSpec::CondLzOtp { .. })
    }

    /// The machine and class kind behind a type scheme.
    fn class(&self) -> Result<Option<(FsmSpec, ClassKind)>> {
        Ok(match self {
            SchemeSpec::TypeOtp { fsm } => {
                Some((fsm.clone(), ClassKind::SymbolState { cyclic: false }))
            }
            SchemeSpec::BlockTypeOtp { fsm, block_len } => {
                Some((fsm.clone(), ClassKind::Block { block_len: *block_len }))
            }
            SchemeSpec::MarkovTypeOtp { order, alpha } => Some((
                build_shift_register_fsm(*order, *alpha)?,
                ClassKind::SymbolState { cyclic: false },
            )),
            _ => None,
        })
    }
}

/// The key space a scheme consumes on a given plaintext.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KeySpace {
    /// All bit strings of this length.
    Bits(usize),
    /// Integers `{0..modulus-1}`.
    Modulus(BigUint),
    /// An explicit list of bit strings.
    Explicit(Vec<BitString>),
}

impl KeySpace {
    pub fn log2_size(&self) -> f64 {
        match self {
            KeySpace::Bits(w) => *w as f64,
            KeySpace::Modulus(m) => log2_biguint(m),
            KeySpace::Explicit(keys) => (keys.len() as f64).log2(),
        }
    }

    pub fn cardinality(&self) -> BigUint {
        match self {
            KeySpace::Bits(w) => BigUint::one() << *w,
            KeySpace::Modulus(m) => m.clone(),
            KeySpace::Explicit(keys) => BigUint::from(keys.len()),
        }
    }
}

/// A key realization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Key {
    Bits(BitString),
    Residue(#[serde(with = "biguint_dec")] BigUint),
}

/// The cryptogram `W`: an optional clear type header plus the padded
/// body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cryptogram {
    pub scheme_id: String,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub clear_header: Option<BitString>,
    pub body: CryptogramBody,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CryptogramBody {
    Bits(BitString),
    Residue {
        #[serde(with = "biguint_dec")]
        modulus: BigUint,
        #[serde(with = "biguint_dec")]
        residue: BigUint,
    },
}

mod biguint_dec {
    use super::BigUint;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Magic tag of the cryptogram file format.
pub const CRYPTOGRAM_MAGIC: &str = "keyrate-cryptogram-v1";

#[derive(Debug, Serialize, Deserialize)]
struct CryptogramFile {
    magic: String,
    #[serde(flatten)]
    body: Cryptogram,
}

impl Cryptogram {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&CryptogramFile {
            magic: CRYPTOGRAM_MAGIC.to_string(),
            body: self.clone(),
        })
        .expect("cryptogram serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CryptogramFile = serde_json::from_str(text)
            .map_err(|e| Error::MalformedHeader(format!("cryptogram file: {e}")))?;
        if file.magic != CRYPTOGRAM_MAGIC {
            return Err(Error::MalformedHeader(format!("bad magic tag {:?}", file.magic)));
        }
        Ok(file.body)
    }
}

fn pack_symbols(x: &SymbolSequence) -> BitString {
    let w = width_for(x.alpha() as u64);
    let mut out = BitString::new();
    for i in 0..x.len() {
        out.push_uint(x.get(i) as u64, w);
    }
    out
}

fn unpack_symbols(bits: &BitString, alpha: usize, n: usize) -> Result<SymbolSequence> {
    let w = width_for(alpha as u64);
    if bits.len() != n * w {
        return Err(Error::LengthMismatch { expected: n * w, got: bits.len() });
    }
    let mut r = bits.reader();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let v = r.read_uint(w)?;
        if v as usize >= alpha {
            return Err(Error::MalformedBitstream(format!("symbol {v} out of range")));
        }
        out.push(v as u16);
    }
    SymbolSequence::new(alpha, out)
}

fn check_si(spec: &SchemeSpec, y: Option<&SymbolSequence>) -> Result<()> {
    match (spec.uses_si(), y) {
        (true, None) => Err(Error::SideInformation("scheme needs the y sequence".into())),
        (false, Some(_)) => {
            Err(Error::SideInformation("scheme does not take side information".into()))
        }
        _ => Ok(()),
    }
}

/// The key space the scheme consumes on `x`.
pub fn key_space(
    spec: &SchemeSpec,
    x: &SymbolSequence,
    y: Option<&SymbolSequence>,
) -> Result<KeySpace> {
    check_si(spec, y)?;
    Ok(match spec {
        SchemeSpec::RawOtp { alpha, key_set } => {
            if x.alpha() != *alpha {
                return Err(Error::AlphabetMismatch { expected: *alpha, got: x.alpha() });
            }
            match key_set {
                Some(keys) => KeySpace::Explicit(keys.clone()),
                None => KeySpace::Bits(x.len() * width_for(*alpha as u64)),
            }
        }
        SchemeSpec::Lz78Otp { alpha } => {
            if x.alpha() != *alpha {
                return Err(Error::AlphabetMismatch { expected: *alpha, got: x.alpha() });
            }
            KeySpace::Bits(lz78_encode(x)?.len())
        }
        SchemeSpec::CondLzOtp { alpha, si_alpha } => {
            let y = y.expect("checked by check_si");
            if x.alpha() != *alpha {
                return Err(Error::AlphabetMismatch { expected: *alpha, got: x.alpha() });
            }
            if y.alpha() != *si_alpha {
                return Err(Error::AlphabetMismatch { expected: *si_alpha, got: y.alpha() });
            }
            KeySpace::Bits(conditional_lz_encode(x, y)?.len())
        }
        _ => {
            let (fsm, kind) = spec.class()?.expect("type schemes have a class");
            let desc = TypeClassDescriptor::from_sequence(&fsm, kind, x, None)
                .map_err(|e| Error::SchemeDomain(e.to_string()))?;
            KeySpace::Modulus(desc.exact_size()?)
        }
    })
}

/// Key rate in bits per symbol: `log2 |key space| / n`.
pub fn key_rate(spec: &SchemeSpec, x: &SymbolSequence, y: Option<&SymbolSequence>) -> Result<f64> {
    if x.is_empty() {
        return Ok(0.0);
    }
    Ok(key_space(spec, x, y)?.log2_size() / x.len() as f64)
}

/// Draw a key uniformly from the scheme's key space on `x`.
pub fn gen_key(
    spec: &SchemeSpec,
    x: &SymbolSequence,
    y: Option<&SymbolSequence>,
    rng: &mut impl RngCore,
) -> Result<Key> {
    Ok(match key_space(spec, x, y)? {
        KeySpace::Bits(w) => {
            let mut bits = BitString::new();
            let mut buf = [0u8; 1];
            for _ in 0..w {
                rng.fill_bytes(&mut buf);
                bits.push(buf[0] & 1 == 1);
            }
            Key::Bits(bits)
        }
        KeySpace::Modulus(m) => Key::Residue(if m.is_one() {
            BigUint::zero()
        } else {
            rng.gen_biguint_below(&m)
        }),
        KeySpace::Explicit(keys) => {
            let i = (rng.next_u64() % keys.len() as u64) as usize;
            Key::Bits(keys[i].clone())
        }
    })
}

fn key_bits<'k>(spec: &SchemeSpec, key: &'k Key, want_len: usize) -> Result<&'k BitString> {
    let Key::Bits(bits) = key else {
        return Err(Error::KeyOutOfRange("expected a bit-string key".into()));
    };
    if bits.len() != want_len {
        return Err(Error::KeyOutOfRange(format!(
            "key length {} does not match body length {want_len}",
            bits.len()
        )));
    }
    if let SchemeSpec::RawOtp { key_set: Some(keys), .. } = spec {
        if !keys.contains(bits) {
            return Err(Error::KeyOutOfRange("key is not in the declared key set".into()));
        }
    }
    Ok(bits)
}

pub fn encrypt(
    spec: &SchemeSpec,
    x: &SymbolSequence,
    y: Option<&SymbolSequence>,
    key: &Key,
) -> Result<Cryptogram> {
    check_si(spec, y)?;
    let body = match spec {
        SchemeSpec::RawOtp { .. } => {
            let clear = pack_symbols(x);
            let bits = key_bits(spec, key, clear.len())?;
            CryptogramBody::Bits(clear.xor(bits)?)
        }
        SchemeSpec::Lz78Otp { .. } => {
            let clear = lz78_encode(x)?;
            let bits = key_bits(spec, key, clear.len())?;
            CryptogramBody::Bits(clear.xor(bits)?)
        }
        SchemeSpec::CondLzOtp { .. } => {
            let clear = conditional_lz_encode(x, y.expect("checked"))?;
            let bits = key_bits(spec, key, clear.len())?;
            CryptogramBody::Bits(clear.xor(bits)?)
        }
        _ => {
            let (fsm, kind) = spec.class()?.expect("type schemes have a class");
            let desc = TypeClassDescriptor::from_sequence(&fsm, kind, x, None)
                .map_err(|e| Error::SchemeDomain(e.to_string()))?;
            let m = desc.exact_size()?;
            let Key::Residue(k) = key else {
                return Err(Error::KeyOutOfRange("expected a residue key".into()));
            };
            if k >= &m {
                return Err(Error::KeyOutOfRange(format!("residue {k} >= modulus {m}")));
            }
            let rank = desc.rank(x)?;
            let residue = (rank + k) % &m;
            let header = serialize_counts(&desc.counts, kind, x.len())?;
            return Ok(Cryptogram {
                scheme_id: spec.id().to_string(),
                n: x.len(),
                clear_header: Some(header),
                body: CryptogramBody::Residue { modulus: m, residue },
            });
        }
    };
    Ok(Cryptogram { scheme_id: spec.id().to_string(), n: x.len(), clear_header: None, body })
}

pub fn decrypt(
    spec: &SchemeSpec,
    w: &Cryptogram,
    y: Option<&SymbolSequence>,
    key: &Key,
) -> Result<SymbolSequence> {
    check_si(spec, y)?;
    if w.scheme_id != spec.id() {
        return Err(Error::MalformedHeader(format!(
            "cryptogram was produced by {:?}, not {:?}",
            w.scheme_id,
            spec.id()
        )));
    }
    match (spec, &w.body) {
        (SchemeSpec::RawOtp { alpha, .. }, CryptogramBody::Bits(body)) => {
            let bits = key_bits(spec, key, body.len())?;
            unpack_symbols(&body.xor(bits)?, *alpha, w.n)
        }
        (SchemeSpec::Lz78Otp { alpha }, CryptogramBody::Bits(body)) => {
            let bits = key_bits(spec, key, body.len())?;
            lz78_decode(&body.xor(bits)?, *alpha)
        }
        (SchemeSpec::CondLzOtp { alpha, .. }, CryptogramBody::Bits(body)) => {
            let bits = key_bits(spec, key, body.len())?;
            conditional_lz_decode(&body.xor(bits)?, y.expect("checked"), *alpha)
        }
        (_, CryptogramBody::Residue { modulus, residue }) => {
            let (fsm, kind) = spec.class()?.expect("type schemes have a class");
            let header = w
                .clear_header
                .as_ref()
                .ok_or_else(|| Error::MalformedHeader("type scheme without a header".into()))?;
            let counts = deserialize_counts(header, &fsm, kind, w.n)?;
            let desc = TypeClassDescriptor::from_counts(&fsm, kind, counts, w.n, None)?;
            let m = desc.exact_size()?;
            if &m != modulus {
                return Err(Error::MalformedHeader(format!(
                    "modulus {modulus} does not match the class size {m}"
                )));
            }
            if residue >= &m {
                return Err(Error::MalformedHeader("residue outside the modulus".into()));
            }
            let Key::Residue(k) = key else {
                return Err(Error::KeyOutOfRange("expected a residue key".into()));
            };
            if k >= &m {
                return Err(Error::KeyOutOfRange(format!("residue {k} >= modulus {m}")));
            }
            let rank = (residue + &m - k) % &m;
            desc.unrank(&rank)
        }
        _ => Err(Error::MalformedHeader("body kind does not match the scheme".into())),
    }
}

/// All keys of the scheme's key space for the observed cryptogram, in a
/// deterministic order. Errors if the space exceeds `key_budget`.
pub fn enumerate_keys(
    spec: &SchemeSpec,
    w: &Cryptogram,
    key_budget: u128,
) -> Result<Vec<Key>> {
    let keys: Vec<Key> = match (spec, &w.body) {
        (SchemeSpec::RawOtp { key_set: Some(keys), .. }, _) => {
            keys.iter().cloned().map(Key::Bits).collect()
        }
        (_, CryptogramBody::Bits(body)) => {
            let w_bits = body.len();
            if w_bits >= 128 || (1u128 << w_bits) > key_budget {
                return Err(Error::KeySpaceBudgetExceeded {
                    requested: 1u128.checked_shl(w_bits as u32).unwrap_or(u128::MAX),
                    cap: key_budget,
                });
            }
            (0..1u128 << w_bits)
                .map(|v| {
                    let mut bits = BitString::new();
                    for i in (0..w_bits).rev() {
                        bits.push((v >> i) & 1 == 1);
                    }
                    Key::Bits(bits)
                })
                .collect()
        }
        (_, CryptogramBody::Residue { modulus, .. }) => {
            let cap = BigUint::from(key_budget);
            if modulus > &cap {
                return Err(Error::KeySpaceBudgetExceeded {
                    requested: u128::MAX,
                    cap: key_budget,
                });
            }
            let m: u128 = modulus.to_string().parse().unwrap_or(u128::MAX);
            (0..m).map(|v| Key::Residue(BigUint::from(v))).collect()
        }
    };
    Ok(keys)
}

/// The result of enumerating `T^{-1}(W)`: every distinct plaintext
/// reachable by decrypting under some key, plus the number of keys whose
/// decryption is undefined (counted separately, never silently dropped).
#[derive(Debug, Clone)]
pub struct PreimageSet {
    pub candidates: std::collections::BTreeSet<SymbolSequence>,
    pub invalid_decrypts: u64,
}

/// `{ decrypt(W, k) : k in key space }`, dropping keys whose decryption
/// fails and counting them separately.
pub fn preimage_set(
    spec: &SchemeSpec,
    w: &Cryptogram,
    y: Option<&SymbolSequence>,
    key_budget: u128,
) -> Result<PreimageSet> {
    let keys = enumerate_keys(spec, w, key_budget)?;
    let mut candidates = std::collections::BTreeSet::new();
    let mut invalid = 0u64;
    for k in &keys {
        match decrypt(spec, w, y, k) {
            Ok(x) => {
                candidates.insert(x);
            }
            Err(_) => invalid += 1,
        }
    }
    Ok(PreimageSet { candidates, invalid_decrypts: invalid })
}
