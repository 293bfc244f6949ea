//! Key-rate analysis for encrypting individual sequences against
//! finite-state eavesdroppers.
//!
//! The library models an eavesdropper that screens candidate plaintexts
//! with a finite-state discriminator (an output-function machine, a
//! counter machine, a shift-register machine, a periodically time-varying
//! machine, or any of those driven by side information). For a given
//! plaintext it computes:
//!
//! - the discriminator's acceptance set, exactly, by enumeration at desk
//!   scale ([`verifier`]);
//! - every lower bound on the key rate needed for perfect secrecy against
//!   each discriminator class ([`bounds`]);
//! - the matching compress-then-pad encryption schemes whose key
//!   consumption approaches those bounds ([`codec`], [`crypto`]);
//! - an exact perfect-secrecy verdict obtained by brute force
//!   ([`verifier`]).
//!
//! All rates are in bits per symbol, all logarithms base 2, and the
//! convention `0·log 0 = 0` is used throughout.

pub mod bits;
pub mod bounds;
pub mod codec;
pub mod counts;
pub mod crypto;
pub mod entropy;
pub mod error;
pub mod fsm;
pub mod lz;
pub mod seq;
pub mod typeclass;
pub mod verifier;

pub use error::{Error, Result};
pub use seq::{Alphabet, SymbolSequence};
