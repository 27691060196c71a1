//! Degenerate maximum-likelihood decoding of the planar surface code by
//! approximate tensor-network contraction.
//!
//! For a measured syndrome the decoder builds one grid tensor network per
//! logical coset, estimates each network's contraction value and picks the
//! most probable coset. Contraction is done either exactly-ish with the
//! boundary-MPS method ([`tensor::bmps_contract`]) or with block belief
//! propagation ([`blockbp`]), where blocks of the grid exchange MPS messages
//! and the final value is read off the Bethe product formula.
//!
//! Module map:
//!
//! * [`code`]: lattice, checks, syndromes, pure errors, logical classes.
//! * [`noise`]: i.i.d. Pauli channels and seeded sampling.
//! * [`tensor`]: dense tensors, MPS, grid networks and bMPS.
//! * [`cosetnet`]: coset tensor networks and a brute-force coset oracle.
//! * [`bp`]: vector-message BP on arbitrary tensor networks.
//! * [`blockbp`]: block BP with MPS messages.
//! * [`decoders`]: blockBP, bMPS and exact decoders.
//! * [`harness`]: Monte-Carlo experiments, CSV output and timing.

pub mod blockbp;
pub mod bp;
pub mod code;
pub mod cosetnet;
pub mod decoders;
mod error;
pub mod harness;
pub mod noise;
pub mod tensor;

pub use error::{Error, Result};
