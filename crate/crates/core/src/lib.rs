//! Affine frequency division multiplexing (AFDM) link simulation with
//! low-complexity LMMSE and MRC-based DFE detectors.

pub mod band;
pub mod channel;
pub mod daft;
pub mod detect;
pub mod effective;
pub mod error;
pub mod framing;
pub mod harness;
pub mod verify;
