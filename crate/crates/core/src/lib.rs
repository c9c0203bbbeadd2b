//! Digital payloads carried as patch-mask locations on carrier images.
//!
//! A binary payload selects which patches of an image are masked. The
//! semantic encoder only sees the visible patches; the positions of the
//! masked ones travel as a compact index list next to the latent block, and
//! the receiver recovers both the image and the payload from them.
//!
//! The crate is organized along the link:
//!
//! - [`imaging`]: pixels, patch grids, masking.
//! - [`bitmap`]: payload ⇄ mask pattern.
//! - [`sparse`]: compact mask side information and restore permutations.
//! - [`codec`]: encoder/decoder contract, the reference codec, quantization.
//! - [`wire`]: client side of the remote codec protocol.
//! - [`channel`]: power normalization, BPSK, AWGN and Rayleigh fading.
//! - [`frame`]: on-air frame, `.scframe` files and the end-to-end link.
//! - [`metrics`] and [`overhead`]: PSNR, MS-SSIM, BER and bit accounting.
//! - [`harness`]: seeded sweeps, CSV records and SVG plots.

pub mod bitmap;
pub mod channel;
pub mod codec;
mod error;
pub mod frame;
pub mod harness;
pub mod imaging;
pub mod metrics;
pub mod overhead;
pub mod sparse;
pub mod wire;

pub use error::{Error, Result};
