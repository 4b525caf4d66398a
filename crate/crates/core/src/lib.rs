//! Coded-mask compressive light field acquisition with a jointly trained
//! disparity decoder.
//!
//! - [`sensing`]: the periodic coded-mask sensing operator, its adjoint, and
//!   an explicit dense form for small instances.
//! - [`data`]: scenes, patches, augmentation, synthetic plane scenes, splits.
//! - [`net`]: the residual U-net decoder with hand-written backpropagation.
//! - [`train`]: joint mask/decoder optimization, checkpoints, inference.
//! - [`metrics`]: pseudo-Huber loss and disparity error metrics.
//! - [`io`]: scene containers, PFM, manifests, mask text.

pub mod data;
pub mod error;
pub mod io;
pub mod metrics;
pub mod net;
pub mod seed;
pub mod sensing;
pub mod train;

pub use error::{Error, Result};
