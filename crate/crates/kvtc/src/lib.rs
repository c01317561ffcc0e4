//! Transform-coding codec for KV-cache-shaped tensors.
//!
//! The pipeline mirrors classical transform coding: calibrate a reusable PCA
//! basis on sampled token positions, allocate per-component bit widths by
//! dynamic programming under a compression budget, quantize in the
//! decorrelated domain with grouped 16-bit shift/scale factors, entropy-code
//! the packed symbols, and invert all of it on decompression. Attention
//! sinks and a sliding window of recent tokens bypass the lossy path.

pub mod allocator;
pub mod bench;
pub mod calib;
pub mod codec;
pub mod container;
pub mod entropy;
pub mod error;
pub mod linalg;
pub mod quant;
pub mod report;
pub mod rope;
pub mod synth;

pub use error::{Error, Result};
pub use linalg::{Matrix, PcaMethod, PcaModel, SvdResult};
