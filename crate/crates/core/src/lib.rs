//! Underwater image formation, restoration and assessment.
//!
//! - [`imaging`]: forward models that turn a clear scene and a range map into
//!   a degraded underwater observation.
//! - [`losses`]: restoration losses with analytic gradients.
//! - [`metrics`]: full-reference and no-reference quality scores.
//! - [`restoration`]: model inversion and classical enhancement baselines.
//! - [`dataset`]: synthetic pair generation from RGB-D captures.

pub mod dataset;
pub mod error;
pub mod filter;
pub mod image;
pub mod imaging;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod par;
pub mod restoration;

pub use error::{Error, Result};
pub use image::{DepthMap, Image, TransmissionMap, CHANNELS};
pub use imaging::{WaterParams, WaterType};
pub use losses::{LossKind, LossResult, LossSpec};
pub use metrics::QualityReport;
pub use restoration::{InversionConfig, Method};
