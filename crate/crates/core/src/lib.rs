//! Explainable saliency from deep-network activation maps.
//!
//! Intermediate activation maps of a saliency network are matched against
//! log-Gabor energy maps by comparing 8x8 block variances, reconstructed as
//! inverse-error weighted sums at five scales, fused, and propagated layer by
//! layer until a final saliency map is produced.

pub mod blockstats;
pub mod cmr;
pub mod error;
pub mod grid;
pub mod imageio;
pub mod loggabor;
pub mod metrics;
pub mod npy;
pub mod pipeline;
pub mod saliency;

pub use error::{Error, NpyError, Result};
pub use grid::{ComplexGrid2D, Grid2D, Interpolation, Tensor3D};
pub use saliency::SaliencyMap;
