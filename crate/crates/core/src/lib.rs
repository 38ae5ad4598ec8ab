//! Lensless coded-aperture video simulation and mask-invariant motion features.
//!
//! A coded-aperture (CA) camera replaces the lens with a patterned occluder,
//! so the sensor records the scene convolved with the mask pattern. The CA
//! frames are visually unrecognizable, but phase correlation between pairs of
//! frames still recovers global translation, and — as long as the mask has a
//! broadband spectrum — the translation maps are independent of the mask
//! design. Rotation and scale show up as shifts in log-polar spectral space.
//!
//! The crate covers the full pipeline:
//!
//! - [`mask`]: coded-aperture pattern generation and the broadband criterion;
//! - [`optics`]: CA capture simulation, with and without boundary effect;
//! - [`motion`]: cross-power spectra, T maps, log-polar RS maps, peak recovery;
//! - [`features`]: multi-stride TRS feature stacks and their on-disk format;
//! - [`synth`]: a desk-scale synthetic benchmark of parametric motions;
//! - [`learn`]: a reference classifier with the mask-variation training regimes;
//! - [`attack`]: an autocorrelation-based privacy probe.

pub mod attack;
pub mod clip;
pub mod error;
pub mod features;
pub mod fft;
pub mod frame;
pub mod learn;
pub mod mask;
pub mod motion;
pub mod optics;
pub mod pgm;
pub mod synth;

pub use error::{Error, Result};
