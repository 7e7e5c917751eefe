//! Outlier-robust, corner-preserving image smoothing.
//!
//! The TM-smoother reconstructs each pixel as the local mode of a kernel
//! density estimate of the window intensities, where the density is built
//! only from the observations retained by a least-trimmed-squares fit and the
//! mode search starts at the (untrimmed) center observation. With trimming
//! fraction `l = 0` it reduces to the redescending M-smoother.
//!
//! Module map:
//!
//! * [`image`]: images, design-point geometry, windows, PGM I/O
//! * [`kernels`]: truncated Gaussian intensity and spatial kernels
//! * [`lts`]: exact one-dimensional LTS location and the trimmed set
//! * [`density`]: the window density field and the nearest-mode search
//! * [`smoother`]: per-pixel M/TM orchestration, automatic scale, median baseline
//! * [`scene`]: synthetic piecewise-constant scenes and the noise model
//! * [`metrics`]: MAE/MSE reports
//! * [`probe`]: maximum-bias and breakdown probes

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod error;
pub mod image;
pub mod kernels;
pub mod lts;
pub mod metrics;
pub mod probe;
pub mod scene;
pub mod smoother;

pub use density::{DensityField, Direction, ModeResult, ModeSearch};
pub use error::{Error, Result};
pub use image::{read_pgm, write_pgm, BorderMode, GridGeometry, Image, Window, WindowEntry};
pub use lts::{lts_center, trim_window, TrimConfig, TrimOutcome};
pub use metrics::{metrics, MetricsReport};
pub use probe::{
    breakdown_estimate, max_bias_probe, probe_windows, random_windows, tm_support_bound, BiasProbeReport, ProbeConfig,
    Strategy,
};
pub use scene::{add_noise, rasterize, Base, NoiseSpec, RegionSpec, SceneConfig, SceneSpec, Shape};
pub use smoother::{auto_scale, median_smooth, smooth, Scale, SmoothReport, SmootherParams};
