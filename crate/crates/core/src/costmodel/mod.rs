// SPDX-License-Identifier: Apache-2.0

//! Analytical area, timing and latency estimators.

pub mod area;
pub mod latency;
pub mod nnls;
pub mod timing;

pub use area::{estimate_area, AreaBreakdown, AreaError, AreaTable};
pub use latency::latency_model;
pub use nnls::{fit_nnls, nnls, NnlsError, NnlsFit};
pub use timing::{estimate_timing, TimingError, TimingEstimate, TimingModel, TimingSample};
