//! Posterior sampling, conditional-mean reconstruction and image-quality metrics.

mod metrics;
mod report;
mod sampling;

pub use metrics::{mse, psnr, ssim, SSIM_WINDOW};
pub use report::{evaluate, Aggregate, Method, ReconstructionReport, ReportRow, REPORT_HEADER};
pub use sampling::{conditional_mean, sample_posterior, MomentAccumulator, PosteriorSampler, DECODE_CHUNK};
