use std::fmt::Write as _;

use super::metrics::{psnr, ssim};
use super::sampling::{MomentAccumulator, PosteriorSampler};
use crate::error::{config_err, Result};
use crate::flow::FlowModel;
use crate::grad::Real;
use crate::rng::derive_seed;
use crate::tomo::Dataset;

pub const REPORT_HEADER: &str = "image_id,method,n,psnr,ssim";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Conditional mean of posterior samples.
    Cinn,
    Fbp,
}

impl Method {
    pub fn id(self) -> &'static str {
        match self {
            Method::Cinn => "cinn",
            Method::Fbp => "fbp",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReportRow {
    pub image_id: usize,
    pub method: Method,
    /// Number of posterior samples; 0 for the FBP baseline.
    pub n: usize,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aggregate {
    pub method: Method,
    pub n: usize,
    pub count: usize,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReconstructionReport {
    pub rows: Vec<ReportRow>,
    pub seconds: f64,
}

fn fmt_metric(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.6}")
    }
}

impl ReconstructionReport {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{REPORT_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{}", r.image_id, r.method.id(), r.n, fmt_metric(r.psnr), fmt_metric(r.ssim));
        }
        s
    }

    /// Means per `(method, n)`, FBP first, then increasing `n`.
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut keys: Vec<(Method, usize)> = Vec::new();
        for r in &self.rows {
            if !keys.contains(&(r.method, r.n)) {
                keys.push((r.method, r.n));
            }
        }
        keys.sort_by_key(|&(m, n)| (m == Method::Cinn, n));
        keys.into_iter()
            .map(|(method, n)| {
                let rows: Vec<&ReportRow> = self.rows.iter().filter(|r| r.method == method && r.n == n).collect();
                let c = rows.len() as f64;
                Aggregate {
                    method,
                    n,
                    count: rows.len(),
                    mean_psnr: rows.iter().map(|r| r.psnr).sum::<f64>() / c,
                    mean_ssim: rows.iter().map(|r| r.ssim).sum::<f64>() / c,
                }
            })
            .collect()
    }

    pub fn aggregate(&self, method: Method, n: usize) -> Option<Aggregate> {
        self.aggregates().into_iter().find(|a| a.method == method && a.n == n)
    }

    pub fn table(&self) -> String {
        let mut s = format!("{:<8} {:>6} {:>7} {:>10} {:>8}\n", "method", "n", "images", "PSNR (dB)", "SSIM");
        for a in self.aggregates() {
            let n = if a.method == Method::Fbp { "-".to_string() } else { a.n.to_string() };
            let _ = writeln!(
                s,
                "{:<8} {:>6} {:>7} {:>10} {:>8}",
                a.method.id(),
                n,
                a.count,
                format!("{:.3}", a.mean_psnr),
                format!("{:.4}", a.mean_ssim)
            );
        }
        s
    }
}

/// For every pair: FBP baseline metrics, then conditional-mean metrics for each `n` in
/// `n_list`. All sample counts reuse one sample stream per image (seed `seed ⊕ mix(id)`),
/// so the estimate for a smaller `n` is a prefix of the one for a larger `n`.
pub fn evaluate<T: Real>(
    model: &FlowModel<T>,
    data: &Dataset,
    n_list: &[usize],
    seed: u64,
    data_range: f64,
    mut progress: impl FnMut(usize),
) -> Result<ReconstructionReport> {
    if n_list.is_empty() || n_list.contains(&0) {
        return Err(config_err!("sample counts must be a non-empty list of positive integers"));
    }
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let start = std::time::Instant::now();
    let mut rows = Vec::new();
    for (id, pair) in data.pairs.iter().enumerate() {
        rows.push(ReportRow {
            image_id: id,
            method: Method::Fbp,
            n: 0,
            psnr: psnr(&pair.fbp, &pair.reference, data_range)?,
            ssim: ssim(&pair.fbp, &pair.reference, data_range)?,
        });
        let mut sampler = PosteriorSampler::new(model, &pair.fbp, derive_seed(seed, id as u64))?;
        let mut acc = MomentAccumulator::new(pair.reference.size());
        for &n in &ns {
            for s in sampler.draw(n - acc.count())? {
                acc.push(&s);
            }
            let mean = acc.mean();
            rows.push(ReportRow {
                image_id: id,
                method: Method::Cinn,
                n,
                psnr: psnr(&mean, &pair.reference, data_range)?,
                ssim: ssim(&mean, &pair.reference, data_range)?,
            });
        }
        progress(id);
    }
    Ok(ReconstructionReport { rows, seconds: start.elapsed().as_secs_f64() })
}
