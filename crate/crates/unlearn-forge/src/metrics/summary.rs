//! Distribution summaries and correlation.
//!
//! Reports describe sets of per-example values (perplexities, exposures) as
//! population mean/variance pairs plus a fixed-width histogram, mirroring
//! the layout used in the analysis write-ups.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::sig17;

/// Fixed-width binning over [lo, hi].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramSpec {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl HistogramSpec {
    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(Error::Metric("histogram needs at least one bin".into()));
        }
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::Metric(format!(
                "histogram range [{}, {}] is not a finite nonempty interval",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    /// Tight spec over the data range; a constant list widens by half a unit
    /// each side so the interval stays nonempty.
    pub fn covering(values: &[f64], bins: usize) -> Result<HistogramSpec> {
        if values.is_empty() {
            return Err(Error::Metric("cannot size a histogram over no values".into()));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo == hi {
            lo -= 0.5;
            hi += 0.5;
        }
        let spec = HistogramSpec { lo, hi, bins };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: u64,
}

/// Population statistics plus histogram. Values outside the bin range are
/// clamped into the edge bins so counts always sum to the sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub mean: f64,
    pub variance: f64,
    pub n: usize,
    pub histogram: Vec<HistogramBin>,
}

pub fn distribution_summary(values: &[f64], spec: &HistogramSpec) -> Result<DistributionSummary> {
    if values.is_empty() {
        return Err(Error::Metric("distribution summary over no values".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "distribution summary input".into() });
    }
    spec.validate()?;

    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;

    let width = (spec.hi - spec.lo) / spec.bins as f64;
    let mut counts = vec![0u64; spec.bins];
    for &v in values {
        let idx = (((v - spec.lo) / width).floor() as i64).clamp(0, spec.bins as i64 - 1);
        counts[idx as usize] += 1;
    }
    let histogram = counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            left: spec.lo + i as f64 * width,
            right: if i + 1 == spec.bins { spec.hi } else { spec.lo + (i + 1) as f64 * width },
            count,
        })
        .collect();

    Ok(DistributionSummary { mean, variance, n: values.len(), histogram })
}

/// Write bins as `bin_left,bin_right,count` with a header line.
pub fn write_histogram_csv(bins: &[HistogramBin], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "bin_left,bin_right,count")?;
        for b in bins {
            writeln!(w, "{},{},{}", sig17(b.left), sig17(b.right), b.count)?;
        }
        w.flush()
    };
    emit().map_err(|e| Error::io(path, e))
}

/// Pearson correlation coefficient. Errors on mismatched or too-short
/// inputs and on zero variance, where the coefficient is undefined.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Metric(format!(
            "correlation of {} against {} values",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::Metric("correlation needs at least two pairs".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Metric("correlation undefined for a constant sequence".into()));
    }
    let r = sxy / (sxx * syy).sqrt();
    if !r.is_finite() {
        return Err(Error::NonFinite { context: "pearson correlation".into() });
    }
    Ok(r)
}
