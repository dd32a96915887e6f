use std::fmt;

use serde::{Deserialize, Serialize};

use super::{FitResult, ParameterEstimate, Peak};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakResidual {
    pub peak: usize,
    pub field: f64,
    pub frequency: f64,
    pub residual: Option<f64>,
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub rms: f64,
    /// `Σ w r²` over matched peaks.
    pub chi2: f64,
    /// `chi2 / (matched − free)`, absent when that is not positive.
    pub reduced_chi2: Option<f64>,
    pub matched: usize,
    pub unmatched: Vec<usize>,
    pub per_peak: Vec<PeakResidual>,
    pub histogram: Vec<HistogramBin>,
    pub parameters: Vec<ParameterEstimate>,
    pub converged: bool,
}

const HISTOGRAM_BINS: usize = 10;

pub fn fit_quality_report(result: &FitResult, peaks: &[Peak]) -> QualityReport {
    let per_peak: Vec<PeakResidual> = result
        .associations
        .iter()
        .map(|a| PeakResidual {
            peak: a.peak,
            field: peaks[a.peak].field,
            frequency: peaks[a.peak].frequency,
            residual: a.residual,
            matched: a.matched,
        })
        .collect();
    let matched: Vec<(f64, f64)> = result
        .associations
        .iter()
        .filter(|a| a.matched)
        .filter_map(|a| a.residual.map(|r| (r, peaks[a.peak].weight)))
        .collect();
    let chi2: f64 = matched.iter().map(|(r, w)| w * r * r).sum();
    let n_free = result.parameters.iter().filter(|p| p.free).count();
    let dof = matched.len() as i64 - n_free as i64;
    let reduced_chi2 = (dof > 0).then(|| chi2 / dof as f64);

    let residuals: Vec<f64> = matched.iter().map(|(r, _)| *r).collect();
    let histogram = histogram(&residuals);

    QualityReport {
        rms: result.rms,
        chi2,
        reduced_chi2,
        matched: matched.len(),
        unmatched: result
            .associations
            .iter()
            .filter(|a| !a.matched)
            .map(|a| a.peak)
            .collect(),
        per_peak,
        histogram,
        parameters: result.parameters.clone(),
        converged: result.converged,
    }
}

fn histogram(values: &[f64]) -> Vec<HistogramBin> {
    if values.is_empty() {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return vec![HistogramBin {
            lower: lo,
            upper: hi,
            count: values.len(),
        }];
    }
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let mut bins: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|i| HistogramBin {
            lower: lo + i as f64 * width,
            upper: lo + (i + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for v in values {
        let i = (((v - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
        bins[i].count += 1;
    }
    bins
}

impl fmt::Display for QualityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "converged: {}", self.converged)?;
        writeln!(
            f,
            "matched peaks: {}  unmatched: {}",
            self.matched,
            self.unmatched.len()
        )?;
        writeln!(f, "rms residual: {:.6} GHz", self.rms)?;
        match self.reduced_chi2 {
            Some(r) => writeln!(f, "chi2: {:.6e}  reduced chi2: {:.6e}", self.chi2, r)?,
            None => writeln!(f, "chi2: {:.6e}  reduced chi2: n/a", self.chi2)?,
        }
        writeln!(f)?;
        writeln!(
            f,
            "{:<10} {:>16} {:>14} {:>8}  unit",
            "parameter", "value", "std error", "status"
        )?;
        for p in &self.parameters {
            let se = p.std_error.map_or("-".to_string(), |s| format!("{s:.3e}"));
            let status = if p.free { "free" } else { "locked" };
            writeln!(
                f,
                "{:<10} {:>16} {:>14} {:>8}  {}",
                p.key.to_string(),
                p.value,
                se,
                status,
                p.unit
            )?;
        }
        if !self.histogram.is_empty() {
            writeln!(f)?;
            writeln!(f, "residual histogram (GHz):")?;
            for b in &self.histogram {
                writeln!(f, "  [{:+.4}, {:+.4}) {}", b.lower, b.upper, b.count)?;
            }
        }
        if !self.unmatched.is_empty() {
            writeln!(f)?;
            writeln!(f, "unmatched peaks:")?;
            for &i in &self.unmatched {
                let p = &self.per_peak[i];
                writeln!(f, "  #{i}: {:.6} T, {:.6} GHz", p.field, p.frequency)?;
            }
        }
        Ok(())
    }
}
