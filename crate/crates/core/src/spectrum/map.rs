//! Field sweeps and rasterised spectral maps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{levels, lines_from_levels, Levels, TransitionLine};
use crate::error::{Error, Result};
use crate::hamiltonian::{track_levels, EigenSystem, PairSiteModel, TrackedBranches};
use crate::parallel;
use crate::tensor::Vector3;

/// Offset inside the log colour transform.
pub const COLOR_FLOOR: f64 = 0.03;

pub fn log_transform(p: f64) -> f64 {
    (p + COLOR_FLOOR).log10()
}

fn log_with_floor(p: f64, floor: f64) -> f64 {
    (p + floor).log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Field direction; normalised before use.
    pub axis: Vector3,
    /// T, signed coordinate along `axis`.
    pub b_min: f64,
    pub b_max: f64,
    pub steps: usize,
}

impl SweepSpec {
    pub fn along_z(b_min: f64, b_max: f64, steps: usize) -> Self {
        SweepSpec {
            axis: Vector3::Z,
            b_min,
            b_max,
            steps,
        }
    }

    pub fn validate(&self) -> Result<Vector3> {
        if self.steps < 2 {
            return Err(Error::InvalidSweep(format!(
                "need at least 2 steps, got {}",
                self.steps
            )));
        }
        if !(self.b_min.is_finite() && self.b_max.is_finite()) || self.b_max <= self.b_min {
            return Err(Error::InvalidSweep(format!(
                "degenerate field range [{}, {}]",
                self.b_min, self.b_max
            )));
        }
        self.axis
            .normalized()
            .ok_or_else(|| Error::InvalidSweep("zero field axis".into()))
    }

    pub fn fields(&self) -> Vec<f64> {
        let span = self.b_max - self.b_min;
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| self.b_min + span * (i as f64 / last))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub spec: SweepSpec,
    pub direction: Vector3,
    pub fields: Vec<f64>,
    pub levels: Vec<Levels>,
    pub lines: Vec<Vec<TransitionLine>>,
    /// SHA-256 of the model's JSON form.
    pub model_hash: String,
}

pub fn model_hash(model: &PairSiteModel) -> String {
    let bytes = serde_json::to_vec(model).expect("model serialises");
    Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Diagonalise the model at every field of the sweep (in parallel).
pub fn sweep(model: &PairSiteModel, spec: &SweepSpec) -> Result<Sweep> {
    model.validate()?;
    let direction = spec.validate()?;
    let fields = spec.fields();
    let levels: Vec<Levels> = parallel::install(|| {
        fields
            .par_iter()
            .map(|&b| {
                levels(model, direction * b).map_err(|e| Error::Simulation {
                    field: b,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let lines = levels
        .iter()
        .map(|lv| lines_from_levels(model, lv))
        .collect();
    Ok(Sweep {
        spec: *spec,
        direction,
        fields,
        levels,
        lines,
        model_hash: model_hash(model),
    })
}

impl Sweep {
    /// Track ground and excited levels across the sweep.
    pub fn track(&self) -> Result<(TrackedBranches, TrackedBranches)> {
        let ground: Vec<EigenSystem> = self.levels.iter().map(|l| l.ground.clone()).collect();
        let excited: Vec<EigenSystem> = self.levels.iter().map(|l| l.excited.clone()).collect();
        Ok((track_levels(&ground)?, track_levels(&excited)?))
    }

    pub fn to_map(&self, opts: &MapOptions) -> Result<SpectrumMap> {
        rasterize(self, opts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapOptions {
    /// Gaussian line width σ (GHz).
    pub sigma: f64,
    /// Explicit frequency window; derived from the visible lines when absent.
    pub freq_min: Option<f64>,
    pub freq_max: Option<f64>,
    pub freq_step: f64,
    /// Lines weaker than this are not drawn.
    pub min_intensity: f64,
}

impl Default for MapOptions {
    fn default() -> Self {
        MapOptions {
            sigma: 0.1,
            freq_min: None,
            freq_max: None,
            freq_step: 0.05,
            min_intensity: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_hash: String,
    pub axis: Vector3,
    pub b_min: f64,
    pub b_max: f64,
    pub steps: usize,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMap {
    /// T
    pub fields: Vec<f64>,
    /// GHz
    pub frequencies: Vec<f64>,
    /// `intensity[i][j]` at `fields[i]`, `frequencies[j]`.
    pub intensity: Vec<Vec<f64>>,
    pub provenance: Option<Provenance>,
}

impl SpectrumMap {
    pub fn validate(&self) -> Result<()> {
        if self.fields.is_empty() || self.frequencies.is_empty() {
            return Err(Error::EmptyMap);
        }
        if self.intensity.len() != self.fields.len()
            || self
                .intensity
                .iter()
                .any(|c| c.len() != self.frequencies.len())
        {
            return Err(Error::InvalidMap(
                "grid dimensions disagree with axes".into(),
            ));
        }
        if self
            .intensity
            .iter()
            .flatten()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::InvalidMap(
                "intensities must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn max_intensity(&self) -> f64 {
        self.intensity.iter().flatten().copied().fold(0.0, f64::max)
    }
}

fn rasterize(sw: &Sweep, opts: &MapOptions) -> Result<SpectrumMap> {
    if !(opts.sigma > 0.0 && opts.freq_step > 0.0) {
        return Err(Error::InvalidSweep(
            "line width and frequency step must be positive".into(),
        ));
    }
    let reach = 6.0 * opts.sigma;
    let visible = || {
        sw.lines
            .iter()
            .flatten()
            .filter(|l| l.intensity >= opts.min_intensity)
    };
    let lo = match opts.freq_min {
        Some(v) => v,
        None => {
            let m = visible().map(|l| l.frequency).fold(f64::INFINITY, f64::min);
            ((m - reach) / opts.freq_step).floor() * opts.freq_step
        }
    };
    let hi = match opts.freq_max {
        Some(v) => v,
        None => {
            visible()
                .map(|l| l.frequency)
                .fold(f64::NEG_INFINITY, f64::max)
                + reach
        }
    };
    if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
        return Err(Error::EmptyMap);
    }
    let n = ((hi - lo) / opts.freq_step).round() as usize + 1;
    let frequencies: Vec<f64> = (0..n).map(|j| lo + j as f64 * opts.freq_step).collect();
    let inv = 1.0 / (2.0 * opts.sigma * opts.sigma);

    let intensity = parallel::install(|| {
        sw.lines
            .par_iter()
            .map(|column| {
                let mut col = vec![0.0; n];
                for l in column.iter().filter(|l| l.intensity >= opts.min_intensity) {
                    let first = ((l.frequency - reach - lo) / opts.freq_step)
                        .ceil()
                        .max(0.0) as usize;
                    let last = ((l.frequency + reach - lo) / opts.freq_step).floor();
                    if last < 0.0 {
                        continue;
                    }
                    let last = (last as usize).min(n - 1);
                    for (j, c) in col.iter_mut().enumerate().take(last + 1).skip(first) {
                        let d = frequencies[j] - l.frequency;
                        *c += l.intensity * (-d * d * inv).exp();
                    }
                }
                col
            })
            .collect::<Vec<_>>()
    });

    Ok(SpectrumMap {
        fields: sw.fields.clone(),
        frequencies,
        intensity,
        provenance: Some(Provenance {
            model_hash: sw.model_hash.clone(),
            axis: sw.direction,
            b_min: sw.spec.b_min,
            b_max: sw.spec.b_max,
            steps: sw.spec.steps,
            sigma: opts.sigma,
        }),
    })
}

/// 16-bit grey image of a map: rows run from the highest frequency (top) to
/// the lowest, columns follow the field axis.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u16>,
    /// Offset inside `log10(P + floor)`.
    pub color_floor: f64,
    /// Transformed values mapped to 0 and 65535.
    pub log_min: f64,
    pub log_max: f64,
    pub field_range: (f64, f64),
    pub freq_range: (f64, f64),
}

impl RenderedImage {
    pub fn pixel(&self, row: usize, col: usize) -> u16 {
        self.pixels[row * self.width + col]
    }
}

pub fn render_map(map: &SpectrumMap) -> Result<RenderedImage> {
    render_map_with_floor(map, COLOR_FLOOR)
}

pub fn render_map_with_floor(map: &SpectrumMap, floor: f64) -> Result<RenderedImage> {
    map.validate()?;
    if !(floor > 0.0 && floor.is_finite()) {
        return Err(Error::InvalidMap(format!(
            "colour floor {floor} must be positive"
        )));
    }
    let log_min = log_with_floor(0.0, floor);
    let log_max = log_with_floor(map.max_intensity(), floor);
    let span = log_max - log_min;
    let width = map.fields.len();
    let height = map.frequencies.len();
    let mut pixels = vec![0u16; width * height];
    for (col, column) in map.intensity.iter().enumerate() {
        for (j, &p) in column.iter().enumerate() {
            let row = height - 1 - j;
            let v = if span > 0.0 {
                ((log_with_floor(p, floor) - log_min) / span * 65535.0)
                    .round()
                    .clamp(0.0, 65535.0)
            } else {
                0.0
            };
            pixels[row * width + col] = v as u16;
        }
    }
    Ok(RenderedImage {
        width,
        height,
        pixels,
        color_floor: floor,
        log_min,
        log_max,
        field_range: (map.fields[0], *map.fields.last().unwrap()),
        freq_range: (map.frequencies[0], *map.frequencies.last().unwrap()),
    })
}
