use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    csv_reader, parse_error, parse_number, read_metadata, record_line, sort_peaks, GridBuilder,
};
use crate::error::{Error, Result};
use crate::fit::Peak;

pub const RAW_HEADER: [&str; 3] = ["field_T", "frequency_GHz", "current"];

/// Consistency factor making the MAD an estimate of a Gaussian σ.
const MAD_TO_SIGMA: f64 = 1.4826;

/// A measured map: detector current on a field × frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawMap {
    /// T
    pub fields: Vec<f64>,
    /// GHz
    pub frequencies: Vec<f64>,
    /// `current[i][j]` at `fields[i]`, `frequencies[j]`; arbitrary units.
    pub current: Vec<Vec<f64>>,
    /// Free-form metadata such as `device` or `orientation`.
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

fn strictly_monotone(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0]) || v.windows(2).all(|w| w[1] < w[0])
}

impl RawMap {
    pub fn validate(&self) -> Result<()> {
        if self.fields.is_empty() || self.frequencies.is_empty() {
            return Err(Error::EmptyMap);
        }
        if self.current.len() != self.fields.len()
            || self
                .current
                .iter()
                .any(|c| c.len() != self.frequencies.len())
        {
            return Err(Error::InvalidMap(
                "grid dimensions disagree with axes".into(),
            ));
        }
        if !strictly_monotone(&self.fields) || !strictly_monotone(&self.frequencies) {
            return Err(Error::InvalidMap("axes must be strictly monotone".into()));
        }
        if self.current.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMap("non-finite current".into()));
        }
        Ok(())
    }
}

/// Long-format CSV `field_T,frequency_GHz,current`; leading `# key: value`
/// lines become metadata.
pub fn read_raw_map(path: &Path) -> Result<RawMap> {
    let text = fs::read_to_string(path)?;
    let metadata = read_metadata(&text);
    let mut rdr = csv_reader(&text);
    let header = rdr
        .headers()
        .map_err(|e| parse_error(path, 1, e.to_string()))?
        .clone();
    super::check_header(path, &header, &RAW_HEADER, 3)?;
    let mut grid = GridBuilder::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            parse_error(
                path,
                e.position().map_or(0, |p| p.line() as usize),
                e.to_string(),
            )
        })?;
        let b = parse_number(path, &rec, 0, "field_T")?;
        let f = parse_number(path, &rec, 1, "frequency_GHz")?;
        let c = parse_number(path, &rec, 2, "current")?;
        grid.push(b, f, c, record_line(&rec));
    }
    let (fields, frequencies, current) = grid.finish(path)?;
    let map = RawMap {
        fields,
        frequencies,
        current,
        metadata,
    };
    map.validate()?;
    Ok(map)
}

/// Shortest round-trip formatting, so [`read_raw_map`] recovers the map
/// exactly.
pub fn write_raw_map(map: &RawMap, path: &Path) -> Result<()> {
    map.validate()?;
    let mut out = String::new();
    for (k, v) in &map.metadata {
        writeln!(out, "# {k}: {v}").unwrap();
    }
    out.push_str(&RAW_HEADER.join(","));
    out.push('\n');
    for (b, column) in map.fields.iter().zip(&map.current) {
        for (f, c) in map.frequencies.iter().zip(column) {
            writeln!(out, "{b},{f},{c}").unwrap();
        }
    }
    fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractOptions {
    /// Detection threshold in units of the MAD-derived noise σ.
    pub k_mad: f64,
    /// Maxima closer than this (GHz) to a taller kept maximum are dropped.
    pub min_separation: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            k_mad: 5.0,
            min_separation: 0.3,
        }
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Peaks of one field column: `(frequency, signal/noise)`.
fn column_peaks(freqs: &[f64], column: &[f64], opts: &ExtractOptions) -> Option<Vec<(f64, f64)>> {
    let mut work = column.to_vec();
    let med = median(&mut work);
    let signal: Vec<f64> = column.iter().map(|v| v - med).collect();
    let mut dev: Vec<f64> = signal.iter().map(|d| d.abs()).collect();
    let noise = MAD_TO_SIGMA * median(&mut dev);
    if noise == 0.0 {
        return None;
    }
    let threshold = opts.k_mad * noise;
    let mut maxima: Vec<usize> = (1..signal.len() - 1)
        .filter(|&j| {
            signal[j] > threshold && signal[j] > signal[j - 1] && signal[j] >= signal[j + 1]
        })
        .collect();
    maxima.sort_by(|&a, &b| signal[b].total_cmp(&signal[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for j in maxima {
        if kept
            .iter()
            .all(|&k| (freqs[k] - freqs[j]).abs() >= opts.min_separation)
        {
            kept.push(j);
        }
    }
    Some(
        kept.into_iter()
            .map(|j| {
                // parabola through the maximum and its neighbours
                let (a, b, c) = (signal[j - 1], signal[j], signal[j + 1]);
                let denom = a - 2.0 * b + c;
                let offset = if denom < 0.0 {
                    (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
                } else {
                    0.0
                };
                let f = if offset >= 0.0 {
                    freqs[j] + offset * (freqs[j + 1] - freqs[j])
                } else {
                    freqs[j] + offset * (freqs[j] - freqs[j - 1])
                };
                (f, b / noise)
            })
            .collect(),
    )
}

/// Detect peaks column by column: subtract the column median, estimate the
/// noise from the median absolute deviation, keep local maxima above
/// `k_mad` noise units and refine them parabolically. Weights are the
/// signal-to-noise ratios. Constant columns are skipped with a warning.
pub fn extract_peaks(map: &RawMap, opts: &ExtractOptions) -> Result<Vec<Peak>> {
    map.validate()?;
    if map.fields.len() < 3 || map.frequencies.len() < 3 {
        return Err(Error::InvalidMap(
            "peak extraction needs at least 3 points per axis".into(),
        ));
    }
    if opts.k_mad.is_nan()
        || opts.k_mad <= 0.0
        || opts.min_separation.is_nan()
        || opts.min_separation < 0.0
    {
        return Err(Error::InvalidMap(
            "k_mad must be positive and min_separation non-negative".into(),
        ));
    }
    let mut peaks = Vec::new();
    for (&b, column) in map.fields.iter().zip(&map.current) {
        match column_peaks(&map.frequencies, column, opts) {
            Some(found) => peaks.extend(found.into_iter().map(|(f, snr)| Peak {
                field: b,
                frequency: f,
                weight: snr,
                label: None,
            })),
            None => log::warn!(
                "column at {b} T has no noise scale (constant or mostly constant); skipped"
            ),
        }
    }
    sort_peaks(&mut peaks);
    Ok(peaks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use tempfile::tempdir;

    fn grid(n_fields: usize, n_freq: usize, step: f64) -> (Vec<f64>, Vec<f64>) {
        (
            (0..n_fields).map(|i| 0.1 * i as f64).collect(),
            (0..n_freq).map(|j| -5.0 + step * j as f64).collect(),
        )
    }

    fn noisy_map(ridges: &[f64], amp: f64, seed: u64) -> RawMap {
        let (fields, frequencies) = grid(12, 201, 0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let current = fields
            .iter()
            .enumerate()
            .map(|(i, _)| {
                frequencies
                    .iter()
                    .map(|&f| {
                        let centre_shift = 0.01 * i as f64;
                        let s: f64 = ridges
                            .iter()
                            .map(|r| amp * (-((f - r - centre_shift) / 0.15).powi(2) / 2.0).exp())
                            .sum();
                        s + noise.sample(&mut rng)
                    })
                    .collect()
            })
            .collect();
        RawMap {
            fields,
            frequencies,
            current,
            metadata: BTreeMap::new(),
        }
    }

    #[test]
    fn single_ridge_found_in_every_column() {
        let map = noisy_map(&[0.537], 40.0, 1);
        let peaks = extract_peaks(&map, &ExtractOptions::default()).unwrap();
        assert_eq!(peaks.len(), map.fields.len());
        for (i, p) in peaks.iter().enumerate() {
            let centre = 0.537 + 0.01 * i as f64;
            assert!(
                (p.frequency - centre).abs() <= 0.05,
                "{} vs {centre}",
                p.frequency
            );
            assert!(p.weight > 20.0);
        }
    }

    #[test]
    fn two_separated_ridges_both_reported() {
        let map = noisy_map(&[-1.0, 1.0], 40.0, 2);
        let peaks = extract_peaks(&map, &ExtractOptions::default()).unwrap();
        assert_eq!(peaks.len(), 2 * map.fields.len());
    }

    #[test]
    fn close_maxima_keep_the_larger() {
        let freqs: Vec<f64> = (0..9).map(|j| 0.1 * j as f64).collect();
        let spikes = [0.0, 0.0, 10.0, 0.0, 12.0, 0.0, 0.0, 0.0, 0.1];
        let opts = ExtractOptions {
            k_mad: 5.0,
            min_separation: 0.3,
        };
        // a small ripple gives the column a non-zero noise scale
        let column: Vec<f64> = spikes
            .iter()
            .enumerate()
            .map(|(j, v)| v + 0.01 * (j % 3) as f64)
            .collect();
        let found = column_peaks(&freqs, &column, &opts).unwrap();
        assert_eq!(found.len(), 1);
        assert!((found[0].0 - 0.4).abs() < 0.05);
    }

    #[test]
    fn constant_columns_are_skipped() {
        let (fields, frequencies) = grid(3, 10, 0.1);
        let mut current = vec![vec![2.0; 10]; 3];
        current[1][4] = 100.0;
        current[1][3] = 1.0;
        current[1][7] = 3.0;
        current[1][8] = 1.5;
        current[1][2] = 2.5;
        current[1][1] = 1.8;
        let map = RawMap {
            fields,
            frequencies,
            current,
            metadata: BTreeMap::new(),
        };
        let peaks = extract_peaks(&map, &ExtractOptions::default()).unwrap();
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].field, 0.1);
    }

    #[test]
    fn small_grids_are_rejected() {
        let map = RawMap {
            fields: vec![0.0, 1.0],
            frequencies: vec![0.0, 1.0, 2.0],
            current: vec![vec![0.0; 3]; 2],
            metadata: BTreeMap::new(),
        };
        assert!(matches!(
            extract_peaks(&map, &ExtractOptions::default()),
            Err(Error::InvalidMap(_))
        ));
    }

    #[test]
    fn raw_map_round_trip() {
        let d = tempdir().unwrap();
        let p = d.path().join("raw.csv");
        let mut map = noisy_map(&[0.0], 5.0, 3);
        map.metadata.insert("device".into(), "chip-7".into());
        map.metadata.insert("orientation".into(), "B || c".into());
        write_raw_map(&map, &p).unwrap();
        assert_eq!(read_raw_map(&p).unwrap(), map);
    }

    #[test]
    fn non_monotone_axis_is_rejected() {
        let d = tempdir().unwrap();
        let p = d.path().join("raw.csv");
        fs::write(
            &p,
            "field_T,frequency_GHz,current\n0,0,1\n0,2,1\n0,1,1\n1,0,1\n1,2,1\n1,1,1\n",
        )
        .unwrap();
        assert!(matches!(read_raw_map(&p), Err(Error::InvalidMap(_))));
    }
}
