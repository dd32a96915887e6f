//! File formats: peak lists, spectral maps, raw measured maps, PGM images and
//! the JSON model configuration.

mod config;
mod extract;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fit::Peak;
use crate::spectrum::{Provenance, RenderedImage, SpectrumMap};
use crate::tensor::Vector3;

pub use config::{ModelConfig, Presentation, SCHEMA_VERSION};
pub use extract::{extract_peaks, read_raw_map, write_raw_map, ExtractOptions, RawMap};

pub const PEAK_HEADER: [&str; 3] = ["field_T", "frequency_GHz", "weight"];
pub const SPECTRUM_HEADER: [&str; 3] = ["field_T", "frequency_GHz", "intensity"];

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

fn parse_error(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path_str(path),
        line,
        msg: msg.into(),
    }
}

/// Leading `# key: value` lines.
fn read_metadata(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .map(str::trim)
        .take_while(|l| l.starts_with('#') || l.is_empty())
        .filter_map(|l| l.trim_start_matches('#').split_once(':'))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes())
}

fn record_line(rec: &csv::StringRecord) -> usize {
    rec.position().map_or(0, |p| p.line() as usize)
}

fn parse_number(path: &Path, rec: &csv::StringRecord, col: usize, name: &str) -> Result<f64> {
    let line = record_line(rec);
    let raw = rec
        .get(col)
        .ok_or_else(|| parse_error(path, line, format!("missing {name}")))?;
    let v: f64 = raw
        .parse()
        .map_err(|_| parse_error(path, line, format!("{name} `{raw}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_error(path, line, format!("{name} is not finite")));
    }
    Ok(v)
}

fn check_header(
    path: &Path,
    rec: &csv::StringRecord,
    expected: &[&str],
    required: usize,
) -> Result<()> {
    let got: Vec<&str> = rec.iter().collect();
    let ok = got.len() >= required
        && got.len() <= expected.len() + 1
        && got.iter().zip(expected).all(|(a, b)| a == b);
    if !ok {
        return Err(parse_error(
            path,
            record_line(rec).max(1),
            format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                got.join(",")
            ),
        ));
    }
    Ok(())
}

/// Read a peak list with header `field_T,frequency_GHz,weight`. The weight
/// column is optional (default 1) and may be followed by a label column.
/// Peaks come back sorted by field, then frequency.
pub fn read_peaks(path: &Path) -> Result<Vec<Peak>> {
    let text = fs::read_to_string(path)?;
    if text
        .lines()
        .all(|l| l.trim().is_empty() || l.trim_start().starts_with('#'))
    {
        log::warn!("{}: no peaks", path.display());
        return Ok(Vec::new());
    }
    let mut rdr = csv_reader(&text);
    let header = rdr
        .headers()
        .map_err(|e| parse_error(path, 1, e.to_string()))?
        .clone();
    check_header(path, &header, &PEAK_HEADER, 2)?;
    let mut peaks = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            parse_error(
                path,
                e.position().map_or(0, |p| p.line() as usize),
                e.to_string(),
            )
        })?;
        let line = record_line(&rec);
        let field = parse_number(path, &rec, 0, "field_T")?;
        let frequency = parse_number(path, &rec, 1, "frequency_GHz")?;
        let weight = match rec.get(2).filter(|s| !s.is_empty()) {
            Some(_) => parse_number(path, &rec, 2, "weight")?,
            None => 1.0,
        };
        if weight <= 0.0 {
            return Err(parse_error(path, line, "weight must be positive"));
        }
        let label = rec.get(3).filter(|s| !s.is_empty()).map(str::to_string);
        peaks.push(Peak {
            field,
            frequency,
            weight,
            label,
        });
    }
    if peaks.is_empty() {
        log::warn!("{}: no peaks", path.display());
    }
    sort_peaks(&mut peaks);
    Ok(peaks)
}

pub fn sort_peaks(peaks: &mut [Peak]) {
    peaks.sort_by(|a, b| {
        a.field
            .total_cmp(&b.field)
            .then(a.frequency.total_cmp(&b.frequency))
    });
}

/// Values are written in shortest round-trip form, so reading them back is
/// exact.
pub fn write_peaks(peaks: &[Peak], path: &Path) -> Result<()> {
    let mut out = String::new();
    let with_labels = peaks.iter().any(|p| p.label.is_some());
    out.push_str(&PEAK_HEADER.join(","));
    if with_labels {
        out.push_str(",label");
    }
    out.push('\n');
    for p in peaks {
        write!(out, "{},{},{}", p.field, p.frequency, p.weight).unwrap();
        if with_labels {
            write!(out, ",{}", p.label.as_deref().unwrap_or("")).unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Row axis, column axis and values indexed `[row][col]`.
type Grid = (Vec<f64>, Vec<f64>, Vec<Vec<f64>>);

/// Collects `(row, column, value)` triples into a rectangular grid whose
/// axes follow first appearance.
struct GridBuilder {
    rows: Vec<f64>,
    cols: Vec<f64>,
    row_index: BTreeMap<u64, usize>,
    col_index: BTreeMap<u64, usize>,
    cells: Vec<(usize, usize, f64, usize)>,
}

impl GridBuilder {
    fn new() -> Self {
        GridBuilder {
            rows: Vec::new(),
            cols: Vec::new(),
            row_index: BTreeMap::new(),
            col_index: BTreeMap::new(),
            cells: Vec::new(),
        }
    }

    fn push(&mut self, r: f64, c: f64, v: f64, line: usize) {
        // -0.0 and 0.0 are the same axis value
        let key = |x: f64| (x + 0.0).to_bits();
        let ri = *self.row_index.entry(key(r)).or_insert_with(|| {
            self.rows.push(r);
            self.rows.len() - 1
        });
        let ci = *self.col_index.entry(key(c)).or_insert_with(|| {
            self.cols.push(c);
            self.cols.len() - 1
        });
        self.cells.push((ri, ci, v, line));
    }

    /// `(rows, cols, grid[row][col])`.
    fn finish(self, path: &Path) -> Result<Grid> {
        let (nr, nc) = (self.rows.len(), self.cols.len());
        let mut grid = vec![vec![f64::NAN; nc]; nr];
        for (r, c, v, line) in self.cells {
            if !grid[r][c].is_nan() {
                return Err(parse_error(path, line, "duplicate grid point"));
            }
            grid[r][c] = v;
        }
        if grid.iter().flatten().any(|v| v.is_nan()) {
            return Err(Error::InvalidMap(format!(
                "{}: grid is not rectangular ({nr} fields × {nc} frequencies with gaps)",
                path.display()
            )));
        }
        Ok((self.rows, self.cols, grid))
    }
}

fn provenance_from(meta: &BTreeMap<String, String>) -> Option<Provenance> {
    let num = |k: &str| meta.get(k)?.parse::<f64>().ok();
    let axis: Vec<f64> = meta
        .get("axis")?
        .split(',')
        .map(|s| s.trim().parse().ok())
        .collect::<Option<_>>()?;
    if axis.len() != 3 {
        return None;
    }
    Some(Provenance {
        model_hash: meta.get("model_hash")?.clone(),
        axis: Vector3::new(axis[0], axis[1], axis[2]),
        b_min: num("b_min")?,
        b_max: num("b_max")?,
        steps: meta.get("steps")?.parse().ok()?,
        sigma: num("sigma")?,
    })
}

/// Write a map as CSV `field_T,frequency_GHz,intensity`, field-major, nine
/// significant digits. Provenance goes into leading comment lines.
pub fn write_spectrum(map: &SpectrumMap, path: &Path) -> Result<()> {
    map.validate()?;
    let mut out = String::new();
    if let Some(p) = &map.provenance {
        writeln!(out, "# model_hash: {}", p.model_hash).unwrap();
        writeln!(out, "# axis: {},{},{}", p.axis[0], p.axis[1], p.axis[2]).unwrap();
        writeln!(out, "# b_min: {}", p.b_min).unwrap();
        writeln!(out, "# b_max: {}", p.b_max).unwrap();
        writeln!(out, "# steps: {}", p.steps).unwrap();
        writeln!(out, "# sigma: {}", p.sigma).unwrap();
    }
    out.push_str(&SPECTRUM_HEADER.join(","));
    out.push('\n');
    for (b, column) in map.fields.iter().zip(&map.intensity) {
        for (f, p) in map.frequencies.iter().zip(column) {
            writeln!(out, "{b:.8e},{f:.8e},{p:.8e}").unwrap();
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_spectrum(path: &Path) -> Result<SpectrumMap> {
    let text = fs::read_to_string(path)?;
    let meta = read_metadata(&text);
    let mut rdr = csv_reader(&text);
    let header = rdr
        .headers()
        .map_err(|e| parse_error(path, 1, e.to_string()))?
        .clone();
    check_header(path, &header, &SPECTRUM_HEADER, 3)?;
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
        let p = parse_number(path, &rec, 2, "intensity")?;
        grid.push(b, f, p, record_line(&rec));
    }
    let (fields, frequencies, intensity) = grid.finish(path)?;
    let map = SpectrumMap {
        fields,
        frequencies,
        intensity,
        provenance: provenance_from(&meta),
    };
    map.validate()?;
    Ok(map)
}

/// Binary 16-bit PGM (`P5`, big-endian, maxval 65535). Comment lines record
/// the colour transform and the axes.
pub fn write_image(img: &RenderedImage, path: &Path) -> Result<()> {
    if img.width == 0 || img.height == 0 || img.pixels.len() != img.width * img.height {
        return Err(Error::EmptyMap);
    }
    let mut out = Vec::with_capacity(128 + 2 * img.pixels.len());
    let mut header = String::from("P5\n");
    writeln!(header, "# spinpair spectral map").unwrap();
    writeln!(header, "# transform: log10(P+{})", img.color_floor).unwrap();
    writeln!(header, "# log_range: {} {}", img.log_min, img.log_max).unwrap();
    writeln!(
        header,
        "# columns: field_T {} {}",
        img.field_range.0, img.field_range.1
    )
    .unwrap();
    writeln!(
        header,
        "# rows: frequency_GHz {} {} (top row highest)",
        img.freq_range.1, img.freq_range.0
    )
    .unwrap();
    writeln!(header, "{} {}", img.width, img.height).unwrap();
    writeln!(header, "65535").unwrap();
    out.extend_from_slice(header.as_bytes());
    for p in &img.pixels {
        out.extend_from_slice(&p.to_be_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

/// Pixels and comment lines of a 16-bit PGM written by [`write_image`].
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u16>,
    pub comments: Vec<String>,
}

pub fn read_image(path: &Path) -> Result<Pgm> {
    let bytes = fs::read(path)?;
    let bad = |msg: &str| parse_error(path, 0, msg);
    let mut pos = 0;
    let mut tokens = Vec::new();
    let mut comments = Vec::new();
    // header: magic, width, height, maxval, separated by whitespace/comments
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos >= bytes.len() {
            return Err(bad("truncated PGM header"));
        }
        if bytes[pos] == b'#' {
            let end = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .map_or(bytes.len(), |e| pos + e);
            comments.push(
                String::from_utf8_lossy(&bytes[pos + 1..end])
                    .trim()
                    .to_string(),
            );
            pos = end;
            continue;
        }
        let end = bytes[pos..]
            .iter()
            .position(|b| b.is_ascii_whitespace())
            .map_or(bytes.len(), |e| pos + e);
        tokens.push(String::from_utf8_lossy(&bytes[pos..end]).to_string());
        pos = end;
    }
    // exactly one whitespace byte before the raster
    pos += 1;
    if tokens[0] != "P5" {
        return Err(bad("not a binary PGM"));
    }
    let width: usize = tokens[1].parse().map_err(|_| bad("bad width"))?;
    let height: usize = tokens[2].parse().map_err(|_| bad("bad height"))?;
    if tokens[3] != "65535" {
        return Err(bad("expected maxval 65535"));
    }
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() != 2 * width * height {
        return Err(bad("raster size does not match the header"));
    }
    let pixels = raster
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok(Pgm {
        width,
        height,
        pixels,
        comments,
    })
}

pub fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
