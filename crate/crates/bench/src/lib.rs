//! Shared inputs for the benchmarks in `benches/`.

use spinpair::{transition_lines, PairSiteModel, Peak, Vector3};

/// Peaks for every line of `model` brighter than `min_intensity` at
/// `n_fields` fields from 0.05 T upward along z.
pub fn synthetic_peaks(model: &PairSiteModel, n_fields: usize, min_intensity: f64) -> Vec<Peak> {
    let mut peaks = Vec::new();
    for k in 1..=n_fields {
        let b = 0.05 * k as f64;
        let lines =
            transition_lines(model, Vector3::new(0.0, 0.0, b)).expect("preset model diagonalises");
        peaks.extend(
            lines
                .iter()
                .filter(|l| l.intensity >= min_intensity)
                .map(|l| Peak::new(b, l.frequency)),
        );
    }
    peaks
}
