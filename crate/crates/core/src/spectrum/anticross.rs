//! Crossings and anticrossings of tracked levels, and dark-branch analysis
//! of optical anticrossings.

use serde::{Deserialize, Serialize};

use super::map::{sweep, Sweep, SweepSpec};
use super::{
    block_amplitudes, block_weights, excited_label, excited_manifold_hamiltonian,
    transition_intensity,
};
use crate::error::Result;
use crate::hamiltonian::cmatrix::C64;
use crate::hamiltonian::{
    diagonalize, eigensolve_labeled, ElectronicState, PairSiteModel, TrackedBranches,
};
use crate::spectrum::basis_label;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnticrossOptions {
    /// Gaps above this (GHz) are ignored.
    pub gap_ceiling: f64,
    /// Refined gaps below this (GHz) are treated as true crossings.
    pub min_gap: f64,
    /// A branch is dark when its intensity is below this fraction of its partner's.
    pub dark_ratio: f64,
    /// Minimum basis weight for a state to be listed as involved.
    pub involvement: f64,
    /// `10`-manifold weight window that marks a state as optically mixed.
    pub optical_window: (f64, f64),
}

impl Default for AnticrossOptions {
    fn default() -> Self {
        AnticrossOptions {
            gap_ceiling: 10.0,
            min_gap: 1e-9,
            dark_ratio: 0.01,
            involvement: 0.25,
            optical_window: (0.2, 0.8),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Ground,
    Excited,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnticrossingKind {
    Spin,
    Optical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DarkBranch {
    Upper,
    Lower,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnticrossingReport {
    pub manifold: Branch,
    /// T along the sweep axis.
    pub center_field: f64,
    /// Midpoint of the two branches relative to the lowest ground level (GHz).
    pub center_frequency: f64,
    pub min_gap: f64,
    pub kind: AnticrossingKind,
    pub dark_branch: DarkBranch,
    /// Strongest transition intensity into the lower and upper branch
    /// (excited manifold only).
    pub branch_intensities: Option<[f64; 2]>,
    /// Basis states carrying at least the involvement weight in either branch.
    pub involved: Vec<String>,
    /// Tracked branch indices.
    pub branches: [usize; 2],
    /// The two branches come from different zero-field doublets (parallel
    /// versus antiparallel spins).
    pub between_doublets: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingReport {
    pub manifold: Branch,
    /// T along the sweep axis, linearly interpolated.
    pub field: f64,
    pub energy: f64,
    pub branches: [usize; 2],
    pub between_doublets: bool,
}

/// `⟨4·S₁ᶻS₂ᶻ⟩`: +1 for parallel, −1 for antiparallel spins.
fn ising_parity(v: &[C64]) -> f64 {
    v.iter()
        .enumerate()
        .map(|(i, c)| {
            let spin = i % 4;
            let parallel = spin == 0 || spin == 3;
            if parallel {
                c.norm_sqr()
            } else {
                -c.norm_sqr()
            }
        })
        .sum()
}

fn between_doublets(a: &[C64], b: &[C64]) -> bool {
    (ising_parity(a) + ising_parity(b)).abs() < 1.0
}

struct Probe<'a> {
    model: &'a PairSiteModel,
    sweep: &'a Sweep,
    manifold: Branch,
}

impl Probe<'_> {
    fn eigen(&self, b: f64) -> Result<(Vec<f64>, Vec<Vec<C64>>)> {
        let field = self.sweep.direction * b;
        let es = match self.manifold {
            Branch::Ground => diagonalize(self.model, ElectronicState::G00, field)?,
            Branch::Excited => {
                let exc = excited_manifold_hamiltonian(self.model, field)?;
                eigensolve_labeled(&exc.hamiltonian, &excited_label(exc.blocks.len()))?
            }
        };
        Ok((es.values, es.vectors))
    }

    fn gap(&self, b: f64, p: usize) -> Result<f64> {
        let (e, _) = self.eigen(b)?;
        Ok(e[p + 1] - e[p])
    }

    /// Golden-section search for the smallest sorted gap at position `p`.
    fn refine(&self, lo: f64, hi: f64, p: usize) -> Result<(f64, f64)> {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (lo, hi);
        let mut c = b - r * (b - a);
        let mut d = a + r * (b - a);
        let mut fc = self.gap(c, p)?;
        let mut fd = self.gap(d, p)?;
        for _ in 0..80 {
            if (b - a).abs() < 1e-10 {
                break;
            }
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - r * (b - a);
                fc = self.gap(c, p)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + r * (b - a);
                fd = self.gap(d, p)?;
            }
        }
        let x = 0.5 * (a + b);
        Ok((x, self.gap(x, p)?))
    }
}

fn scan_pairs(tb: &TrackedBranches) -> impl Iterator<Item = (usize, usize)> + '_ {
    let n = tb.n_branches();
    (0..n).flat_map(move |k| ((k + 1)..n).map(move |l| (k, l)))
}

fn sorted_position(tb: &TrackedBranches, step: usize, branch: usize) -> usize {
    tb.permutations[step][branch]
}

/// Local minima of the gap between tracked branches that stay ordered (no
/// crossing) and below the ceiling, refined by direct diagonalisation.
pub fn detect_anticrossings(
    model: &PairSiteModel,
    sw: &Sweep,
    opts: &AnticrossOptions,
) -> Result<Vec<AnticrossingReport>> {
    let (ground, excited) = sw.track()?;
    let mut out = Vec::new();
    for (manifold, tb) in [(Branch::Ground, &ground), (Branch::Excited, &excited)] {
        let probe = Probe {
            model,
            sweep: sw,
            manifold,
        };
        let mut found: Vec<AnticrossingReport> = Vec::new();
        for (k, l) in scan_pairs(tb) {
            let g: Vec<f64> = tb.steps.iter().map(|s| s.values[l] - s.values[k]).collect();
            for i in 1..g.len() - 1 {
                let (a, b, c) = (g[i - 1], g[i], g[i + 1]);
                let same_sign = (a > 0.0 && b > 0.0 && c > 0.0) || (a < 0.0 && b < 0.0 && c < 0.0);
                // eigenvalue round-off must not turn a flat gap into minima
                let eps = 1e-7;
                let is_min = a.abs() - b.abs() > eps && c.abs() - b.abs() >= -eps;
                if !same_sign || !is_min || b.abs() >= opts.gap_ceiling {
                    continue;
                }
                let (pk, pl) = (sorted_position(tb, i, k), sorted_position(tb, i, l));
                if pk.abs_diff(pl) != 1 {
                    continue;
                }
                let p = pk.min(pl);
                let (bc, gap) = probe.refine(sw.fields[i - 1], sw.fields[i + 1], p)?;
                if gap < opts.min_gap || gap >= opts.gap_ceiling {
                    continue;
                }
                let report = describe(model, &probe, bc, p, gap, [k, l], opts)?;
                let duplicate = found.iter().any(|r| {
                    r.branches == report.branches
                        && (r.center_field - report.center_field).abs() < 1e-6
                });
                if !duplicate {
                    found.push(report);
                }
            }
        }
        out.extend(found);
    }
    out.sort_by(|a, b| a.center_field.total_cmp(&b.center_field));
    Ok(out)
}

fn describe(
    model: &PairSiteModel,
    probe: &Probe,
    b: f64,
    p: usize,
    gap: f64,
    branches: [usize; 2],
    opts: &AnticrossOptions,
) -> Result<AnticrossingReport> {
    let (e, v) = probe.eigen(b)?;
    let ground = diagonalize(model, ElectronicState::G00, probe.sweep.direction * b)?;
    let center_frequency = 0.5 * (e[p] + e[p + 1]) - ground.values[0];
    let (lower, upper) = (&v[p], &v[p + 1]);

    let blocks = match probe.manifold {
        Branch::Ground => None,
        Branch::Excited => Some(model.excited_states()),
    };
    let mut involved = Vec::new();
    for idx in 0..lower.len() {
        if lower[idx].norm_sqr() >= opts.involvement || upper[idx].norm_sqr() >= opts.involvement {
            involved.push(basis_label(idx, blocks.as_deref()));
        }
    }

    let mut kind = AnticrossingKind::Spin;
    let mut dark_branch = DarkBranch::None;
    let mut branch_intensities = None;
    if let Some(blocks) = &blocks {
        if blocks.len() == 2 {
            let (lo, hi) = opts.optical_window;
            let mixed = |x: &[C64]| {
                let w = block_weights(x, 2)[0];
                w >= lo && w <= hi
            };
            if mixed(lower) && mixed(upper) {
                kind = AnticrossingKind::Optical;
            }
        }
        let amps = block_amplitudes(model, blocks);
        let strongest = |x: &[C64]| {
            ground
                .vectors
                .iter()
                .map(|g| transition_intensity(x, g, &amps))
                .fold(0.0, f64::max)
        };
        let (il, iu) = (strongest(lower), strongest(upper));
        branch_intensities = Some([il, iu]);
        if kind == AnticrossingKind::Optical {
            if il < opts.dark_ratio * iu {
                dark_branch = DarkBranch::Lower;
            } else if iu < opts.dark_ratio * il {
                dark_branch = DarkBranch::Upper;
            }
        }
    }

    Ok(AnticrossingReport {
        manifold: probe.manifold,
        center_field: b,
        center_frequency,
        min_gap: gap,
        kind,
        dark_branch,
        branch_intensities,
        involved,
        branches,
        between_doublets: between_doublets(lower, upper),
    })
}

/// Sign changes of the gap between tracked branches that are neighbours in
/// energy: true level crossings.
pub fn detect_crossings(sw: &Sweep) -> Result<Vec<CrossingReport>> {
    let (ground, excited) = sw.track()?;
    let mut out = Vec::new();
    for (manifold, tb) in [(Branch::Ground, &ground), (Branch::Excited, &excited)] {
        for (k, l) in scan_pairs(tb) {
            for i in 0..tb.n_steps() - 1 {
                let (s0, s1) = (&tb.steps[i], &tb.steps[i + 1]);
                let g0 = s0.values[l] - s0.values[k];
                let g1 = s1.values[l] - s1.values[k];
                if !(g0 * g1 < 0.0 || (g0 == 0.0 && g1 != 0.0 && i > 0)) {
                    continue;
                }
                let adjacent = sorted_position(tb, i, k).abs_diff(sorted_position(tb, i, l)) == 1
                    || sorted_position(tb, i + 1, k).abs_diff(sorted_position(tb, i + 1, l)) == 1;
                if !adjacent {
                    continue;
                }
                let t = g0 / (g0 - g1);
                let field = sw.fields[i] + t * (sw.fields[i + 1] - sw.fields[i]);
                let ek = s0.values[k] + t * (s1.values[k] - s0.values[k]);
                out.push(CrossingReport {
                    manifold,
                    field,
                    energy: ek,
                    branches: [k, l],
                    between_doublets: between_doublets(&s0.vectors[k], &s0.vectors[l]),
                });
            }
        }
    }
    out.sort_by(|a, b| a.field.total_cmp(&b.field));
    Ok(out)
}

/// Optical anticrossings over a sweep together with which branch is dark.
/// Empty unless both ions are optically active and κ ≠ 0.
pub fn dark_state_analysis(
    model: &PairSiteModel,
    spec: &SweepSpec,
    opts: &AnticrossOptions,
) -> Result<Vec<AnticrossingReport>> {
    if !(model.ion1_active && model.ion2_active)
        || model.optical.kappa == 0.0
        || model.excited_states().len() < 2
    {
        return Ok(Vec::new());
    }
    let sw = sweep(model, spec)?;
    Ok(detect_anticrossings(model, &sw, opts)?
        .into_iter()
        .filter(|r| r.kind == AnticrossingKind::Optical)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::Parity;
    use crate::spectrum::presets::{site_b, site_b_ising};

    #[test]
    fn ising_parity_values() {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        assert_eq!(ising_parity(&[one, zero, zero, zero]), 1.0);
        assert_eq!(ising_parity(&[zero, one, zero, zero]), -1.0);
        assert_eq!(
            ising_parity(&[zero, zero, zero, zero, zero, zero, zero, one]),
            1.0
        );
    }

    #[test]
    fn pure_ising_has_only_crossings() {
        let model = site_b_ising();
        let sw = sweep(&model, &SweepSpec::along_z(0.3, 0.7, 401)).unwrap();
        let ac = detect_anticrossings(&model, &sw, &AnticrossOptions::default()).unwrap();
        assert!(ac.is_empty(), "{ac:?}");
        let cr = detect_crossings(&sw).unwrap();
        let ground: Vec<f64> = cr
            .iter()
            .filter(|c| c.manifold == Branch::Ground && c.between_doublets)
            .map(|c| c.field)
            .collect();
        assert!(
            ground.iter().any(|b| (b - 209.0 / 464.0).abs() < 1e-6),
            "{ground:?}"
        );
    }

    #[test]
    fn optical_anticrossing_has_a_dark_branch() {
        let model = site_b();
        let opts = AnticrossOptions::default();
        let pos = dark_state_analysis(&model, &SweepSpec::along_z(0.05, 0.3, 251), &opts).unwrap();
        let neg =
            dark_state_analysis(&model, &SweepSpec::along_z(-0.3, -0.05, 251), &opts).unwrap();
        assert_eq!(pos.len(), 1, "{pos:?}");
        assert_eq!(neg.len(), 1, "{neg:?}");
        assert!((pos[0].min_gap - 1.5).abs() < 0.02);
        assert_ne!(pos[0].dark_branch, DarkBranch::None);
        assert_ne!(pos[0].dark_branch, neg[0].dark_branch);
        assert_ne!(neg[0].dark_branch, DarkBranch::None);
    }

    #[test]
    fn even_parity_dark_side_does_not_flip() {
        let mut model = site_b();
        model.optical.parity = Parity::Even;
        let opts = AnticrossOptions::default();
        let pos = dark_state_analysis(&model, &SweepSpec::along_z(0.05, 0.3, 251), &opts).unwrap();
        let neg =
            dark_state_analysis(&model, &SweepSpec::along_z(-0.3, -0.05, 251), &opts).unwrap();
        assert_eq!(pos.len(), 1);
        assert_eq!(neg.len(), 1);
        assert_eq!(pos[0].dark_branch, neg[0].dark_branch);
    }

    #[test]
    fn no_optical_anticrossing_without_coupling() {
        let mut model = site_b();
        model.optical.kappa = 0.0;
        let r = dark_state_analysis(
            &model,
            &SweepSpec::along_z(0.05, 0.3, 251),
            &AnticrossOptions::default(),
        )
        .unwrap();
        assert!(r.is_empty());
    }
}
