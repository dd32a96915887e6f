//! Optical transitions between the ground and singly excited manifolds.

pub mod anticross;
pub mod map;
pub mod presets;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::cmatrix::{inner, CMatrix, C64};
use crate::hamiltonian::{
    build_pair_hamiltonian, diagonalize, eigensolve_labeled, spin_label_operator, EigenSystem,
    ElectronicState, PairSiteModel, Parity,
};
use crate::tensor::Vector3;

pub use anticross::{
    dark_state_analysis, detect_anticrossings, detect_crossings, AnticrossOptions,
    AnticrossingKind, AnticrossingReport, Branch, CrossingReport, DarkBranch,
};
pub use map::{
    log_transform, render_map, render_map_with_floor, sweep, MapOptions, Provenance, RenderedImage,
    SpectrumMap, Sweep, SweepSpec, COLOR_FLOOR,
};
pub use presets::{preset_model, site_a, site_b, site_b_ising};

/// Weight above which an excited eigenstate is attributed to one manifold.
pub const MANIFOLD_PURITY: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FinalManifold {
    E10,
    E01,
    Mixed,
}

impl fmt::Display for FinalManifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FinalManifold::E10 => "10",
            FinalManifold::E01 => "01",
            FinalManifold::Mixed => "mixed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionLine {
    pub field: Vector3,
    /// GHz, relative to the model's frequency zero.
    pub frequency: f64,
    pub intensity: f64,
    pub initial_index: usize,
    pub final_index: usize,
    pub final_manifold: FinalManifold,
}

/// Hamiltonian of all singly excited states present in the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitedManifold {
    /// Electronic state of each 4×4 block, in basis order.
    pub blocks: Vec<ElectronicState>,
    pub hamiltonian: CMatrix,
}

impl ExcitedManifold {
    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }
}

/// Sign of the optical coupling on each spin basis state.
fn parity_signs(parity: Parity) -> [f64; 4] {
    match parity {
        Parity::Even => [1.0; 4],
        // odd under a global spin flip: +1 when ion 1 is up
        Parity::Odd => [1.0, -1.0, 1.0, -1.0],
    }
}

/// `[ν₁₀ + H¹⁰, K; K†, ν₀₁ + H⁰¹]` with `K = κ·diag(ε)`; a single 4×4 block
/// when only one excited state is modelled.
pub fn excited_manifold_hamiltonian(model: &PairSiteModel, b: Vector3) -> Result<ExcitedManifold> {
    let blocks = model.excited_states();
    if blocks.is_empty() {
        return Err(Error::MissingState(ElectronicState::E10));
    }
    let mut h = CMatrix::zeros(4 * blocks.len());
    for (k, &s) in blocks.iter().enumerate() {
        let mut hs = build_pair_hamiltonian(model, s, b)?;
        hs.add_scaled(&CMatrix::identity(4), C64::new(model.origin(s), 0.0));
        h.set_block(4 * k, 4 * k, &hs);
    }
    if blocks.len() == 2 {
        let eps = parity_signs(model.optical.parity);
        for (i, e) in eps.iter().enumerate() {
            let v = C64::new(model.optical.kappa * e, 0.0);
            h[(i, 4 + i)] = v;
            h[(4 + i, i)] = v.conj();
        }
    }
    Ok(ExcitedManifold {
        blocks,
        hamiltonian: h,
    })
}

/// Degenerate-subspace label for the excited manifold: the spin label inside
/// each block, offset so the two blocks never mix.
fn excited_label(n_blocks: usize) -> CMatrix {
    let l = spin_label_operator();
    if n_blocks == 1 {
        return l.clone();
    }
    let mut out = CMatrix::zeros(8);
    let mut upper = l.clone();
    upper.add_scaled(&CMatrix::identity(4), C64::new(3.0, 0.0));
    let mut lower = l.clone();
    lower.add_scaled(&CMatrix::identity(4), C64::new(-3.0, 0.0));
    out.set_block(0, 0, &upper);
    out.set_block(4, 4, &lower);
    out
}

/// Ground and excited eigen-systems at one field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Levels {
    pub field: Vector3,
    pub ground: EigenSystem,
    pub excited: EigenSystem,
    pub blocks: Vec<ElectronicState>,
}

impl Levels {
    /// Weight of an excited eigenvector in each block.
    pub fn block_weights(&self, f: usize) -> Vec<f64> {
        block_weights(&self.excited.vectors[f], self.blocks.len())
    }
}

pub(crate) fn block_weights(v: &[C64], n_blocks: usize) -> Vec<f64> {
    (0..n_blocks)
        .map(|k| v[4 * k..4 * k + 4].iter().map(|c| c.norm_sqr()).sum())
        .collect()
}

pub fn levels(model: &PairSiteModel, b: Vector3) -> Result<Levels> {
    let ground = diagonalize(model, ElectronicState::G00, b)?;
    let exc = excited_manifold_hamiltonian(model, b)?;
    let excited = eigensolve_labeled(&exc.hamiltonian, &excited_label(exc.blocks.len()))?;
    Ok(Levels {
        field: b,
        ground,
        excited,
        blocks: exc.blocks,
    })
}

/// Optical amplitude of each block: 1 for an optically active ion's
/// excitation, 0 otherwise.
pub(crate) fn block_amplitudes(model: &PairSiteModel, blocks: &[ElectronicState]) -> Vec<f64> {
    blocks
        .iter()
        .map(|s| {
            let active = match s {
                ElectronicState::E10 => model.ion1_active,
                ElectronicState::E01 => model.ion2_active,
                _ => false,
            };
            if active {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// `|Σ_m a_m ⟨f_m|ψ⟩|²` over excited blocks m.
pub fn transition_intensity(excited: &[C64], ground: &[C64], amplitudes: &[f64]) -> f64 {
    let mut amp = C64::new(0.0, 0.0);
    for (k, &a) in amplitudes.iter().enumerate() {
        if a != 0.0 {
            amp += inner(&excited[4 * k..4 * k + 4], ground) * a;
        }
    }
    amp.norm_sqr()
}

pub fn classify_manifold(weights: &[f64], blocks: &[ElectronicState]) -> FinalManifold {
    for (w, s) in weights.iter().zip(blocks) {
        if *w >= MANIFOLD_PURITY {
            return match s {
                ElectronicState::E01 => FinalManifold::E01,
                _ => FinalManifold::E10,
            };
        }
    }
    FinalManifold::Mixed
}

/// Every ground → excited line at one field (zero-intensity lines included).
pub fn lines_from_levels(model: &PairSiteModel, lv: &Levels) -> Vec<TransitionLine> {
    let amps = block_amplitudes(model, &lv.blocks);
    let mut out = Vec::with_capacity(lv.ground.dim() * lv.excited.dim());
    for (f, (ef, vf)) in lv
        .excited
        .values
        .iter()
        .zip(&lv.excited.vectors)
        .enumerate()
    {
        let manifold = classify_manifold(&lv.block_weights(f), &lv.blocks);
        for (i, (ei, vi)) in lv.ground.values.iter().zip(&lv.ground.vectors).enumerate() {
            out.push(TransitionLine {
                field: lv.field,
                frequency: ef - ei,
                intensity: transition_intensity(vf, vi, &amps),
                initial_index: i,
                final_index: f,
                final_manifold: manifold,
            });
        }
    }
    out
}

pub fn transition_lines(model: &PairSiteModel, b: Vector3) -> Result<Vec<TransitionLine>> {
    model.validate()?;
    Ok(lines_from_levels(model, &levels(model, b)?))
}

/// Readable name of a basis state: `"↓↑"` for the ground manifold,
/// `"10:↓↑"` for the excited one. Ion 1 is written first.
pub fn basis_label(index: usize, blocks: Option<&[ElectronicState]>) -> String {
    let spin = index % 4;
    let arrow = |down: bool| if down { '↓' } else { '↑' };
    let s: String = [arrow(spin & 1 == 1), arrow(spin & 2 == 2)]
        .iter()
        .collect();
    match blocks {
        Some(b) => format!("{}:{}", b[index / 4], s),
        None => s,
    }
}
