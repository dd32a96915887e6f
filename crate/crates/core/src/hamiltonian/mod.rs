//! Two-ion spin Hamiltonian per electronic state.
//!
//! Basis ordering: index `2·b₂ + b₁` where `bᵢ = 0` means ion i is spin up,
//! so the four states are ↑↑, ↓↑, ↑↓, ↓↓ with ion 1 written first.

pub mod cmatrix;
pub mod eigen;
pub mod tracking;

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Matrix3, Vector3};
pub use cmatrix::{CMatrix, C64};
pub use eigen::{eigensolve, eigensolve_labeled, EigenSystem};
pub use tracking::{track_levels, TrackedBranches};

/// Electronic configuration of the pair: digit i is 1 when ion i is in its
/// optically excited level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ElectronicState {
    G00,
    E10,
    E01,
    E11,
}

impl ElectronicState {
    pub const ALL: [ElectronicState; 4] = [Self::G00, Self::E10, Self::E01, Self::E11];

    /// Whether (ion 1, ion 2) are excited.
    pub fn excitation(self) -> (bool, bool) {
        match self {
            Self::G00 => (false, false),
            Self::E10 => (true, false),
            Self::E01 => (false, true),
            Self::E11 => (true, true),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::G00 => "00",
            Self::E10 => "10",
            Self::E01 => "01",
            Self::E11 => "11",
        }
    }
}

impl fmt::Display for ElectronicState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Behaviour of the optical coupling under global spin flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

/// Zeeman tensors (GHz/T) of one ion in its two electronic levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IonTensors {
    pub ground: Matrix3,
    pub excited: Matrix3,
}

impl IonTensors {
    pub fn uniaxial(ground_z: f64, excited_z: f64) -> Self {
        IonTensors {
            ground: Matrix3::diag(0.0, 0.0, ground_z),
            excited: Matrix3::diag(0.0, 0.0, excited_z),
        }
    }

    pub fn level(&self, excited: bool) -> &Matrix3 {
        if excited {
            &self.excited
        } else {
            &self.ground
        }
    }

    pub fn level_mut(&mut self, excited: bool) -> &mut Matrix3 {
        if excited {
            &mut self.excited
        } else {
            &mut self.ground
        }
    }
}

/// Spin-spin coupling tensors (GHz), one per electronic state. A missing
/// excited state means that manifold is absent from the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateCouplings {
    pub g00: Matrix3,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e10: Option<Matrix3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e01: Option<Matrix3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e11: Option<Matrix3>,
}

impl StateCouplings {
    pub fn get(&self, state: ElectronicState) -> Option<&Matrix3> {
        match state {
            ElectronicState::G00 => Some(&self.g00),
            ElectronicState::E10 => self.e10.as_ref(),
            ElectronicState::E01 => self.e01.as_ref(),
            ElectronicState::E11 => self.e11.as_ref(),
        }
    }

    pub fn get_mut(&mut self, state: ElectronicState) -> Option<&mut Matrix3> {
        match state {
            ElectronicState::G00 => Some(&mut self.g00),
            ElectronicState::E10 => self.e10.as_mut(),
            ElectronicState::E01 => self.e01.as_mut(),
            ElectronicState::E11 => self.e11.as_mut(),
        }
    }
}

/// Coupling between the two singly excited manifolds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalCoupling {
    /// GHz
    pub kappa: f64,
    pub parity: Parity,
}

impl Default for OpticalCoupling {
    fn default() -> Self {
        OpticalCoupling {
            kappa: 0.0,
            parity: Parity::Even,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSiteModel {
    #[serde(default)]
    pub name: String,
    pub ion1: IonTensors,
    pub ion2: IonTensors,
    pub coupling: StateCouplings,
    /// Optical origin of the `10` manifold, GHz.
    pub nu10: f64,
    /// `ν₀₁ − ν₁₀`, GHz.
    pub delta: f64,
    #[serde(default)]
    pub optical: OpticalCoupling,
    pub ion1_active: bool,
    pub ion2_active: bool,
    /// Absolute frequency of the relative zero, metadata only.
    #[serde(
        default,
        rename = "absolute_origin_THz",
        alias = "absolute_origin_thz",
        skip_serializing_if = "Option::is_none"
    )]
    pub absolute_origin_thz: Option<f64>,
}

impl PairSiteModel {
    pub fn has_state(&self, state: ElectronicState) -> bool {
        self.coupling.get(state).is_some()
    }

    pub fn coupling(&self, state: ElectronicState) -> Result<&Matrix3> {
        self.coupling.get(state).ok_or(Error::MissingState(state))
    }

    /// (M¹, M²) for the given electronic state.
    pub fn gtensors(&self, state: ElectronicState) -> (&Matrix3, &Matrix3) {
        let (e1, e2) = state.excitation();
        (self.ion1.level(e1), self.ion2.level(e2))
    }

    /// Singly excited manifolds present in the model, `10` first.
    pub fn excited_states(&self) -> Vec<ElectronicState> {
        [ElectronicState::E10, ElectronicState::E01]
            .into_iter()
            .filter(|s| self.has_state(*s))
            .collect()
    }

    /// Optical origin (GHz) of a singly excited manifold.
    pub fn origin(&self, state: ElectronicState) -> f64 {
        match state {
            ElectronicState::E01 => self.nu10 + self.delta,
            _ => self.nu10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let tensors = [
            ("ion1.ground", &self.ion1.ground),
            ("ion1.excited", &self.ion1.excited),
            ("ion2.ground", &self.ion2.ground),
            ("ion2.excited", &self.ion2.excited),
        ];
        for (name, m) in tensors {
            if !m.is_finite() {
                return Err(Error::InvalidTensor(format!(
                    "{name} has non-finite entries"
                )));
            }
        }
        for s in ElectronicState::ALL {
            if let Some(j) = self.coupling.get(s) {
                if !j.is_finite() {
                    return Err(Error::InvalidTensor(format!("J{s} has non-finite entries")));
                }
            }
        }
        if !(self.nu10.is_finite() && self.delta.is_finite() && self.optical.kappa.is_finite()) {
            return Err(Error::InvalidTensor("non-finite optical parameter".into()));
        }
        if self.excited_states().is_empty() {
            return Err(Error::MissingState(ElectronicState::E10));
        }
        Ok(())
    }
}

/// Ŝ₁ = I⊗S and Ŝ₂ = S⊗I with S = σ/2, plus the nine products Ŝ₁ᵃŜ₂ᵇ.
#[derive(Debug, Clone)]
pub struct SpinOperators {
    pub s1: [CMatrix; 3],
    pub s2: [CMatrix; 3],
    pub s1s2: [[CMatrix; 3]; 3],
}

pub fn spin_operators() -> &'static SpinOperators {
    static OPS: OnceLock<SpinOperators> = OnceLock::new();
    OPS.get_or_init(|| {
        let h = C64::new(0.5, 0.0);
        let hi = C64::new(0.0, 0.5);
        let z = C64::new(0.0, 0.0);
        let single = [
            CMatrix::from_rows(&[vec![z, h], vec![h, z]]),
            CMatrix::from_rows(&[vec![z, -hi], vec![hi, z]]),
            CMatrix::from_rows(&[vec![h, z], vec![z, -h]]),
        ];
        let id = CMatrix::identity(2);
        let s1 = single.clone().map(|s| CMatrix::kron(&id, &s));
        let s2 = single.map(|s| CMatrix::kron(&s, &id));
        let s1s2 = std::array::from_fn(|a| std::array::from_fn(|b| &s1[a] * &s2[b]));
        SpinOperators { s1, s2, s1s2 }
    })
}

/// `H = B·M¹·Ŝ₁ + B·M²·Ŝ₂ + Ŝ₁·J·Ŝ₂` in GHz.
pub fn pair_hamiltonian(m1: &Matrix3, m2: &Matrix3, j: &Matrix3, b: Vector3) -> CMatrix {
    let ops = spin_operators();
    // effective field seen by each spin: h_b = Σ_a B_a M_ab
    let h1 = m1.transpose().mul_vec(b);
    let h2 = m2.transpose().mul_vec(b);
    let mut h = CMatrix::zeros(4);
    for k in 0..3 {
        if h1[k] != 0.0 {
            h.add_scaled(&ops.s1[k], C64::new(h1[k], 0.0));
        }
        if h2[k] != 0.0 {
            h.add_scaled(&ops.s2[k], C64::new(h2[k], 0.0));
        }
    }
    for a in 0..3 {
        for c in 0..3 {
            if j[(a, c)] != 0.0 {
                h.add_scaled(&ops.s1s2[a][c], C64::new(j[(a, c)], 0.0));
            }
        }
    }
    h
}

pub fn build_pair_hamiltonian(
    model: &PairSiteModel,
    state: ElectronicState,
    b: Vector3,
) -> Result<CMatrix> {
    let j = model.coupling(state)?;
    let (m1, m2) = model.gtensors(state);
    Ok(pair_hamiltonian(m1, m2, j, b))
}

/// Operator used to fix eigenvectors inside degenerate subspaces: total `S_z`
/// with ion 1 weighted slightly heavier so ↑↓ and ↓↑ separate.
pub fn spin_label_operator() -> &'static CMatrix {
    static LABEL: OnceLock<CMatrix> = OnceLock::new();
    LABEL.get_or_init(|| {
        let ops = spin_operators();
        let mut l = &ops.s1[2] + &ops.s2[2];
        l.add_scaled(&ops.s1[2], C64::new(0.25, 0.0));
        l
    })
}

/// Eigen-decomposition of the spin Hamiltonian for one electronic state.
pub fn diagonalize(
    model: &PairSiteModel,
    state: ElectronicState,
    b: Vector3,
) -> Result<EigenSystem> {
    let h = build_pair_hamiltonian(model, state, b)?;
    eigensolve_labeled(&h, spin_label_operator())
}

/// Energies of the four product states for a pure Ising pair with fields
/// along z, in basis order (↑↑, ↓↑, ↑↓, ↓↓).
pub fn ising_energies(g1z: f64, g2z: f64, jzz: f64, bz: f64) -> [f64; 4] {
    std::array::from_fn(|idx| {
        let s1 = if idx & 1 == 0 { 0.5 } else { -0.5 };
        let s2 = if idx & 2 == 0 { 0.5 } else { -0.5 };
        bz * g1z * s1 + bz * g2z * s2 + jzz * s1 * s2
    })
}

/// Zero-field levels of one electronic state grouped into two doublets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroFieldStructure {
    pub levels: EigenSystem,
    /// Mean energy of the lower and upper doublet (GHz).
    pub doublet_centers: [f64; 2],
    /// Internal splitting of the lower and upper doublet (GHz).
    pub doublet_splittings: [f64; 2],
    /// True when the analytic Ising path was used.
    pub ising: bool,
}

impl ZeroFieldStructure {
    /// Distance between the doublet centres.
    pub fn separation(&self) -> f64 {
        self.doublet_centers[1] - self.doublet_centers[0]
    }
}

fn is_pure_ising(j: &Matrix3) -> bool {
    (0..3).all(|a| (0..3).all(|b| (a == 2 && b == 2) || j[(a, b)] == 0.0))
}

pub fn zero_field_structure(
    model: &PairSiteModel,
    state: ElectronicState,
) -> Result<ZeroFieldStructure> {
    let j = model.coupling(state)?;
    let ising = is_pure_ising(j);
    let levels = if ising {
        let e = ising_energies(0.0, 0.0, j[(2, 2)], 0.0);
        // (↓↑, ↑↓) sit at −J/4, (↑↑, ↓↓) at +J/4; order follows the label operator
        let mut idx: Vec<usize> = if j[(2, 2)] >= 0.0 {
            vec![1, 2, 3, 0]
        } else {
            vec![3, 0, 1, 2]
        };
        if j[(2, 2)] == 0.0 {
            idx = vec![3, 1, 2, 0];
        }
        let values = idx.iter().map(|&k| e[k]).collect();
        let vectors = idx
            .iter()
            .map(|&k| {
                let mut v = vec![C64::new(0.0, 0.0); 4];
                v[k] = C64::new(1.0, 0.0);
                v
            })
            .collect();
        EigenSystem { values, vectors }
    } else {
        diagonalize(model, state, Vector3::ZERO)?
    };
    let v = &levels.values;
    Ok(ZeroFieldStructure {
        doublet_centers: [(v[0] + v[1]) / 2.0, (v[2] + v[3]) / 2.0],
        doublet_splittings: [v[1] - v[0], v[3] - v[2]],
        ising,
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::antisymmetric_matrix;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn sorted_eigs(h: &CMatrix) -> Vec<f64> {
        eigensolve(h).unwrap().values
    }

    fn model(m1: Matrix3, m2: Matrix3, j: Matrix3) -> PairSiteModel {
        PairSiteModel {
            name: String::new(),
            ion1: IonTensors {
                ground: m1,
                excited: m1,
            },
            ion2: IonTensors {
                ground: m2,
                excited: m2,
            },
            coupling: StateCouplings {
                g00: j,
                e10: Some(j),
                e01: None,
                e11: None,
            },
            nu10: 0.0,
            delta: 0.0,
            optical: OpticalCoupling::default(),
            ion1_active: true,
            ion2_active: true,
            absolute_origin_thz: None,
        }
    }

    #[test]
    fn spin_operators_on_different_ions_commute() {
        let ops = spin_operators();
        for a in 0..3 {
            for b in 0..3 {
                let ab = &ops.s1[a] * &ops.s2[b];
                let ba = &ops.s2[b] * &ops.s1[a];
                assert!(ab.max_abs_diff(&ba) < 1e-15);
            }
        }
    }

    #[test]
    fn single_spin_spectra() {
        let ops = spin_operators();
        assert_eq!(sorted_eigs(&ops.s1[2]), vec![-0.5, -0.5, 0.5, 0.5]);
        assert_eq!(sorted_eigs(&ops.s2[0]).len(), 4);
        assert_eq!(sorted_eigs(&ops.s1s2[2][2]), vec![-0.25, -0.25, 0.25, 0.25]);
        // ion 1 is the fast index
        assert_eq!(ops.s1[2][(1, 1)].re, -0.5);
        assert_eq!(ops.s2[2][(1, 1)].re, 0.5);
    }

    #[test]
    fn spin_commutation_relation() {
        let ops = spin_operators();
        let xy = &ops.s1[0] * &ops.s1[1];
        let yx = &ops.s1[1] * &ops.s1[0];
        let mut comm = xy.clone();
        comm.add_scaled(&yx, C64::new(-1.0, 0.0));
        let want = ops.s1[2].scale(C64::new(0.0, 1.0));
        assert!(comm.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn ising_zero_field_spectrum() {
        let h = pair_hamiltonian(
            &Matrix3::ZERO,
            &Matrix3::ZERO,
            &Matrix3::diag(0.0, 0.0, 209.0),
            Vector3::ZERO,
        );
        let e = sorted_eigs(&h);
        for (a, b) in e.iter().zip([-52.25, -52.25, 52.25, 52.25]) {
            assert!(close(*a, b, 1e-12));
        }
    }

    #[test]
    fn two_free_spins_in_field() {
        let g = Matrix3::diag(0.0, 0.0, 232.0);
        let h = pair_hamiltonian(&g, &g, &Matrix3::ZERO, Vector3::new(0.0, 0.0, 0.5));
        let e = sorted_eigs(&h);
        for (a, b) in e.iter().zip([-116.0, 0.0, 0.0, 116.0]) {
            assert!(close(*a, b, 1e-12));
        }
    }

    #[test]
    fn zero_inputs_give_zero_hamiltonian() {
        let h = pair_hamiltonian(
            &Matrix3::ZERO,
            &Matrix3::ZERO,
            &Matrix3::ZERO,
            Vector3::ZERO,
        );
        assert_eq!(h, CMatrix::zeros(4));
    }

    #[test]
    fn single_ion_doublet_splits_by_g_times_b() {
        let g = Matrix3::diag(0.0, 0.0, 188.0);
        let h = pair_hamiltonian(
            &g,
            &Matrix3::ZERO,
            &Matrix3::ZERO,
            Vector3::new(0.0, 0.0, 1.0),
        );
        let e = sorted_eigs(&h);
        assert!(close(e[3] - e[0], 188.0, 1e-12));
    }

    #[test]
    fn transverse_g_tensor_uses_row_field_convention() {
        // M with only M_xz: a field along x drives S_z
        let mut m = Matrix3::ZERO;
        m[(0, 2)] = 100.0;
        let h = pair_hamiltonian(
            &m,
            &Matrix3::ZERO,
            &Matrix3::ZERO,
            Vector3::new(1.0, 0.0, 0.0),
        );
        assert!(close(h[(0, 0)].re, 50.0, 1e-12));
        let h = pair_hamiltonian(
            &m,
            &Matrix3::ZERO,
            &Matrix3::ZERO,
            Vector3::new(0.0, 0.0, 1.0),
        );
        assert_eq!(h, CMatrix::zeros(4));
    }

    #[test]
    fn crossing_field_makes_middle_levels_degenerate() {
        let g = Matrix3::diag(0.0, 0.0, 232.0);
        let j = Matrix3::diag(0.0, 0.0, 209.0);
        let bz = 209.0 / (2.0 * 232.0);
        let h = pair_hamiltonian(&g, &g, &j, Vector3::new(0.0, 0.0, bz));
        let e = sorted_eigs(&h);
        assert!(close(e[1], e[2], 1e-9), "{e:?}");
    }

    #[test]
    fn missing_state_is_an_error() {
        let m = model(Matrix3::ZERO, Matrix3::ZERO, Matrix3::ZERO);
        assert!(matches!(
            build_pair_hamiltonian(&m, ElectronicState::E01, Vector3::ZERO),
            Err(Error::MissingState(ElectronicState::E01))
        ));
    }

    #[test]
    fn zero_field_doublets() {
        let m = model(Matrix3::ZERO, Matrix3::ZERO, Matrix3::diag(0.0, 0.0, 233.0));
        let z = zero_field_structure(&m, ElectronicState::G00).unwrap();
        assert!(z.ising);
        assert!(close(z.separation(), 116.5, 1e-12));
        assert_eq!(z.doublet_splittings, [0.0, 0.0]);

        let m = model(Matrix3::ZERO, Matrix3::ZERO, Matrix3::ZERO);
        let z = zero_field_structure(&m, ElectronicState::G00).unwrap();
        assert_eq!(z.levels.values, vec![0.0; 4]);
    }

    #[test]
    fn antisymmetric_term_splits_lower_doublet() {
        let j = Matrix3::diag(0.0, 0.0, 209.0) + antisymmetric_matrix(Vector3::new(0.0, 0.0, 0.15));
        let m = model(Matrix3::ZERO, Matrix3::ZERO, j);
        let z = zero_field_structure(&m, ElectronicState::G00).unwrap();
        assert!(!z.ising);
        assert!(close(z.doublet_splittings[0], 0.15, 1e-12), "{z:?}");
        assert!(close(z.doublet_splittings[1], 0.0, 1e-12));
    }

    #[test]
    fn ising_fast_path_matches_eigensolver() {
        let m = model(Matrix3::ZERO, Matrix3::ZERO, Matrix3::diag(0.0, 0.0, -40.0));
        let fast = zero_field_structure(&m, ElectronicState::G00).unwrap();
        let slow = diagonalize(&m, ElectronicState::G00, Vector3::ZERO).unwrap();
        assert_eq!(fast.levels.values, slow.values);
        for (a, b) in fast.levels.vectors.iter().zip(&slow.vectors) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_basis_is_spin_labelled() {
        let m = model(Matrix3::ZERO, Matrix3::ZERO, Matrix3::diag(0.0, 0.0, 100.0));
        let es = diagonalize(&m, ElectronicState::G00, Vector3::ZERO).unwrap();
        let dominant: Vec<usize> = es
            .vectors
            .iter()
            .map(|v| v.iter().position(|c| c.norm() > 0.9).unwrap())
            .collect();
        // ↓↑ then ↑↓ in the lower doublet, ↓↓ then ↑↑ in the upper
        assert_eq!(dominant, vec![1, 2, 3, 0]);
    }
}
