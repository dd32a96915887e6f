//! Optical-Zeeman simulation and fitting for exchange-coupled pairs of
//! Kramers ions.
//!
//! Each ion is an effective spin-½ in its ground and optically excited
//! level. A pair in a given electronic state is described by the Zeeman
//! tensors of both ions and a 3×3 spin-spin coupling tensor; optical lines are
//! the transitions from the four ground pair states to the excited manifold.

pub mod error;
pub mod fit;
pub mod hamiltonian;
pub mod interaction;
pub mod io;
pub mod parallel;
pub mod spectrum;
pub mod tensor;

pub use error::{Error, Result};
pub use fit::{fit_model, FitResult, FitSpec, ParamKey, Peak};
pub use hamiltonian::{
    diagonalize, eigensolve, zero_field_structure, EigenSystem, ElectronicState, IonTensors,
    OpticalCoupling, PairSiteModel, Parity, StateCouplings,
};
pub use interaction::{dipole_coupling, exchange_report, min_exchange_scan, ExchangeInput};
pub use io::{ModelConfig, RawMap};
pub use spectrum::presets::{preset_model, site_a, site_b, site_b_ising};
pub use spectrum::{
    detect_anticrossings, render_map, sweep, transition_lines, AnticrossingReport, SpectrumMap,
    SweepSpec, TransitionLine,
};
pub use tensor::{Matrix3, Vector3};
