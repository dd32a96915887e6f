//! Built-in parameter sets for the two ion-pair sites.

use crate::error::{Error, Result};
use crate::hamiltonian::{IonTensors, OpticalCoupling, PairSiteModel, Parity, StateCouplings};
use crate::tensor::{antisymmetric_matrix, Matrix3, Vector3};

pub const SITE_A_ORIGIN_THZ: f64 = 194.88480;
/// 1534.64 nm
pub const SITE_B_ORIGIN_THZ: f64 = 195.350_348;

pub const SITE_B_G_GROUND: f64 = 232.0;
pub const SITE_B_G_EXCITED: f64 = 188.0;
pub const SITE_B_J00: f64 = 209.0;
pub const SITE_B_J10: f64 = 233.0;
pub const SITE_B_J01: f64 = 220.0;
/// ν₀₁ − ν₁₀ in GHz. The negative sign puts the optical anticrossing at
/// positive field.
pub const SITE_B_DELTA: f64 = -10.8;
pub const SITE_B_KAPPA: f64 = 0.75;

/// Names accepted by [`preset_model`].
pub const PRESET_NAMES: [&str; 3] = ["siteA", "siteB", "siteB-ising"];

pub fn preset_model(name: &str) -> Result<PairSiteModel> {
    match name.to_ascii_lowercase().as_str() {
        "sitea" | "a" => Ok(site_a()),
        "siteb" | "b" => Ok(site_b()),
        "siteb-ising" | "siteb_ising" => Ok(site_b_ising()),
        _ => Err(Error::UnknownPreset(name.to_string())),
    }
}

/// Site B with the perturbations used for the simulated map: ion 2's g
/// values lowered by 1.5 (ground) and 1 (excited) GHz/T, small D-vectors in
/// every state, odd optical coupling between the `10` and `01` manifolds.
pub fn site_b() -> PairSiteModel {
    let d00 = antisymmetric_matrix(Vector3::new(2.0, 0.0, 0.2));
    let d_exc = antisymmetric_matrix(Vector3::new(1.0, 0.0, 0.0));
    PairSiteModel {
        name: "siteB".into(),
        ion1: IonTensors::uniaxial(SITE_B_G_GROUND, SITE_B_G_EXCITED),
        ion2: IonTensors::uniaxial(SITE_B_G_GROUND - 1.5, SITE_B_G_EXCITED - 1.0),
        coupling: StateCouplings {
            g00: Matrix3::diag(0.0, 0.0, SITE_B_J00) + d00,
            e10: Some(Matrix3::diag(0.0, 0.0, SITE_B_J10) + d_exc),
            e01: Some(Matrix3::diag(0.0, 0.0, SITE_B_J01) + d_exc),
            e11: None,
        },
        nu10: 0.0,
        delta: SITE_B_DELTA,
        optical: OpticalCoupling {
            kappa: SITE_B_KAPPA,
            parity: Parity::Odd,
        },
        ion1_active: true,
        ion2_active: true,
        absolute_origin_thz: Some(SITE_B_ORIGIN_THZ),
    }
}

/// Site B reduced to identical ions with pure Ising couplings and no
/// optical coupling.
pub fn site_b_ising() -> PairSiteModel {
    PairSiteModel {
        name: "siteB-ising".into(),
        ion1: IonTensors::uniaxial(SITE_B_G_GROUND, SITE_B_G_EXCITED),
        ion2: IonTensors::uniaxial(SITE_B_G_GROUND, SITE_B_G_EXCITED),
        coupling: StateCouplings {
            g00: Matrix3::diag(0.0, 0.0, SITE_B_J00),
            e10: Some(Matrix3::diag(0.0, 0.0, SITE_B_J10)),
            e01: Some(Matrix3::diag(0.0, 0.0, SITE_B_J01)),
            e11: None,
        },
        nu10: 0.0,
        delta: SITE_B_DELTA,
        optical: OpticalCoupling {
            kappa: 0.0,
            parity: Parity::Odd,
        },
        ion1_active: true,
        ion2_active: true,
        absolute_origin_thz: Some(SITE_B_ORIGIN_THZ),
    }
}

/// Representative site A: only ion 1 is optically active. Its excited
/// g-tensor couples a z field to a spin axis tilted 60° towards x, and its
/// partner has a large transverse g. The couplings are placeholders chosen
/// to give four barely split line pairs; the real tensors are undetermined.
pub fn site_a() -> PairSiteModel {
    let tilt = 60f64.to_radians();
    let n = Vector3::new(tilt.sin(), 0.0, tilt.cos());
    let partner = Matrix3::diag(55.0, 0.0, 2.0);
    PairSiteModel {
        name: "siteA".into(),
        ion1: IonTensors {
            ground: Matrix3::diag(0.0, 0.0, 136.0),
            excited: Matrix3::outer(Vector3::Z, n) * 48.0,
        },
        ion2: IonTensors {
            ground: partner,
            excited: partner,
        },
        coupling: StateCouplings {
            g00: Matrix3::outer(Vector3::Z, Vector3::Z) * 1.3,
            e10: Some(Matrix3::outer(n, Vector3::Z) * 0.2),
            e01: None,
            e11: None,
        },
        nu10: 0.0,
        delta: 0.0,
        optical: OpticalCoupling::default(),
        ion1_active: true,
        ion2_active: false,
        absolute_origin_thz: Some(SITE_A_ORIGIN_THZ),
    }
}
