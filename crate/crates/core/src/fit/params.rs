//! Named scalar parameters of a [`PairSiteModel`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{ElectronicState, PairSiteModel};
use crate::tensor::{antisymmetric_matrix, decompose_coupling, Vector3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ion {
    /// Both ions together; the offset between them is preserved.
    Both,
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKey {
    /// g_zz of the ground (`excited = false`) or excited level.
    Gz {
        excited: bool,
        ion: Ion,
    },
    Jzz(ElectronicState),
    /// Component 0..3 of the D-vector of one state.
    D(ElectronicState, usize),
    Delta,
    Nu10,
    Kappa,
}

impl ParamKey {
    /// Every key that is meaningful for `model`, in a stable order.
    pub fn all_for(model: &PairSiteModel) -> Vec<ParamKey> {
        let mut keys = Vec::new();
        for excited in [false, true] {
            for ion in [Ion::One, Ion::Two] {
                keys.push(ParamKey::Gz { excited, ion });
            }
        }
        for s in ElectronicState::ALL
            .into_iter()
            .filter(|s| model.has_state(*s))
        {
            keys.push(ParamKey::Jzz(s));
        }
        for s in ElectronicState::ALL
            .into_iter()
            .filter(|s| model.has_state(*s))
        {
            for c in 0..3 {
                keys.push(ParamKey::D(s, c));
            }
        }
        keys.extend([ParamKey::Delta, ParamKey::Nu10, ParamKey::Kappa]);
        keys
    }

    pub fn unit(&self) -> &'static str {
        match self {
            ParamKey::Gz { .. } => "GHz/T",
            _ => "GHz",
        }
    }

    pub fn get(&self, m: &PairSiteModel) -> Result<f64> {
        Ok(match *self {
            ParamKey::Gz { excited, ion } => match ion {
                Ion::Both | Ion::One => m.ion1.level(excited)[(2, 2)],
                Ion::Two => m.ion2.level(excited)[(2, 2)],
            },
            ParamKey::Jzz(s) => m.coupling(s)?[(2, 2)],
            ParamKey::D(s, c) => decompose_coupling(m.coupling(s)?).d[c],
            ParamKey::Delta => m.delta,
            ParamKey::Nu10 => m.nu10,
            ParamKey::Kappa => m.optical.kappa,
        })
    }

    pub fn set(&self, m: &mut PairSiteModel, v: f64) -> Result<()> {
        match *self {
            ParamKey::Gz { excited, ion } => match ion {
                Ion::One => m.ion1.level_mut(excited)[(2, 2)] = v,
                Ion::Two => m.ion2.level_mut(excited)[(2, 2)] = v,
                Ion::Both => {
                    let offset = m.ion2.level(excited)[(2, 2)] - m.ion1.level(excited)[(2, 2)];
                    m.ion1.level_mut(excited)[(2, 2)] = v;
                    m.ion2.level_mut(excited)[(2, 2)] = v + offset;
                }
            },
            ParamKey::Jzz(s) => {
                m.coupling.get_mut(s).ok_or(Error::MissingState(s))?[(2, 2)] = v;
            }
            ParamKey::D(s, c) => {
                let j = m.coupling.get_mut(s).ok_or(Error::MissingState(s))?;
                let current = decompose_coupling(j).d[c];
                let mut step = [0.0; 3];
                step[c] = v - current;
                *j += antisymmetric_matrix(Vector3::from_array(step));
            }
            ParamKey::Delta => m.delta = v,
            ParamKey::Nu10 => m.nu10 = v,
            ParamKey::Kappa => m.optical.kappa = v,
        }
        Ok(())
    }

    /// Bounds used when the caller gives none.
    pub fn default_bounds(&self, value: f64) -> (f64, f64) {
        match self {
            ParamKey::Gz { .. } | ParamKey::Jzz(_) => {
                let w = (0.3 * value.abs()).max(5.0);
                (value - w, value + w)
            }
            ParamKey::D(..) => (value - 5.0, value + 5.0),
            ParamKey::Delta | ParamKey::Nu10 => (value - 30.0, value + 30.0),
            ParamKey::Kappa => (0.0, value.abs().max(1.0) * 4.0),
        }
    }
}

fn state_digits(s: ElectronicState) -> &'static str {
    s.label()
}

impl fmt::Display for ParamKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamKey::Gz { excited, ion } => {
                let level = if *excited { 1 } else { 0 };
                match ion {
                    Ion::Both => write!(f, "g{level}z"),
                    Ion::One => write!(f, "g{level}z_1"),
                    Ion::Two => write!(f, "g{level}z_2"),
                }
            }
            ParamKey::Jzz(s) => write!(f, "J{}zz", state_digits(*s)),
            ParamKey::D(s, c) => write!(f, "D{}{}", state_digits(*s), ['x', 'y', 'z'][*c]),
            ParamKey::Delta => f.write_str("delta"),
            ParamKey::Nu10 => f.write_str("nu10"),
            ParamKey::Kappa => f.write_str("kappa"),
        }
    }
}

fn parse_state(s: &str) -> Option<ElectronicState> {
    ElectronicState::ALL.into_iter().find(|st| st.label() == s)
}

impl FromStr for ParamKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownParameter(s.to_string());
        match s {
            "delta" => return Ok(ParamKey::Delta),
            "nu10" => return Ok(ParamKey::Nu10),
            "kappa" => return Ok(ParamKey::Kappa),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix('g') {
            let (level, tail) = rest.split_at_checked(1).ok_or_else(bad)?;
            let excited = match level {
                "0" => false,
                "1" => true,
                _ => return Err(bad()),
            };
            let ion = match tail {
                "z" => Ion::Both,
                "z_1" => Ion::One,
                "z_2" => Ion::Two,
                _ => return Err(bad()),
            };
            return Ok(ParamKey::Gz { excited, ion });
        }
        if let Some(rest) = s.strip_prefix('J') {
            let state = rest
                .strip_suffix("zz")
                .and_then(parse_state)
                .ok_or_else(bad)?;
            return Ok(ParamKey::Jzz(state));
        }
        if let Some(rest) = s.strip_prefix('D') {
            let (digits, comp) = rest.split_at_checked(2).ok_or_else(bad)?;
            let state = parse_state(digits).ok_or_else(bad)?;
            let c = match comp {
                "x" => 0,
                "y" => 1,
                "z" => 2,
                _ => return Err(bad()),
            };
            return Ok(ParamKey::D(state, c));
        }
        Err(bad())
    }
}

impl Serialize for ParamKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ParamKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parse a comma-separated key list such as `g0z,g1z,J00zz`.
pub fn parse_keys(list: &str) -> Result<Vec<ParamKey>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}
