//! Physical constants shared by every computation.
//!
//! A single versioned set ships with the crate (`constants.toml`). Scenario
//! files may override individual values; after loading, a [`Constants`] value
//! is immutable and passed by reference everywhere.

use serde::Deserialize;

use crate::error::{Error, Result};

const SHIPPED: &str = include_str!("constants.toml");

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    /// Newton's gravitational constant, m^3 kg^-1 s^-2.
    pub g_newton: f64,
    /// Reduced Planck constant, J s.
    pub hbar: f64,
    /// Vacuum permittivity, F m^-1.
    pub eps0: f64,
    /// Rubidium-87 atomic mass, kg.
    pub m_rb87: f64,
    /// Beamsplitter laser wavelength, m.
    pub lambda_l: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantsFile {
    version: String,
    #[serde(rename = "G_m3_per_kg_s2")]
    g: f64,
    #[serde(rename = "hbar_J_s")]
    hbar_j_s: f64,
    #[serde(rename = "eps0_F_per_m")]
    eps0_f_per_m: f64,
    m_rb87_kg: f64,
    #[serde(rename = "lambda_L_m")]
    lambda_l_m: f64,
}

/// Optional per-scenario overrides; every field keeps its unit suffix.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsOverride {
    #[serde(rename = "G_m3_per_kg_s2")]
    pub g: Option<f64>,
    #[serde(rename = "hbar_J_s")]
    pub hbar_j_s: Option<f64>,
    #[serde(rename = "eps0_F_per_m")]
    pub eps0_f_per_m: Option<f64>,
    pub m_rb87_kg: Option<f64>,
    #[serde(rename = "lambda_L_m")]
    pub lambda_l_m: Option<f64>,
}

impl Constants {
    /// Version tag of the shipped constants file.
    pub fn shipped_version() -> String {
        toml::from_str::<ConstantsFile>(SHIPPED)
            .map(|f| f.version)
            .unwrap_or_default()
    }

    pub fn new(g_newton: f64, hbar: f64, eps0: f64, m_rb87: f64, lambda_l: f64) -> Result<Self> {
        let c = Constants {
            g_newton,
            hbar,
            eps0,
            m_rb87,
            lambda_l,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_overrides(&self, o: &ConstantsOverride) -> Result<Self> {
        Constants::new(
            o.g.unwrap_or(self.g_newton),
            o.hbar_j_s.unwrap_or(self.hbar),
            o.eps0_f_per_m.unwrap_or(self.eps0),
            o.m_rb87_kg.unwrap_or(self.m_rb87),
            o.lambda_l_m.unwrap_or(self.lambda_l),
        )
    }

    fn validate(&self) -> Result<()> {
        let named = [
            ("G", self.g_newton),
            ("hbar", self.hbar),
            ("eps0", self.eps0),
            ("m_Rb87", self.m_rb87),
            ("lambda_L", self.lambda_l),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!(
                    "constant {name} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Coulomb constant 1/(4 pi eps0).
    pub fn coulomb(&self) -> f64 {
        1.0 / (4.0 * std::f64::consts::PI * self.eps0)
    }

    /// Laser wave number 2 pi / lambda_L.
    pub fn k_laser(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.lambda_l
    }
}

impl Default for Constants {
    fn default() -> Self {
        let f: ConstantsFile =
            toml::from_str(SHIPPED).expect("shipped constants file is valid TOML");
        Constants::new(f.g, f.hbar_j_s, f.eps0_f_per_m, f.m_rb87_kg, f.lambda_l_m)
            .expect("shipped constants are positive")
    }
}
