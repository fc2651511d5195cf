//! Phase-versus-probability statistics and source back-action bounds.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::constants::Constants;
use crate::error::{Error, Result};
use crate::grid::{integrate_time, TimeGrid};
use crate::sources::MovingSource;
use crate::trajectory::Trajectory;
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseDataPoint {
    /// Probability on the upper arm.
    pub p_upper: f64,
    /// Measured phase (rad).
    pub phase: f64,
    /// One-sigma uncertainty (rad).
    pub sigma: f64,
}

impl PhaseDataPoint {
    pub fn new(p_upper: f64, phase: f64, sigma: f64) -> Self {
        PhaseDataPoint { p_upper, phase, sigma }
    }

    fn validate(&self, i: usize) -> Result<()> {
        if !(self.p_upper > 0.0 && self.p_upper < 1.0) {
            return Err(Error::Validation(format!(
                "point {i}: p_upper must lie in (0, 1), got {}",
                self.p_upper
            )));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Validation(format!(
                "point {i}: sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !self.phase.is_finite() {
            return Err(Error::Validation(format!("point {i}: phase is not finite")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PValueModel {
    /// Normal approximation to the slope statistic.
    #[default]
    Normal,
    /// Student-t with `n - 2` degrees of freedom.
    StudentT,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub slope: f64,
    pub slope_sigma: f64,
    pub intercept: f64,
    pub intercept_sigma: f64,
    /// Two-sided p-value for a non-zero slope.
    pub p_value: f64,
    pub chi2_red: f64,
    pub dof: usize,
}

/// Weighted straight-line fit with the normal-approximation p-value.
pub fn weighted_linear_fit(data: &[PhaseDataPoint]) -> Result<FitResult> {
    weighted_linear_fit_with(data, PValueModel::Normal)
}

/// Weighted (1 / sigma^2) least squares for `phase = intercept + slope * p_upper`.
pub fn weighted_linear_fit_with(data: &[PhaseDataPoint], model: PValueModel) -> Result<FitResult> {
    if data.len() < 3 {
        return Err(Error::Validation(format!(
            "a line fit with a goodness-of-fit needs at least 3 points, got {}",
            data.len()
        )));
    }
    for (i, p) in data.iter().enumerate() {
        p.validate(i)?;
    }
    let w: Vec<f64> = data.iter().map(|p| 1.0 / (p.sigma * p.sigma)).collect();
    let sw: f64 = w.iter().sum();
    let xbar = data.iter().zip(&w).map(|(p, w)| w * p.p_upper).sum::<f64>() / sw;
    let ybar = data.iter().zip(&w).map(|(p, w)| w * p.phase).sum::<f64>() / sw;
    let sxx: f64 = data.iter().zip(&w).map(|(p, w)| w * (p.p_upper - xbar).powi(2)).sum();
    let sxy: f64 = data
        .iter()
        .zip(&w)
        .map(|(p, w)| w * (p.p_upper - xbar) * (p.phase - ybar))
        .sum();
    let sxx_scale: f64 = data.iter().zip(&w).map(|(p, w)| w * p.p_upper * p.p_upper).sum();
    if !(sxx > 1e-14 * sxx_scale) {
        return Err(Error::Rank("abscissae are degenerate; the slope is undetermined".into()));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let slope_sigma = (1.0 / sxx).sqrt();
    let intercept_sigma = (1.0 / sw + xbar * xbar / sxx).sqrt();
    let dof = data.len() - 2;
    let chi2: f64 = data
        .iter()
        .zip(&w)
        .map(|(p, w)| w * (p.phase - intercept - slope * p.p_upper).powi(2))
        .sum();
    let z = (slope / slope_sigma).abs();
    let tail = match model {
        // statrs' erfc drifts by ~1e-11 here; the musl port is good to an ulp.
        PValueModel::Normal => 0.5 * libm::erfc(z / std::f64::consts::SQRT_2),
        PValueModel::StudentT => StudentsT::new(0.0, 1.0, dof as f64)
            .map_err(|e| Error::Validation(e.to_string()))?
            .sf(z),
    };
    Ok(FitResult {
        slope,
        slope_sigma,
        intercept,
        intercept_sigma,
        p_value: (2.0 * tail).min(1.0),
        chi2_red: chi2 / dof as f64,
        dof,
    })
}

/// Model prediction for [`reduced_chi_squared`].
#[derive(Debug, Clone, Copy)]
pub enum ModelValues<'a> {
    Constant(f64),
    PerPoint(&'a [f64]),
}

/// `sum(((phase - model) / sigma)^2) / n` for a model with no fitted parameters.
pub fn reduced_chi_squared(data: &[PhaseDataPoint], model: ModelValues<'_>) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Validation("reduced chi-squared needs at least one point".into()));
    }
    if let ModelValues::PerPoint(v) = model {
        if v.len() != data.len() {
            return Err(Error::Validation(format!(
                "{} model values for {} points",
                v.len(),
                data.len()
            )));
        }
    }
    let mut sum = 0.0;
    for (i, p) in data.iter().enumerate() {
        p.validate(i)?;
        let m = match model {
            ModelValues::Constant(m) => m,
            ModelValues::PerPoint(v) => v[i],
        };
        sum += ((p.phase - m) / p.sigma).powi(2);
    }
    Ok(sum / data.len() as f64)
}

/// Test-particle branches and the source they pull on.
#[derive(Debug, Clone)]
pub struct BackactionScenario {
    pub x1: Trajectory,
    pub x2: Trajectory,
    pub source: MovingSource,
    /// Test-particle mass (kg).
    pub m: f64,
    pub grid: TimeGrid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackactionBounds {
    /// `hbar / (2 M delta_v)` (m).
    pub position_uncertainty: f64,
    /// Larger of the two branch deflections at the end of the grid (m).
    pub max_source_deflection: f64,
    pub branch_deflection: [f64; 2],
}

/// Source acceleration in branch `arm` at time `t`: the reaction to the
/// source's pull on the test particle.
pub fn source_recoil(s: &BackactionScenario, arm: usize, source_mass: f64, t: f64, c: &Constants) -> Result<Vec3> {
    let x = if arm == 0 { &s.x1 } else { &s.x2 };
    let g = s.source.field_at(x.position(t), t, c)?;
    Ok(g * (-s.m / source_mass))
}

/// Quantum position spread of the source against its gravitational
/// deflection by the test particle, measured at the end of the grid
/// relative to the unperturbed source path.
pub fn backaction_bounds(
    source_mass: f64,
    delta_v: f64,
    scenario: &BackactionScenario,
    c: &Constants,
) -> Result<BackactionBounds> {
    if !(source_mass > 0.0 && delta_v > 0.0) {
        return Err(Error::Validation(
            "source mass and velocity spread must be positive".into(),
        ));
    }
    let position_uncertainty = c.hbar / (2.0 * source_mass * delta_v);
    let t_end = scenario.grid.t1();
    let mut branch_deflection = [0.0; 2];
    for (arm, slot) in branch_deflection.iter_mut().enumerate() {
        // Starting from rest, delta(t_end) = int (t_end - t) a(t) dt.
        let mut comps = [Vec::new(), Vec::new(), Vec::new()];
        for t in scenario.grid.times() {
            let a = source_recoil(scenario, arm, source_mass, t, c)? * (t_end - t);
            for (k, v) in comps.iter_mut().enumerate() {
                v.push(a[k]);
            }
        }
        let mut d = Vec3::zeros();
        for (k, v) in comps.iter().enumerate() {
            d[k] = integrate_time(v, &scenario.grid)?;
        }
        *slot = d.norm();
    }
    Ok(BackactionBounds {
        position_uncertainty,
        max_source_deflection: branch_deflection[0].max(branch_deflection[1]),
        branch_deflection,
    })
}
