//! Interaction energy as a volume integral of the field cross term.
//!
//! Both sources are reduced to point charges (arcs to their quadrature
//! nodes, which is exact by bilinearity). For each pair the integral of
//! `2 F_i . F_j` over all space is evaluated on a two-center grid: a smooth
//! partition of unity `w_c = r_o^8 / (r_c^8 + r_o^8)` splits space between
//! the two centers, and each share is integrated in spherical coordinates
//! about its own center with the polar axis along the pair, so the
//! integrand is axisymmetric. Radii run log-mapped over
//! `[exclusion_radius, domain_radius]` and inverse-mapped over
//! `[domain_radius, inf)`, so nothing is truncated. The excised ball around
//! each center carries no cross-term flux up to `O((eps / d)^8)`.

use std::f64::consts::PI;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use super::{Coupling, SourceModel};
use crate::constants::Constants;
use crate::error::{Error, Result};
use crate::grid::GaussLegendre;

const PANEL_ORDER: usize = 8;
const MAX_LEVEL: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    /// Radius splitting the log-mapped inner shell from the inverse-mapped exterior (m).
    pub domain_radius: f64,
    /// Radial panels per region at the coarsest level.
    pub radial_cells: usize,
    /// Polar panels at the coarsest level.
    pub angular_cells: usize,
    /// Ball excised around each point singularity (m).
    pub exclusion_radius: f64,
    pub rel_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            domain_radius: 10.0,
            radial_cells: 8,
            angular_cells: 4,
            exclusion_radius: 1e-6,
            rel_tol: 1e-9,
        }
    }
}

impl QuadratureSpec {
    /// Defaults scaled to a scenario whose source-test separations span `[min_sep, max_sep]`.
    pub fn for_separations(min_sep: f64, max_sep: f64) -> Self {
        QuadratureSpec {
            domain_radius: 20.0 * max_sep,
            exclusion_radius: 1e-4 * min_sep,
            ..QuadratureSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.exclusion_radius) {
            return Err(Error::Validation(format!(
                "exclusion radius must be positive, got {}",
                self.exclusion_radius
            )));
        }
        if !positive(self.domain_radius) || self.domain_radius <= self.exclusion_radius {
            return Err(Error::Validation(format!(
                "domain radius {} must exceed the exclusion radius {}",
                self.domain_radius, self.exclusion_radius
            )));
        }
        if self.radial_cells == 0 || self.angular_cells == 0 {
            return Err(Error::Validation("cell counts must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::Validation(format!(
                "quadrature rel_tol must lie in (0, 1), got {}",
                self.rel_tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyResult {
    /// Interaction energy (J).
    pub value: f64,
    /// Relative change over the last refinement.
    pub achieved_rel_tol: f64,
    /// Always set: only the cross term is integrated.
    pub self_energy_removed: bool,
}

/// Field-energy cross term between `a` and `b`.
///
/// Uniform-field leaves are dropped: a uniform field contributes no
/// localized cross term that differs between configurations, and the
/// integral over all space of its product with a monopole field does not
/// converge absolutely.
pub fn interaction_energy(
    a: &SourceModel,
    b: &SourceModel,
    q: &QuadratureSpec,
    c: &Constants,
) -> Result<EnergyResult> {
    q.validate()?;
    let kappa = coupling_constant(a, b, c)?;
    let (Some(la), Some(lb)) = (a.localized_part(), b.localized_part()) else {
        return Ok(EnergyResult {
            value: 0.0,
            achieved_rel_tol: 0.0,
            self_energy_removed: true,
        });
    };
    let pa = la.point_charges(&lb.anchor_points())?;
    let pb = lb.point_charges(&la.anchor_points())?;

    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(pa.len() * pb.len());
    for i in &pa {
        for j in &pb {
            let d = (i.position - j.position).norm();
            if d <= 2.0 * q.exclusion_radius {
                return Err(Error::Geometry(format!(
                    "sources overlap: separation {d:e} m is within twice the exclusion radius {:e} m",
                    q.exclusion_radius
                )));
            }
            if q.domain_radius <= 10.0 * d {
                return Err(Error::Validation(format!(
                    "domain radius {} m must exceed 10x the source separation {d} m",
                    q.domain_radius
                )));
            }
            pairs.push((d, i.strength * j.strength));
        }
    }

    let total_at = |level: u32| -> f64 {
        let eval = |&(d, qq): &(f64, f64)| kappa * qq * pair_integral(d, q, level) / (4.0 * PI);
        #[cfg(feature = "parallel")]
        let mut terms: Vec<f64> = pairs.par_iter().map(eval).collect();
        #[cfg(not(feature = "parallel"))]
        let mut terms: Vec<f64> = pairs.iter().map(eval).collect();
        terms.sort_by(f64::total_cmp);
        terms.iter().sum()
    };

    let mut prev = total_at(0);
    for level in 1..=MAX_LEVEL {
        let next = total_at(level);
        let change = if next == 0.0 { (next - prev).abs() } else { ((next - prev) / next).abs() };
        if change <= q.rel_tol {
            return Ok(EnergyResult {
                value: next,
                achieved_rel_tol: change,
                self_energy_removed: true,
            });
        }
        prev = next;
    }
    Err(Error::Convergence {
        context: "field-energy volume quadrature".into(),
        previous: prev,
        last: total_at(MAX_LEVEL),
    })
}

fn coupling_constant(a: &SourceModel, b: &SourceModel, c: &Constants) -> Result<f64> {
    match (a.coupling(), b.coupling()) {
        (Coupling::Gravity, Coupling::Gravity) => Ok(-c.g_newton),
        (Coupling::InverseSquare { constant: ka, .. }, Coupling::InverseSquare { constant: kb, .. })
            if ka == kb =>
        {
            Ok(*ka)
        }
        _ => Err(Error::Validation(
            "interaction energy needs both sources on the same coupling".into(),
        )),
    }
}

/// `int (x - p_i).(x - p_j) / (r_i^3 r_j^3) dV` for two unit charges a distance `d` apart.
///
/// Equals `4 pi / d` analytically.
pub(crate) fn pair_integral(d: f64, q: &QuadratureSpec, level: u32) -> f64 {
    let scale = 1usize << level;
    let radial_panels = q.radial_cells * scale;
    let outer_panels = q.radial_cells.div_ceil(2) * scale;
    let polar_panels = q.angular_cells * scale;
    let gl = GaussLegendre::get(PANEL_ORDER);
    let (eps, rd) = (q.exclusion_radius, q.domain_radius);
    let log_span = (rd / eps).ln();

    // Angular integral at radius r of the weighted, axisymmetric integrand.
    let shell = |r: f64| -> f64 {
        let mut acc = 0.0;
        let dmu = 2.0 / polar_panels as f64;
        for p in 0..polar_panels {
            let mu0 = -1.0 + p as f64 * dmu;
            for (&u, &w) in gl.nodes.iter().zip(&gl.weights) {
                let mu = mu0 + 0.5 * dmu * (1.0 + u);
                let ro2 = (r * r + d * d - 2.0 * r * d * mu).max(0.0);
                let rc2 = r * r;
                let rc8 = (rc2 * rc2) * (rc2 * rc2);
                let ro8 = (ro2 * ro2) * (ro2 * ro2);
                let weight = ro8 / (rc8 + ro8);
                let dot = r * r - r * d * mu;
                acc += 0.5 * dmu * w * weight * dot / (r * r * r * ro2 * ro2.sqrt());
            }
        }
        2.0 * PI * acc
    };

    let mut inner = 0.0;
    let ds = 1.0 / radial_panels as f64;
    for p in 0..radial_panels {
        let s0 = p as f64 * ds;
        for (&u, &w) in gl.nodes.iter().zip(&gl.weights) {
            let s = s0 + 0.5 * ds * (1.0 + u);
            let r = eps * (s * log_span).exp();
            inner += 0.5 * ds * w * shell(r) * r * r * r * log_span;
        }
    }

    let mut outer = 0.0;
    let du = 1.0 / outer_panels as f64;
    for p in 0..outer_panels {
        let u0 = p as f64 * du;
        for (&x, &w) in gl.nodes.iter().zip(&gl.weights) {
            let u = u0 + 0.5 * du * (1.0 + x);
            let r = rd / u;
            outer += 0.5 * du * w * shell(r) * r * r * rd / (u * u);
        }
    }
    // The share around the other center is the mirror image.
    2.0 * (inner + outer)
}
