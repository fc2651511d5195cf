//! Interferometer phase shifts by three independent routes, detection-port
//! probabilities and fringe fitting.

use std::f64::consts::TAU;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::constants::Constants;
use crate::error::{Error, Result};
use crate::grid::{integrate_with_error, simpson, TimeGrid};
use crate::kinematics::{mach_zehnder_arms, InterferometerSpec, SemiclassicalEvolution};
use crate::sources::{
    interaction_energy, MovingSource, QuadratureSpec, SourceModel, SINGULAR_DISTANCE,
};
use crate::trajectory::Trajectory;
use crate::Vec3;

/// Full and reduced semiclassical phases must agree this closely (rad).
pub const SEMICLASSICAL_CONSISTENCY: f64 = 1e-9;

pub const ASSUME_UNPERTURBED: &str =
    "quantum phase evaluated along unperturbed arms (deflections neglected)";
pub const ASSUME_UNIFORM_DROPPED: &str =
    "uniform-field parts of the source are absorbed by the freely falling frame and do not enter the phase";
pub const ASSUME_SELF_ENERGY: &str =
    "field energy integrates only the cross term; self-energies removed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PhaseMethod {
    PotentialIntegral,
    FieldEnergy,
    Semiclassical,
}

impl PhaseMethod {
    pub fn name(&self) -> &'static str {
        match self {
            PhaseMethod::PotentialIntegral => "potential_integral",
            PhaseMethod::FieldEnergy => "field_energy",
            PhaseMethod::Semiclassical => "semiclassical",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "potential_integral" => Ok(PhaseMethod::PotentialIntegral),
            "field_energy" => Ok(PhaseMethod::FieldEnergy),
            "semiclassical" => Ok(PhaseMethod::Semiclassical),
            other => Err(Error::Config(format!(
                "unknown phase method '{other}' (expected potential_integral, field_energy or semiclassical)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseResult {
    /// Phase of arm 1 relative to arm 2 (rad).
    pub delta_phi: f64,
    pub method: PhaseMethod,
    /// Estimated relative quadrature error.
    pub quadrature_tol: f64,
    pub assumptions: Vec<String>,
}

impl PhaseResult {
    fn new(delta_phi: f64, method: PhaseMethod, quadrature_tol: f64, assumptions: &[&str]) -> Self {
        PhaseResult {
            delta_phi,
            method,
            quadrature_tol,
            assumptions: assumptions.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Difference of two phases, e.g. the upper minus the lower gradiometer interferometer.
    pub fn minus(&self, other: &PhaseResult) -> PhaseResult {
        let mut assumptions = self.assumptions.clone();
        for a in &other.assumptions {
            if !assumptions.contains(a) {
                assumptions.push(a.clone());
            }
        }
        PhaseResult {
            delta_phi: self.delta_phi - other.delta_phi,
            method: self.method,
            quadrature_tol: self.quadrature_tol.max(other.quadrature_tol),
            assumptions,
        }
    }
}

fn check_span(trajs: &[&Trajectory], grid: &TimeGrid) -> Result<()> {
    for tr in trajs {
        if tr.t_start() > grid.t0() || tr.t_end() < grid.t1() {
            return Err(Error::Validation(format!(
                "trajectory spans [{}, {}] but the grid needs [{}, {}]",
                tr.t_start(),
                tr.t_end(),
                grid.t0(),
                grid.t1()
            )));
        }
    }
    Ok(())
}

fn relative(value: f64, err: f64) -> f64 {
    if value != 0.0 {
        err / value.abs()
    } else {
        err
    }
}

/// `(1 / hbar) int (U1 - U2) dt` with `-G (m1 m2) / r_i`, `r_i = |b_i(t) - a(t)|`.
///
/// Shared by the test-particle and source-branch views so both are bit-identical.
fn pair_phase(
    a: &Trajectory,
    b1: &Trajectory,
    b2: &Trajectory,
    m_a: f64,
    m_b: f64,
    grid: &TimeGrid,
    c: &Constants,
) -> Result<(f64, f64)> {
    check_span(&[a, b1, b2], grid)?;
    let gmm = c.g_newton * (m_a * m_b);
    let mut samples = Vec::with_capacity(grid.len());
    for t in grid.times() {
        let pa = a.position(t);
        let r1 = (b1.position(t) - pa).norm();
        let r2 = (b2.position(t) - pa).norm();
        for r in [r1, r2] {
            if r < SINGULAR_DISTANCE {
                return Err(Error::Proximity {
                    t,
                    distance: r,
                    limit: SINGULAR_DISTANCE,
                });
            }
        }
        samples.push(-gmm / r1 + gmm / r2);
    }
    let (v, err) = integrate_with_error(&samples, grid)?;
    Ok((v / c.hbar, relative(v, err)))
}

/// Quantum phase from the point-source potential along unperturbed arms.
pub fn phase_potential_integral(
    x1: &Trajectory,
    x2: &Trajectory,
    xs: &Trajectory,
    m: f64,
    source_mass: f64,
    grid: &TimeGrid,
    c: &Constants,
) -> Result<PhaseResult> {
    let (phi, tol) = pair_phase(xs, x1, x2, source_mass, m, grid, c)?;
    Ok(PhaseResult::new(phi, PhaseMethod::PotentialIntegral, tol, &[ASSUME_UNPERTURBED]))
}

/// Quantum phase for an arbitrary moving source, `U_i = m V(x_i)`.
pub fn phase_potential_integral_source(
    x1: &Trajectory,
    x2: &Trajectory,
    source: &MovingSource,
    m: f64,
    grid: &TimeGrid,
    c: &Constants,
) -> Result<PhaseResult> {
    check_span(&[x1, x2, &source.path], grid)?;
    let Some(local) = source.model.localized_part() else {
        return Ok(PhaseResult::new(
            0.0,
            PhaseMethod::PotentialIntegral,
            0.0,
            &[ASSUME_UNPERTURBED, ASSUME_UNIFORM_DROPPED],
        ));
    };
    let local = MovingSource::new(local, source.path.clone(), source.reference);
    let mut samples = Vec::with_capacity(grid.len());
    for t in grid.times() {
        let (p1, p2) = (x1.position(t), x2.position(t));
        for p in [p1, p2] {
            let d = local.min_distance(p, t);
            if d < SINGULAR_DISTANCE {
                return Err(Error::Proximity {
                    t,
                    distance: d,
                    limit: SINGULAR_DISTANCE,
                });
            }
        }
        let v1 = local.potential_at(p1, t, c)?;
        let v2 = local.potential_at(p2, t, c)?;
        samples.push(m * (v1 - v2));
    }
    let (v, err) = integrate_with_error(&samples, grid)?;
    let mut assumptions = vec![ASSUME_UNPERTURBED];
    if source.model.has_uniform_part() {
        assumptions.push(ASSUME_UNIFORM_DROPPED);
    }
    Ok(PhaseResult::new(
        v / c.hbar,
        PhaseMethod::PotentialIntegral,
        relative(v, err),
        &assumptions,
    ))
}

/// Phase picked up by the source branches entangled with each arm.
///
/// Evaluates the same interaction integral from the source's side, so it
/// equals [`phase_potential_integral`] bit for bit.
pub fn source_backreaction_phase(
    x1: &Trajectory,
    x2: &Trajectory,
    xs: &Trajectory,
    m: f64,
    source_mass: f64,
    grid: &TimeGrid,
    c: &Constants,
) -> Result<PhaseResult> {
    // Branch i of the source sees a test particle of mass m at x_i.
    let (phi, tol) = pair_phase(xs, x1, x2, source_mass, m, grid, c)?;
    Ok(PhaseResult::new(
        phi,
        PhaseMethod::PotentialIntegral,
        tol,
        &[ASSUME_UNPERTURBED, "phase attributed to the source branches"],
    ))
}

/// Quantum phase from the field energy `E_i(t)` of each arm configuration.
pub fn phase_from_field_energy(
    x1: &Trajectory,
    x2: &Trajectory,
    xs: &Trajectory,
    m: f64,
    source_mass: f64,
    grid: &TimeGrid,
    q: &QuadratureSpec,
    c: &Constants,
) -> Result<PhaseResult> {
    if source_mass == 0.0 {
        return Ok(PhaseResult::new(0.0, PhaseMethod::FieldEnergy, 0.0, &[ASSUME_UNPERTURBED, ASSUME_SELF_ENERGY]));
    }
    let source = MovingSource::point(source_mass, xs.clone())?;
    phase_from_field_energy_source(x1, x2, &source, m, grid, q, c)
}

/// [`phase_from_field_energy`] for an arbitrary moving source.
pub fn phase_from_field_energy_source(
    x1: &Trajectory,
    x2: &Trajectory,
    source: &MovingSource,
    m: f64,
    grid: &TimeGrid,
    q: &QuadratureSpec,
    c: &Constants,
) -> Result<PhaseResult> {
    check_span(&[x1, x2, &source.path], grid)?;
    q.validate()?;
    let mut assumptions = vec![ASSUME_UNPERTURBED, ASSUME_SELF_ENERGY];
    if source.model.has_uniform_part() {
        assumptions.push(ASSUME_UNIFORM_DROPPED);
    }
    let energy_at = |t: f64| -> Result<(f64, f64)> {
        let s = source.at(t);
        let mut out = [0.0; 2];
        let mut tol: f64 = 0.0;
        for (slot, x) in out.iter_mut().zip([x1, x2]) {
            let test = SourceModel::point_mass(m, x.position(t))?;
            let e = interaction_energy(&test, &s, q, c)?;
            *slot = e.value;
            tol = tol.max(e.achieved_rel_tol);
        }
        Ok((out[0] - out[1], tol))
    };
    let times = grid.times();
    #[cfg(feature = "parallel")]
    let nodes: Vec<Result<(f64, f64)>> = times.par_iter().map(|&t| energy_at(t)).collect();
    #[cfg(not(feature = "parallel"))]
    let nodes: Vec<Result<(f64, f64)>> = times.iter().map(|&t| energy_at(t)).collect();
    let mut samples = Vec::with_capacity(nodes.len());
    let mut energy_tol: f64 = 0.0;
    for n in nodes {
        let (d, tol) = n?;
        samples.push(d);
        energy_tol = energy_tol.max(tol);
    }
    let (v, err) = integrate_with_error(&samples, grid)?;
    Ok(PhaseResult::new(
        v / c.hbar,
        PhaseMethod::FieldEnergy,
        relative(v, err) + energy_tol,
        &assumptions,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortProbabilities {
    pub p_d1: f64,
    pub p_d2: f64,
    /// Port displacements (m).
    pub d1: f64,
    pub d2: f64,
}

impl PortProbabilities {
    /// `arccos((P(d1) - P(d2)) / (P(d1) + P(d2)))`, the contrast-folded phase.
    pub fn contrast_phase(&self) -> f64 {
        ((self.p_d1 - self.p_d2) / (self.p_d1 + self.p_d2)).clamp(-1.0, 1.0).acos()
    }
}

fn check_normalized(a1: Complex64, a2: Complex64) -> Result<()> {
    let norm = a1.norm_sqr() + a2.norm_sqr();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::Validation(format!(
            "amplitudes must satisfy |A1|^2 + |A2|^2 = 1, got {norm}"
        )));
    }
    Ok(())
}

/// Two-port interference: `P(d1) = (1 + 2 |A1| |A2| cos dphi) / 2`.
pub fn ports_from_phase(
    delta_phi: f64,
    a1: Complex64,
    a2: Complex64,
    d1: f64,
    d2: f64,
) -> Result<PortProbabilities> {
    check_normalized(a1, a2)?;
    let p_d1 = 0.5 * (1.0 + 2.0 * a1.norm() * a2.norm() * delta_phi.cos());
    Ok(PortProbabilities {
        p_d1,
        p_d2: 1.0 - p_d1,
        d1,
        d2,
    })
}

/// Port-1 probability while an added reference phase sweeps one period.
pub fn fringe_scan(
    delta_phi: f64,
    a1: Complex64,
    a2: Complex64,
    points: usize,
) -> Result<Vec<(f64, f64)>> {
    if points < 3 {
        return Err(Error::Validation("a fringe scan needs at least 3 points".into()));
    }
    (0..points)
        .map(|i| {
            let r = TAU * i as f64 / points as f64;
            ports_from_phase(delta_phi + r, a1, a2, 0.0, 0.0).map(|p| (r, p.p_d1))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeFit {
    /// Recovered phase in (-pi, pi].
    pub delta_phi: f64,
    pub contrast: f64,
    pub offset: f64,
}

/// Least-squares fit of `c0 + C cos(r + dphi)` to a fringe scan.
pub fn fit_fringe(scan: &[(f64, f64)]) -> Result<FringeFit> {
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for &(r, p) in scan {
        let row = Vector3::new(1.0, r.cos(), r.sin());
        ata += row * row.transpose();
        atb += row * p;
    }
    let sol = ata
        .lu()
        .solve(&atb)
        .ok_or_else(|| Error::Rank("fringe scan does not determine a sinusoid".into()))?;
    let (c0, a, b) = (sol[0], sol[1], sol[2]);
    let contrast = a.hypot(b);
    if contrast == 0.0 {
        return Err(Error::Rank("fringe has zero contrast; phase undefined".into()));
    }
    Ok(FringeFit {
        delta_phi: (-b).atan2(a),
        contrast: 2.0 * contrast,
        offset: c0,
    })
}

/// Wraps to (-pi, pi].
pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w > std::f64::consts::PI {
        w - TAU
    } else {
        w
    }
}

/// Both the literal and the reduced semiclassical phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemiclassicalParts {
    pub propagation: f64,
    pub laser: f64,
    pub separation: f64,
    /// `-(propagation + laser + separation)`.
    pub full: f64,
    /// `-k_eff axis . (delta(0) - 2 delta(T) + delta(2T))` on the midpoint deflection.
    pub reduced: f64,
}

/// Action, laser and separation phases along the perturbed arms.
pub fn semiclassical_parts(
    evo: &SemiclassicalEvolution,
    spec: &InterferometerSpec,
    c: &Constants,
) -> Result<SemiclassicalParts> {
    let (f1, f2) = mach_zehnder_arms(spec, c)?;
    let mi = evo.mirror_index;
    let last = evo.last();
    let m_over_hbar = spec.m / c.hbar;
    let axis = spec.axis;

    let integrand = |i: usize| -> f64 {
        let t = evo.times[i];
        let (vf1, vf2) = if i == mi {
            (f1.velocity_left(t), f2.velocity_left(t))
        } else {
            (f1.velocity(t), f2.velocity(t))
        };
        let [dv1, dv2] = [evo.deflection_velocity[0][i], evo.deflection_velocity[1][i]];
        let [d1, d2] = [evo.deflection[0][i], evo.deflection[1][i]];
        let v_diff = (vf1 - vf2) + (dv1 - dv2);
        let v_sum = (vf1 + vf2) + (dv1 + dv2);
        let x_diff = (f1.position(t) - f2.position(t)) + (d1 - d2);
        m_over_hbar * (0.5 * v_diff.dot(&v_sum) + evo.acceleration[i].dot(&x_diff))
    };
    let first: Vec<f64> = (0..=mi).map(integrand).collect();
    let second: Vec<f64> = (mi + 1..=last).map(integrand).collect();
    let h1 = evo.times[mi] / (first.len() - 1) as f64;
    let h2 = (evo.times[last] - evo.times[mi + 1]) / (second.len() - 1) as f64;
    let propagation = simpson(&first, h1) + simpson(&second, h2);

    let pair = |i: usize| axis.dot(&(evo.deflection[0][i] + evo.deflection[1][i]));
    let laser = spec.k * (pair(0) - 2.0 * pair(mi) + pair(last));

    let v_mean = (f1.velocity(evo.times[last]) + f2.velocity(evo.times[last])
        + evo.deflection_velocity[0][last]
        + evo.deflection_velocity[1][last])
        * 0.5;
    let gap = evo.deflection[1][last] - evo.deflection[0][last];
    let separation = m_over_hbar * v_mean.dot(&gap);

    let mid = |i: usize| axis.dot(&evo.midpoint_deflection(i));
    let reduced = -spec.k_eff() * (mid(0) - 2.0 * mid(mi) + mid(last));
    Ok(SemiclassicalParts {
        propagation,
        laser,
        separation,
        full: -(propagation + laser + separation),
        reduced,
    })
}

/// Semiclassical phase; the literal three-part prescription is checked
/// against its reduced midpoint-deflection form.
pub fn phase_semiclassical(
    evo: &SemiclassicalEvolution,
    spec: &InterferometerSpec,
    source: &SourceModel,
    c: &Constants,
) -> Result<PhaseResult> {
    let parts = semiclassical_parts(evo, spec, c)?;
    let gap = (parts.full - parts.reduced).abs();
    if gap > SEMICLASSICAL_CONSISTENCY {
        return Err(Error::InternalConsistency(format!(
            "semiclassical phase: full prescription {} and reduced form {} differ by {gap:e} rad",
            parts.full, parts.reduced
        )));
    }
    let mut assumptions = vec![
        "semiclassical field sourced by the expectation value of position".to_string(),
        "instantaneous velocity-kick pulses".to_string(),
    ];
    if source.has_uniform_part() {
        assumptions.push("uniform-field parts act on both arms in the semiclassical model".into());
    }
    let scale = parts.full.abs().max(f64::MIN_POSITIVE);
    Ok(PhaseResult {
        delta_phi: parts.full,
        method: PhaseMethod::Semiclassical,
        quadrature_tol: (evo.halving_error * spec.k_eff()) / scale,
        assumptions,
    })
}

/// Probability-weighted field energy `P1 E1 + (1 - P1) E2`.
pub fn schrodinger_newton_energy(p1: f64, e1: f64, e2: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p1) {
        return Err(Error::Validation(format!("P1 must lie in [0, 1], got {p1}")));
    }
    Ok(p1 * e1 + (1.0 - p1) * e2)
}

/// Arm displacement at t = 2T; zero for closed interferometers.
pub fn closure_gap(x1: &Trajectory, x2: &Trajectory) -> Vec3 {
    x1.position(x1.t_end()) - x2.position(x2.t_end())
}
