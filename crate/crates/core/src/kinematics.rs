//! Interferometer arms, the source path, beamsplitter amplitudes and the
//! semiclassical expectation-value dynamics.

use num_complex::Complex64;

use crate::constants::Constants;
use crate::error::{Error, Result};
use crate::ode::{part, rk4_step, stack4, State12};
use crate::sources::SourceModel;
use crate::trajectory::{Segment, Trajectory};
use crate::Vec3;

/// Standoff used by [`semiclassical_evolve`] when none is given.
pub const DEFAULT_EXCLUSION_RADIUS: f64 = 1e-3;
const MIN_STEPS: usize = 1000;
const HALVING_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct InterferometerSpec {
    /// Test-particle mass (kg).
    pub m: f64,
    /// Source mass (kg).
    pub source_mass: f64,
    /// Detector mass (kg).
    pub detector_mass: f64,
    /// Single-arm wave number; arm speed is `hbar k / m` (1/m).
    pub k: f64,
    /// Pulse separation T (s).
    pub t_pulse: f64,
    pub x0: Vec3,
    /// Source position at t = T.
    pub xs0: Vec3,
    pub a_src: Vec3,
    /// Probability on arm 1, the arm displaced along `+axis`.
    pub p1: f64,
    /// Unit vector of the arm momenta.
    pub axis: Vec3,
}

impl InterferometerSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m", self.m),
            ("source mass", self.source_mass),
            ("detector mass", self.detector_mass),
            ("k", self.k),
            ("T", self.t_pulse),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.p1) {
            return Err(Error::Validation(format!("P1 must lie in [0, 1], got {}", self.p1)));
        }
        if (self.axis.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::Validation("interferometer axis must be a unit vector".into()));
        }
        for (name, v) in [("x0", self.x0), ("xs0", self.xs0), ("source acceleration", self.a_src)] {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(Error::Validation(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    pub fn p2(&self) -> f64 {
        1.0 - self.p1
    }

    /// Arm speed `hbar k / m`.
    pub fn arm_speed(&self, c: &Constants) -> f64 {
        c.hbar * self.k / self.m
    }

    /// Wave-number difference between the arms, `2 k`.
    pub fn k_eff(&self) -> f64 {
        2.0 * self.k
    }

    /// Arm-to-arm separation at t = T, `2 hbar k T / m`.
    pub fn separation(&self, c: &Constants) -> f64 {
        2.0 * self.arm_speed(c) * self.t_pulse
    }

    /// Same scenario with the atoms displaced by `offset`.
    pub fn shifted(&self, offset: Vec3) -> InterferometerSpec {
        InterferometerSpec {
            x0: self.x0 + offset,
            ..self.clone()
        }
    }

    pub fn with_p1(&self, p1: f64) -> InterferometerSpec {
        InterferometerSpec { p1, ..self.clone() }
    }
}

/// Pulse separation giving arm-to-arm separation `separation` at t = T.
pub fn pulse_time_from_separation(separation: f64, k: f64, m: f64, c: &Constants) -> Result<f64> {
    if !(separation > 0.0 && k > 0.0 && m > 0.0) {
        return Err(Error::Validation(
            "separation, k and m must be positive".into(),
        ));
    }
    Ok(separation * m / (2.0 * c.hbar * k))
}

/// The two free-fall-frame arms; arm 1 moves along `+axis` first.
pub fn mach_zehnder_arms(spec: &InterferometerSpec, c: &Constants) -> Result<(Trajectory, Trajectory)> {
    spec.validate()?;
    let v = spec.axis * spec.arm_speed(c);
    let t = spec.t_pulse;
    let arm = |vel: Vec3| {
        Trajectory::piecewise(vec![
            Segment::new(0.0, t, spec.x0, vel, Vec3::zeros()),
            // Anchored at 2T so both arms return to x0 bit-exactly.
            Segment {
                t_start: t,
                t_end: 2.0 * t,
                t_ref: 2.0 * t,
                pos: spec.x0,
                vel: -vel,
                acc: Vec3::zeros(),
            },
        ])
    };
    Ok((arm(v)?, arm(-v)?))
}

/// `x_s(t) = a (t - T)^2 / 2 + x_s0` on `[0, 2T]`.
pub fn parabolic_source(spec: &InterferometerSpec) -> Result<Trajectory> {
    spec.validate()?;
    let t = spec.t_pulse;
    Trajectory::piecewise(vec![Segment {
        t_start: 0.0,
        t_end: 2.0 * t,
        t_ref: t,
        pos: spec.xs0,
        vel: Vec3::zeros(),
        acc: spec.a_src,
    }])
}

/// Real, non-negative amplitudes with `|A1|^2 = P1`.
pub fn beamsplitter_amplitudes(p1: f64) -> Result<(Complex64, Complex64)> {
    if !(0.0..=1.0).contains(&p1) {
        return Err(Error::Validation(format!("P1 must lie in [0, 1], got {p1}")));
    }
    Ok((Complex64::new(p1.sqrt(), 0.0), Complex64::new((1.0 - p1).sqrt(), 0.0)))
}

/// Arms perturbed by the field acting on the centre of mass.
#[derive(Debug, Clone)]
pub struct SemiclassicalEvolution {
    pub x1: Trajectory,
    pub x2: Trajectory,
    pub x_cm: Trajectory,
    pub step_count: usize,
    /// Largest mismatch between the deflection kinetic energy and the work
    /// done on it, per unit mass (J/kg).
    pub max_energy_drift: f64,
    /// Node times; T appears twice (before and after the mirror pulse).
    pub times: Vec<f64>,
    /// Deflections from the free arms, arm 1 and arm 2.
    pub deflection: [Vec<Vec3>; 2],
    pub deflection_velocity: [Vec<Vec3>; 2],
    /// Common acceleration at each node.
    pub acceleration: Vec<Vec3>,
    /// Index of the first copy of t = T in `times`.
    pub mirror_index: usize,
    /// Disagreement at 2T with the run at half the step (m).
    pub halving_error: f64,
}

impl SemiclassicalEvolution {
    /// Midpoint deflection `(delta_1 + delta_2) / 2` at node `i`.
    pub fn midpoint_deflection(&self, i: usize) -> Vec3 {
        (self.deflection[0][i] + self.deflection[1][i]) * 0.5
    }

    pub fn last(&self) -> usize {
        self.times.len() - 1
    }
}

/// [`semiclassical_evolve_with`] at the default standoff.
pub fn semiclassical_evolve(
    spec: &InterferometerSpec,
    source: &SourceModel,
    steps: usize,
    c: &Constants,
) -> Result<SemiclassicalEvolution> {
    semiclassical_evolve_with(spec, source, steps, DEFAULT_EXCLUSION_RADIUS, c)
}

/// Both arms under the identical acceleration sampled at the centre of mass
/// `P1 x1 + P2 x2`, integrated as deflections from the free arms by
/// fixed-step RK4. `source` is positioned as at t = T and moves rigidly with
/// the parabolic source path.
pub fn semiclassical_evolve_with(
    spec: &InterferometerSpec,
    source: &SourceModel,
    steps: usize,
    exclusion_radius: f64,
    c: &Constants,
) -> Result<SemiclassicalEvolution> {
    spec.validate()?;
    if steps < MIN_STEPS || steps % 4 != 0 {
        return Err(Error::Validation(format!(
            "semiclassical steps must be a multiple of 4 and at least {MIN_STEPS}, got {steps}"
        )));
    }
    if !(exclusion_radius > 0.0) {
        return Err(Error::Validation("exclusion radius must be positive".into()));
    }
    let fine = integrate(spec, source, steps, exclusion_radius, c)?;
    let check = integrate(spec, source, 2 * steps, exclusion_radius, c)?;
    let (n, nf) = (fine.last(), check.last());
    let halving_error = (0..2)
        .map(|a| (fine.deflection[a][n] - check.deflection[a][nf]).norm())
        .fold(0.0, f64::max);
    if halving_error > HALVING_TOL {
        return Err(Error::Accuracy(format!(
            "step halving changes the deflection at 2T by {halving_error:e} m (limit {HALVING_TOL:e} m); increase steps"
        )));
    }
    Ok(SemiclassicalEvolution {
        halving_error,
        ..fine
    })
}

fn integrate(
    spec: &InterferometerSpec,
    source: &SourceModel,
    steps: usize,
    exclusion_radius: f64,
    c: &Constants,
) -> Result<SemiclassicalEvolution> {
    let (f1, f2) = mach_zehnder_arms(spec, c)?;
    let xs = parabolic_source(spec)?;
    let (p1, p2) = (spec.p1, spec.p2());
    let t_pulse = spec.t_pulse;
    let h = 2.0 * t_pulse / steps as f64;
    let half = steps / 2;

    let accel = |t: f64, d1: Vec3, d2: Vec3| -> Result<Vec3> {
        let cm = (f1.position(t) + d1) * p1 + (f2.position(t) + d2) * p2;
        let shift = xs.position(t) - spec.xs0;
        source.field_at(cm - shift, c)
    };
    let proximity = |t: f64, d1: Vec3, d2: Vec3| -> Result<()> {
        let shift = xs.position(t) - spec.xs0;
        for x in [f1.position(t) + d1, f2.position(t) + d2] {
            let dist = source.min_distance(x - shift);
            if dist < exclusion_radius {
                return Err(Error::Proximity {
                    t,
                    distance: dist,
                    limit: exclusion_radius,
                });
            }
        }
        Ok(())
    };
    // Node i of the uniform grid; the second half is laid out from T so the
    // mirror pulse falls on a node exactly.
    let node_time = |i: usize| {
        if i == steps {
            2.0 * t_pulse
        } else if i >= half {
            t_pulse + (i - half) as f64 * h
        } else {
            i as f64 * h
        }
    };

    let mut times = Vec::with_capacity(steps + 2);
    let mut defl = [Vec::with_capacity(steps + 2), Vec::with_capacity(steps + 2)];
    let mut dvel = [Vec::with_capacity(steps + 2), Vec::with_capacity(steps + 2)];
    let mut acc = Vec::with_capacity(steps + 2);

    let mut push = |t: f64, y: &State12| -> Result<()> {
        let (d1, d2) = (part(y, 0), part(y, 1));
        proximity(t, d1, d2)?;
        times.push(t);
        defl[0].push(d1);
        defl[1].push(d2);
        dvel[0].push(part(y, 2));
        dvel[1].push(part(y, 3));
        acc.push(accel(t, d1, d2)?);
        Ok(())
    };
    // State: deflections of both arms, then their rates.
    let mut rhs = |t: f64, y: &State12| -> Result<State12> {
        let a = accel(t, part(y, 0), part(y, 1))?;
        Ok(stack4(part(y, 2), part(y, 3), a, a))
    };
    let mut y = State12::zeros();
    push(0.0, &y)?;
    for i in 0..steps {
        y = rk4_step(&mut rhs, node_time(i), &y, h)?;
        push(node_time(i + 1), &y)?;
        if i + 1 == half {
            // Mirror pulse: the free arms reverse, the deflections do not.
            push(t_pulse, &y)?;
        }
    }
    drop(push);
    let mirror_index = half;

    // Work-energy balance per unit mass on the deflection.
    let mut work = 0.0;
    let mut max_energy_drift: f64 = 0.0;
    for i in 1..times.len() {
        let dt = times[i] - times[i - 1];
        work += 0.5 * dt * (acc[i].dot(&dvel[0][i]) + acc[i - 1].dot(&dvel[0][i - 1]));
        let kinetic = 0.5 * dvel[0][i].norm_squared();
        max_energy_drift = max_energy_drift.max((kinetic - work).abs());
    }

    let arm = |free: &Trajectory, a: usize| {
        let positions: Vec<Vec3> = times
            .iter()
            .enumerate()
            .map(|(i, &t)| free.position(t) + defl[a][i])
            .collect();
        let velocities: Vec<Vec3> = times
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let v = if i == mirror_index { free.velocity_left(t) } else { free.velocity(t) };
                v + dvel[a][i]
            })
            .collect();
        (positions, velocities)
    };
    let (p1s, v1s) = arm(&f1, 0);
    let (p2s, v2s) = arm(&f2, 1);
    let pcm: Vec<Vec3> = p1s.iter().zip(&p2s).map(|(a, b)| a * p1 + b * p2).collect();
    let vcm: Vec<Vec3> = v1s.iter().zip(&v2s).map(|(a, b)| a * p1 + b * p2).collect();
    Ok(SemiclassicalEvolution {
        x1: Trajectory::sampled(times.clone(), p1s, v1s)?,
        x2: Trajectory::sampled(times.clone(), p2s, v2s)?,
        x_cm: Trajectory::sampled(times.clone(), pcm, vcm)?,
        step_count: steps,
        max_energy_drift,
        times,
        deflection: defl,
        deflection_velocity: dvel,
        acceleration: acc,
        mirror_index,
        halving_error: 0.0,
    })
}
