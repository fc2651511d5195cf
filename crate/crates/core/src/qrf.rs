//! Branch states over classical trajectories and quantum-reference-frame
//! changes between the particles that carry them.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::constants::Constants;
use crate::error::{Error, Result};
use crate::grid::{integrate_with_error, TimeGrid};
use crate::ode::{part, rk4_step, stack4, State12};
use crate::phase::{PhaseMethod, PhaseResult, ASSUME_UNPERTURBED};
use crate::sources::{SourceModel, SINGULAR_DISTANCE};
use crate::trajectory::Trajectory;
use crate::Vec3;

/// Pseudo-label for the gravitational field in bipartitions.
pub const FIELD: &str = "G";
/// Paths closer than this everywhere count as the same configuration (m).
pub const PATH_TOL: f64 = 1e-12;
const RANK_TOL: f64 = 1e-12;

pub const ASSUME_FIELD_MAPPING: &str =
    "field states are labelled by source positions; the frame change maps them by relabelling";

/// Canonical field state: (mass, sampled relative position) per particle,
/// sorted so equal configurations compare equal.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldLabel(pub Vec<(f64, Vec<Vec3>)>);

impl FieldLabel {
    pub fn approx_eq(&self, other: &FieldLabel, tol: f64) -> bool {
        self.0.len() == other.0.len()
            && self.0.iter().zip(&other.0).all(|((ma, sa), (mb, sb))| {
                ma == mb && sa.iter().zip(sb).all(|(a, b)| (a - b).norm() <= tol)
            })
    }
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub amplitude: Complex64,
    /// Accumulated dynamical phase (rad); only differences are observable.
    pub phase: f64,
    pub paths: BTreeMap<String, Trajectory>,
    pub field_label: FieldLabel,
}

#[derive(Debug, Clone)]
pub struct BranchState {
    pub frame: String,
    /// Particles other than the frame, in a fixed order.
    pub particles: Vec<String>,
    /// Masses of every particle including the frame (kg).
    pub masses: BTreeMap<String, f64>,
    pub branches: Vec<Branch>,
    /// Times at which paths are compared and field labels sampled.
    pub sample_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameTransform {
    pub from_frame: String,
    pub to_frame: String,
}

impl FrameTransform {
    pub fn new(from: &str, to: &str) -> Self {
        FrameTransform {
            from_frame: from.into(),
            to_frame: to.into(),
        }
    }

    pub fn inverse(&self) -> Self {
        FrameTransform::new(&self.to_frame, &self.from_frame)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntanglementReport {
    pub bipartition: (Vec<String>, Vec<String>),
    pub schmidt_rank: usize,
    pub is_product: bool,
}

fn label_of(
    paths: &BTreeMap<String, Trajectory>,
    frame: &str,
    masses: &BTreeMap<String, f64>,
    times: &[f64],
) -> FieldLabel {
    let mut entries: Vec<(f64, Vec<Vec3>)> = paths
        .iter()
        .map(|(name, tr)| (masses[name], tr.sample(times)))
        .collect();
    entries.push((masses[frame], vec![Vec3::zeros(); times.len()]));
    entries.sort_by(|a, b| {
        a.0.total_cmp(&b.0).then_with(|| {
            let fa = a.1.iter().flat_map(|v| v.iter().copied());
            let fb = b.1.iter().flat_map(|v| v.iter().copied());
            fa.zip(fb)
                .map(|(x, y)| x.total_cmp(&y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    FieldLabel(entries)
}

impl BranchState {
    /// Validates and attaches field labels.
    pub fn new(
        frame: &str,
        masses: BTreeMap<String, f64>,
        branches: Vec<(Complex64, f64, BTreeMap<String, Trajectory>)>,
        sample_times: Vec<f64>,
    ) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::Validation("a state needs at least one branch".into()));
        }
        if sample_times.is_empty() {
            return Err(Error::Validation("a state needs sample times".into()));
        }
        let particles: Vec<String> = branches[0].2.keys().cloned().collect();
        if particles.iter().any(|p| p == frame) {
            return Err(Error::Validation(format!(
                "frame particle {frame} cannot carry a path in its own frame"
            )));
        }
        if particles.iter().any(|p| p == FIELD) || frame == FIELD {
            return Err(Error::Validation(format!("label {FIELD} is reserved for the field")));
        }
        for name in particles.iter().map(String::as_str).chain([frame]) {
            match masses.get(name) {
                Some(m) if m.is_finite() && *m >= 0.0 => {}
                _ => return Err(Error::Validation(format!("particle {name} needs a non-negative mass"))),
            }
        }
        let norm: f64 = branches.iter().map(|b| b.0.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!(
                "branch amplitudes must be normalized, sum of |a|^2 = {norm}"
            )));
        }
        let mut out = Vec::with_capacity(branches.len());
        for (amplitude, phase, paths) in branches {
            if paths.keys().ne(particles.iter()) {
                return Err(Error::Validation("every branch must carry the same particles".into()));
            }
            let field_label = label_of(&paths, frame, &masses, &sample_times);
            out.push(Branch {
                amplitude,
                phase,
                paths,
                field_label,
            });
        }
        Ok(BranchState {
            frame: frame.into(),
            particles,
            masses,
            branches: out,
            sample_times,
        })
    }

    /// Two-branch interferometer state in the frame of `frame`: the test
    /// particle `test` on `x1` or `x2` with amplitudes `a1`, `a2`, and the
    /// source `source` on `xs` in both branches.
    #[allow(clippy::too_many_arguments)]
    pub fn interferometer(
        frame: (&str, f64),
        test: (&str, f64),
        source: (&str, f64),
        x1: &Trajectory,
        x2: &Trajectory,
        xs: &Trajectory,
        amplitudes: (Complex64, Complex64),
        sample_times: Vec<f64>,
    ) -> Result<Self> {
        let masses: BTreeMap<String, f64> = [frame, test, source]
            .iter()
            .map(|(n, m)| (n.to_string(), *m))
            .collect();
        let branch = |x: &Trajectory| {
            let mut p = BTreeMap::new();
            p.insert(test.0.to_string(), x.clone());
            p.insert(source.0.to_string(), xs.clone());
            p
        };
        BranchState::new(
            frame.0,
            masses,
            vec![
                (amplitudes.0, 0.0, branch(x1)),
                (amplitudes.1, 0.0, branch(x2)),
            ],
            sample_times,
        )
    }

    pub fn has_particle(&self, name: &str) -> bool {
        name == self.frame || self.particles.iter().any(|p| p == name)
    }

    /// Path of `name` in branch `i`; the frame particle sits at the origin.
    pub fn path(&self, i: usize, name: &str) -> Result<Trajectory> {
        if name == self.frame {
            let any = self.branches[i]
                .paths
                .values()
                .next()
                .ok_or_else(|| Error::Scenario("state has no particles besides the frame".into()))?;
            return Ok(any.scaled(0.0));
        }
        self.branches[i]
            .paths
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Validation(format!("unknown particle label {name}")))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.branches.iter().map(|b| b.amplitude.norm_sqr()).sum()
    }

    /// Number of distinct joint configurations of `labels` across branches.
    pub fn distinct_configurations(&self, labels: &[&str]) -> Result<usize> {
        let configs = self.configurations(labels)?;
        Ok(cluster(&configs).1)
    }

    /// Per-branch sampled paths of `labels` (field label included for [`FIELD`]).
    fn configurations(&self, labels: &[&str]) -> Result<Vec<Vec<Vec<Vec3>>>> {
        let mut out = Vec::with_capacity(self.branches.len());
        for i in 0..self.branches.len() {
            let mut cfg = Vec::new();
            for &l in labels {
                if l == FIELD {
                    cfg.extend(self.branches[i].field_label.0.iter().map(|(_, s)| s.clone()));
                } else {
                    cfg.push(self.path(i, l)?.sample(&self.sample_times));
                }
            }
            out.push(cfg);
        }
        Ok(out)
    }
}

/// Groups equal configurations; returns the class of each entry and the class count.
fn cluster(configs: &[Vec<Vec<Vec3>>]) -> (Vec<usize>, usize) {
    let same = |a: &Vec<Vec<Vec3>>, b: &Vec<Vec<Vec3>>| {
        a.len() == b.len()
            && a.iter().zip(b).all(|(pa, pb)| {
                pa.len() == pb.len() && pa.iter().zip(pb).all(|(x, y)| (x - y).norm() <= PATH_TOL)
            })
    };
    let mut reps: Vec<usize> = Vec::new();
    let mut class = Vec::with_capacity(configs.len());
    for (i, c) in configs.iter().enumerate() {
        match reps.iter().position(|&r| same(&configs[r], c)) {
            Some(k) => class.push(k),
            None => {
                reps.push(i);
                class.push(reps.len() - 1);
            }
        }
    }
    (class, reps.len())
}

/// Re-expresses every path relative to `xf.to_frame`.
pub fn qrf_transform(state: &BranchState, xf: &FrameTransform) -> Result<BranchState> {
    if xf.from_frame != state.frame {
        return Err(Error::Validation(format!(
            "transform starts in frame {} but the state is in frame {}",
            xf.from_frame, state.frame
        )));
    }
    if xf.to_frame == state.frame {
        return Ok(state.clone());
    }
    if !state.particles.iter().any(|p| *p == xf.to_frame) {
        return Err(Error::Validation(format!(
            "unknown particle label {} for the target frame",
            xf.to_frame
        )));
    }
    let new_frame = xf.to_frame.as_str();
    let particles: Vec<String> = state
        .particles
        .iter()
        .map(|p| if p == new_frame { state.frame.clone() } else { p.clone() })
        .collect();
    let mut branches = Vec::with_capacity(state.branches.len());
    for b in &state.branches {
        let origin = &b.paths[new_frame];
        let mut paths = BTreeMap::new();
        for (name, tr) in &b.paths {
            if name != new_frame {
                paths.insert(name.clone(), tr.minus(origin)?);
            }
        }
        paths.insert(state.frame.clone(), origin.negated());
        let field_label = label_of(&paths, new_frame, &state.masses, &state.sample_times);
        branches.push(Branch {
            amplitude: b.amplitude,
            phase: b.phase,
            paths,
            field_label,
        });
    }
    Ok(BranchState {
        frame: new_frame.into(),
        particles,
        masses: state.masses.clone(),
        branches,
        sample_times: state.sample_times.clone(),
    })
}

/// Interaction phase between `test` and `source` from their relative
/// coordinates as seen in the state's frame.
pub fn phase_in_frame(
    state: &BranchState,
    test: &str,
    source: &str,
    grid: &TimeGrid,
    c: &Constants,
) -> Result<PhaseResult> {
    if state.branches.len() != 2 {
        return Err(Error::Scenario(format!(
            "frame phase needs exactly two branches, got {} (use the four-port routine for two interferometers)",
            state.branches.len()
        )));
    }
    for l in [test, source] {
        if !state.has_particle(l) {
            return Err(Error::Validation(format!("unknown particle label {l}")));
        }
    }
    let m = state.masses[test];
    let big_m = state.masses[source];
    let rel = |i: usize| -> Result<Trajectory> {
        if test == state.frame {
            state.path(i, source)
        } else if source == state.frame {
            Ok(state.path(i, test)?.negated())
        } else {
            state.path(i, source)?.minus(&state.path(i, test)?)
        }
    };
    let (y1, y2) = (rel(0)?, rel(1)?);
    let gmm = c.g_newton * (m * big_m);
    let mut samples = Vec::with_capacity(grid.len());
    for t in grid.times() {
        let (r1, r2) = (y1.position(t).norm(), y2.position(t).norm());
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
    Ok(PhaseResult {
        delta_phi: v / c.hbar,
        method: PhaseMethod::PotentialIntegral,
        quadrature_tol: if v != 0.0 { err / v.abs() } else { err },
        assumptions: vec![
            ASSUME_UNPERTURBED.into(),
            format!("evaluated in the frame of {}", state.frame),
        ],
    })
}

/// Schmidt rank of the state across `left | rest`.
///
/// The field pseudo-particle [`FIELD`] may be named on either side; when it
/// is named on neither it travels with `left`.
pub fn entanglement_partition(state: &BranchState, left: &[&str]) -> Result<EntanglementReport> {
    for l in left {
        if *l != FIELD && !state.particles.iter().any(|p| p == l) {
            return Err(Error::Validation(format!(
                "unknown or frame label {l} in bipartition"
            )));
        }
    }
    let mut left_set: Vec<&str> = left.to_vec();
    left_set.sort();
    left_set.dedup();
    let mut right_set: Vec<&str> = state
        .particles
        .iter()
        .map(String::as_str)
        .filter(|p| !left_set.contains(p))
        .collect();
    if !left_set.contains(&FIELD) {
        left_set.push(FIELD);
    }
    let named_left: Vec<&str> = left_set.iter().copied().filter(|l| *l != FIELD).collect();
    if named_left.is_empty() && !left.contains(&FIELD) || right_set.is_empty() {
        return Err(Error::Validation("both sides of a bipartition must be non-empty".into()));
    }
    right_set.sort();
    let (lc, nl) = cluster(&state.configurations(&left_set)?);
    let (rc, nr) = cluster(&state.configurations(&right_set)?);
    let mut mat = DMatrix::<Complex64>::zeros(nl, nr);
    for (i, b) in state.branches.iter().enumerate() {
        mat[(lc[i], rc[i])] += b.amplitude * Complex64::from_polar(1.0, b.phase);
    }
    let rank = complex_rank(&mat);
    let strings = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    Ok(EntanglementReport {
        bipartition: (strings(&left_set), strings(&right_set)),
        schmidt_rank: rank,
        is_product: rank == 1,
    })
}

fn complex_rank(m: &DMatrix<Complex64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * top).count()
}

/// Joint output probabilities of two interferometers in the order ac, ad, bc, bd.
#[derive(Debug, Clone, PartialEq)]
pub struct BmvResult {
    pub probabilities: [f64; 4],
    /// The same probabilities computed after moving to `frame`.
    pub frame_probabilities: [f64; 4],
    pub frame: String,
    /// Rank of the 2x2 branch amplitude matrix before recombination.
    pub witness_rank: usize,
}

/// Two-particle, four-branch state in frame `frame` with balanced splitters.
pub fn bmv_state(
    frame: (&str, f64),
    a: (&str, f64, [Trajectory; 2]),
    b: (&str, f64, [Trajectory; 2]),
    sample_times: Vec<f64>,
) -> Result<BranchState> {
    let masses: BTreeMap<String, f64> = [(frame.0, frame.1), (a.0, a.1), (b.0, b.1)]
        .iter()
        .map(|(n, m)| (n.to_string(), *m))
        .collect();
    let mut branches = Vec::new();
    for xa in &a.2 {
        for xb in &b.2 {
            let mut p = BTreeMap::new();
            p.insert(a.0.to_string(), xa.clone());
            p.insert(b.0.to_string(), xb.clone());
            branches.push((Complex64::new(0.5, 0.0), 0.0, p));
        }
    }
    BranchState::new(frame.0, masses, branches, sample_times)
}

/// Recovers each branch's (i, j) arm indices from paths relative to `reference`.
fn bmv_indices(state: &BranchState, reference: &str, a: &str, b: &str) -> Result<Vec<(usize, usize)>> {
    if state.branches.len() != 4 {
        return Err(Error::Scenario(format!(
            "two-interferometer state needs 4 branches, got {}",
            state.branches.len()
        )));
    }
    let rel = |i: usize, name: &str| -> Result<Vec<Vec3>> {
        let p = state.path(i, name)?.minus(&state.path(i, reference)?)?;
        Ok(p.sample(&state.sample_times))
    };
    let mut ca = Vec::new();
    let mut cb = Vec::new();
    for i in 0..4 {
        ca.push(vec![rel(i, a)?]);
        cb.push(vec![rel(i, b)?]);
    }
    let (ia, na) = cluster(&ca);
    let (ib, nb) = cluster(&cb);
    if na != 2 || nb != 2 {
        return Err(Error::Scenario(
            "each particle must take exactly two distinct paths".into(),
        ));
    }
    let idx: Vec<(usize, usize)> = ia.into_iter().zip(ib).collect();
    let mut seen = idx.clone();
    seen.sort();
    seen.dedup();
    if seen.len() != 4 {
        return Err(Error::Scenario("branches must cover all four path pairs".into()));
    }
    Ok(idx)
}

fn bmv_probabilities(state: &BranchState, idx: &[(usize, usize)], couplings: &[[f64; 2]; 2]) -> ([f64; 4], usize) {
    let mut psi = [[Complex64::new(0.0, 0.0); 2]; 2];
    for (b, &(i, j)) in state.branches.iter().zip(idx) {
        psi[i][j] += b.amplitude * Complex64::from_polar(1.0, b.phase + couplings[i][j]);
    }
    // Symmetric recombiner: in-phase arms split evenly between the ports.
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let u = [
        [Complex64::new(s, 0.0), Complex64::new(0.0, s)],
        [Complex64::new(0.0, s), Complex64::new(s, 0.0)],
    ];
    let mut probs = [0.0; 4];
    for p in 0..2 {
        for q in 0..2 {
            let mut amp = Complex64::new(0.0, 0.0);
            for (i, row) in psi.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    amp += u[p][i] * u[q][j] * v;
                }
            }
            probs[2 * p + q] = amp.norm_sqr();
        }
    }
    let mat = DMatrix::from_fn(2, 2, |i, j| psi[i][j]);
    (probs, complex_rank(&mat))
}

/// Four-port probabilities with per-branch interaction phases
/// `couplings[i][j]` (arm i of `a`, arm j of `b`), checked against the
/// same computation in the frame of `check_frame`.
pub fn bmv_port_probabilities(
    state: &BranchState,
    a: &str,
    b: &str,
    couplings: &[[f64; 2]; 2],
    check_frame: &str,
) -> Result<BmvResult> {
    let reference = state.frame.clone();
    let idx = bmv_indices(state, &reference, a, b)?;
    let (probabilities, witness_rank) = bmv_probabilities(state, &idx, couplings);
    let moved = qrf_transform(state, &FrameTransform::new(&state.frame, check_frame))?;
    let idx2 = bmv_indices(&moved, &reference, a, b)?;
    let (frame_probabilities, _) = bmv_probabilities(&moved, &idx2, couplings);
    for (p, q) in probabilities.iter().zip(&frame_probabilities) {
        if (p - q).abs() > 1e-12 {
            return Err(Error::InternalConsistency(format!(
                "port probabilities differ between frames {} and {check_frame}: {probabilities:?} vs {frame_probabilities:?}",
                state.frame
            )));
        }
    }
    Ok(BmvResult {
        probabilities,
        frame_probabilities,
        frame: check_frame.into(),
        witness_rank,
    })
}

/// Accelerometer of two masses near a source in superposition of two positions.
#[derive(Debug, Clone)]
pub struct EquivalenceScenario {
    pub source: SourceModel,
    /// Rigid source displacement in each branch.
    pub branch_offsets: [Vec3; 2],
    /// Initial position of the reference mass D.
    pub detector: Vec3,
    /// Initial A - D separation.
    pub baseline: Vec3,
    pub duration: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub times: Vec<f64>,
    /// A-D distance per branch.
    pub distance: [Vec<f64>; 2],
    pub max_branch_difference: f64,
    /// `2 G M d tau^2 / r_min^3`.
    pub tidal_bound: f64,
    pub r_min: f64,
}

/// Evolves D absolutely and A relative to D on each source branch.
pub fn equivalence_principle_scenario(s: &EquivalenceScenario, c: &Constants) -> Result<EquivalenceReport> {
    let d = s.baseline.norm();
    if !(d > 0.0 && s.duration > 0.0 && s.steps >= 1) {
        return Err(Error::Validation("baseline, duration and steps must be positive".into()));
    }
    let sources = s.branch_offsets.map(|o| s.source.translated(o));
    let r0 = sources
        .iter()
        .map(|src| src.min_distance(s.detector))
        .fold(f64::INFINITY, f64::min);
    if d >= 0.1 * r0 {
        return Err(Error::Validation(format!(
            "baseline {d} m is not small against the source distance {r0} m (ratio must be < 0.1)"
        )));
    }
    let h = s.duration / s.steps as f64;
    let times: Vec<f64> = (0..=s.steps).map(|i| i as f64 * h).collect();
    let mut distance = [Vec::new(), Vec::new()];
    let mut r_min = f64::INFINITY;
    for (branch, src) in sources.iter().enumerate() {
        // State: D, its velocity, A relative to D, and its rate.
        let mut rhs = |_t: f64, y: &State12| -> Result<State12> {
            let xd = part(y, 0);
            let gd = src.field_at(xd, c)?;
            let ga = src.field_at(xd + part(y, 2), c)?;
            Ok(stack4(part(y, 1), gd, part(y, 3), ga - gd))
        };
        let mut y = stack4(s.detector, Vec3::zeros(), s.baseline, Vec3::zeros());
        distance[branch].push(s.baseline.norm());
        for i in 0..s.steps {
            let (xd, rho) = (part(&y, 0), part(&y, 2));
            r_min = r_min.min(src.min_distance(xd)).min(src.min_distance(xd + rho));
            y = rk4_step(&mut rhs, times[i], &y, h)?;
            distance[branch].push(part(&y, 2).norm());
        }
        let (xd, rho) = (part(&y, 0), part(&y, 2));
        r_min = r_min.min(src.min_distance(xd)).min(src.min_distance(xd + rho));
    }
    let max_branch_difference = distance[0]
        .iter()
        .zip(&distance[1])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let mass = s.source.localized_part().map_or(0.0, |l| l.total_mass());
    let tidal_bound = if mass == 0.0 {
        0.0
    } else {
        2.0 * c.g_newton * mass * d * s.duration * s.duration / r_min.powi(3)
    };
    if max_branch_difference > tidal_bound {
        return Err(Error::InternalConsistency(format!(
            "inter-branch A-D distance difference {max_branch_difference:e} m exceeds the tidal bound {tidal_bound:e} m"
        )));
    }
    Ok(EquivalenceReport {
        times,
        distance,
        max_branch_difference,
        tidal_bound,
        r_min,
    })
}

/// One row of a state dump.
#[derive(Debug, Clone, PartialEq)]
pub struct DumpRow {
    pub branch_id: usize,
    pub amplitude_re: f64,
    pub amplitude_im: f64,
    pub phase: f64,
    pub particle: String,
    pub t: f64,
    pub position: Vec3,
}

/// Every particle of every branch at `times`, the frame particle included at the origin.
pub fn dump_rows(state: &BranchState, times: &[f64]) -> Result<Vec<DumpRow>> {
    let mut rows = Vec::new();
    let mut names: Vec<&str> = vec![state.frame.as_str()];
    names.extend(state.particles.iter().map(String::as_str));
    for (i, b) in state.branches.iter().enumerate() {
        for &name in &names {
            let path = state.path(i, name)?;
            for &t in times {
                rows.push(DumpRow {
                    branch_id: i,
                    amplitude_re: b.amplitude.re,
                    amplitude_im: b.amplitude.im,
                    phase: b.phase,
                    particle: name.to_string(),
                    t,
                    position: path.position(t),
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{beamsplitter_amplitudes, mach_zehnder_arms, InterferometerSpec};
    use std::f64::consts::PI;

    fn arms(c: &Constants) -> (Trajectory, Trajectory, f64) {
        let spec = InterferometerSpec {
            m: c.m_rb87,
            source_mass: 1.0,
            detector_mass: 1.0,
            k: 26.0 * c.k_laser(),
            t_pulse: 0.8,
            x0: Vec3::new(0.0, 0.0, 0.3),
            xs0: Vec3::zeros(),
            a_src: Vec3::zeros(),
            p1: 0.5,
            axis: Vec3::z(),
        };
        let (x1, x2) = mach_zehnder_arms(&spec, c).unwrap();
        (x1, x2, 1.6)
    }

    fn eq9(source_mass: f64) -> (BranchState, Trajectory, Trajectory, Trajectory) {
        let c = Constants::default();
        let (x1, x2, t_end) = arms(&c);
        let xs = Trajectory::stationary(Vec3::new(0.06, 0.0, 0.1), 0.0, t_end).unwrap();
        let times = TimeGrid::new(0.0, t_end, 33).unwrap().times();
        let s = BranchState::interferometer(
            ("D", 1.0),
            ("A", c.m_rb87),
            ("B", source_mass),
            &x1,
            &x2,
            &xs,
            beamsplitter_amplitudes(0.5).unwrap(),
            times,
        )
        .unwrap();
        (s, x1, x2, xs)
    }

    fn close(a: &Trajectory, b: &Trajectory, times: &[f64]) -> bool {
        times.iter().all(|&t| (a.position(t) - b.position(t)).norm() <= 1e-12)
    }

    #[test]
    fn frame_a_paths_match_relative_coordinates() {
        let (d, x1, x2, xs) = eq9(1.25);
        let a = qrf_transform(&d, &FrameTransform::new("D", "A")).unwrap();
        assert_eq!(a.frame, "A");
        let times = &d.sample_times;
        for (i, x) in [x1, x2].iter().enumerate() {
            assert!(close(&a.path(i, "B").unwrap(), &xs.minus(x).unwrap(), times));
            assert!(close(&a.path(i, "D").unwrap(), &x.negated(), times));
        }
        assert!((a.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn round_trip_is_identity() {
        let (d, ..) = eq9(1.25);
        let xf = FrameTransform::new("D", "A");
        let back = qrf_transform(&qrf_transform(&d, &xf).unwrap(), &xf.inverse()).unwrap();
        assert_eq!(back.frame, "D");
        for i in 0..2 {
            for p in ["A", "B"] {
                assert!(close(&back.path(i, p).unwrap(), &d.path(i, p).unwrap(), &d.sample_times));
            }
            assert_eq!(back.branches[i].amplitude, d.branches[i].amplitude);
        }
    }

    #[test]
    fn unknown_target_frame_rejected() {
        let (d, ..) = eq9(1.25);
        assert!(matches!(qrf_transform(&d, &FrameTransform::new("D", "Q")), Err(Error::Validation(_))));
        assert!(qrf_transform(&d, &FrameTransform::new("A", "B")).is_err());
    }

    #[test]
    fn single_branch_stays_unentangled() {
        let c = Constants::default();
        let (x1, _, t_end) = arms(&c);
        let xs = Trajectory::stationary(Vec3::new(0.06, 0.0, 0.1), 0.0, t_end).unwrap();
        let mut p = BTreeMap::new();
        p.insert("A".to_string(), x1);
        p.insert("B".to_string(), xs);
        let masses = [("A", 1.0), ("B", 2.0), ("D", 3.0)].iter().map(|(n, m)| (n.to_string(), *m)).collect();
        let s = BranchState::new("D", masses, vec![(Complex64::new(1.0, 0.0), 0.0, p)], vec![0.0, 0.5, 1.0]).unwrap();
        let a = qrf_transform(&s, &FrameTransform::new("D", "A")).unwrap();
        assert_eq!(a.branches.len(), 1);
        assert_eq!(entanglement_partition(&s, &["A"]).unwrap().schmidt_rank, 1);
        assert_eq!(entanglement_partition(&a, &["B"]).unwrap().schmidt_rank, 1);
    }

    #[test]
    fn phase_is_frame_independent() {
        let c = Constants::default();
        let (d, x1, x2, xs) = eq9(1.25);
        let g = TimeGrid::new(0.0, 1.6, 257).unwrap();
        let in_d = phase_in_frame(&d, "A", "B", &g, &c).unwrap().delta_phi;
        let a = qrf_transform(&d, &FrameTransform::new("D", "A")).unwrap();
        let in_a = phase_in_frame(&a, "A", "B", &g, &c).unwrap().delta_phi;
        assert!((in_d - in_a).abs() <= 1e-12 * in_d.abs());
        let direct = crate::phase::phase_potential_integral(&x1, &x2, &xs, c.m_rb87, 1.25, &g, &c).unwrap();
        assert!((in_d - direct.delta_phi).abs() <= 1e-12 * in_d.abs());

        let (d0, ..) = eq9(0.0);
        let a0 = qrf_transform(&d0, &FrameTransform::new("D", "A")).unwrap();
        assert_eq!(phase_in_frame(&d0, "A", "B", &g, &c).unwrap().delta_phi, 0.0);
        assert_eq!(phase_in_frame(&a0, "A", "B", &g, &c).unwrap().delta_phi, 0.0);
    }

    #[test]
    fn four_branch_state_rejected_by_frame_phase() {
        let c = Constants::default();
        let (x1, x2, t_end) = arms(&c);
        let y1 = x1.translated(Vec3::new(0.2, 0.0, 0.0));
        let y2 = x2.translated(Vec3::new(0.2, 0.0, 0.0));
        let times = TimeGrid::new(0.0, t_end, 9).unwrap().times();
        let s = bmv_state(("D", 1.0), ("A", 1e-14, [x1, x2]), ("B", 1e-14, [y1, y2]), times).unwrap();
        let g = TimeGrid::new(0.0, t_end, 9).unwrap();
        assert!(matches!(phase_in_frame(&s, "A", "B", &g, &c), Err(Error::Scenario(_))));
    }

    #[test]
    fn entanglement_is_relative() {
        let (d, ..) = eq9(1.25);
        let in_d = entanglement_partition(&d, &["A"]).unwrap();
        assert!(in_d.is_product);
        assert_eq!(in_d.schmidt_rank, 1);
        let a = qrf_transform(&d, &FrameTransform::new("D", "A")).unwrap();
        let in_a = entanglement_partition(&a, &["B"]).unwrap();
        assert_eq!(in_a.schmidt_rank, 2);
        assert!(!in_a.is_product);
        // Relativity of superposition: two paths of A in D, two joint (B, D) configurations in A.
        assert_eq!(d.distinct_configurations(&["A"]).unwrap(), 2);
        assert_eq!(a.distinct_configurations(&["B", "D"]).unwrap(), 2);
        assert!(entanglement_partition(&d, &[]).is_err());
    }

    fn bmv() -> BranchState {
        let c = Constants::default();
        let (x1, x2, t_end) = arms(&c);
        let y1 = x1.translated(Vec3::new(0.2, 0.0, 0.0));
        let y2 = x2.translated(Vec3::new(0.2, 0.0, 0.0));
        let times = TimeGrid::new(0.0, t_end, 9).unwrap().times();
        bmv_state(("D", 1.0), ("A", 1e-14, [x1, x2]), ("B", 1e-14, [y1, y2]), times).unwrap()
    }

    #[test]
    fn bmv_zero_coupling_is_uniform() {
        let r = bmv_port_probabilities(&bmv(), "A", "B", &[[0.0; 2]; 2], "B").unwrap();
        for p in r.probabilities {
            assert!((p - 0.25).abs() < 1e-15);
        }
        assert_eq!(r.witness_rank, 1);
    }

    #[test]
    fn bmv_single_flipped_branch_entangles() {
        // psi = [[-1, 1], [1, 1]] / 2 through u = [[1, i], [i, 1]] / sqrt 2 on
        // each side, summed by hand: ac = (-2 + 2i) / 4, ad = bc = 0, bd = (2 + 2i) / 4.
        let r = bmv_port_probabilities(&bmv(), "A", "B", &[[PI, 0.0], [0.0, 0.0]], "A").unwrap();
        let expect = [0.5, 0.0, 0.0, 0.5];
        for (p, e) in r.probabilities.iter().zip(expect) {
            assert!((p - e).abs() < 1e-15, "{:?}", r.probabilities);
        }
        assert_eq!(r.witness_rank, 2);
    }

    #[test]
    fn bmv_probabilities_agree_across_frames() {
        let s = bmv();
        let c = [[0.3, -1.1], [2.0, 0.7]];
        let r = bmv_port_probabilities(&s, "A", "B", &c, "B").unwrap();
        for (p, q) in r.probabilities.iter().zip(&r.frame_probabilities) {
            assert!((p - q).abs() <= 1e-12);
        }
        assert!((r.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dump_has_one_row_per_branch_particle_time() {
        let (d, ..) = eq9(1.25);
        let rows = dump_rows(&d, &[0.0, 0.8, 1.6]).unwrap();
        // Frame particle D at the origin, then A and B.
        assert_eq!(rows.len(), 2 * 3 * 3);
        assert!(rows.iter().filter(|r| r.particle == "D").all(|r| r.position == Vec3::zeros()));
    }

    fn ep(source: SourceModel, offsets: [Vec3; 2], baseline: f64, steps: usize) -> EquivalenceScenario {
        EquivalenceScenario {
            source,
            branch_offsets: offsets,
            detector: Vec3::zeros(),
            baseline: Vec3::new(baseline, 0.0, 0.0),
            duration: 1.0,
            steps,
        }
    }

    #[test]
    fn uniform_source_leaves_accelerometer_rigid() {
        let c = Constants::default();
        let g = SourceModel::gravity(crate::sources::SourceShape::UniformField { g: Vec3::new(0.0, 0.0, -9.81) }).unwrap();
        let r = equivalence_principle_scenario(&ep(g, [Vec3::zeros(), Vec3::new(0.0, 0.1, 0.0)], 1e-3, 200), &c).unwrap();
        for series in &r.distance {
            assert!(series.iter().all(|d| (d - 1e-3).abs() <= 1e-15));
        }
        assert!(r.max_branch_difference <= 1e-15);
    }

    #[test]
    fn point_source_stays_under_tidal_bound() {
        let c = Constants::default();
        let src = SourceModel::point_mass(1000.0, Vec3::new(0.0, 0.0, -1.0)).unwrap();
        let offsets = [Vec3::zeros(), Vec3::new(0.2, 0.0, 0.0)];
        let r = equivalence_principle_scenario(&ep(src.clone(), offsets, 1e-3, 200), &c).unwrap();
        assert!(r.max_branch_difference > 0.0);
        assert!(r.max_branch_difference < r.tidal_bound);
        // Ten times finer stepping agrees.
        let fine = equivalence_principle_scenario(&ep(src, offsets, 1e-3, 2000), &c).unwrap();
        assert!((fine.max_branch_difference - r.max_branch_difference).abs() < 1e-6 * r.max_branch_difference);
    }

    #[test]
    fn coincident_branches_are_identical() {
        let c = Constants::default();
        let src = SourceModel::point_mass(1000.0, Vec3::new(0.0, 0.0, -1.0)).unwrap();
        let r = equivalence_principle_scenario(&ep(src, [Vec3::zeros(); 2], 1e-3, 100), &c).unwrap();
        assert_eq!(r.distance[0], r.distance[1]);
        assert_eq!(r.max_branch_difference, 0.0);
    }

    #[test]
    fn wide_accelerometer_rejected() {
        let c = Constants::default();
        let src = SourceModel::point_mass(1.0, Vec3::new(0.0, 0.0, -1.0)).unwrap();
        let r = equivalence_principle_scenario(&ep(src, [Vec3::zeros(); 2], 0.2, 10), &c);
        assert!(matches!(r, Err(Error::Validation(_))));
    }
}
