//! Time-parameterized particle paths.

use crate::error::{Error, Result};
use crate::Vec3;

/// One polynomial piece on `[t_start, t_end]`: `pos + vel * tau + acc * tau^2 / 2`
/// with `tau = t - t_ref`. The reference time need not lie inside the piece.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub t_ref: f64,
    pub pos: Vec3,
    pub vel: Vec3,
    pub acc: Vec3,
}

impl Segment {
    /// Piece referenced to its own start time.
    pub fn new(t_start: f64, t_end: f64, pos: Vec3, vel: Vec3, acc: Vec3) -> Self {
        Segment {
            t_start,
            t_end,
            t_ref: t_start,
            pos,
            vel,
            acc,
        }
    }

    pub fn position(&self, t: f64) -> Vec3 {
        let tau = t - self.t_ref;
        self.pos + self.vel * tau + self.acc * (0.5 * tau * tau)
    }

    pub fn velocity(&self, t: f64) -> Vec3 {
        self.vel + self.acc * (t - self.t_ref)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Trajectory {
    /// Position-continuous chain of quadratic segments.
    PiecewiseAnalytic(Vec<Segment>),
    /// Samples with velocities, interpolated by cubic Hermite splines.
    Sampled {
        times: Vec<f64>,
        positions: Vec<Vec3>,
        velocities: Vec<Vec3>,
    },
}

const CONTINUITY_TOL: f64 = 1e-12;

impl Trajectory {
    pub fn piecewise(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Validation("trajectory needs at least one segment".into()));
        }
        for s in &segments {
            if !(s.t_end > s.t_start) {
                return Err(Error::Validation(format!(
                    "segment [{}, {}] is empty",
                    s.t_start, s.t_end
                )));
            }
        }
        for w in segments.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if a.t_end != b.t_start {
                return Err(Error::Validation(format!(
                    "segments are not contiguous at t = {}",
                    a.t_end
                )));
            }
            let joint = b.position(b.t_start);
            let jump = (a.position(a.t_end) - joint).norm();
            let scale = 1.0 + joint.norm();
            if jump > CONTINUITY_TOL * scale {
                return Err(Error::Validation(format!(
                    "position jumps by {jump} m at t = {}",
                    a.t_end
                )));
            }
        }
        Ok(Trajectory::PiecewiseAnalytic(segments))
    }

    pub fn stationary(position: Vec3, t_start: f64, t_end: f64) -> Result<Self> {
        Trajectory::piecewise(vec![Segment::new(
            t_start,
            t_end,
            position,
            Vec3::zeros(),
            Vec3::zeros(),
        )])
    }

    /// Samples with velocities. A time may appear twice in a row to mark a
    /// velocity jump (left value first); the two positions must agree.
    pub fn sampled(times: Vec<f64>, positions: Vec<Vec3>, velocities: Vec<Vec3>) -> Result<Self> {
        if times.len() < 2 || times.len() != positions.len() || times.len() != velocities.len() {
            return Err(Error::Validation(
                "sampled trajectory needs >= 2 samples with matching lengths".into(),
            ));
        }
        for i in 1..times.len() {
            let repeat = times[i] == times[i - 1];
            let ok = times[i] > times[i - 1]
                || (repeat
                    && positions[i] == positions[i - 1]
                    && (i < 2 || times[i - 2] != times[i])
                    && i + 1 < times.len()
                    && i >= 2);
            if !ok {
                return Err(Error::Validation(format!(
                    "sample times must increase (a single interior repeat marks a kink) at index {i}"
                )));
            }
        }
        Ok(Trajectory::Sampled {
            times,
            positions,
            velocities,
        })
    }

    pub fn t_start(&self) -> f64 {
        match self {
            Trajectory::PiecewiseAnalytic(s) => s[0].t_start,
            Trajectory::Sampled { times, .. } => times[0],
        }
    }

    pub fn t_end(&self) -> f64 {
        match self {
            Trajectory::PiecewiseAnalytic(s) => s[s.len() - 1].t_end,
            Trajectory::Sampled { times, .. } => times[times.len() - 1],
        }
    }

    pub fn is_sampled(&self) -> bool {
        matches!(self, Trajectory::Sampled { .. })
    }

    /// Segment covering `t`; at an interior breakpoint the later segment wins.
    fn segment_at(segments: &[Segment], t: f64) -> &Segment {
        let idx = segments.partition_point(|s| s.t_end <= t);
        &segments[idx.min(segments.len() - 1)]
    }

    fn interval_at(times: &[f64], t: f64) -> usize {
        let idx = times.partition_point(|&s| s <= t);
        idx.clamp(1, times.len() - 1) - 1
    }

    pub fn position(&self, t: f64) -> Vec3 {
        match self {
            Trajectory::PiecewiseAnalytic(s) => Self::segment_at(s, t).position(t),
            Trajectory::Sampled {
                times,
                positions,
                velocities,
            } => {
                let i = Self::interval_at(times, t);
                if t == times[i] {
                    return positions[i];
                }
                if t == times[i + 1] {
                    return positions[i + 1];
                }
                let h = times[i + 1] - times[i];
                let s = (t - times[i]) / h;
                let (s2, s3) = (s * s, s * s * s);
                let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
                let h10 = s3 - 2.0 * s2 + s;
                let h01 = -2.0 * s3 + 3.0 * s2;
                let h11 = s3 - s2;
                positions[i] * h00
                    + velocities[i] * (h10 * h)
                    + positions[i + 1] * h01
                    + velocities[i + 1] * (h11 * h)
            }
        }
    }

    pub fn velocity(&self, t: f64) -> Vec3 {
        match self {
            Trajectory::PiecewiseAnalytic(s) => Self::segment_at(s, t).velocity(t),
            Trajectory::Sampled {
                times,
                positions,
                velocities,
            } => {
                let i = Self::interval_at(times, t);
                if t == times[i] {
                    return velocities[i];
                }
                let h = times[i + 1] - times[i];
                let s = (t - times[i]) / h;
                let s2 = s * s;
                let d00 = (6.0 * s2 - 6.0 * s) / h;
                let d10 = 3.0 * s2 - 4.0 * s + 1.0;
                let d01 = (-6.0 * s2 + 6.0 * s) / h;
                let d11 = 3.0 * s2 - 2.0 * s;
                positions[i] * d00
                    + velocities[i] * d10
                    + positions[i + 1] * d01
                    + velocities[i + 1] * d11
            }
        }
    }

    /// Interior times where the velocity may jump.
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            Trajectory::PiecewiseAnalytic(s) => s[1..].iter().map(|g| g.t_start).collect(),
            Trajectory::Sampled { times, .. } => times
                .windows(2)
                .filter(|w| w[0] == w[1])
                .map(|w| w[0])
                .collect(),
        }
    }

    /// Velocity approached from earlier times.
    pub fn velocity_left(&self, t: f64) -> Vec3 {
        match self {
            Trajectory::PiecewiseAnalytic(s) => {
                let idx = s.partition_point(|g| g.t_end < t);
                s[idx.min(s.len() - 1)].velocity(t)
            }
            Trajectory::Sampled {
                times, velocities, ..
            } => {
                let idx = times.partition_point(|&s| s < t);
                if idx < times.len() && times[idx] == t {
                    velocities[idx]
                } else {
                    self.velocity(t)
                }
            }
        }
    }

    /// Times where the path or its velocity may be non-smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Trajectory::PiecewiseAnalytic(s) => {
                let mut b: Vec<f64> = s.iter().map(|seg| seg.t_start).collect();
                b.push(self.t_end());
                b
            }
            Trajectory::Sampled { times, .. } => times.clone(),
        }
    }

    pub fn sample(&self, times: &[f64]) -> Vec<Vec3> {
        times.iter().map(|&t| self.position(t)).collect()
    }

    /// `a * self + b * other`, exact (up to rounding) for analytic inputs.
    pub fn combine(&self, a: f64, other: &Trajectory, b: f64) -> Result<Trajectory> {
        if self.t_start() != other.t_start() || self.t_end() != other.t_end() {
            return Err(Error::Validation(format!(
                "trajectories span different intervals: [{}, {}] vs [{}, {}]",
                self.t_start(),
                self.t_end(),
                other.t_start(),
                other.t_end()
            )));
        }
        match (self, other) {
            (Trajectory::PiecewiseAnalytic(sa), Trajectory::PiecewiseAnalytic(sb)) => {
                let mut cuts: Vec<f64> = self.breakpoints();
                cuts.extend(other.breakpoints());
                cuts.sort_by(f64::total_cmp);
                cuts.dedup();
                let segments = cuts
                    .windows(2)
                    .map(|w| {
                        let (t0, t1) = (w[0], w[1]);
                        let mid = 0.5 * (t0 + t1);
                        let ga = Self::segment_at(sa, mid);
                        let gb = Self::segment_at(sb, mid);
                        // Keep a shared reference time so anchored values survive exactly.
                        let t_ref = if ga.t_ref == gb.t_ref { ga.t_ref } else { t0 };
                        Segment {
                            t_start: t0,
                            t_end: t1,
                            t_ref,
                            pos: ga.position(t_ref) * a + gb.position(t_ref) * b,
                            vel: ga.velocity(t_ref) * a + gb.velocity(t_ref) * b,
                            acc: ga.acc * a + gb.acc * b,
                        }
                    })
                    .collect();
                Ok(Trajectory::PiecewiseAnalytic(segments))
            }
            (
                Trajectory::Sampled {
                    times: ta,
                    positions: pa,
                    velocities: va,
                },
                Trajectory::Sampled {
                    times: tb,
                    positions: pb,
                    velocities: vb,
                },
            ) if ta == tb => Trajectory::sampled(
                ta.clone(),
                pa.iter().zip(pb).map(|(x, y)| x * a + y * b).collect(),
                va.iter().zip(vb).map(|(x, y)| x * a + y * b).collect(),
            ),
            _ => {
                let mut grid = Vec::new();
                for tr in [self, other] {
                    if let Trajectory::Sampled { times, .. } = tr {
                        grid.extend_from_slice(times);
                    }
                }
                grid.sort_by(f64::total_cmp);
                grid.dedup();
                let mut kinks = self.kinks();
                kinks.extend(other.kinks());
                let (mut times, mut positions, mut velocities) = (Vec::new(), Vec::new(), Vec::new());
                for &t in &grid {
                    let p = self.position(t) * a + other.position(t) * b;
                    let interior = t > grid[0] && t < grid[grid.len() - 1];
                    if interior && kinks.contains(&t) {
                        times.push(t);
                        positions.push(p);
                        velocities.push(self.velocity_left(t) * a + other.velocity_left(t) * b);
                    }
                    times.push(t);
                    positions.push(p);
                    velocities.push(self.velocity(t) * a + other.velocity(t) * b);
                }
                Trajectory::sampled(times, positions, velocities)
            }
        }
    }

    pub fn minus(&self, other: &Trajectory) -> Result<Trajectory> {
        self.combine(1.0, other, -1.0)
    }

    pub fn negated(&self) -> Trajectory {
        self.scaled(-1.0)
    }

    pub fn scaled(&self, c: f64) -> Trajectory {
        match self {
            Trajectory::PiecewiseAnalytic(s) => Trajectory::PiecewiseAnalytic(
                s.iter()
                    .map(|g| Segment {
                        pos: g.pos * c,
                        vel: g.vel * c,
                        acc: g.acc * c,
                        ..*g
                    })
                    .collect(),
            ),
            Trajectory::Sampled {
                times,
                positions,
                velocities,
            } => Trajectory::Sampled {
                times: times.clone(),
                positions: positions.iter().map(|p| p * c).collect(),
                velocities: velocities.iter().map(|v| v * c).collect(),
            },
        }
    }

    pub fn translated(&self, d: Vec3) -> Trajectory {
        match self {
            Trajectory::PiecewiseAnalytic(s) => Trajectory::PiecewiseAnalytic(
                s.iter()
                    .map(|g| Segment {
                        pos: g.pos + d,
                        ..*g
                    })
                    .collect(),
            ),
            Trajectory::Sampled {
                times,
                positions,
                velocities,
            } => Trajectory::Sampled {
                times: times.clone(),
                positions: positions.iter().map(|p| p + d).collect(),
                velocities: velocities.clone(),
            },
        }
    }

    /// Largest position difference against `other` at the union of breakpoints and midpoints.
    pub fn max_deviation(&self, other: &Trajectory) -> f64 {
        let mut probe = self.breakpoints();
        probe.extend(other.breakpoints());
        probe.sort_by(f64::total_cmp);
        probe.dedup();
        let mids: Vec<f64> = probe.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        probe
            .iter()
            .chain(mids.iter())
            .map(|&t| (self.position(t) - other.position(t)).norm())
            .fold(0.0, f64::max)
    }
}
