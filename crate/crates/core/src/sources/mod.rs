//! Gravitational and generalized inverse-square sources.
//!
//! Potentials and fields are per unit test charge (per unit test mass for
//! gravity): a point source of strength `q` gives `V = kappa q / r` and
//! `F = kappa q (x - p) / r^3`, with `kappa = -G` for gravity and the
//! user-supplied coupling constant otherwise (`1 / (4 pi eps0)` for
//! electrostatics).

mod energy;

pub use energy::{interaction_energy, EnergyResult, QuadratureSpec};

use std::f64::consts::TAU;

use crate::constants::Constants;
use crate::error::{Error, Result};
use crate::grid::GaussLegendre;
use crate::trajectory::Trajectory;
use crate::Vec3;

/// Closer than this to a point source or ring wire counts as singular.
pub const SINGULAR_DISTANCE: f64 = 1e-12;
const MAX_NESTING: usize = 4;
const RING_BASE_NODES: usize = 64;
const RING_MAX_NODES: usize = 8192;
const RING_REL_TOL: f64 = 1e-10;

/// Thin circular arc of uniform linear density.
#[derive(Debug, Clone, PartialEq)]
pub struct RingArc {
    pub mass: f64,
    pub radius: f64,
    pub center: Vec3,
    /// Unit normal of the ring plane.
    pub normal: Vec3,
    /// Unit vector in the ring plane where the arc begins; the arc runs
    /// counter-clockwise about `normal` for `arc_span` radians.
    pub start_dir: Vec3,
    pub arc_span: f64,
}

impl RingArc {
    /// Arc with `start_dir` chosen deterministically perpendicular to `normal`.
    pub fn new(mass: f64, radius: f64, center: Vec3, normal: Vec3, arc_span: f64) -> Self {
        let n = normal.normalize();
        let trial = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let start_dir = (trial - n * trial.dot(&n)).normalize();
        RingArc {
            mass,
            radius,
            center,
            normal,
            start_dir,
            arc_span,
        }
    }

    fn point(&self, phi: f64) -> Vec3 {
        let e2 = self.normal.cross(&self.start_dir);
        self.center + (self.start_dir * phi.cos() + e2 * phi.sin()) * self.radius
    }

    /// Distance from `x` to the nearest point of the arc.
    pub fn distance_to_wire(&self, x: Vec3) -> f64 {
        let rel = x - self.center;
        let h = rel.dot(&self.normal);
        let in_plane = rel - self.normal * h;
        let rho = in_plane.norm();
        let e2 = self.normal.cross(&self.start_dir);
        let nearest_on_circle = if rho > 0.0 {
            let mut phi = in_plane.dot(&e2).atan2(in_plane.dot(&self.start_dir));
            if phi < 0.0 {
                phi += TAU;
            }
            phi <= self.arc_span
        } else {
            true
        };
        if nearest_on_circle {
            ((rho - self.radius).powi(2) + h * h).sqrt()
        } else {
            (x - self.point(0.0))
                .norm()
                .min((x - self.point(self.arc_span)).norm())
        }
    }

    /// Gauss-Legendre node positions and weights (fractions of the mass) for `n` nodes.
    fn nodes(&self, n: usize) -> Vec<(Vec3, f64)> {
        let gl = GaussLegendre::get(n);
        let half = 0.5 * self.arc_span;
        gl.nodes
            .iter()
            .zip(&gl.weights)
            .map(|(&u, &w)| (self.point(half * (1.0 + u)), 0.5 * w))
            .collect()
    }

    /// Sum over arc nodes of `w * kernel(node)`, doubling until stable to
    /// 1e-10 relative to the sum of term magnitudes.
    fn line_quadrature<T, K>(&self, kernel: K, norm: impl Fn(&T) -> f64) -> Result<(T, usize)>
    where
        T: std::ops::Add<Output = T> + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T> + Copy,
        K: Fn(Vec3) -> T,
    {
        let eval = |n: usize| {
            let nodes = self.nodes(n);
            let mut it = nodes.iter();
            let (p0, w0) = it.next().expect("at least one node");
            let k0 = kernel(*p0);
            let start = (k0 * *w0, norm(&k0) * w0);
            it.fold(start, |(acc, mag), (p, w)| {
                let k = kernel(*p);
                (acc + k * *w, mag + norm(&k) * w)
            })
        };
        let mut n = RING_BASE_NODES;
        let (mut prev, _) = eval(n);
        while n < RING_MAX_NODES {
            n *= 2;
            let (next, mag) = eval(n);
            if norm(&(next - prev)) <= RING_REL_TOL * mag {
                return Ok((next, n));
            }
            prev = next;
        }
        Err(Error::Convergence {
            context: "ring arc line quadrature".into(),
            previous: norm(&prev),
            last: norm(&prev),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceShape {
    PointMass { mass: f64, position: Vec3 },
    RingArc(RingArc),
    /// Spatially uniform field, e.g. `g` near the Earth's surface.
    UniformField { g: Vec3 },
    Composite(Vec<SourceShape>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Coupling {
    Gravity,
    /// `V = constant * q / r` with one signed charge per localized leaf
    /// (point or arc, depth-first order).
    InverseSquare { constant: f64, charges: Vec<f64> },
}

/// A localized point charge or mass with its coupling strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointCharge {
    pub position: Vec3,
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceModel {
    shape: SourceShape,
    coupling: Coupling,
}

impl SourceModel {
    pub fn new(shape: SourceShape, coupling: Coupling) -> Result<Self> {
        validate_shape(&shape, 1)?;
        let localized = count_localized(&shape);
        if let Coupling::InverseSquare { constant, charges } = &coupling {
            if !(constant.is_finite() && *constant > 0.0) {
                return Err(Error::Validation(format!(
                    "inverse-square coupling constant must be positive, got {constant}"
                )));
            }
            if charges.len() != localized {
                return Err(Error::Validation(format!(
                    "{} charges given for {localized} localized leaves",
                    charges.len()
                )));
            }
            if charges.iter().any(|q| !q.is_finite()) {
                return Err(Error::Validation("charges must be finite".into()));
            }
        }
        Ok(SourceModel { shape, coupling })
    }

    pub fn gravity(shape: SourceShape) -> Result<Self> {
        SourceModel::new(shape, Coupling::Gravity)
    }

    pub fn point_mass(mass: f64, position: Vec3) -> Result<Self> {
        SourceModel::gravity(SourceShape::PointMass { mass, position })
    }

    pub fn shape(&self) -> &SourceShape {
        &self.shape
    }

    pub fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    /// `kappa` in `V = kappa q / r`.
    pub fn kappa(&self, c: &Constants) -> f64 {
        match &self.coupling {
            Coupling::Gravity => -c.g_newton,
            Coupling::InverseSquare { constant, .. } => *constant,
        }
    }

    /// Sum of masses of all localized leaves.
    pub fn total_mass(&self) -> f64 {
        let mut m = 0.0;
        visit_leaves(&self.shape, &mut |leaf| match leaf {
            SourceShape::PointMass { mass, .. } => m += mass,
            SourceShape::RingArc(r) => m += r.mass,
            _ => {}
        });
        m
    }

    pub fn has_uniform_part(&self) -> bool {
        let mut found = false;
        visit_leaves(&self.shape, &mut |leaf| {
            found |= matches!(leaf, SourceShape::UniformField { .. })
        });
        found
    }

    /// The source with every uniform-field leaf removed, or `None` if nothing remains.
    pub fn localized_part(&self) -> Option<SourceModel> {
        fn strip(s: &SourceShape) -> Option<SourceShape> {
            match s {
                SourceShape::UniformField { .. } => None,
                SourceShape::Composite(parts) => {
                    let kept: Vec<SourceShape> = parts.iter().filter_map(strip).collect();
                    (!kept.is_empty()).then_some(SourceShape::Composite(kept))
                }
                other => Some(other.clone()),
            }
        }
        strip(&self.shape).map(|shape| SourceModel {
            shape,
            coupling: self.coupling.clone(),
        })
    }

    /// Rigid translation by `d` (uniform fields are unaffected).
    pub fn translated(&self, d: Vec3) -> SourceModel {
        fn shift(s: &SourceShape, d: Vec3) -> SourceShape {
            match s {
                SourceShape::PointMass { mass, position } => SourceShape::PointMass {
                    mass: *mass,
                    position: position + d,
                },
                SourceShape::RingArc(r) => SourceShape::RingArc(RingArc {
                    center: r.center + d,
                    ..r.clone()
                }),
                SourceShape::UniformField { g } => SourceShape::UniformField { g: *g },
                SourceShape::Composite(p) => {
                    SourceShape::Composite(p.iter().map(|x| shift(x, d)).collect())
                }
            }
        }
        SourceModel {
            shape: shift(&self.shape, d),
            coupling: self.coupling.clone(),
        }
    }

    /// Localized leaves with their coupling strength, depth-first.
    fn localized_leaves(&self) -> Vec<(&SourceShape, f64)> {
        let mut out = Vec::new();
        visit_leaves(&self.shape, &mut |leaf| match leaf {
            SourceShape::PointMass { mass, .. } => out.push((leaf, *mass)),
            SourceShape::RingArc(r) => out.push((leaf, r.mass)),
            _ => {}
        });
        if let Coupling::InverseSquare { charges, .. } = &self.coupling {
            for (slot, q) in out.iter_mut().zip(charges) {
                slot.1 = *q;
            }
        }
        out
    }

    /// Distance from `x` to the nearest point singularity or ring wire.
    pub fn min_distance(&self, x: Vec3) -> f64 {
        let mut d = f64::INFINITY;
        visit_leaves(&self.shape, &mut |leaf| match leaf {
            SourceShape::PointMass { position, .. } => d = d.min((x - position).norm()),
            SourceShape::RingArc(r) => d = d.min(r.distance_to_wire(x)),
            _ => {}
        });
        d
    }

    fn check_regular(&self, x: Vec3) -> Result<()> {
        if !(x.x.is_finite() && x.y.is_finite() && x.z.is_finite()) {
            return Err(Error::Validation(format!("evaluation point {x:?} is not finite")));
        }
        let d = self.min_distance(x);
        if d < SINGULAR_DISTANCE {
            return Err(Error::Singularity(format!(
                "point ({}, {}, {}) lies on a source singularity (distance {d:e} m)",
                x.x, x.y, x.z
            )));
        }
        Ok(())
    }

    /// Potential per unit test charge (J/kg for gravity).
    pub fn potential_at(&self, x: Vec3, c: &Constants) -> Result<f64> {
        self.check_regular(x)?;
        let kappa = self.kappa(c);
        let mut total = 0.0;
        visit_leaves(&self.shape, &mut |leaf| {
            if let SourceShape::UniformField { g } = leaf {
                total -= g.dot(&x);
            }
        });
        for (leaf, q) in self.localized_leaves() {
            total += match leaf {
                SourceShape::PointMass { position, .. } => kappa * q / (x - position).norm(),
                SourceShape::RingArc(r) => {
                    let (s, _) = r.line_quadrature(|p| 1.0 / (x - p).norm(), |v: &f64| v.abs())?;
                    kappa * q * s
                }
                _ => unreachable!("only localized leaves"),
            };
        }
        Ok(total)
    }

    /// Field per unit test charge (m/s^2 for gravity), `-grad V`.
    pub fn field_at(&self, x: Vec3, c: &Constants) -> Result<Vec3> {
        self.check_regular(x)?;
        let kappa = self.kappa(c);
        let mut total = Vec3::zeros();
        visit_leaves(&self.shape, &mut |leaf| {
            if let SourceShape::UniformField { g } = leaf {
                total += g;
            }
        });
        for (leaf, q) in self.localized_leaves() {
            total += match leaf {
                SourceShape::PointMass { position, .. } => point_field(x, *position, kappa * q),
                SourceShape::RingArc(r) => {
                    let (s, _) = r.line_quadrature(
                        |p| {
                            let d = x - p;
                            let r2 = d.norm_squared();
                            d / (r2 * r2.sqrt())
                        },
                        |v: &Vec3| v.norm(),
                    )?;
                    s * (kappa * q)
                }
                _ => unreachable!("only localized leaves"),
            };
        }
        Ok(total)
    }

    /// Point positions and coarse arc nodes, used to check another
    /// source's discretization.
    pub fn anchor_points(&self) -> Vec<Vec3> {
        let mut out = Vec::new();
        visit_leaves(&self.shape, &mut |leaf| match leaf {
            SourceShape::PointMass { position, .. } => out.push(*position),
            SourceShape::RingArc(r) => out.extend(r.nodes(RING_BASE_NODES).into_iter().map(|(p, _)| p)),
            _ => {}
        });
        out
    }

    /// Localized leaves as point charges; arcs become their converged
    /// Gauss-Legendre nodes as seen from every probe point.
    pub fn point_charges(&self, probes: &[Vec3]) -> Result<Vec<PointCharge>> {
        let mut out = Vec::new();
        for (leaf, q) in self.localized_leaves() {
            match leaf {
                SourceShape::PointMass { position, .. } => out.push(PointCharge {
                    position: *position,
                    strength: q,
                }),
                SourceShape::RingArc(r) => {
                    let mut n = RING_BASE_NODES;
                    for &p in probes {
                        let (_, used) =
                            r.line_quadrature(|x| 1.0 / (p - x).norm(), |v: &f64| v.abs())?;
                        n = n.max(used);
                    }
                    out.extend(r.nodes(n).into_iter().map(|(position, w)| PointCharge {
                        position,
                        strength: q * w,
                    }));
                }
                _ => unreachable!("only localized leaves"),
            }
        }
        Ok(out)
    }
}

/// A source translated rigidly along a path: at time `t` it sits where the
/// model is, shifted by `path(t) - reference`.
#[derive(Debug, Clone)]
pub struct MovingSource {
    pub model: SourceModel,
    pub path: Trajectory,
    pub reference: Vec3,
}

impl MovingSource {
    pub fn new(model: SourceModel, path: Trajectory, reference: Vec3) -> Self {
        MovingSource {
            model,
            path,
            reference,
        }
    }

    /// Point mass riding on `path`.
    pub fn point(mass: f64, path: Trajectory) -> Result<Self> {
        let model = SourceModel::point_mass(mass, Vec3::zeros())?;
        Ok(MovingSource::new(model, path, Vec3::zeros()))
    }

    pub fn shift(&self, t: f64) -> Vec3 {
        self.path.position(t) - self.reference
    }

    pub fn at(&self, t: f64) -> SourceModel {
        self.model.translated(self.shift(t))
    }

    pub fn potential_at(&self, x: Vec3, t: f64, c: &Constants) -> Result<f64> {
        self.model.potential_at(x - self.shift(t), c)
    }

    pub fn field_at(&self, x: Vec3, t: f64, c: &Constants) -> Result<Vec3> {
        self.model.field_at(x - self.shift(t), c)
    }

    pub fn min_distance(&self, x: Vec3, t: f64) -> f64 {
        self.model.min_distance(x - self.shift(t))
    }
}

/// `kq (x - p) / |x - p|^3`.
pub(crate) fn point_field(x: Vec3, p: Vec3, kq: f64) -> Vec3 {
    let d = x - p;
    let r2 = d.norm_squared();
    d * (kq / (r2 * r2.sqrt()))
}

fn visit_leaves<'a>(s: &'a SourceShape, f: &mut impl FnMut(&'a SourceShape)) {
    match s {
        SourceShape::Composite(parts) => parts.iter().for_each(|p| visit_leaves(p, f)),
        leaf => f(leaf),
    }
}

fn count_localized(s: &SourceShape) -> usize {
    let mut n = 0;
    visit_leaves(s, &mut |leaf| {
        if matches!(leaf, SourceShape::PointMass { .. } | SourceShape::RingArc(_)) {
            n += 1;
        }
    });
    n
}

fn finite3(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}

fn validate_shape(s: &SourceShape, depth: usize) -> Result<()> {
    let bad = |msg: String| Err(Error::Validation(msg));
    match s {
        SourceShape::PointMass { mass, position } => {
            if !(mass.is_finite() && *mass > 0.0) {
                return bad(format!("point mass must be positive, got {mass}"));
            }
            if !finite3(position) {
                return bad("point mass position must be finite".into());
            }
        }
        SourceShape::RingArc(r) => {
            if !(r.mass.is_finite() && r.mass > 0.0) {
                return bad(format!("ring mass must be positive, got {}", r.mass));
            }
            if !(r.radius.is_finite() && r.radius > 0.0) {
                return bad(format!("ring radius must be positive, got {}", r.radius));
            }
            if !(r.arc_span > 0.0 && r.arc_span <= TAU) {
                return bad(format!("arc span must lie in (0, 2 pi], got {}", r.arc_span));
            }
            if (r.normal.norm() - 1.0).abs() > 1e-12 {
                return bad("ring normal must be unit length".into());
            }
            if (r.start_dir.norm() - 1.0).abs() > 1e-12 || r.start_dir.dot(&r.normal).abs() > 1e-12 {
                return bad("arc start direction must be a unit vector in the ring plane".into());
            }
            if !finite3(&r.center) {
                return bad("ring center must be finite".into());
            }
        }
        SourceShape::UniformField { g } => {
            if !finite3(g) {
                return bad("uniform field must be finite".into());
            }
        }
        SourceShape::Composite(parts) => {
            if depth > MAX_NESTING {
                return bad(format!("composite nesting deeper than {MAX_NESTING}"));
            }
            if parts.is_empty() {
                return bad("composite source needs at least one part".into());
            }
            for p in parts {
                validate_shape(p, depth + 1)?;
            }
        }
    }
    Ok(())
}
