//! Scenario files: parsing with unit-suffixed keys, parameter sweeps,
//! content hashing and the phase runner behind the command-line tool.

use std::f64::consts::PI;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::analysis::{backaction_bounds, BackactionBounds, BackactionScenario};
use crate::constants::{Constants, ConstantsOverride};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kinematics::{
    beamsplitter_amplitudes, mach_zehnder_arms, parabolic_source, pulse_time_from_separation,
    semiclassical_evolve_with, InterferometerSpec,
};
use crate::phase::{
    fit_fringe, fringe_scan, phase_from_field_energy_source, phase_potential_integral_source,
    phase_semiclassical, ports_from_phase, PhaseMethod, PhaseResult,
};
use crate::qrf::{entanglement_partition, phase_in_frame, qrf_transform, BranchState, EntanglementReport, FrameTransform};
use crate::sources::{interaction_energy, Coupling, MovingSource, QuadratureSpec, RingArc, SourceModel, SourceShape};
use crate::trajectory::Trajectory;
use crate::Vec3;

pub const ASSUME_T_FROM_SEPARATION: &str =
    "pulse separation T derived from the arm-to-arm separation 2 hbar k T / m at t = T";
pub const ASSUME_GRADIOMETER: &str =
    "reported phase is the upper interferometer minus the lower interferometer";

const SECTIONS: &[(&str, &[&str])] = &[
    ("scenario", &["id", "methods", "P1_values_frac"]),
    (
        "constants",
        &["G_m3_per_kg_s2", "hbar_J_s", "eps0_F_per_m", "m_rb87_kg", "lambda_L_m"],
    ),
    (
        "interferometer",
        &[
            "mass_kg",
            "momentum_order_count",
            "k_per_m",
            "T_s",
            "separation_m",
            "x0_m",
            "axis_unit",
            "P1_frac",
            "detector_mass_kg",
            "include_lower_interferometer",
            "lower_baseline_m",
        ],
    ),
    ("source", SOURCE_KEYS),
    (
        "source_trajectory",
        &["xs0_m", "upper_arm_apex_above_source_m", "accel_m_per_s2"],
    ),
    (
        "quadrature",
        &[
            "time_nodes_count",
            "field_energy_time_nodes_count",
            "domain_radius_m",
            "radial_cells_count",
            "angular_cells_count",
            "exclusion_radius_m",
            "rel_tol_frac",
        ],
    ),
    ("semiclassical", &["steps_count", "exclusion_radius_m"]),
    ("output", &["dir", "fringe_points_count"]),
];

const SOURCE_KEYS: &[&str] = &[
    "kind",
    "mass_kg",
    "position_m",
    "radius_m",
    "center_m",
    "normal_unit",
    "arc_span_rad",
    "arc_start_unit",
    "g_m_per_s2",
    "coupling",
    "coupling_constant_N_m2_per_C2",
    "charges_C",
    "parts",
];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub id: String,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(rename = "P1_values_frac")]
    pub p1_values: Option<Vec<f64>>,
}

fn default_methods() -> Vec<String> {
    vec!["potential_integral".into()]
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferometerSection {
    pub mass_kg: Option<f64>,
    pub momentum_order_count: Option<f64>,
    pub k_per_m: Option<f64>,
    #[serde(rename = "T_s")]
    pub t_s: Option<f64>,
    pub separation_m: Option<f64>,
    pub x0_m: Option<[f64; 3]>,
    pub axis_unit: Option<[f64; 3]>,
    #[serde(rename = "P1_frac")]
    pub p1_frac: Option<f64>,
    pub detector_mass_kg: Option<f64>,
    #[serde(default)]
    pub include_lower_interferometer: bool,
    pub lower_baseline_m: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub kind: String,
    pub mass_kg: Option<f64>,
    /// Point-mass offset from the source reference point.
    pub position_m: Option<[f64; 3]>,
    pub radius_m: Option<f64>,
    /// Ring-centre offset from the source reference point.
    pub center_m: Option<[f64; 3]>,
    pub normal_unit: Option<[f64; 3]>,
    pub arc_span_rad: Option<f64>,
    pub arc_start_unit: Option<[f64; 3]>,
    pub g_m_per_s2: Option<[f64; 3]>,
    pub coupling: Option<String>,
    #[serde(rename = "coupling_constant_N_m2_per_C2")]
    pub coupling_constant: Option<f64>,
    #[serde(rename = "charges_C")]
    pub charges: Option<Vec<f64>>,
    pub parts: Option<Vec<SourceSection>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceTrajectorySection {
    pub xs0_m: Option<[f64; 3]>,
    pub upper_arm_apex_above_source_m: Option<f64>,
    pub accel_m_per_s2: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSection {
    pub time_nodes_count: Option<usize>,
    pub field_energy_time_nodes_count: Option<usize>,
    pub domain_radius_m: Option<f64>,
    pub radial_cells_count: Option<usize>,
    pub angular_cells_count: Option<usize>,
    pub exclusion_radius_m: Option<f64>,
    pub rel_tol_frac: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemiclassicalSection {
    pub steps_count: Option<usize>,
    pub exclusion_radius_m: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
    pub fringe_points_count: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub constants: ConstantsOverride,
    #[serde(default)]
    pub interferometer: InterferometerSection,
    pub source: SourceSection,
    #[serde(default)]
    pub source_trajectory: SourceTrajectorySection,
    #[serde(default)]
    pub quadrature: QuadratureSection,
    #[serde(default)]
    pub semiclassical: SemiclassicalSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Git-style content hash: SHA-256 over `"blob <len>\0" + content`.
pub fn config_hash(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", text.len()).as_bytes());
    h.update(text.as_bytes());
    hex::encode(h.finalize())
}

fn line_of(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if let Some(rest) = l.strip_prefix('[') {
            current = rest.trim_start_matches('[').split(']').next().unwrap_or("").trim().to_string();
            continue;
        }
        let name = l.split('=').next().unwrap_or("").trim().trim_matches('"');
        if current == section && name == key && l.contains('=') {
            return Some(i + 1);
        }
    }
    None
}

fn unknown_key(text: &str, section: &str, key: &str, allowed: &[&str]) -> Error {
    let at = line_of(text, section, key).map_or(String::new(), |l| format!(" (line {l})"));
    let prefix = format!("{key}_");
    let hints: Vec<&str> = allowed.iter().copied().filter(|k| k.starts_with(&prefix)).collect();
    let hint = if hints.is_empty() {
        format!("allowed keys: {}", allowed.join(", "))
    } else {
        format!(
            "physical keys carry a unit suffix; did you mean {}?",
            hints.iter().map(|h| format!("`{h}`")).collect::<Vec<_>>().join(" or ")
        )
    };
    Error::Config(format!("unknown key `{key}` in [{section}]{at}: {hint}"))
}

fn check_keys(text: &str, table: &toml::Table) -> Result<()> {
    for (section, value) in table {
        let Some((_, allowed)) = SECTIONS.iter().find(|(s, _)| s == section) else {
            let names: Vec<&str> = SECTIONS.iter().map(|(s, _)| *s).collect();
            return Err(Error::Config(format!(
                "unknown section [{section}]; expected one of {}",
                names.join(", ")
            )));
        };
        let toml::Value::Table(t) = value else {
            return Err(Error::Config(format!("[{section}] must be a table")));
        };
        check_table(text, section, t, allowed)?;
    }
    Ok(())
}

fn check_table(text: &str, section: &str, t: &toml::Table, allowed: &[&str]) -> Result<()> {
    for (key, v) in t {
        if !allowed.contains(&key.as_str()) {
            return Err(unknown_key(text, section, key, allowed));
        }
        if section == "source" && key == "parts" {
            let toml::Value::Array(parts) = v else {
                return Err(Error::Config("source.parts must be an array of tables".into()));
            };
            for p in parts {
                let toml::Value::Table(pt) = p else {
                    return Err(Error::Config("source.parts must be an array of tables".into()));
                };
                check_table(text, "source", pt, SOURCE_KEYS)?;
            }
        }
    }
    Ok(())
}

fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| Error::Config(format!("scenario file does not parse: {e}")))
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let table = parse_table(text)?;
        Self::from_table(text, table)
    }

    fn from_table(text: &str, table: toml::Table) -> Result<Self> {
        check_keys(text, &table)?;
        toml::Value::Table(table)
            .try_into::<ScenarioConfig>()
            .map_err(|e| Error::Config(format!("scenario file: {e}")))
    }
}

/// Text of `text` with the numeric leaf at `path` (`section.key` or
/// `section.key[i]`) set to `value`.
pub fn set_numeric(text: &str, path: &str, value: f64) -> Result<String> {
    let mut table = parse_table(text)?;
    let (section, rest) = path
        .split_once('.')
        .ok_or_else(|| Error::Validation(format!("sweep key `{path}` must look like section.key")))?;
    let (key, index) = match rest.split_once('[') {
        Some((k, idx)) => {
            let i: usize = idx
                .trim_end_matches(']')
                .parse()
                .map_err(|_| Error::Validation(format!("bad index in sweep key `{path}`")))?;
            (k, Some(i))
        }
        None => (rest, None),
    };
    let allowed = SECTIONS
        .iter()
        .find(|(s, _)| *s == section)
        .map(|(_, k)| *k)
        .ok_or_else(|| Error::Validation(format!("unknown section in sweep key `{path}`")))?;
    if !allowed.contains(&key) {
        return Err(unknown_key(text, section, key, allowed));
    }
    let sec = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let toml::Value::Table(sec) = sec else {
        return Err(Error::Validation(format!("[{section}] is not a table")));
    };
    let is_count = key.ends_with("_count");
    let number = |v: f64| -> Result<toml::Value> {
        if is_count {
            if v.fract() != 0.0 || v < 0.0 {
                return Err(Error::Validation(format!("`{path}` takes whole numbers, got {v}")));
            }
            Ok(toml::Value::Integer(v as i64))
        } else {
            Ok(toml::Value::Float(v))
        }
    };
    match index {
        None => {
            if let Some(existing) = sec.get(key) {
                if !matches!(existing, toml::Value::Float(_) | toml::Value::Integer(_)) {
                    return Err(Error::Validation(format!("sweep key `{path}` is not a numeric leaf")));
                }
            } else if matches!(key, "id" | "methods" | "kind" | "coupling" | "dir" | "parts")
                || key.ends_with("_unit")
                || key == "include_lower_interferometer"
            {
                return Err(Error::Validation(format!("sweep key `{path}` is not a numeric leaf")));
            }
            sec.insert(key.to_string(), number(value)?);
        }
        Some(i) => {
            let Some(toml::Value::Array(arr)) = sec.get_mut(key) else {
                return Err(Error::Validation(format!("sweep key `{path}` does not name an existing array")));
            };
            let slot = arr
                .get_mut(i)
                .ok_or_else(|| Error::Validation(format!("index {i} out of range in `{path}`")))?;
            if !matches!(slot, toml::Value::Float(_) | toml::Value::Integer(_)) {
                return Err(Error::Validation(format!("sweep key `{path}` is not a numeric leaf")));
            }
            *slot = number(value)?;
        }
    }
    // The swept P1 replaces the P1 list.
    if path == "interferometer.P1_frac" {
        if let Some(toml::Value::Table(s)) = table.get_mut("scenario") {
            s.remove("P1_values_frac");
        }
    }
    toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn need<T: Copy>(v: Option<T>, what: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("missing required key {what}")))
}

fn build_shape(s: &SourceSection, charges: &mut Vec<f64>) -> Result<SourceShape> {
    if let Some(q) = &s.charges {
        if s.kind != "composite" {
            charges.extend_from_slice(q);
        }
    }
    match s.kind.as_str() {
        // A massless source is no source at all.
        "point_mass" if s.mass_kg == Some(0.0) => Ok(SourceShape::UniformField { g: Vec3::zeros() }),
        "point_mass" => Ok(SourceShape::PointMass {
            mass: need(s.mass_kg, "source.mass_kg")?,
            position: vec3(s.position_m.unwrap_or([0.0; 3])),
        }),
        "ring_arc" => {
            let normal = vec3(s.normal_unit.unwrap_or([0.0, 0.0, 1.0]));
            let mut ring = RingArc::new(
                need(s.mass_kg, "source.mass_kg")?,
                need(s.radius_m, "source.radius_m")?,
                vec3(s.center_m.unwrap_or([0.0; 3])),
                normal,
                s.arc_span_rad.unwrap_or(2.0 * PI),
            );
            if let Some(d) = s.arc_start_unit {
                ring.start_dir = vec3(d);
            }
            Ok(SourceShape::RingArc(ring))
        }
        "uniform_field" => Ok(SourceShape::UniformField {
            g: vec3(need(s.g_m_per_s2, "source.g_m_per_s2")?),
        }),
        "composite" => {
            let parts = s
                .parts
                .as_ref()
                .ok_or_else(|| Error::Config("composite source needs source.parts".into()))?;
            let mut out = Vec::with_capacity(parts.len());
            for p in parts {
                out.push(build_shape(p, charges)?);
            }
            Ok(SourceShape::Composite(out))
        }
        other => Err(Error::Config(format!(
            "unknown source.kind `{other}` (expected point_mass, ring_arc, uniform_field or composite)"
        ))),
    }
}

fn build_source(s: &SourceSection, c: &Constants) -> Result<SourceModel> {
    let mut charges = Vec::new();
    let shape = build_shape(s, &mut charges)?;
    let coupling = match s.coupling.as_deref().unwrap_or("gravity") {
        "gravity" => Coupling::Gravity,
        "electrostatic" => Coupling::InverseSquare {
            constant: c.coulomb(),
            charges,
        },
        "inverse_square" => Coupling::InverseSquare {
            constant: need(s.coupling_constant, "source.coupling_constant_N_m2_per_C2")?,
            charges,
        },
        other => Err(Error::Config(format!(
            "unknown source.coupling `{other}` (expected gravity, electrostatic or inverse_square)"
        )))?,
    };
    SourceModel::new(shape, coupling)
}

/// A fully resolved scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: String,
    pub hash: String,
    pub constants: Constants,
    /// Interferometer at the default P1.
    pub spec: InterferometerSpec,
    /// Source geometry as placed at t = T.
    pub source: SourceModel,
    pub methods: Vec<PhaseMethod>,
    pub p1_values: Vec<f64>,
    pub lower_baseline: Option<f64>,
    pub time_nodes: usize,
    pub field_energy_time_nodes: usize,
    pub quadrature: QuadratureSpec,
    pub steps: usize,
    pub exclusion_radius: f64,
    pub output_dir: String,
    pub fringe_points: usize,
    pub assumptions: Vec<String>,
}

/// Command-line overrides applied after parsing.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub steps: Option<usize>,
    pub rel_tol: Option<f64>,
}

impl Scenario {
    pub fn from_toml(text: &str, o: Overrides) -> Result<Self> {
        let cfg = ScenarioConfig::from_toml(text)?;
        Scenario::build(&cfg, config_hash(text), o)
    }

    pub fn build(cfg: &ScenarioConfig, hash: String, o: Overrides) -> Result<Self> {
        let c = Constants::default().with_overrides(&cfg.constants)?;
        let it = &cfg.interferometer;
        let mut assumptions = Vec::new();
        let m = it.mass_kg.unwrap_or(c.m_rb87);
        let k = match (it.k_per_m, it.momentum_order_count) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "give either interferometer.k_per_m or interferometer.momentum_order_count, not both".into(),
                ))
            }
            (Some(k), None) => k,
            (None, Some(n)) => n * c.k_laser(),
            (None, None) => {
                return Err(Error::Config(
                    "missing interferometer.k_per_m or interferometer.momentum_order_count".into(),
                ))
            }
        };
        let t_pulse = match (it.t_s, it.separation_m) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "give either interferometer.T_s or interferometer.separation_m, not both".into(),
                ))
            }
            (Some(t), None) => t,
            (None, Some(sep)) => {
                assumptions.push(ASSUME_T_FROM_SEPARATION.to_string());
                pulse_time_from_separation(sep, k, m, &c)?
            }
            (None, None) => {
                return Err(Error::Config(
                    "missing interferometer.T_s or interferometer.separation_m".into(),
                ))
            }
        };
        let axis = vec3(it.axis_unit.unwrap_or([0.0, 0.0, 1.0]));
        let x0 = vec3(it.x0_m.unwrap_or([0.0; 3]));
        let st = &cfg.source_trajectory;
        let xs0 = match (st.xs0_m, st.upper_arm_apex_above_source_m) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "give either source_trajectory.xs0_m or source_trajectory.upper_arm_apex_above_source_m".into(),
                ))
            }
            (Some(x), None) => vec3(x),
            (None, Some(h)) => x0 + axis * (c.hbar * k / m * t_pulse - h),
            (None, None) => {
                return Err(Error::Config(
                    "missing source_trajectory.xs0_m or source_trajectory.upper_arm_apex_above_source_m".into(),
                ))
            }
        };
        let source = build_source(&cfg.source, &c)?.translated(xs0);
        let p1 = it.p1_frac.unwrap_or(0.5);
        let spec = InterferometerSpec {
            m,
            source_mass: source.localized_part().map_or(1.0, |l| l.total_mass()),
            detector_mass: it.detector_mass_kg.unwrap_or(1.0),
            k,
            t_pulse,
            x0,
            xs0,
            a_src: vec3(st.accel_m_per_s2.unwrap_or([0.0; 3])),
            p1,
            axis,
        };
        spec.validate()?;
        let methods = cfg
            .scenario
            .methods
            .iter()
            .map(|s| PhaseMethod::parse(s))
            .collect::<Result<Vec<_>>>()?;
        if methods.is_empty() {
            return Err(Error::Config("scenario.methods must name at least one method".into()));
        }
        let p1_values = cfg.scenario.p1_values.clone().unwrap_or_else(|| vec![p1]);
        for &p in &p1_values {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Validation(format!("P1 value {p} outside [0, 1]")));
            }
        }
        let lower_baseline = if it.include_lower_interferometer {
            assumptions.push(ASSUME_GRADIOMETER.to_string());
            Some(need(it.lower_baseline_m, "interferometer.lower_baseline_m")?)
        } else {
            None
        };
        let q = &cfg.quadrature;
        let rel_tol = o.rel_tol.or(q.rel_tol_frac).unwrap_or(1e-9);
        let steps = o.steps.or(cfg.semiclassical.steps_count).unwrap_or(4000);
        let mut scenario = Scenario {
            id: cfg.scenario.id.clone(),
            hash,
            constants: c,
            spec,
            source,
            methods,
            p1_values,
            lower_baseline,
            time_nodes: q.time_nodes_count.unwrap_or(1025),
            field_energy_time_nodes: q.field_energy_time_nodes_count.unwrap_or(129),
            quadrature: QuadratureSpec {
                rel_tol,
                radial_cells: q.radial_cells_count.unwrap_or(8),
                angular_cells: q.angular_cells_count.unwrap_or(4),
                ..QuadratureSpec::default()
            },
            steps,
            exclusion_radius: cfg.semiclassical.exclusion_radius_m.unwrap_or(1e-3),
            output_dir: cfg.output.dir.clone().unwrap_or_else(|| "out".into()),
            fringe_points: cfg.output.fringe_points_count.unwrap_or(64),
            assumptions,
        };
        let (min_sep, max_sep) = scenario.separation_range()?;
        let auto = QuadratureSpec::for_separations(min_sep, max_sep);
        scenario.quadrature.domain_radius = q.domain_radius_m.unwrap_or(auto.domain_radius);
        scenario.quadrature.exclusion_radius = q.exclusion_radius_m.unwrap_or(auto.exclusion_radius);
        scenario.quadrature.validate()?;
        Ok(scenario)
    }

    /// The interferometers whose phases are combined: upper, then lower if present.
    pub fn interferometers(&self, p1: f64) -> Vec<InterferometerSpec> {
        let up = self.spec.with_p1(p1);
        let mut out = vec![up.clone()];
        if let Some(b) = self.lower_baseline {
            out.push(up.shifted(-self.spec.axis * b));
        }
        out
    }

    pub fn source_path(&self) -> Result<Trajectory> {
        parabolic_source(&self.spec)
    }

    pub fn moving_source(&self) -> Result<MovingSource> {
        Ok(MovingSource::new(self.source.clone(), self.source_path()?, self.spec.xs0))
    }

    /// Smallest and largest arm-to-source-element distances over the run.
    fn separation_range(&self) -> Result<(f64, f64)> {
        let Some(local) = self.source.localized_part() else {
            return Ok((1.0, 1.0));
        };
        let anchors = local.anchor_points();
        let path = self.source_path()?;
        let grid = TimeGrid::interferometer(self.spec.t_pulse, 17)?;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for spec in self.interferometers(self.spec.p1) {
            let (x1, x2) = mach_zehnder_arms(&spec, &self.constants)?;
            for t in grid.times() {
                let shift = path.position(t) - self.spec.xs0;
                for x in [x1.position(t), x2.position(t)] {
                    for a in &anchors {
                        let d = (x - (a + shift)).norm();
                        lo = lo.min(d);
                        hi = hi.max(d);
                    }
                }
            }
        }
        Ok((lo, hi))
    }

    fn grid(&self, nodes: usize) -> Result<TimeGrid> {
        TimeGrid::interferometer(self.spec.t_pulse, nodes)
    }

    /// Phase for one method at one P1, gradiometer-combined when configured.
    pub fn phase(&self, method: PhaseMethod, p1: f64) -> Result<PhaseResult> {
        let c = &self.constants;
        let mut results = Vec::new();
        for spec in self.interferometers(p1) {
            let r = match method {
                PhaseMethod::PotentialIntegral => {
                    let (x1, x2) = mach_zehnder_arms(&spec, c)?;
                    phase_potential_integral_source(&x1, &x2, &self.moving_source()?, spec.m, &self.grid(self.time_nodes)?, c)?
                }
                PhaseMethod::FieldEnergy => {
                    let (x1, x2) = mach_zehnder_arms(&spec, c)?;
                    phase_from_field_energy_source(
                        &x1,
                        &x2,
                        &self.moving_source()?,
                        spec.m,
                        &self.grid(self.field_energy_time_nodes)?,
                        &self.quadrature,
                        c,
                    )?
                }
                PhaseMethod::Semiclassical => {
                    let evo = semiclassical_evolve_with(&spec, &self.source, self.steps, self.exclusion_radius, c)?;
                    phase_semiclassical(&evo, &spec, &self.source, c)?
                }
            };
            results.push(r);
        }
        let mut total = results[0].clone();
        for r in &results[1..] {
            total = total.minus(r);
        }
        Ok(total)
    }

    /// Every configured method at every configured P1, in that order.
    pub fn run(&self) -> Result<RunReport> {
        let mut rows = Vec::new();
        let mut fringes = Vec::new();
        for &method in &self.methods {
            for &p1 in &self.p1_values {
                let result = self.phase(method, p1)?;
                rows.push(PhaseRow {
                    method,
                    p1,
                    result: result.clone(),
                });
            }
        }
        let fringe_method = self.methods[0];
        for row in rows.iter().filter(|r| r.method == fringe_method) {
            fringes.push(self.fringe(row.p1, row.result.delta_phi)?);
        }
        let mut assumptions = self.assumptions.clone();
        for row in &rows {
            for a in &row.result.assumptions {
                if !assumptions.contains(a) {
                    assumptions.push(a.clone());
                }
            }
        }
        Ok(RunReport {
            scenario_id: self.id.clone(),
            config_hash: self.hash.clone(),
            t_pulse: self.spec.t_pulse,
            k: self.spec.k,
            rows,
            fringes,
            assumptions,
        })
    }

    pub fn fringe(&self, p1: f64, delta_phi: f64) -> Result<Fringe> {
        let (a1, a2) = beamsplitter_amplitudes(p1)?;
        let scan = fringe_scan(delta_phi, a1, a2, self.fringe_points)?;
        let fit = if p1 > 0.0 && p1 < 1.0 { Some(fit_fringe(&scan)?) } else { None };
        let ports = ports_from_phase(delta_phi, a1, a2, 0.0, 0.0)?;
        Ok(Fringe {
            p1,
            delta_phi,
            scan,
            fitted_phase: fit.map(|f| f.delta_phi),
            contrast: fit.map_or(0.0, |f| f.contrast),
            contrast_folded_phase: ports.contrast_phase(),
        })
    }

    /// Axis components (t, x1, x2, x_cm, xs) of the upper interferometer.
    pub fn trajectory_rows(&self, p1: f64) -> Result<Vec<[f64; 5]>> {
        let c = &self.constants;
        let spec = self.spec.with_p1(p1);
        let xs = self.source_path()?;
        let ax = spec.axis;
        let (x1, x2, xcm, times) = if self.methods.contains(&PhaseMethod::Semiclassical) {
            let evo = semiclassical_evolve_with(&spec, &self.source, self.steps, self.exclusion_radius, c)?;
            let mut times = evo.times.clone();
            times.dedup();
            (evo.x1, evo.x2, evo.x_cm, times)
        } else {
            let (x1, x2) = mach_zehnder_arms(&spec, c)?;
            let xcm = x1.combine(spec.p1, &x2, spec.p2())?;
            (x1, x2, xcm, self.grid(self.time_nodes.min(2049))?.times())
        };
        Ok(times
            .iter()
            .map(|&t| {
                [
                    t,
                    ax.dot(&x1.position(t)),
                    ax.dot(&x2.position(t)),
                    ax.dot(&xcm.position(t)),
                    ax.dot(&xs.position(t)),
                ]
            })
            .collect())
    }
}

/// Frame-D against frame-A bookkeeping for one two-branch scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct FramesReport {
    pub phase_d: f64,
    pub phase_a: f64,
    pub rel_diff: f64,
    /// Partition {A, field} | {B} in frame D.
    pub entanglement_d: EntanglementReport,
    /// Partition {B, field} | {D} in frame A.
    pub entanglement_a: EntanglementReport,
    pub pass: bool,
}

/// Relative tolerance for the frame-equality verdict.
pub const FRAME_TOL: f64 = 1e-12;

/// `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Energy of the atom at `x0` in the source field, two ways.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyCheck {
    pub field_energy: f64,
    pub potential_energy: f64,
    pub rel_diff: f64,
    pub achieved_rel_tol: f64,
}

impl Scenario {
    /// Detector D at the origin, test atom A on the two arms, source B on
    /// its path; the phase is computed in D's frame and again after moving
    /// to A's frame.
    pub fn frame_states(&self, p1: f64) -> Result<(BranchState, BranchState)> {
        let local = self.source.localized_part();
        let mass = match local.as_ref().map(|l| l.shape()) {
            None => 0.0,
            Some(SourceShape::PointMass { mass, .. }) => *mass,
            Some(_) => {
                return Err(Error::Scenario(
                    "frame comparison needs a point-mass source".into(),
                ))
            }
        };
        let spec = self.spec.with_p1(p1);
        let (x1, x2) = mach_zehnder_arms(&spec, &self.constants)?;
        let offset = match local.as_ref().map(|l| l.shape()) {
            Some(SourceShape::PointMass { position, .. }) => position - self.spec.xs0,
            _ => Vec3::zeros(),
        };
        let xs = self.source_path()?.translated(offset);
        let times = self.grid(65)?.times();
        let d = BranchState::interferometer(
            ("D", spec.detector_mass),
            ("A", spec.m),
            ("B", mass),
            &x1,
            &x2,
            &xs,
            beamsplitter_amplitudes(p1)?,
            times,
        )?;
        let a = qrf_transform(&d, &FrameTransform::new("D", "A"))?;
        Ok((d, a))
    }

    pub fn frames(&self, p1: f64) -> Result<FramesReport> {
        let (d, a) = self.frame_states(p1)?;
        let grid = self.grid(self.time_nodes)?;
        let phase_d = phase_in_frame(&d, "A", "B", &grid, &self.constants)?.delta_phi;
        let phase_a = phase_in_frame(&a, "A", "B", &grid, &self.constants)?.delta_phi;
        let rel = rel_diff(phase_d, phase_a);
        Ok(FramesReport {
            phase_d,
            phase_a,
            rel_diff: rel,
            entanglement_d: entanglement_partition(&d, &["A"])?,
            entanglement_a: entanglement_partition(&a, &["B"])?,
            pass: rel <= FRAME_TOL,
        })
    }

    /// Field-energy cross term against the atom's potential energy at `x0`.
    pub fn energy_check(&self) -> Result<EnergyCheck> {
        let c = &self.constants;
        if !matches!(self.source.coupling(), Coupling::Gravity) {
            return Err(Error::Scenario(
                "the energy check pairs the source with the atom and needs gravitational coupling".into(),
            ));
        }
        let atom = SourceModel::point_mass(self.spec.m, self.spec.x0)?;
        let e = interaction_energy(&self.source, &atom, &self.quadrature, c)?;
        let v = self
            .source
            .localized_part()
            .map_or(Ok(0.0), |l| l.potential_at(self.spec.x0, c))?
            * self.spec.m;
        Ok(EnergyCheck {
            field_energy: e.value,
            potential_energy: v,
            rel_diff: rel_diff(e.value, v),
            achieved_rel_tol: e.achieved_rel_tol,
        })
    }

    pub fn backaction(&self, delta_v: f64, p1: f64) -> Result<BackactionBounds> {
        let spec = self.spec.with_p1(p1);
        let (x1, x2) = mach_zehnder_arms(&spec, &self.constants)?;
        let scenario = BackactionScenario {
            x1,
            x2,
            source: self.moving_source()?,
            m: spec.m,
            grid: self.grid(self.time_nodes)?,
        };
        backaction_bounds(spec.source_mass, delta_v, &scenario, &self.constants)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRow {
    pub method: PhaseMethod,
    pub p1: f64,
    pub result: PhaseResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fringe {
    pub p1: f64,
    pub delta_phi: f64,
    /// (reference phase, P(d1)).
    pub scan: Vec<(f64, f64)>,
    /// Phase recovered by the sinusoid fit; absent without interference.
    pub fitted_phase: Option<f64>,
    pub contrast: f64,
    /// `arccos((P1 - P2) / (P1 + P2))` at zero reference phase.
    pub contrast_folded_phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub scenario_id: String,
    pub config_hash: String,
    pub t_pulse: f64,
    pub k: f64,
    pub rows: Vec<PhaseRow>,
    pub fringes: Vec<Fringe>,
    pub assumptions: Vec<String>,
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

/// Seventeen significant digits.
pub fn fmt_17(v: f64) -> String {
    format!("{v:.16e}")
}

impl RunReport {
    /// Flat `key = value` text; identical inputs give identical bytes.
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("scenario_id = {}\n", self.scenario_id));
        s.push_str(&format!("config_hash = {}\n", self.config_hash));
        s.push_str(&format!("constants_version = {}\n", Constants::shipped_version()));
        s.push_str(&format!("T_s = {}\n", fmt_17(self.t_pulse)));
        s.push_str(&format!("k_per_m = {}\n", fmt_17(self.k)));
        for r in &self.rows {
            let key = format!("phase.{}.P1_{}", r.method.name(), r.p1);
            s.push_str(&format!("{key}.delta_phi_rad = {}\n", fmt_17(r.result.delta_phi)));
            s.push_str(&format!("{key}.quadrature_tol = {}\n", fmt_f64(r.result.quadrature_tol)));
        }
        for f in &self.fringes {
            let key = format!("fringe.P1_{}", f.p1);
            match f.fitted_phase {
                Some(p) => s.push_str(&format!("{key}.fitted_delta_phi_rad = {}\n", fmt_17(p))),
                None => s.push_str(&format!("{key}.fitted_delta_phi_rad = none\n")),
            }
            s.push_str(&format!("{key}.contrast = {}\n", fmt_17(f.contrast)));
            s.push_str(&format!(
                "{key}.contrast_folded_phase_rad = {}\n",
                fmt_17(f.contrast_folded_phase)
            ));
        }
        for (i, a) in self.assumptions.iter().enumerate() {
            s.push_str(&format!("assumption.{i} = {a}\n"));
        }
        s
    }
}
