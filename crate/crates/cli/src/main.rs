//! Command-line front end: scenario runs, sweeps, frame checks, fits,
//! energy and back-action reports.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use gravphase::analysis::{
    reduced_chi_squared, weighted_linear_fit_with, ModelValues, PValueModel, PhaseDataPoint,
};
use gravphase::scenario::{config_hash, fmt_17, fmt_f64, set_numeric, Overrides, Scenario};
use gravphase::sources::SourceModel;
use gravphase::{Error, Vec3};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const FIT_NOTE: &str = "slope, p-value and reduced chi2 depend on per-point sigma, which the published data do not give; \
they are demonstrations with user-supplied sigma, not acceptance targets";

#[derive(Parser)]
#[command(name = "gravphase", version, about = "Matter-wave interferometer phase simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file (TOML, unit-suffixed keys).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides [output].dir.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Semiclassical integrator steps (multiple of 4, at least 1000).
    #[arg(long)]
    steps: Option<usize>,
    /// Relative tolerance for the field-energy quadrature.
    #[arg(long)]
    rel_tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Phases, fringe scans and trajectories for one scenario.
    Run(Common),
    /// One run per value of a numeric key.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Key path such as `interferometer.P1_frac` or `source_trajectory.xs0_m[2]`.
        #[arg(long)]
        key: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<f64>,
    },
    /// Phase in the detector frame against the atom frame.
    Frames {
        #[command(flatten)]
        common: Common,
        /// Randomize source mass, position, acceleration and P1 from this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of randomized scenarios when --seed is given.
        #[arg(long, default_value_t = 100)]
        count: usize,
    },
    /// Weighted linear fit of phase against upper-arm probability.
    Fit {
        /// CSV with header p_upper,phase_rad,sigma_rad.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Student-t p-value instead of the normal approximation.
        #[arg(long)]
        student_t: bool,
        /// Model phase for the reduced chi2 (rad).
        #[arg(long, allow_hyphen_values = true)]
        model_rad: Option<f64>,
    },
    /// Field-energy cross term against the potential energy at the atom.
    Energy(Common),
    /// Source position uncertainty against its deflection by the atom.
    Backaction {
        #[command(flatten)]
        common: Common,
        /// Source velocity spread (m/s).
        #[arg(long, default_value_t = 1e-3)]
        delta_v: f64,
    },
}

#[derive(Debug)]
enum CliError {
    Core { scenario: Option<String>, err: Error },
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Core { err, .. } => err.exit_code() as u8,
            CliError::Io(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core { scenario: Some(id), err } => write!(f, "scenario {id}: {err}"),
            CliError::Core { scenario: None, err } => write!(f, "{err}"),
            CliError::Io(m) => write!(f, "{m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        CliError::Core { scenario: None, err }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

trait InScenario<T> {
    fn within(self, id: &str) -> CliResult<T>;
}

impl<T> InScenario<T> for gravphase::Result<T> {
    fn within(self, id: &str) -> CliResult<T> {
        self.map_err(|err| CliError::Core {
            scenario: Some(id.to_string()),
            err,
        })
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

struct Loaded {
    text: String,
    scenario: Scenario,
    out_dir: PathBuf,
}

fn load(common: &Common) -> CliResult<Loaded> {
    let text = read(&common.config)?;
    let scenario = Scenario::from_toml(&text, overrides(common)).map_err(|err| CliError::Core {
        scenario: None,
        err: match err {
            Error::Config(m) => Error::Config(format!("{}: {m}", common.config.display())),
            e => e,
        },
    })?;
    let out_dir = common
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(&scenario.output_dir));
    Ok(Loaded {
        text,
        scenario,
        out_dir,
    })
}

fn overrides(common: &Common) -> Overrides {
    Overrides {
        steps: common.steps,
        rel_tol: common.rel_tol,
    }
}

/// CSV file whose first line records the configuration hash.
fn write_csv(dir: &Path, name: &str, hash: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    let mut buf = format!("# config_hash={hash}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let io = |e: csv::Error| CliError::Io(format!("csv: {e}"));
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.write_record(r).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Io(format!("csv: {e}")))?;
    }
    fs::write(&path, buf).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn write_text(dir: &Path, name: &str, text: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn cmd_run(common: &Common) -> CliResult<()> {
    let start = Instant::now();
    let Loaded { scenario: s, out_dir, .. } = load(common)?;
    let report = s.run().within(&s.id)?;
    let hash = &report.config_hash;

    let phase_rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                s.id.clone(),
                r.method.name().to_string(),
                r.p1.to_string(),
                fmt_17(r.result.delta_phi),
                fmt_f64(r.result.quadrature_tol),
            ]
        })
        .collect();
    let header = ["scenario_id", "method", "P1_frac", "delta_phi_rad", "quadrature_tol_rad"];
    let mut written = vec![write_csv(&out_dir, &format!("{}_phase.csv", s.id), hash, &header, &phase_rows)?];

    let mut fringe_rows = Vec::new();
    for f in &report.fringes {
        for (phi, p) in &f.scan {
            fringe_rows.push(vec![f.p1.to_string(), fmt_17(*phi), fmt_17(*p)]);
        }
    }
    written.push(write_csv(
        &out_dir,
        &format!("{}_fringes.csv", s.id),
        hash,
        &["P1_frac", "reference_phase_rad", "p_d1_frac"],
        &fringe_rows,
    )?);

    let traj: Vec<Vec<String>> = s
        .trajectory_rows(s.spec.p1)
        .within(&s.id)?
        .iter()
        .map(|r| r.iter().map(|v| fmt_17(*v)).collect())
        .collect();
    written.push(write_csv(
        &out_dir,
        &format!("{}_trajectories.csv", s.id),
        hash,
        &["t_s", "x1_m", "x2_m", "x_cm_m", "xs_m"],
        &traj,
    )?);
    written.push(write_text(&out_dir, &format!("{}_report.txt", s.id), &report.render())?);

    print!("{}", report.render());
    for p in &written {
        println!("wrote {}", p.display());
    }
    println!("wall_time_s = {:.3}", start.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_sweep(common: &Common, key: &str, values: &[f64]) -> CliResult<()> {
    let start = Instant::now();
    if values.is_empty() {
        return Err(Error::Validation("sweep needs at least one value".into()).into());
    }
    let base = load(common)?;
    let mut rows = Vec::new();
    for &v in values {
        let text = set_numeric(&base.text, key, v).within(&base.scenario.id)?;
        let s = Scenario::from_toml(&text, overrides(common)).within(&base.scenario.id)?;
        for &method in &s.methods {
            for &p1 in &s.p1_values {
                let r = s.phase(method, p1).within(&s.id)?;
                rows.push(vec![
                    fmt_17(v),
                    s.id.clone(),
                    method.name().to_string(),
                    p1.to_string(),
                    fmt_17(r.delta_phi),
                    fmt_f64(r.quadrature_tol),
                ]);
            }
        }
    }
    let header = [key, "scenario_id", "method", "P1_frac", "delta_phi_rad", "quadrature_tol_rad"];
    let hash = config_hash(&base.text);
    let path = write_csv(
        &base.out_dir,
        &format!("{}_sweep.csv", base.scenario.id),
        &hash,
        &header,
        &rows,
    )?;
    for r in &rows {
        println!("{} = {}  {}  P1 = {}  delta_phi_rad = {}", key, r[0], r[2], r[3], r[4]);
    }
    println!("wrote {}", path.display());
    println!("wall_time_s = {:.3}", start.elapsed().as_secs_f64());
    Ok(())
}

/// Randomized point-source variant that keeps the source clear of both arms.
fn randomized(base: &Scenario, rng: &mut StdRng) -> gravphase::Result<Scenario> {
    let mut s = base.clone();
    let mass = rng.random_range(0.05..20.0);
    let radius = rng.random_range(0.02..0.5);
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let xs0 = s.spec.x0
        + Vec3::new(radius * angle.cos(), radius * angle.sin(), rng.random_range(-0.3..0.6));
    s.source = SourceModel::point_mass(mass, xs0)?;
    s.spec.xs0 = xs0;
    s.spec.source_mass = mass;
    s.spec.a_src = Vec3::new(0.0, 0.0, rng.random_range(-10.0..10.0));
    s.spec.p1 = rng.random_range(0.05..0.95);
    s.spec.detector_mass = rng.random_range(0.1..10.0);
    s.spec.validate()?;
    Ok(s)
}

fn cmd_frames(common: &Common, seed: Option<u64>, count: usize) -> CliResult<()> {
    let start = Instant::now();
    let base = load(common)?;
    let id = base.scenario.id.clone();
    let variants: Vec<Scenario> = match seed {
        None => vec![base.scenario.clone()],
        Some(seed) => {
            let mut rng = StdRng::seed_from_u64(seed);
            (0..count)
                .map(|_| randomized(&base.scenario, &mut rng))
                .collect::<gravphase::Result<_>>()
                .within(&id)?
        }
    };
    let mut rows = Vec::new();
    let mut passed = 0;
    for (i, s) in variants.iter().enumerate() {
        let r = s.frames(s.spec.p1).within(&id)?;
        if r.pass {
            passed += 1;
        }
        rows.push(vec![
            i.to_string(),
            fmt_17(s.spec.source_mass),
            fmt_17(s.spec.p1),
            fmt_17(r.phase_d),
            fmt_17(r.phase_a),
            fmt_f64(r.rel_diff),
            r.entanglement_d.schmidt_rank.to_string(),
            r.entanglement_a.schmidt_rank.to_string(),
            if r.pass { "PASS" } else { "FAIL" }.to_string(),
        ]);
    }
    let header = [
        "index",
        "source_mass_kg",
        "P1_frac",
        "delta_phi_frame_D_rad",
        "delta_phi_frame_A_rad",
        "rel_diff",
        "schmidt_rank_A_vs_B_frame_D",
        "schmidt_rank_B_vs_D_frame_A",
        "verdict",
    ];
    let name = match seed {
        None => format!("{id}_frames.csv"),
        Some(s) => format!("{id}_frames_seed{s}.csv"),
    };
    let hash = config_hash(&base.text);
    let path = write_csv(&base.out_dir, &name, &hash, &header, &rows)?;
    if let [row] = rows.as_slice() {
        let r = base.scenario.frames(base.scenario.spec.p1).within(&id)?;
        println!("delta_phi_frame_D_rad = {}", row[3]);
        println!("delta_phi_frame_A_rad = {}", row[4]);
        println!("rel_diff = {}", row[5]);
        for (frame, e) in [("D", &r.entanglement_d), ("A", &r.entanglement_a)] {
            println!(
                "entanglement.frame_{frame} = {{{}}} | {{{}}}: schmidt_rank {}, {}",
                e.bipartition.0.join(", "),
                e.bipartition.1.join(", "),
                e.schmidt_rank,
                if e.is_product { "product" } else { "entangled" }
            );
        }
    }
    println!("verdict = {passed}/{} PASS", rows.len());
    println!("wrote {}", path.display());
    println!("wall_time_s = {:.3}", start.elapsed().as_secs_f64());
    if passed != rows.len() {
        return Err(Error::InternalConsistency(format!(
            "{} of {} scenarios disagree between frames beyond {:e}",
            rows.len() - passed,
            rows.len(),
            gravphase::scenario::FRAME_TOL
        ))
        .into());
    }
    Ok(())
}

fn column(headers: &csv::StringRecord, name: &str) -> CliResult<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Validation(format!("fit input lacks column `{name}`")).into())
}

fn read_points(path: &Path) -> CliResult<(String, Vec<PhaseDataPoint>)> {
    let text = read(path)?;
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = r
        .headers()
        .map_err(|e| Error::Validation(format!("fit input header: {e}")))?
        .clone();
    let cols = [
        column(&headers, "p_upper")?,
        column(&headers, "phase_rad")?,
        column(&headers, "sigma_rad")?,
    ];
    let mut points = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Validation(format!("fit input: {e}")))?;
        let mut v = [0.0; 3];
        for (slot, &c) in v.iter_mut().zip(&cols) {
            let field = rec.get(c).unwrap_or("");
            *slot = field.parse().map_err(|_| {
                Error::Validation(format!("fit input row {}: `{field}` is not a number", line + 1))
            })?;
        }
        points.push(PhaseDataPoint::new(v[0], v[1], v[2]));
    }
    Ok((text, points))
}

fn cmd_fit(input: &Path, out_dir: Option<&Path>, student_t: bool, model: Option<f64>) -> CliResult<()> {
    let (text, points) = read_points(input)?;
    let model_kind = if student_t { PValueModel::StudentT } else { PValueModel::Normal };
    let fit = weighted_linear_fit_with(&points, model_kind)?;
    let hash = config_hash(&text);
    let mut report = String::new();
    report.push_str(&format!("config_hash = {hash}\n"));
    report.push_str(&format!("points = {}\n", points.len()));
    report.push_str(&format!("slope_rad = {}\n", fmt_17(fit.slope)));
    report.push_str(&format!("slope_sigma_rad = {}\n", fmt_17(fit.slope_sigma)));
    report.push_str(&format!("intercept_rad = {}\n", fmt_17(fit.intercept)));
    report.push_str(&format!("intercept_sigma_rad = {}\n", fmt_17(fit.intercept_sigma)));
    report.push_str(&format!(
        "p_value = {}\np_value_model = {}\n",
        fmt_17(fit.p_value),
        if student_t { "student_t" } else { "normal" }
    ));
    report.push_str(&format!("chi2_red_fit = {}\ndof = {}\n", fmt_17(fit.chi2_red), fit.dof));
    if let Some(m) = model {
        let chi2 = reduced_chi_squared(&points, ModelValues::Constant(m))?;
        report.push_str(&format!("model_rad = {}\nchi2_red_model = {}\n", fmt_17(m), fmt_17(chi2)));
    }
    report.push_str(&format!("note = {FIT_NOTE}\n"));
    print!("{report}");
    if let Some(dir) = out_dir {
        let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("fit");
        let p = write_text(dir, &format!("{stem}_fit_report.txt"), &report)?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_energy(common: &Common) -> CliResult<()> {
    let start = Instant::now();
    let Loaded { text, scenario: s, out_dir } = load(common)?;
    let e = s.energy_check().within(&s.id)?;
    let rows = vec![
        vec!["field_energy_J".into(), fmt_17(e.field_energy)],
        vec!["potential_energy_J".into(), fmt_17(e.potential_energy)],
        vec!["rel_diff".into(), fmt_f64(e.rel_diff)],
        vec!["achieved_rel_tol".into(), fmt_f64(e.achieved_rel_tol)],
    ];
    let path = write_csv(&out_dir, &format!("{}_energy.csv", s.id), &config_hash(&text), &["quantity", "value"], &rows)?;
    for r in &rows {
        println!("{} = {}", r[0], r[1]);
    }
    println!("wrote {}", path.display());
    println!("wall_time_s = {:.3}", start.elapsed().as_secs_f64());
    if e.rel_diff > 1e-3 {
        return Err(CliError::Core {
            scenario: Some(s.id.clone()),
            err: Error::InternalConsistency(format!(
                "field energy and potential energy differ by {:e} relative",
                e.rel_diff
            )),
        });
    }
    Ok(())
}

fn cmd_backaction(common: &Common, delta_v: f64) -> CliResult<()> {
    let Loaded { text, scenario: s, out_dir } = load(common)?;
    let b = s.backaction(delta_v, s.spec.p1).within(&s.id)?;
    let rows = vec![
        vec!["source_mass_kg".into(), fmt_17(s.spec.source_mass)],
        vec!["delta_v_m_per_s".into(), fmt_17(delta_v)],
        vec!["position_uncertainty_m".into(), fmt_17(b.position_uncertainty)],
        vec!["max_source_deflection_m".into(), fmt_17(b.max_source_deflection)],
        vec!["deflection_arm1_m".into(), fmt_17(b.branch_deflection[0])],
        vec!["deflection_arm2_m".into(), fmt_17(b.branch_deflection[1])],
        vec![
            "deflection_below_uncertainty".into(),
            (b.max_source_deflection < b.position_uncertainty).to_string(),
        ],
    ];
    let path = write_csv(
        &out_dir,
        &format!("{}_backaction.csv", s.id),
        &config_hash(&text),
        &["quantity", "value"],
        &rows,
    )?;
    for r in &rows {
        println!("{} = {}", r[0], r[1]);
    }
    println!("deflection_time_convention = displacement at t = 2T from the unperturbed source path");
    println!("wrote {}", path.display());
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run(c) => cmd_run(&c),
        Command::Sweep { common, key, values } => cmd_sweep(&common, &key, &values),
        Command::Frames { common, seed, count } => cmd_frames(&common, seed, count),
        Command::Fit {
            input,
            out_dir,
            student_t,
            model_rad,
        } => cmd_fit(&input, out_dir.as_deref(), student_t, model_rad),
        Command::Energy(c) => cmd_energy(&c),
        Command::Backaction { common, delta_v } => cmd_backaction(&common, delta_v),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
