mod config;
mod error;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use supercaloric::closed_form::{write_eval_csv, SolutionFamily};
use supercaloric::exponents::{exponent_table, moser_sequence, Medium, DEFAULT_MOSER_CAP};
use supercaloric::grid::GridField;
use supercaloric::harnack::{
    constant_sweep, default_rate_schedule, l1_harnack_probe, l1_harnack_probe_field, pointwise_rate_detect,
    self_similar_probes, weak_harnack_probe, write_sweep_csv,
};
use supercaloric::integrability::{classify, exponent_scan, integral_scan, write_scan_csv, IntegralScan, ProbeRegion};
use supercaloric::obstacle::{solve_obstacle, ObstacleProblem};
use supercaloric::solver::{residual_sign, solve, CellClass, DirichletData, ResidualMap};

use config::{FamilyName, FamilySpec, Source};
use error::CliError;

#[derive(Parser)]
#[command(name = "supercal", version, about = "Measurements for supercritical fast p-Laplacian diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Critical exponents of a medium.
    Exponents {
        #[arg(long)]
        n: u32,
        #[arg(long)]
        p: f64,
    },
    /// Moser exponent ladder starting at s0.
    Moser {
        #[arg(long)]
        n: u32,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        s0: f64,
        #[arg(long, default_value_t = DEFAULT_MOSER_CAP)]
        cap: usize,
    },
    /// Evaluate a closed form at the `r,t` rows of a CSV file.
    Eval {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long)]
        points: PathBuf,
        /// Write the table here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Backward-Euler solve with closed-form initial and boundary data.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Smallest supersolution above an obstacle.
    Obstacle {
        #[arg(long)]
        config: PathBuf,
    },
    /// Local integrability scans of a source near a point.
    Scan {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sort a source into the Barenblatt class or its complement.
    Classify {
        #[command(flatten)]
        family: OptionalFamilyArgs,
        /// Field table; its sidecar is the same path with a .json extension.
        #[arg(long, conflicts_with = "family")]
        field: Option<PathBuf>,
        #[command(flatten)]
        probe: ProbeArgs,
    },
    /// Weak and L1 Harnack probes, scale sweeps and rate detection.
    Harnack {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct FamilyArgs {
    #[arg(long, value_enum)]
    family: FamilyName,
    #[arg(long)]
    n: u32,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    zero_extend: bool,
}

impl FamilyArgs {
    fn build(&self) -> Result<SolutionFamily, CliError> {
        let medium = Medium::new(self.n, self.p)?;
        FamilySpec {
            family: self.family,
            q: self.q,
            c: self.c,
            zero_extend: self.zero_extend,
        }
        .build(medium)
    }
}

#[derive(Args)]
struct OptionalFamilyArgs {
    #[arg(long, value_enum, requires_all = ["n", "p"])]
    family: Option<FamilyName>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    zero_extend: bool,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long)]
    x0: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    t1: Option<f64>,
    #[arg(long)]
    t2: Option<f64>,
    #[arg(long)]
    slices: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("supercal: {e}");
            e.exit_code()
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Exponents { n, p } => emit(&exponent_table(Medium::new(n, p)?)),
        Command::Moser { n, p, s0, cap } => emit(&moser_sequence(Medium::new(n, p)?, s0, cap)?),
        Command::Eval { family, points, output } => run_eval(&family, &points, output.as_deref()),
        Command::Solve { config } => run_solve(&config),
        Command::Obstacle { config } => run_obstacle(&config),
        Command::Scan { config } => run_scan(&config),
        Command::Classify { family, field, probe } => run_classify(&family, field.as_deref(), &probe),
        Command::Harnack { config } => run_harnack(&config),
    }
}

fn emit<T: Serialize>(value: &T) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    let written = serde_json::to_writer_pretty(&mut out, value)
        .map_err(io::Error::from)
        .and_then(|()| writeln!(out));
    match written {
        // A closed reader (`| head`) is not a failure of the run.
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Writes `field` as CSV plus its JSON sidecar.
fn write_field(field: &GridField, path: &Path, raw: Value) -> Result<(), CliError> {
    field.write_csv(create(path)?)?;
    let mut side = create(&config::sidecar_path(path))?;
    serde_json::to_writer_pretty(&mut side, &field.sidecar(Some(raw))).map_err(|e| CliError::Config(e.to_string()))?;
    writeln!(side)?;
    side.flush()?;
    Ok(())
}

fn run_eval(args: &FamilyArgs, points: &Path, output: Option<&Path>) -> Result<(), CliError> {
    let family = args.build()?;
    let file = File::open(points).map_err(|e| CliError::Config(format!("{}: {e}", points.display())))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    let mut rows = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Config(format!("{}: {e}", points.display())))?;
        if rec.len() != 2 {
            return Err(CliError::Config(format!("row {idx}: expected columns r,t")));
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Config(format!("row {idx}: {e}")))
        };
        let (r, t) = (parse(&rec[0])?, parse(&rec[1])?);
        rows.push((r, t, family.evaluate(r, t)?));
    }
    match output {
        Some(path) => {
            let mut w = create(path)?;
            write_eval_csv(&mut w, rows)?;
            w.flush()?;
        }
        None => write_eval_csv(io::stdout().lock(), rows)?,
    }
    Ok(())
}

fn residual_summary(map: &ResidualMap) -> Value {
    json!({
        "solution": map.fraction(CellClass::Solution),
        "supersolution": map.fraction(CellClass::Supersolution),
        "subsolution": map.fraction(CellClass::Subsolution),
        "indeterminate": map.fraction(CellClass::Indeterminate),
    })
}

fn run_solve(path: &Path) -> Result<(), CliError> {
    let (cfg, raw, base): (config::SolveConfig, _, _) = config::load(path)?;
    let grid = cfg.grid.build(cfg.medium.n())?;
    let times = cfg.times.build()?;
    let family = cfg.data.build(cfg.medium)?;
    let exact = GridField::sample(&family, grid.clone(), times.clone(), None)?;
    let boundary = DirichletData {
        inner: exact.boundary().inner.clone(),
        outer: exact.boundary().outer.clone(),
    };
    let outcome = solve(cfg.medium, &grid, &times, exact.row(0), &boundary, &cfg.solver)?;
    let u = &outcome.field;
    let max_error = u
        .values()
        .iter()
        .zip(exact.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if let Some(out) = &cfg.output {
        write_field(u, &base.join(out), raw)?;
    }
    emit(&json!({
        "time_steps": times.len() - 1,
        "grid_nodes": grid.len(),
        "delta": outcome.delta,
        "picard_iterations_max": outcome.picard_iterations.iter().copied().max().unwrap_or(0),
        "picard_iterations_total": outcome.picard_iterations.iter().sum::<usize>(),
        "max_error": max_error,
        "residual_classes": residual_summary(&residual_sign(u, &cfg.solver)),
    }))
}

fn run_obstacle(path: &Path) -> Result<(), CliError> {
    let (cfg, raw, base): (config::ObstacleConfig, _, _) = config::load(path)?;
    let psi = cfg.obstacle_field()?;
    let solution = solve_obstacle(&ObstacleProblem { psi, config: cfg.solver })?;
    if let Some(out) = &cfg.output {
        write_field(&solution.u, &base.join(out), raw)?;
    }
    if let Some(out) = &cfg.contact_output {
        let mut w = create(&base.join(out))?;
        solution.write_contact_csv(&mut w)?;
        w.flush()?;
    }
    let summary = solution.summary();
    emit(&json!({
        "complementarity_residual": summary.complementarity_residual,
        "contact_fraction": summary.contact_fraction,
        "sweeps_max": solution.sweeps.iter().copied().max().unwrap_or(0),
        "sweeps_total": solution.sweeps.iter().sum::<usize>(),
    }))
}

fn scan_json(scan: &IntegralScan) -> Value {
    json!({
        "q": scan.q,
        "verdict": scan.verdict,
        "increment_ratio": scan.increment_ratio,
        "slope": scan.slope,
        "last_value": scan.last_value(),
    })
}

fn run_scan(path: &Path) -> Result<(), CliError> {
    let (cfg, _, base): (config::ScanConfig, _, _) = config::load(path)?;
    let source = cfg.source.load(cfg.medium, &base)?;
    let src = source.as_evaluable();
    if cfg.q.is_empty() && cfg.q_range.is_none() {
        return Err(CliError::Config("scan needs q or q_range".into()));
    }
    let mut scans = cfg
        .q
        .iter()
        .map(|&q| integral_scan(src, cfg.cylinder, q, cfg.selector, cfg.levels))
        .collect::<Result<Vec<_>, _>>()?;
    let mut threshold = Value::Null;
    if let Some((lo, hi)) = cfg.q_range {
        let found = exponent_scan(src, cfg.cylinder, cfg.selector, lo, hi, cfg.levels)?;
        threshold = json!({ "q_star": found.q_star, "bracket": found.bracket });
        scans.extend(found.scans);
    }
    if let Some(out) = &cfg.output {
        let mut w = create(&base.join(out))?;
        write_scan_csv(&mut w, &scans)?;
        w.flush()?;
    }
    emit(&json!({
        "source": src.describe(),
        "selector": cfg.selector,
        "scans": scans.iter().map(scan_json).collect::<Vec<_>>(),
        "threshold": threshold,
    }))
}

fn run_classify(family: &OptionalFamilyArgs, field: Option<&Path>, probe: &ProbeArgs) -> Result<(), CliError> {
    let source = match (family.family, field) {
        (Some(name), None) => {
            let (n, p) = family.n.zip(family.p).ok_or_else(|| CliError::Config("--family needs --n and --p".into()))?;
            let args = FamilyArgs {
                family: name,
                n,
                p,
                q: family.q,
                c: family.c,
                zero_extend: family.zero_extend,
            };
            Source::Family(args.build()?)
        }
        (None, Some(path)) => Source::Field(config::read_field(path)?),
        _ => return Err(CliError::Config("give exactly one of --family or --field".into())),
    };
    let src = source.as_evaluable();
    // Defaults: the unit ball around the origin over the natural time span.
    let d = src.domain();
    let (t1, t2) = match &source {
        Source::Field(f) => (f.times()[0], *f.times().last().unwrap()),
        Source::Family(_) if d.t_min.is_finite() => (d.t_min, d.t_min + 1.0),
        Source::Family(_) => (-1.0, 1.0),
    };
    let r = if d.r_max.is_finite() { d.r_max } else { 1.0 };
    let mut region = ProbeRegion::new(probe.x0.unwrap_or(0.0), probe.r.unwrap_or(r), probe.t1.unwrap_or(t1), probe.t2.unwrap_or(t2));
    if let Some(s) = probe.slices {
        region.slices = s;
    }
    let report = classify(src, region)?;
    emit(&json!({
        "source": src.describe(),
        "probe": region,
        "verdict": report.verdict,
        "evidence": report.evidence,
    }))
}

fn run_harnack(path: &Path) -> Result<(), CliError> {
    let (cfg, _, base): (config::HarnackConfig, _, _) = config::load(path)?;
    let source = cfg.source.load(cfg.medium, &base)?;
    let src = source.as_evaluable();
    if cfg.probes.is_empty() && cfg.sweep.is_none() && cfg.l1.is_empty() && cfg.rate.is_none() {
        return Err(CliError::Config("harnack needs probes, sweep, l1 or rate".into()));
    }
    let weak = cfg
        .probes
        .iter()
        .map(|&p| weak_harnack_probe(src, p))
        .collect::<Result<Vec<_>, _>>()?;
    let sweep = match &cfg.sweep {
        Some(s) => {
            let lambda = src.medium().lambda();
            let probes = self_similar_probes(lambda, s.x0, s.r0, s.s0, s.c2, &s.scales);
            let report = constant_sweep(src, &probes)?;
            if let Some(out) = &s.output {
                let mut w = create(&base.join(out))?;
                write_sweep_csv(&mut w, &s.scales, &report.admissible_c1)?;
                w.flush()?;
            }
            json!({
                "scales": s.scales,
                "report": report,
                "max_over_min": report.max_over_min(),
            })
        }
        None => Value::Null,
    };
    let l1 = cfg
        .l1
        .iter()
        .map(|q| match &source {
            Source::Family(f) => l1_harnack_probe(f, q.x0, q.r, q.s, q.t),
            Source::Field(f) => l1_harnack_probe_field(f, &cfg.solver, q.x0, q.r, q.s, q.t),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rate = match cfg.rate {
        Some(rs) => {
            let schedule = default_rate_schedule(src.medium().p(), rs.r0, rs.theta);
            serde_json::to_value(pointwise_rate_detect(src, rs.x0, rs.t0, rs.s, &schedule)?)
                .map_err(|e| CliError::Config(e.to_string()))?
        }
        None => Value::Null,
    };
    emit(&json!({
        "source": src.describe(),
        "weak": weak,
        "sweep": sweep,
        "l1": l1,
        "rate": rate,
    }))
}
