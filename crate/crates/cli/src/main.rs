//! `smokeflow`: simulation, decomposition, sketching, reconstruction,
//! dataset generation and the HTTP session service behind one binary.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 on runtime failures.
//! Results go to stdout as `name value` lines (numbers in `{:.5e}`);
//! diagnostics go to stderr.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use smokeflow::dataset::{self, DatasetConfig};
use smokeflow::hhd;
use smokeflow::poisson::SolverOptions;
use smokeflow::reconstruct::{strokes_to_flow, FitParams, Generators, StrokeSet};
use smokeflow::render::{save_png, scalar_image};
use smokeflow::sim::{self, SimConfig, SimState};
use smokeflow::streamline::{self, TraceParams};
use smokeflow::{Error, Field, FieldKind, Grid, MacVelocity, Result, ScalarField};

#[derive(Parser)]
#[command(name = "smokeflow", version, about = "Sketch-guided 2D smoke simulation toolkit")]
struct Cli {
    /// Log verbosity on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a smoke simulation and write density frames.
    Simulate(SimulateArgs),
    /// Guided simulation toward a target velocity field.
    Guide(GuideArgs),
    /// Helmholtz-Hodge decomposition of a MAC velocity.
    Hhd(HhdArgs),
    /// Divergence-free velocity from a node stream function.
    Curl(InOut),
    /// Trace streamlines from the fastest cells into a strokes file.
    Streamlines(StreamlinesArgs),
    /// Rasterize a strokes file.
    Sketch(SketchArgs),
    /// Fit a stream function to directed strokes.
    Reconstruct(ReconstructArgs),
    /// Generate (sketch, stream function, velocity) training triples.
    Dataset(DatasetArgs),
    /// Metrics and dataset checks.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
    /// Serve the HTTP session API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct InOut {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Simulation config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for density PNG frames.
    #[arg(long)]
    out_dir: PathBuf,
    /// Overrides the config step count.
    #[arg(long)]
    steps: Option<usize>,
    /// Write a frame every N steps.
    #[arg(long, default_value_t = 1)]
    frame_every: usize,
    /// Final velocity as SFLD.
    #[arg(long)]
    velocity_out: Option<PathBuf>,
}

#[derive(Args)]
struct GuideArgs {
    #[command(flatten)]
    sim: SimulateArgs,
    /// Target MAC velocity SFLD.
    #[arg(long)]
    target: PathBuf,
    /// Guidance gain; overrides the config.
    #[arg(long)]
    gain: Option<f64>,
}

#[derive(Args)]
struct HhdArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    psi_out: Option<PathBuf>,
    #[arg(long)]
    potential_out: Option<PathBuf>,
    #[arg(long)]
    harmonic_out: Option<PathBuf>,
    #[arg(long, default_value_t = smokeflow::poisson::DEFAULT_TOL)]
    tol: f64,
}

#[derive(Args)]
struct StreamlinesArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = streamline::DEFAULT_SEED_COUNT)]
    seeds: usize,
    /// RK4 step; defaults to half a cell.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    min_speed: Option<f64>,
    #[arg(long)]
    bidirectional: bool,
}

#[derive(Args)]
struct SketchArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = streamline::DEFAULT_SKETCH_SIZE)]
    size: u32,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Stream function output (node SFLD).
    #[arg(long)]
    out: PathBuf,
    /// Velocity output (MAC SFLD).
    #[arg(long)]
    velocity_out: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    nx: usize,
    /// Defaults to `nx · Ly / Lx`.
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long, default_value_t = 1e-2)]
    lambda: f64,
    #[arg(long, default_value_t = smokeflow::poisson::DEFAULT_TOL)]
    tol: f64,
}

#[derive(Args)]
struct DatasetArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Mean squared difference between two field files.
    Mse {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Re-derive ψ for every manifest record and compare with the stored one.
    Check {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Min-max normalize a field to [0, 1] (SFLD out, or PNG for scalars).
    Normalize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 16)]
    max_sessions: usize,
    #[arg(long, default_value_t = 600)]
    idle_timeout_secs: u64,
}

fn sci(x: f64) -> String {
    format!("{x:.5e}")
}

struct Out(Vec<(String, String)>);

impl Out {
    fn new() -> Self {
        Self(Vec::new())
    }
    fn num(&mut self, key: &str, v: f64) -> &mut Self {
        self.0.push((key.into(), sci(v)));
        self
    }
    fn int(&mut self, key: &str, v: usize) -> &mut Self {
        self.0.push((key.into(), v.to_string()));
        self
    }
    fn flag(&mut self, key: &str, v: bool) -> &mut Self {
        self.0.push((key.into(), v.to_string()));
        self
    }
    fn print(&self) {
        let mut stdout = std::io::stdout().lock();
        for (k, v) in &self.0 {
            let _ = writeln!(stdout, "{k} {v}");
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Ok(serde_json::from_str(&text)?)
        }
    }
}

fn read_mac(path: &Path) -> Result<MacVelocity> {
    let f = smokeflow::fields::read_field(path)?;
    let kind = f.kind();
    f.into_mac()
        .ok_or_else(|| Error::KindMismatch { expected: FieldKind::Mac.to_string(), found: kind.to_string() })
}

fn read_node(path: &Path) -> Result<ScalarField> {
    let f = smokeflow::fields::read_field(path)?;
    if f.kind() != FieldKind::NodeScalar {
        return Err(Error::KindMismatch { expected: FieldKind::NodeScalar.to_string(), found: f.kind().to_string() });
    }
    Ok(f.into_scalar().expect("kind checked"))
}

fn write(path: &Path, field: impl Into<Field>) -> Result<()> {
    smokeflow::fields::write_field(path, &field.into())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Shared by `simulate` and `guide`.
fn simulate(args: &SimulateArgs, config: SimConfig, target: Option<&MacVelocity>) -> Result<Out> {
    if args.frame_every == 0 {
        return Err(Error::InvalidParams("--frame-every must be at least 1".into()));
    }
    let grid = config.grid()?;
    let params = config.params()?;
    let steps = args.steps.unwrap_or(config.steps);
    if let Some(t) = target {
        grid.check_same(&t.grid)?;
    }
    create_dir(&args.out_dir)?;

    let start = SimState::at_rest(grid);
    let distance0 = target.map(|t| start.vel.distance_l2(t));
    let mut cfl_max: f64 = 0.0;
    let mut max_div: f64 = 0.0;
    let mut frames = 0;
    let mut io_err = None;
    let last = sim::run(&start, &params, target, steps, |s, report| {
        cfl_max = cfl_max.max(report.cfl);
        max_div = max_div.max(s.vel.max_abs_divergence() * grid.dx);
        if s.step_index % args.frame_every == 0 && io_err.is_none() {
            let path = args.out_dir.join(format!("frame{:04}.png", s.step_index));
            match save_png(&path, &scalar_image(&s.density)) {
                Ok(()) => frames += 1,
                Err(e) => io_err = Some(e),
            }
        }
    })?;
    if let Some(e) = io_err {
        return Err(e);
    }
    if let Some(p) = &args.velocity_out {
        write(p, last.vel.clone())?;
    }

    let mut out = Out::new();
    out.int("steps", steps).int("frames", frames).num("cfl_max", cfl_max).num("max_divergence", max_div);
    if let (Some(t), Some(d0)) = (target, distance0) {
        out.num("target_distance_initial", d0).num("target_distance_final", last.vel.distance_l2(t));
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => {
            let config: SimConfig = read_json(args.config.as_deref())?;
            simulate(&args, config, None)?.print();
        }
        Command::Guide(args) => {
            let mut config: SimConfig = read_json(args.sim.config.as_deref())?;
            if let Some(g) = args.gain {
                config.guidance_gain = g;
            }
            let target = read_mac(&args.target)?;
            simulate(&args.sim, config, Some(&target))?.print();
        }
        Command::Hhd(args) => {
            let vel = read_mac(&args.input)?;
            let d = hhd::decompose(&vel, &SolverOptions::with_tol(args.tol))?;
            if let Some(p) = &args.psi_out {
                write(p, d.psi.clone())?;
            }
            if let Some(p) = &args.potential_out {
                write(p, d.grad_potential.clone())?;
            }
            if let Some(p) = &args.harmonic_out {
                write(p, d.harmonic.clone())?;
            }
            let s = d.summary();
            Out::new()
                .num("residual_norm", s.residual_norm)
                .num("psi_min", s.psi_min)
                .num("psi_max", s.psi_max)
                .num("potential_l2", s.potential_l2)
                .num("curl_l2", s.curl_l2)
                .num("grad_l2", s.grad_l2)
                .num("harmonic_l2", s.harmonic_l2)
                .flag("psi_converged", s.psi_converged)
                .flag("potential_converged", s.potential_converged)
                .print();
        }
        Command::Curl(args) => {
            let psi = read_node(&args.input)?;
            let vel = hhd::curl_velocity(&psi);
            let div = vel.max_abs_divergence();
            write(&args.out, vel)?;
            Out::new().num("max_divergence", div).print();
        }
        Command::Streamlines(args) => {
            let vel = read_mac(&args.input)?;
            let mut params = TraceParams::for_grid(&vel.grid);
            params.h = args.h.unwrap_or(params.h);
            params.max_steps = args.max_steps.unwrap_or(params.max_steps);
            params.min_speed = args.min_speed.unwrap_or(params.min_speed);
            params.bidirectional = args.bidirectional;
            params.validate()?;
            let lines = streamline::trace_top(&vel, args.seeds, &params);
            let strokes = streamline::polylines_to_strokes(&vel.grid, &lines);
            strokes.write(&args.out)?;
            Out::new().int("strokes", strokes.strokes.len()).print();
        }
        Command::Sketch(args) => {
            let strokes = StrokeSet::read(&args.input)?;
            let img = streamline::render_strokes(&strokes, args.size, args.size)?;
            save_png(&args.out, &img)?;
            Out::new().int("strokes", strokes.strokes.len()).print();
        }
        Command::Reconstruct(args) => {
            let strokes = StrokeSet::read(&args.input)?;
            let (lx, ly) = (strokes.domain.x, strokes.domain.y);
            if !(lx > 0.0 && ly > 0.0) {
                return Err(Error::InvalidParams(format!("domain [{lx}, {ly}] must be positive")));
            }
            let ny = args.ny.unwrap_or_else(|| (args.nx as f64 * ly / lx).round() as usize);
            let grid = Grid::new(args.nx, ny, lx / args.nx as f64)?;
            let mut fit = FitParams::new(grid);
            fit.lambda = args.lambda;
            fit.tol = args.tol;
            let flow = strokes_to_flow(&strokes, &fit, &Generators::from_env())?;
            write(&args.out, flow.psi.clone())?;
            if let Some(p) = &args.velocity_out {
                write(p, flow.velocity.clone())?;
            }
            let r = &flow.report;
            let mut out = Out::new();
            out.flag("no_constraints", r.no_constraints)
                .int("samples", r.samples)
                .num("median_cosine", r.median_cosine)
                .flag("converged", r.converged)
                .int("iterations", r.iterations)
                .num("final_residual", r.final_residual);
            if let Some(d) = &flow.diagnostics {
                out.num("max_divergence", d.max_divergence).num("max_boundary_normal", d.max_boundary_normal);
            }
            out.print();
        }
        Command::Dataset(args) => {
            let mut config: DatasetConfig = read_json(args.config.as_deref())?;
            if let Some(dir) = args.out_dir {
                config.output_dir = dir;
            }
            let manifest = dataset::generate(&config)?;
            for (sim_id, reason) in &manifest.failures {
                eprintln!("sim {sim_id} failed: {reason}");
            }
            let max_div = manifest.records.iter().map(|r| r.divergence).fold(0.0, f64::max);
            Out::new()
                .int("records", manifest.records.len())
                .int("failed_sims", manifest.failures.len())
                .num("max_divergence", max_div)
                .print();
        }
        Command::Eval { command } => eval(command)?,
        Command::Serve(args) => serve(args)?,
    }
    Ok(())
}

fn eval(command: EvalCommand) -> Result<()> {
    match command {
        EvalCommand::Mse { a, b } => {
            let fa = smokeflow::fields::read_field(&a)?;
            let fb = smokeflow::fields::read_field(&b)?;
            println!("{}", sci(dataset::mse(&fa, &fb)?));
        }
        EvalCommand::Check { manifest } => {
            let root = manifest.parent().unwrap_or(Path::new("."));
            let records = dataset::read_manifest(&manifest)?;
            let mut bad = 0;
            for r in &records {
                let c = dataset::check_record(root, r)?;
                println!("{} {} {} {}", c.id, sci(c.psi_rel_diff), sci(c.stored_divergence), c.ok);
                bad += usize::from(!c.ok);
            }
            if bad > 0 {
                return Err(Error::InvalidParams(format!("{bad} of {} records failed the check", records.len())));
            }
        }
        EvalCommand::Normalize { input, out } => {
            let f = smokeflow::fields::read_field(&input)?;
            let is_png = out.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
            match (is_png, f) {
                (true, Field::Scalar(s)) => save_png(&out, &scalar_image(&s))?,
                (true, Field::Mac(_)) => {
                    return Err(Error::InvalidParams("PNG output needs a scalar field".into()));
                }
                (false, f) => write(&out, dataset::normalize01_field(&f))?,
            }
        }
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| Error::InvalidParams(format!("bad address {}:{}: {e}", args.host, args.port)))?;
    if args.max_sessions == 0 {
        return Err(Error::InvalidParams("--max-sessions must be at least 1".into()));
    }
    let config = smokeflow_service::ServiceConfig {
        max_sessions: args.max_sessions,
        idle_timeout: Duration::from_secs(args.idle_timeout_secs),
        generators: Generators::from_env(),
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| Error::External(format!("runtime: {e}")))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Error::External(format!("bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| Error::External(e.to_string()))?;
        eprintln!("listening on http://{local}");
        smokeflow_service::serve(listener, config).await.map_err(|e| Error::External(e.to_string()))
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
