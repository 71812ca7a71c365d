//! Command-line front end: configuration loading, subcommand dispatch, run
//! manifests and CSV/JSON artifacts.
//!
//! Exit status: 0 on success, 2 when a standing hypothesis fails, 1 on a
//! numerical failure and 64 on a usage or configuration error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::Error;
use crate::linalg::LinearOperator;
use crate::{cones, equilibrium, grid, hypotheses, perturbation, statistics, symbolic, transfer};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_HYPOTHESIS: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

pub const MANIFEST_VERSION: u32 = 1;
const DEFAULT_OUT: &str = "eqstate-out";
/// Random cone functions used to measure operator distances under noise.
const PERTURB_BANK: usize = 8;

#[derive(Debug, Parser)]
#[command(name = "eqstate", version, about = "Transfer operators and equilibrium states of Markov interval maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand. Flags override the configuration file.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON configuration file; defaults apply to every missing field.
    pub config: Option<PathBuf>,
    /// Worker threads (default: available cores). Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Directory for the manifest and artifacts.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the JSON summary on stdout instead of text.
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cylinder depth.
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Hyperbolicity constant.
    #[arg(long)]
    pub c: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the standing hypotheses; prints an aligned table and writes verify.json.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gamma0: Option<f64>,
    },
    /// Leading eigenvalue, pressure, gap and bracket widths.
    Pressure {
        #[command(flatten)]
        common: Common,
        /// Write the cylinder matrix in MatrixMarket coordinate format.
        #[arg(long)]
        dump_matrix: Option<PathBuf>,
    },
    /// density.csv columns: word (1-based symbols joined by '.'), left, width, h, nu.
    Density {
        #[command(flatten)]
        common: Common,
    },
    /// Cone constants; cones.csv columns: pair, step, psi, ratio, trace, trace_bound.
    Cones {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long)]
        iters: Option<usize>,
        /// Cone parameter.
        #[arg(long)]
        l: Option<f64>,
        #[arg(long)]
        theta0: Option<f64>,
    },
    /// Pliss selection on a sequence read from CSV; pliss.csv columns: index, value.
    Pliss {
        #[command(flatten)]
        common: Common,
        /// CSV file of numbers (any layout; a non-numeric header row is skipped).
        #[arg(long)]
        input: PathBuf,
        /// Upper bound A on the entries.
        #[arg(long)]
        a: f64,
        #[arg(long)]
        c1: f64,
        #[arg(long)]
        c2: f64,
    },
    /// Hyperbolic times of an orbit; hyptimes.csv columns: index, time.
    Hyptimes {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        x: f64,
        #[arg(long, default_value_t = 100)]
        n: usize,
    },
    /// Frequently-bad word counts; count.csv columns: n, rate.
    Count {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// Good symbols (default: good atoms of the map).
        #[arg(long)]
        p: Option<u32>,
        /// Bad symbols (default: bad atoms of the map).
        #[arg(long)]
        q: Option<u32>,
    },
    /// Pressure, entropy, potential integral and identity defect; equilibrium.csv columns: atom, weight.
    Equilibrium {
        #[command(flatten)]
        common: Common,
    },
    /// Scan over Markov measures; scan.csv columns: p_i_j..., entropy, integral, value.
    Scan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        max_grid: Option<usize>,
    },
    /// Correlations of the observable with itself; decay.csv columns: n, c, stderr.
    Decay {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_max: Option<usize>,
        /// Use the orbit estimator with this length.
        #[arg(long)]
        orbit_length: Option<usize>,
    },
    /// Empirical central limit test; clt.csv columns: level, sample, normal.
    Clt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        cutoff: Option<usize>,
    },
    /// Large-deviation rates; ldp.csv columns: n, rate.
    Ldp {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rho: Option<f64>,
        /// Comma-separated orbit lengths.
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
    },
    /// Stochastic stability; perturb.csv columns: eps, l1, w1, theta_eps, envelope_c, envelope_rate.
    Perturb {
        #[command(flatten)]
        common: Common,
        /// Comma-separated noise amplitudes.
        #[arg(long, value_delimiter = ',')]
        eps_list: Option<Vec<f64>>,
        #[arg(long)]
        nodes: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Verify { .. } => "verify",
            Command::Pressure { .. } => "pressure",
            Command::Density { .. } => "density",
            Command::Cones { .. } => "cones",
            Command::Pliss { .. } => "pliss",
            Command::Hyptimes { .. } => "hyptimes",
            Command::Count { .. } => "count",
            Command::Equilibrium { .. } => "equilibrium",
            Command::Scan { .. } => "scan",
            Command::Decay { .. } => "decay",
            Command::Clt { .. } => "clt",
            Command::Ldp { .. } => "ldp",
            Command::Perturb { .. } => "perturb",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Verify { common, .. }
            | Command::Pressure { common, .. }
            | Command::Density { common }
            | Command::Cones { common, .. }
            | Command::Pliss { common, .. }
            | Command::Hyptimes { common, .. }
            | Command::Count { common, .. }
            | Command::Equilibrium { common }
            | Command::Scan { common, .. }
            | Command::Decay { common, .. }
            | Command::Clt { common, .. }
            | Command::Ldp { common, .. }
            | Command::Perturb { common, .. } => common,
        }
    }
}

/// Float formatting for CSV: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    // adding zero turns -0 into +0
    format!("{:.16e}", x + 0.0)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Result of one subcommand before it is written out.
struct Outcome {
    text: String,
    summary: Value,
    csv: Option<String>,
    status: i32,
}

impl Outcome {
    fn ok(text: String, summary: Value, csv: Option<String>) -> Self {
        Outcome { text, summary, csv, status: EXIT_OK }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    manifest_version: u32,
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    config: &'a RunConfig,
    /// Subcommand parameters that are not part of the configuration.
    parameters: &'a Value,
    seed: u64,
    threads: usize,
    wall_time_seconds: f64,
    exit_code: i32,
    outputs: &'a [String],
    notes: &'a [String],
    error: Option<String>,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Hypothesis { .. } => EXIT_HYPOTHESIS,
        Error::Config(_) | Error::Contract(_) | Error::InvalidMap(_) | Error::Inadmissible(_) => EXIT_USAGE,
        _ => EXIT_NUMERICAL,
    }
}

/// Parse arguments and run; returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    run(&cli.command)
}

fn resolve_config(cmd: &Command) -> crate::error::Result<RunConfig> {
    let common = cmd.common();
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = common.depth {
        cfg.depth = v;
    }
    if let Some(v) = common.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = common.c {
        cfg.c = Some(v);
    }
    if let Some(v) = &common.out {
        cfg.output_dir = Some(v.clone());
    }
    match cmd {
        Command::Verify { gamma0: Some(g), .. } => cfg.gamma0 = Some(*g),
        Command::Cones { pairs, iters, l, theta0, .. } => {
            if let Some(v) = pairs {
                cfg.cone_pairs = *v;
            }
            if let Some(v) = iters {
                cfg.cone_iters = *v;
            }
            if l.is_some() {
                cfg.l = *l;
            }
            if theta0.is_some() {
                cfg.theta0 = *theta0;
            }
        }
        Command::Scan { max_grid: Some(v), .. } => cfg.scan_max_grid = *v,
        Command::Decay { n_max, orbit_length, .. } => {
            if let Some(v) = n_max {
                cfg.n_max = *v;
            }
            if orbit_length.is_some() {
                cfg.orbit_length = *orbit_length;
            }
        }
        Command::Clt { n, samples, cutoff, .. } => {
            if let Some(v) = n {
                cfg.clt_n = *v;
            }
            if let Some(v) = samples {
                cfg.clt_samples = *v;
            }
            if let Some(v) = cutoff {
                cfg.cutoff = *v;
            }
        }
        Command::Ldp { rho, n_list, .. } => {
            if let Some(v) = rho {
                cfg.ldp_rho = *v;
            }
            if let Some(v) = n_list {
                cfg.ldp_n = v.clone();
            }
        }
        Command::Perturb { eps_list, nodes, .. } => {
            if let Some(v) = eps_list {
                cfg.eps_list = v.clone();
            }
            if let Some(v) = nodes {
                cfg.noise_nodes = *v;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Run a parsed subcommand, writing artifacts and the manifest.
pub fn run(cmd: &Command) -> i32 {
    let start = Instant::now();
    let name = cmd.name();
    let common = cmd.common();
    let cfg = match resolve_config(cmd) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let threads = common.threads.unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_USAGE;
        }
    };
    let threads = pool.current_num_threads();
    let mut params = json!({});
    let mut notes = Vec::new();
    let result = pool.install(|| dispatch(cmd, &cfg, &mut params, &mut notes));
    let out_dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let mut outputs = Vec::new();
    let (status, error) = match result {
        Ok(o) => {
            if common.json {
                println!("{}", serde_json::to_string_pretty(&o.summary).unwrap_or_default());
            } else {
                print!("{}", o.text);
            }
            if let Err(e) = write_artifacts(&out_dir, name, &o, &mut outputs) {
                eprintln!("error: {e}");
                return EXIT_NUMERICAL;
            }
            (o.status, None)
        }
        Err(e) => {
            eprintln!("error: {e}");
            (exit_code(&e), Some(e.to_string()))
        }
    };
    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        tool: "eqstate",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: name,
        config: &cfg,
        parameters: &params,
        seed: cfg.seed,
        threads,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        exit_code: status,
        outputs: &outputs,
        notes: &notes,
        error,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    if let Err(e) = std::fs::create_dir_all(&out_dir).and_then(|_| std::fs::write(out_dir.join("manifest.json"), text)) {
        eprintln!("error: cannot write manifest: {e}");
        return EXIT_NUMERICAL;
    }
    status
}

fn write_artifacts(dir: &Path, name: &str, o: &Outcome, outputs: &mut Vec<String>) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let json_name = format!("{name}.json");
    std::fs::write(dir.join(&json_name), serde_json::to_string_pretty(&o.summary).unwrap_or_default())?;
    outputs.push(json_name);
    if let Some(csv) = &o.csv {
        let csv_name = format!("{name}.csv");
        std::fs::write(dir.join(&csv_name), csv)?;
        outputs.push(csv_name);
    }
    Ok(())
}

type CmdResult = crate::error::Result<Outcome>;

fn dispatch(cmd: &Command, cfg: &RunConfig, params: &mut Value, notes: &mut Vec<String>) -> CmdResult {
    match cmd {
        Command::Verify { .. } => {
            if let Ok(map) = cfg.build_map() {
                params["c"] = json!(cfg.c.unwrap_or_else(|| hypotheses::equality_c(&map, cfg.gamma)));
            }
            verify(cfg)
        }
        Command::Pressure { dump_matrix, .. } => {
            if let Some(p) = dump_matrix {
                params["dump_matrix"] = json!(p);
            }
            pressure(cfg, dump_matrix.as_deref())
        }
        Command::Density { .. } => density(cfg),
        Command::Cones { .. } => cones_cmd(cfg, params),
        Command::Pliss { input, a, c1, c2, .. } => {
            *params = json!({ "input": input, "a": a, "c1": c1, "c2": c2 });
            pliss(input, *a, *c1, *c2)
        }
        Command::Hyptimes { x, n, .. } => {
            *params = json!({ "x": x, "n": n });
            hyptimes(cfg, *x, *n, params)
        }
        Command::Count { n, p, q, .. } => count(cfg, *n, *p, *q, params),
        Command::Equilibrium { .. } => equilibrium_cmd(cfg),
        Command::Scan { .. } => scan(cfg),
        Command::Decay { .. } => decay(cfg),
        Command::Clt { .. } => clt(cfg),
        Command::Ldp { .. } => ldp(cfg),
        Command::Perturb { .. } => {
            *params = json!({ "bank_size": PERTURB_BANK, "bank_cone_parameter": 1.0, "defect_steps": cfg.n_max.max(2) });
            notes.push(
                "noise model: transfer operator followed by averaging over translations x -> x - w, \
                 w uniform on [-eps, eps], midpoint quadrature with noise_nodes nodes"
                    .into(),
            );
            perturb(cfg)
        }
    }
}

fn model(cfg: &RunConfig, map: &crate::MarkovMap) -> crate::error::Result<transfer::CylinderModel> {
    transfer::CylinderModel::with_options(map, &cfg.potential, cfg.depth, cfg.power_options())
}

fn verify(cfg: &RunConfig) -> CmdResult {
    let map = cfg.build_map()?;
    let opts = hypotheses::VerifyOptions {
        c: cfg.c,
        gamma0: cfg.gamma0,
        rate: hypotheses::RateSource::Counting { n: cfg.count_n },
    };
    let report = hypotheses::verify_hypotheses(&map, &cfg.potential, cfg.gamma, opts)?;
    let mut text = String::new();
    let _ = writeln!(text, "{:<14} {:<5} {:>24} {:>24} {:>24}", "condition", "pass", "lhs", "rhs", "slack");
    for r in &report.records {
        let _ = writeln!(
            text,
            "{:<14} {:<5} {:>24} {:>24} {:>24}",
            r.name,
            if r.pass { "yes" } else { "no" },
            fmt_f64(r.lhs),
            fmt_f64(r.rhs),
            fmt_f64(r.slack)
        );
    }
    let _ = writeln!(text, "route a: {}", if report.route_a { "pass" } else { "fail" });
    match report.route_b {
        Some(b) => {
            let _ = writeln!(text, "route b: {}", if b { "pass" } else { "fail" });
        }
        None => {
            let _ = writeln!(text, "route b: not checked (gamma0 not given)");
        }
    }
    for n in &report.notes {
        let _ = writeln!(text, "note: {n}");
    }
    let status = if report.route_a {
        EXIT_OK
    } else {
        let failed: Vec<&str> = report.records.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
        eprintln!("hypothesis violated: {}", failed.join(", "));
        EXIT_HYPOTHESIS
    };
    let summary = serde_json::to_value(&report).expect("report serializes");
    Ok(Outcome { text, summary, csv: None, status })
}

fn pressure(cfg: &RunConfig, dump: Option<&Path>) -> CmdResult {
    let map = cfg.build_map()?;
    let m = model(cfg, &map)?;
    let s = &m.spectral;
    let g = grid::Grid::new(&map, cfg.grid_per_atom)?;
    let grid_gap = grid::grid_spectrum(&map, &cfg.potential, s.lambda, &g)?.gap;
    if let Some(path) = dump {
        let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
        let _ = writeln!(out, "{} {} {}", m.matrix.dim(), m.matrix.dim(), m.matrix.nnz());
        for (r, c, v) in m.matrix.entries() {
            let _ = writeln!(out, "{} {} {}", r + 1, c + 1, fmt_f64(v));
        }
        std::fs::write(path, out).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    }
    let mut text = String::new();
    let _ = writeln!(text, "lambda = {:.12}", s.lambda);
    let _ = writeln!(text, "P = {:.12}", s.pressure);
    let _ = writeln!(text, "gap = {}", fmt_f64(s.gap));
    let _ = writeln!(text, "grid gap = {}", fmt_f64(grid_gap));
    let _ = writeln!(text, "bracket width = {}", fmt_f64(s.bracket.1 - s.bracket.0));
    let _ = writeln!(text, "left bracket width = {}", fmt_f64(s.left_bracket.1 - s.left_bracket.0));
    let summary = json!({
        "lambda": s.lambda,
        "pressure": s.pressure,
        "gap": s.gap,
        "grid_gap": grid_gap,
        "bracket": [s.bracket.0, s.bracket.1],
        "left_bracket": [s.left_bracket.0, s.left_bracket.1],
        "iterations": s.iterations,
        "depth": s.depth,
    });
    Ok(Outcome::ok(text, summary, None))
}

fn word_label(w: &[usize]) -> String {
    w.iter().map(|a| (a + 1).to_string()).collect::<Vec<_>>().join(".")
}

fn density(cfg: &RunConfig) -> CmdResult {
    let map = cfg.build_map()?;
    let m = model(cfg, &map)?;
    let sys = &m.system;
    let mut csv = String::from("word,left,width,h,nu\n");
    for i in 0..sys.len() {
        let (lo, _) = sys.interval(i);
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            word_label(&sys.word(i)),
            fmt_f64(lo),
            fmt_f64(sys.width(i)),
            fmt_f64(m.spectral.h[i]),
            fmt_f64(m.spectral.nu[i])
        );
    }
    let (hmin, hmax) = equilibrium::measure_equivalence_diagnostic(&m);
    let text = format!("cylinders = {}\nh range = [{}, {}]\n", sys.len(), fmt_f64(hmin), fmt_f64(hmax));
    let summary = json!({ "cylinders": sys.len(), "h_min": hmin, "h_max": hmax, "lambda": m.lambda() });
    Ok(Outcome::ok(text, summary, Some(csv)))
}

fn cones_cmd(cfg: &RunConfig, params: &mut Value) -> CmdResult {
    use rand::SeedableRng;
    let map = cfg.build_map()?;
    let m = model(cfg, &map)?;
    let lambda = m.lambda();
    let setup = cones::ConeSetup::new(&map, &cfg.potential, lambda, cfg.theta0, cfg.l)?;
    *params = json!({ "l": setup.l, "theta0": setup.theta0, "z_samples": cones::DEFAULT_Z_SAMPLES, "ly_functions": cfg.cone_pairs.max(1) });
    let g = grid::Grid::new(&map, cfg.grid_per_atom)?;
    let exp = cones::contraction_experiment(&map, &cfg.potential, lambda, &g, &setup, cfg.cone_pairs, cfg.cone_iters, cfg.seed)?;
    // Lasota–Yorke slack on random cone elements drawn from an independent stream.
    let op = grid::grid_transfer_matrix(&map, &cfg.potential, lambda, &g)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x4c59);
    let ly_slack = (0..cfg.cone_pairs.max(1))
        .map(|_| {
            let f = cones::random_cone_function(&g, setup.l, cfg.potential.alpha, &mut rng);
            cones::lasota_yorke_slack(&op, &setup.ly, &f)
        })
        .fold(f64::INFINITY, f64::min);
    let mut text = String::new();
    let _ = writeln!(text, "{:>24} {:>24} {:>24} {:>24} {:>24}", "Theta", "C", "sigma", "Delta", "tanh(Delta/4)");
    let _ = writeln!(
        text,
        "{:>24} {:>24} {:>24} {:>24} {:>24}",
        fmt_f64(setup.ly.theta),
        fmt_f64(setup.ly.c),
        fmt_f64(setup.sigma),
        fmt_f64(setup.diameter),
        fmt_f64(setup.rate)
    );
    let _ = writeln!(text, "L = {}  Theta0 = {}", fmt_f64(setup.l), fmt_f64(setup.theta0));
    let _ = writeln!(text, "max initial psi = {}", fmt_f64(exp.max_initial_psi()));
    let _ = writeln!(text, "max step ratio = {}", fmt_f64(exp.max_ratio()));
    let _ = writeln!(text, "worst trace excess = {}", fmt_f64(exp.worst_trace_excess()));
    let _ = writeln!(text, "min Lasota-Yorke slack = {}", fmt_f64(ly_slack));
    let mut csv = String::from("pair,step,psi,ratio,trace,trace_bound\n");
    for s in &exp.steps {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            s.pair + 1,
            s.step,
            fmt_f64(s.psi),
            fmt_opt(s.ratio),
            fmt_f64(s.trace),
            fmt_f64(s.trace_bound)
        );
    }
    let summary = json!({
        "setup": setup,
        "lambda": lambda,
        "max_initial_psi": exp.max_initial_psi(),
        "max_ratio": exp.max_ratio(),
        "worst_trace_excess": exp.worst_trace_excess(),
        "min_ly_slack": ly_slack,
    });
    Ok(Outcome::ok(text, summary, Some(csv)))
}

/// Every numeric cell of a CSV file, in reading order; a leading row without
/// numbers is taken as a header.
pub fn read_numbers(path: &Path) -> crate::error::Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(e.to_string()))?;
        let cells: Vec<&str> = rec.iter().filter(|c| !c.is_empty()).collect();
        let parsed: Vec<Option<f64>> = cells.iter().map(|c| c.parse().ok()).collect();
        if row == 0 && !cells.is_empty() && parsed.iter().all(Option::is_none) {
            continue;
        }
        for (c, v) in cells.iter().zip(parsed) {
            out.push(v.ok_or_else(|| Error::Config(format!("not a number: {c:?} in row {}", row + 1)))?);
        }
    }
    Ok(out)
}

fn pliss(input: &Path, a: f64, c1: f64, c2: f64) -> CmdResult {
    let b = read_numbers(input)?;
    let r = symbolic::pliss_times(&b, a, c1, c2)?;
    let n = b.len();
    let density_ok = r.indices.len() as f64 > r.theta * n as f64;
    let mut csv = String::from("index,value\n");
    for &i in &r.indices {
        let _ = writeln!(csv, "{},{}", i, fmt_f64(b[i - 1]));
    }
    let text = format!(
        "n = {n}\nselected = {}\ntheta = {}\ndensity bound met: {}\n",
        r.indices.len(),
        fmt_f64(r.theta),
        if density_ok { "yes" } else { "no" }
    );
    let summary = json!({ "n": n, "selected": r.indices.len(), "theta": r.theta, "density_ok": density_ok, "indices": r.indices });
    Ok(Outcome::ok(text, summary, Some(csv)))
}

fn resolved_c(cfg: &RunConfig, map: &crate::MarkovMap) -> crate::error::Result<f64> {
    let c = cfg.c.unwrap_or_else(|| hypotheses::equality_c(map, cfg.gamma));
    if !(c > 0.0) {
        return Err(Error::Hypothesis {
            condition: "(e.4)".into(),
            detail: format!("hyperbolicity constant c = {c} is not positive"),
        });
    }
    Ok(c)
}

fn hyptimes(cfg: &RunConfig, x: f64, n: usize, params: &mut Value) -> CmdResult {
    let map = cfg.build_map()?;
    let c = resolved_c(cfg, &map)?;
    params["c"] = json!(c);
    let times = symbolic::hyperbolic_times(&map, x, n, c)?;
    let mut csv = String::from("index,time\n");
    for (k, t) in times.iter().enumerate() {
        let _ = writeln!(csv, "{},{}", k + 1, t);
    }
    let density = times.len() as f64 / n as f64;
    let text = format!("c = {}\nhyperbolic times = {}\ndensity = {}\n", fmt_f64(c), times.len(), fmt_f64(density));
    let summary = json!({ "x": x, "n": n, "c": c, "count": times.len(), "density": density, "times": times });
    Ok(Outcome::ok(text, summary, Some(csv)))
}

fn count(cfg: &RunConfig, n: usize, p: Option<u32>, q: Option<u32>, params: &mut Value) -> CmdResult {
    let (p, q) = match (p, q) {
        (Some(p), Some(q)) => (p, q),
        _ => {
            let map = cfg.build_map()?;
            let bad = map.num_bad() as u32;
            (p.unwrap_or(map.num_atoms() as u32 - bad), q.unwrap_or(bad))
        }
    };
    *params = json!({ "n": n, "p": p, "q": q });
    let mut csv = String::from("n,rate\n");
    let mut last = None;
    for k in 1..=n {
        let r = symbolic::count_frequent_words(p, q, cfg.gamma, k)?;
        let _ = writeln!(csv, "{},{}", k, fmt_f64(r.rate));
        last = Some(r);
    }
    let last = last.ok_or_else(|| Error::Config("n must be positive".into()))?;
    let order = symbolic::stirling_order(cfg.gamma);
    let bound = order.map(|kk| symbolic::stirling_rate_bound(p, q, kk)).transpose()?;
    let mut text = format!("count = {}\nrate = {}\n", last.count, fmt_f64(last.rate));
    if let Some(b) = bound {
        let _ = writeln!(text, "stirling bound = {}", fmt_f64(b));
    }
    let summary = json!({
        "p": p, "q": q, "gamma": cfg.gamma, "n": n,
        "count": last.count.to_string(),
        "rate": last.rate,
        "stirling_order": order,
        "stirling_bound": bound,
        "log_q": f64::from(q).ln(),
    });
    Ok(Outcome::ok(text, summary, Some(csv)))
}

fn equilibrium_cmd(cfg: &RunConfig) -> CmdResult {
    let map = cfg.build_map()?;
    let m = model(cfg, &map)?;
    let e = equilibrium::rokhlin_entropy(&cfg.potential, &m);
    let eq = equilibrium::equilibrium_measure(&m);
    let weights: Vec<f64> = (0..map.num_atoms())
        .map(|a| eq.weights[m.system.prefix_range(&[a])].iter().sum())
        .collect();
    let mut csv = String::from("atom,weight\n");
    for (a, w) in weights.iter().enumerate() {
        let _ = writeln!(csv, "{},{}", a + 1, fmt_f64(*w));
    }
    let text = format!(
        "P = {:.12}\nh_mu = {:.12}\nint phi dmu = {:.12}\nidentity defect = {}\ninvariance defect = {}\n",
        e.pressure,
        e.entropy,
        e.potential_integral,
        fmt_f64(e.identity_defect),
        fmt_f64(eq.invariance_defect)
    );
    let summary = json!({ "entropy": e, "invariance_defect": eq.invariance_defect, "atom_weights": weights });
    Ok(Outcome::ok(text, summary, Some(csv)))
}

fn scan(cfg: &RunConfig) -> CmdResult {
    let map = cfg.build_map()?;
    let m = model(cfg, &map)?;
    let opts = cfg.scan_options();
    let r = equilibrium::variational_scan(&map, &cfg.potential, opts)?;
    let d = map.num_atoms();
    let system = if cfg.potential.is_atom_constant() {
        None
    } else {
        Some(transfer::CylinderSystem::new(&map, opts.depth)?)
    };
    let mut csv = String::new();
    for i in 0..d {
        for j in 0..d {
            let _ = write!(csv, "p_{}_{},", i + 1, j + 1);
        }
    }
    csv.push_str("entropy,integral,value\n");
    for (flat, _) in &r.samples {
        let p: Vec<Vec<f64>> = flat.chunks(d).map(<[f64]>::to_vec).collect();
        let c = equilibrium::markov_free_energy(&map, &cfg.potential, &p, system.as_ref())?;
        for v in flat {
            csv.push_str(&fmt_f64(*v));
            csv.push(',');
        }
        let _ = writeln!(csv, "{},{},{}", fmt_f64(c.entropy), fmt_f64(c.potential_integral), fmt_f64(c.value));
    }
    let pressure = m.spectral.pressure;
    let best = r.best.ok_or_else(|| Error::Numerical("no admissible Markov measure".into()))?;
    let text = format!(
        "P = {:.12}\nbest value = {:.12}\nexcess over P = {}\ngrid resolution = {}\n",
        pressure,
        best.value,
        fmt_f64(best.value - pressure),
        r.resolution
    );
    let summary = json!({ "pressure": pressure, "best": best, "resolution": r.resolution, "samples": r.samples.len() });
    Ok(Outcome::ok(text, summary, Some(csv)))
}

fn decay(cfg: &RunConfig) -> CmdResult {
    let map = cfg.build_map()?;
    let m = model(cfg, &map)?;
    let est = match cfg.orbit_length {
        Some(length) => statistics::Estimator::Orbit { length, seed: cfg.seed },
        None => statistics::Estimator::Quadrature,
    };
    let s = statistics::correlation(&map, &m, &cfg.observable, &cfg.observable, cfg.n_max, est)?;
    let fit = statistics::decay_fit(&s);
    let g = grid::Grid::new(&map, cfg.grid_per_atom)?;
    let grid_gap = grid::grid_spectrum(&map, &cfg.potential, m.lambda(), &g)?.gap;
    let mut csv = String::from("n,c,stderr\n");
    for (n, (c, e)) in s.values.iter().zip(&s.stderr).enumerate() {
        let _ = writeln!(csv, "{},{},{}", n, fmt_f64(*c), fmt_f64(*e));
    }
    let mut text = String::new();
    match fit {
        statistics::DecayFit::Fitted { tau, k, points } => {
            let _ = writeln!(text, "tau = {}\nK = {}\npoints = {points}", fmt_f64(tau), fmt_f64(k));
        }
        statistics::DecayFit::BelowResolution => {
            let _ = writeln!(text, "correlations below resolution");
        }
    }
    let _ = writeln!(text, "grid gap = {}", fmt_f64(grid_gap));
    let summary = json!({ "series": s, "fit": fit, "grid_gap": grid_gap });
    Ok(Outcome::ok(text, summary, Some(csv)))
}

fn clt(cfg: &RunConfig) -> CmdResult {
    use statrs::distribution::{ContinuousCDF, Normal};
    let map = cfg.build_map()?;
    let m = model(cfg, &map)?;
    let out = statistics::clt_empirical_test(&map, &m, &cfg.observable, cfg.clt_n, cfg.clt_samples, cfg.seed, cfg.cutoff)?;
    let mut csv = String::from("level,sample,normal\n");
    let (text, summary) = match &out {
        statistics::CltOutcome::Tested(r) => {
            let mut sorted = r.sums.clone();
            sorted.sort_by(f64::total_cmp);
            let normal = Normal::new(0.0, r.sigma2.sqrt()).map_err(|e| Error::Numerical(e.to_string()))?;
            let k = sorted.len() as f64;
            for (i, v) in sorted.iter().enumerate() {
                let level = (i as f64 + 0.5) / k;
                let _ = writeln!(csv, "{},{},{}", fmt_f64(level), fmt_f64(*v), fmt_f64(normal.inverse_cdf(level)));
            }
            let pass = r.ks <= cfg.tolerances.ks;
            (
                format!(
                    "sigma2 = {}\nsample variance = {}\nKS = {}\nKS threshold = {}\npass: {}\n",
                    fmt_f64(r.sigma2),
                    fmt_f64(r.sigma_hat * r.sigma_hat),
                    fmt_f64(r.ks),
                    fmt_f64(cfg.tolerances.ks),
                    if pass { "yes" } else { "no" }
                ),
                json!({ "status": "tested", "ks": r.ks, "sigma2": r.sigma2, "sigma_hat": r.sigma_hat,
                        "n": r.n, "samples": r.samples, "ks_threshold": cfg.tolerances.ks, "pass": pass }),
            )
        }
        statistics::CltOutcome::Degenerate(v) => (
            format!("degenerate: sigma2 = {} (tail bound {})\n", fmt_f64(v.sigma2), fmt_f64(v.tail_bound)),
            json!({ "status": "degenerate", "variance": v }),
        ),
    };
    Ok(Outcome::ok(text, summary, Some(csv)))
}

fn ldp(cfg: &RunConfig) -> CmdResult {
    let map = cfg.build_map()?;
    let m = transfer::CylinderModel::with_options(&map, &cfg.potential, cfg.ldp_depth, cfg.power_options())?;
    let u = &cfg.observable;
    let curve = statistics::deviation_rate(&map, &m, u, cfg.ldp_rho, &cfg.ldp_n)?;
    let mu = equilibrium::equilibrium_measure(&m).weights;
    let mean: f64 = mu.iter().zip(u.on_cylinders(&map, &m.system)).map(|(a, b)| a * b).sum();
    let bound = statistics::rate_bound_scan(&map, &cfg.potential, u, cfg.ldp_rho, mean, m.spectral.pressure, cfg.scan_options())?;
    let mut csv = String::from("n,rate\n");
    for (n, r) in &curve.points {
        let _ = writeln!(csv, "{},{}", n, fmt_opt(*r));
    }
    let text = format!(
        "mean = {}\nextrapolated rate = {}\nrate bound = {}\n",
        fmt_f64(mean),
        curve.limit.map(fmt_f64).unwrap_or_else(|| "n/a".into()),
        bound.value.map(fmt_f64).unwrap_or_else(|| "n/a (no feasible measure)".into())
    );
    let summary = json!({ "mean": mean, "curve": curve, "rate_bound": bound.value, "rate_bound_measure": bound.best });
    Ok(Outcome::ok(text, summary, Some(csv)))
}

fn perturb(cfg: &RunConfig) -> CmdResult {
    use rand::SeedableRng;
    let map = cfg.build_map()?;
    let m = model(cfg, &map)?;
    let curve = perturbation::stability_curve(&map, &cfg.potential, &m, &cfg.eps_list, cfg.noise_nodes)?;
    let g = grid::Grid::new(&map, cfg.grid_per_atom)?;
    let ly = cones::lasota_yorke_constants(&map, &cfg.potential, m.lambda())?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let bank: Vec<grid::GridFunction> =
        (0..PERTURB_BANK).map(|_| cones::random_cone_function(&g, 1.0, cfg.potential.alpha, &mut rng)).collect();
    let mut csv = String::from("eps,l1,w1,theta_eps,envelope_c,envelope_rate\n");
    let mut rows = Vec::new();
    for p in &curve {
        let noise = perturbation::NoiseModel::new(p.eps, cfg.noise_nodes)?;
        let dist = perturbation::operator_distance(&map, &cfg.potential, m.lambda(), &noise, cfg.n_max.max(2), &bank)?;
        let (ec, er) = match dist.envelope {
            Some((c, r)) => (Some(c), Some(r)),
            None => (None, None),
        };
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            fmt_f64(p.eps),
            fmt_f64(p.l1),
            fmt_f64(p.w1),
            fmt_f64(p.theta_eps),
            fmt_opt(ec),
            fmt_opt(er)
        );
        rows.push(json!({ "point": p, "defects": dist.defects, "envelope": dist.envelope }));
    }
    let mut text = format!("Theta = {}\n", fmt_f64(ly.theta));
    for p in &curve {
        let _ = writeln!(text, "eps = {}  l1 = {}  w1 = {}", fmt_f64(p.eps), fmt_f64(p.l1), fmt_f64(p.w1));
    }
    let summary = json!({ "theta": ly.theta, "curve": rows });
    Ok(Outcome::ok(text, summary, Some(csv)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_has_17_digits() {
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_f64(3f64.ln()), "1.0986122886681098e0");
    }

    #[test]
    fn bad_usage_exits_64() {
        assert_eq!(main_with_args(["eqstate", "frobnicate"]), EXIT_USAGE);
        assert_eq!(main_with_args(["eqstate", "pressure", "--depth", "x"]), EXIT_USAGE);
    }

    #[test]
    fn reads_numbers_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.csv");
        std::fs::write(&p, "value\n1.5\n2\n-0.25, 3\n").unwrap();
        assert_eq!(read_numbers(&p).unwrap(), vec![1.5, 2.0, -0.25, 3.0]);
        std::fs::write(&p, "1\nx\n").unwrap();
        assert!(read_numbers(&p).is_err());
    }
}
