//! Command-line front end.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::certify::{self, PlaneBall};
use crate::charts::{zoo_metric, ChartMetric, Point3, ZOO_NAMES};
use crate::error::{Error, Result};
use crate::grassmann::{self, plane_with_normal, ScanGrid};
use crate::perturb::adapted_chart;
use crate::pipeline::{self, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "geosieve", version, about = "Generic-plane scans and metric perturbations in 3D charts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Built-in metrics.
    Zoo {
        #[command(subcommand)]
        action: ZooAction,
    },
    /// Score planes on a lattice and list the low-scoring ones.
    Scan(ScanArgs),
    /// Run one numerical check.
    Certify(CertifyArgs),
    /// Perturb a metric until every scanned plane is generic.
    Genericize(GenericizeArgs),
    /// C^q distance between two metrics on a lattice.
    Distance(DistanceArgs),
}

#[derive(Debug, Subcommand)]
enum ZooAction {
    List,
}

#[derive(Debug, Args)]
struct MetricArgs {
    /// `zoo:<name>` or a path to a metric JSON document.
    #[arg(long, default_value = "zoo:flat_torus")]
    metric: String,
    /// Zoo parameter override, `key=value`; repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
}

#[derive(Debug, Args)]
struct ScanArgs {
    #[command(flatten)]
    metric: MetricArgs,
    #[arg(long, default_value = "8,8,8", value_parser = parse_triple)]
    base_grid: [usize; 3],
    #[arg(long, default_value_t = 32)]
    fiber_grid: usize,
    #[arg(long, default_value_t = 1e-6)]
    threshold: f64,
    /// Also write a G slice through the middle of this axis.
    #[arg(long)]
    slice_axis: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Check {
    LemmaLocalR,
    LemmaLocalM,
    PropChristoffel,
    PropInverse,
    PropCurvature,
    MainLemma,
    LemC,
    ProductBounds,
}

impl Check {
    fn file_name(self) -> &'static str {
        match self {
            Check::LemmaLocalR => "lemma-local-r.json",
            Check::LemmaLocalM => "lemma-local-m.json",
            Check::PropChristoffel => "prop-christoffel.json",
            Check::PropInverse => "prop-inverse.json",
            Check::PropCurvature => "prop-curvature.json",
            Check::MainLemma => "main-lemma.json",
            Check::LemC => "lem-c.json",
            Check::ProductBounds => "product-bounds.json",
        }
    }
}

#[derive(Debug, Args)]
struct CertifyArgs {
    #[arg(value_enum)]
    check: Check,
    /// Base metric; defaults to the flat torus (random_fourier for lem-c).
    #[arg(long)]
    metric: Option<String>,
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    #[arg(long = "K", default_value_t = 100.0)]
    k: f64,
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    #[arg(long, default_value_t = 0.2)]
    rho: f64,
    #[arg(long, default_value_t = 0.1)]
    eta_pad: f64,
    /// Deformation scales, comma separated.
    #[arg(long, value_delimiter = ',')]
    s: Option<Vec<f64>>,
    /// Points per axis (samples of t for lemma-local-r).
    #[arg(long)]
    grid: Option<usize>,
    /// Plane samples for growth checks, trials for product-bounds.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Base point of the deformed plane; defaults to the domain center.
    #[arg(long, value_parser = parse_vec3)]
    point: Option<[f64; 3]>,
    /// Euclidean normal of the deformed plane's subspace.
    #[arg(long, default_value = "0,0,1", value_parser = parse_vec3)]
    normal: [f64; 3],
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenericizeArgs {
    /// Key-value file with run settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    metric: Option<String>,
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long, value_parser = parse_triple)]
    base_grid: Option<[usize; 3]>,
    #[arg(long)]
    fiber_grid: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long = "K")]
    k: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    eta_pad: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    target_margin: Option<f64>,
    #[arg(long)]
    ball_samples: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DistanceArgs {
    #[arg(long)]
    g1: String,
    #[arg(long)]
    g2: String,
    #[arg(long, default_value_t = 3)]
    q: usize,
    #[arg(long, default_value = "8,8,8", value_parser = parse_triple)]
    grid: [usize; 3],
}

fn parse_list<T: std::str::FromStr>(s: &str) -> std::result::Result<[T; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated values, got {s:?}"));
    }
    let mut out = Vec::with_capacity(3);
    for p in parts {
        out.push(p.parse::<T>().map_err(|_| format!("cannot parse {p:?}"))?);
    }
    out.try_into().map_err(|_| "expected three values".to_string())
}

fn parse_triple(s: &str) -> std::result::Result<[usize; 3], String> {
    parse_list(s)
}

fn parse_vec3(s: &str) -> std::result::Result<[f64; 3], String> {
    parse_list(s)
}

fn parse_params(items: &[String]) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for item in items {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("parameter {item:?} is not key=value")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("parameter {k}: cannot parse {v:?}")))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

/// Resolve `zoo:<name>` or load a metric JSON document.
pub fn load_metric(reference: &str, params: &BTreeMap<String, f64>) -> Result<ChartMetric> {
    if let Some(name) = reference.strip_prefix("zoo:") {
        return zoo_metric(name, params);
    }
    if !params.is_empty() {
        return Err(Error::Config("--param only applies to zoo metrics".into()));
    }
    ChartMetric::from_json(&std::fs::read_to_string(reference)?)
}

/// Parse a `key = value` settings file. Blank lines and `#` comments are skipped.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("config line {}: expected key = value", n + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("config key {key}: cannot parse {v:?}")))
}

fn run_config(args: &GenericizeArgs) -> Result<RunConfig> {
    let file = match &args.config {
        Some(p) => parse_config_file(&std::fs::read_to_string(p)?)?,
        None => BTreeMap::new(),
    };
    let reference = args
        .metric
        .clone()
        .or_else(|| file.get("metric").cloned())
        .unwrap_or_else(|| "zoo:flat_torus".into());
    let mut cfg = RunConfig::new(load_metric(&reference, &parse_params(&args.params)?)?);
    for (key, v) in &file {
        match key.as_str() {
            "metric" => {}
            "xi" => cfg.xi = parse_value(key, v)?,
            "base_grid" => cfg.base_grid = parse_triple(v).map_err(Error::Config)?,
            "fiber_grid" => cfg.fiber_grid = parse_value(key, v)?,
            "threshold" => cfg.threshold = parse_value(key, v)?,
            "K" => cfg.k = parse_value(key, v)?,
            "eps" => cfg.eps = parse_value(key, v)?,
            "rho" => cfg.rho = parse_value(key, v)?,
            "eta_pad" => cfg.eta_pad = parse_value(key, v)?,
            "max_iterations" => cfg.max_iterations = parse_value(key, v)?,
            "seed" => cfg.seed = parse_value(key, v)?,
            "output_dir" => cfg.output_dir = Some(PathBuf::from(v)),
            "target_margin" => cfg.target_margin = parse_value(key, v)?,
            "ball_samples" => cfg.ball_samples = parse_value(key, v)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
    }
    macro_rules! flag {
        ($field:ident, $target:ident) => {
            if let Some(v) = args.$field {
                cfg.$target = v;
            }
        };
    }
    flag!(xi, xi);
    flag!(base_grid, base_grid);
    flag!(fiber_grid, fiber_grid);
    flag!(threshold, threshold);
    flag!(k, k);
    flag!(eps, eps);
    flag!(rho, rho);
    flag!(eta_pad, eta_pad);
    flag!(max_iterations, max_iterations);
    flag!(seed, seed);
    flag!(target_margin, target_margin);
    flag!(ball_samples, ball_samples);
    if let Some(out) = &args.out {
        cfg.output_dir = Some(out.clone());
    }
    Ok(cfg)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn emit<T: Serialize>(out: &Option<PathBuf>, name: &str, value: &T) -> Result<()> {
    match out {
        Some(dir) => write_json(dir, name, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn domain_center(m: &ChartMetric) -> Point3 {
    let d = m.domain();
    Point3::new(0.5 * (d.lo[0] + d.hi[0]), 0.5 * (d.lo[1] + d.hi[1]), 0.5 * (d.lo[2] + d.hi[2]))
}

fn cmd_scan(a: &ScanArgs) -> Result<bool> {
    let metric = load_metric(&a.metric.metric, &parse_params(&a.metric.params)?)?;
    let grid = ScanGrid { base: a.base_grid, fiber: a.fiber_grid };
    let report = grassmann::full_scan(&metric, &grid)?.report(a.threshold);
    emit(&a.out, "rigid_report.json", &report)?;
    if let Some(dir) = &a.out {
        report.write_csv(std::fs::File::create(dir.join("rigid_planes.csv"))?)?;
        if let Some(axis) = a.slice_axis {
            pipeline::export_slices(&metric, &report, axis, &dir.join(format!("slice_axis{axis}.csv")))?;
        }
    }
    eprintln!(
        "{} of {} planes at or below {:e}; min G = {:e}",
        report.planes.len(),
        grid.base_count() * grid.fiber,
        a.threshold,
        report.min_overall
    );
    Ok(true)
}

fn cmd_certify(a: &CertifyArgs) -> Result<bool> {
    let default_metric = if a.check == Check::LemC { "zoo:random_fourier" } else { "zoo:flat_torus" };
    let params = parse_params(&a.params)?;
    let load = || load_metric(a.metric.as_deref().unwrap_or(default_metric), &params);
    let layer = |m: &ChartMetric| -> Result<_> {
        let p = a.point.map(Point3).unwrap_or_else(|| domain_center(m));
        let g = crate::metric_jet(m, &p)?.g;
        let plane = plane_with_normal(&g, p, &a.normal)?;
        let (_, spec) = adapted_chart(&plane, a.k, a.eps, a.rho, a.eta_pad)?;
        Ok((plane, spec))
    };
    let s_values = a.s.clone().unwrap_or_else(|| match a.check {
        Check::LemC => vec![1e-10, 1e-9, 1e-8],
        _ => vec![1e-3, 1e-2],
    });
    let (pass, name) = match a.check {
        Check::LemmaLocalR => {
            let r = certify::check_lemma_local_r(a.k, a.eps, a.grid.unwrap_or(100_000))?;
            emit(&a.out, a.check.file_name(), &r)?;
            (r.pass, r.name)
        }
        Check::LemmaLocalM => {
            let r = certify::check_lemma_local_m(a.k, a.eps, a.rho, a.eta_pad, a.grid.unwrap_or(16))?;
            emit(&a.out, a.check.file_name(), &r)?;
            (r.pass, r.name)
        }
        Check::PropChristoffel | Check::PropInverse | Check::PropCurvature => {
            let m = load()?;
            let (_, spec) = layer(&m)?;
            let n = a.grid.unwrap_or(16);
            let r = match a.check {
                Check::PropChristoffel => certify::check_christoffel_diffs(&m, &spec, &s_values, n)?,
                Check::PropInverse => certify::check_inverse_diffs(&m, &spec, &s_values, n)?,
                _ => certify::check_curvature_diffs(&m, &spec, &s_values, n)?,
            };
            emit(&a.out, a.check.file_name(), &r)?;
            (r.pass, r.name)
        }
        Check::MainLemma => {
            let m = load()?;
            let (plane, spec) = layer(&m)?;
            let r = certify::check_main_lemma(&m, &plane, &spec, &s_values, a.samples.unwrap_or(200), a.seed)?;
            emit(&a.out, a.check.file_name(), &r)?;
            (r.pass, r.name)
        }
        Check::LemC => {
            let m = load()?;
            let (plane, spec) = layer(&m)?;
            let region = [PlaneBall { center: plane, radius: 2.0 * a.rho }];
            let hood = [PlaneBall { center: plane, radius: a.rho }];
            let r = certify::check_lem_c(&m, &spec, &region, &hood, &s_values, a.samples.unwrap_or(200), a.seed)?;
            emit(&a.out, a.check.file_name(), &r)?;
            (r.pass, r.name)
        }
        Check::ProductBounds => {
            let r = certify::check_product_bounds(a.samples.unwrap_or(1000), a.seed)?;
            emit(&a.out, a.check.file_name(), &r)?;
            (r.pass, r.name)
        }
    };
    eprintln!("{name}: {}", if pass { "pass" } else { "FAIL" });
    Ok(pass)
}

fn cmd_genericize(a: &GenericizeArgs) -> Result<bool> {
    let cfg = run_config(a)?;
    let (_, cert) = pipeline::genericize(&cfg)?;
    if cfg.output_dir.is_none() {
        println!("{}", cert.to_json()?);
    }
    eprintln!(
        "{}: final min G = {:e}, C3 used = {:e} of {:e}, {} layers",
        cert.message,
        cert.final_min_g,
        cert.c3_used,
        cert.xi,
        cert.balls.iter().filter(|b| b.s_chosen > 0.0).count()
    );
    Ok(cert.success)
}

fn cmd_distance(a: &DistanceArgs) -> Result<bool> {
    let none = BTreeMap::new();
    let g1 = load_metric(&a.g1, &none)?;
    let g2 = load_metric(&a.g2, &none)?;
    println!("{:e}", certify::cq_distance(&g1, &g2, a.q, a.grid)?);
    Ok(true)
}

/// Size the global worker pool from `GEOSIEVE_THREADS`, if set.
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("GEOSIEVE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("GEOSIEVE_THREADS = {v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Run the CLI and return the process exit code: 0 on pass, 2 on a failed
/// check, 1 on usage or configuration errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return 1;
    }
    let outcome = match &cli.command {
        Command::Zoo { action: ZooAction::List } => {
            for name in ZOO_NAMES {
                println!("{name}");
            }
            Ok(true)
        }
        Command::Scan(a) => cmd_scan(a),
        Command::Certify(a) => cmd_certify(a),
        Command::Genericize(a) => cmd_genericize(a),
        Command::Distance(a) => cmd_distance(a),
    };
    match outcome {
        Ok(true) => 0,
        Ok(false) => 2,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_parsing() {
        let m = parse_config_file("# run\nxi = 0.02\n\nbase_grid = 4,4,4  # small\n").unwrap();
        assert_eq!(m["xi"], "0.02");
        assert_eq!(m["base_grid"], "4,4,4");
        assert!(parse_config_file("xi 0.02").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["geosieve", "zoo", "list"]), 0);
        assert_eq!(run(["geosieve", "--bogus"]), 1);
        assert_eq!(run(["geosieve", "scan", "--metric", "zoo:nowhere"]), 1);
        assert_eq!(run(["geosieve", "certify", "lemma-local-r", "--K", "100", "--eps", "0.01"]), 0);
        assert_eq!(run(["geosieve", "certify", "lemma-local-r", "--K", "10"]), 1);
    }
}
