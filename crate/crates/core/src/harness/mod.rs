//! Experiment driver: a line-oriented key=value config format with
//! [section] headers, fail-closed validation against per-experiment
//! schemas, deterministic artifact output (manifest JSON plus CSV tables),
//! and a report aggregator.

use crate::disorder::{
    dirty_fraction_csv, dirty_fraction_stats, hoeffding_check, hoeffding_csv, sample_disorder,
    xi_and_dirty, Scales,
};
use crate::entropy_est::{entropy_csv, finite_volume_entropy};
use crate::error::{Error, Result};
use crate::flow::{decay_profile, evolve_to_stationary, ProfileGrid};
use crate::kernel::KacKernel;
use crate::lattice::{
    energy_approximation_check, order_report_csv, run_chain, BoundaryCondition, ChainSettings,
    SpinLattice,
};
use crate::mean_field::{barrier, minimizers, rho_beta, MFParams};
use crate::self_consistency::contraction_factor;
use crate::vec2::Vec2;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Experiment kinds accepted by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    MfScan,
    Barrier,
    Contraction,
    FlowStrip,
    McRun,
    DisorderStats,
    EntropyCheck,
    EnergyApprox,
}

impl Kind {
    pub fn from_name(name: &str) -> Result<Kind> {
        Ok(match name {
            "mf-scan" => Kind::MfScan,
            "barrier" => Kind::Barrier,
            "contraction" => Kind::Contraction,
            "flow-strip" => Kind::FlowStrip,
            "mc-run" => Kind::McRun,
            "disorder-stats" => Kind::DisorderStats,
            "entropy-check" => Kind::EntropyCheck,
            "energy-approx" => Kind::EnergyApprox,
            other => {
                return Err(Error::Config(format!(
                    "unknown experiment kind '{other}'"
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Kind::MfScan => "mf-scan",
            Kind::Barrier => "barrier",
            Kind::Contraction => "contraction",
            Kind::FlowStrip => "flow-strip",
            Kind::McRun => "mc-run",
            Kind::DisorderStats => "disorder-stats",
            Kind::EntropyCheck => "entropy-check",
            Kind::EnergyApprox => "energy-approx",
        }
    }

    /// (key, required) pairs accepted by this experiment.
    fn schema(&self) -> &'static [(&'static str, bool)] {
        match self {
            Kind::MfScan => &[
                ("physical.betas", true),
                ("physical.epses", true),
                ("run.tol", false),
            ],
            Kind::Barrier => &[("physical.betas", true), ("physical.epses", true)],
            Kind::Contraction => &[
                ("physical.beta", true),
                ("physical.epses", true),
                ("run.radius", false),
                ("run.samples", false),
                ("run.seed", false),
            ],
            Kind::FlowStrip => &[
                ("physical.beta", true),
                ("physical.eps", true),
                ("geometry.cells", true),
                ("geometry.l", true),
                ("geometry.xi", true),
                ("run.dt", false),
                ("run.tol", false),
                ("run.max_steps", false),
            ],
            Kind::McRun => &[
                ("physical.beta", true),
                ("physical.eps", true),
                ("physical.p", false),
                ("geometry.n", true),
                ("geometry.l", true),
                ("geometry.ell_small", true),
                ("geometry.ell_big", true),
                ("geometry.xi", true),
                ("geometry.kappa", false),
                ("geometry.p_dirty", false),
                ("geometry.lambda", false),
                ("run.sweeps", true),
                ("run.burn_in", true),
                ("run.thinning", false),
                ("run.seed", false),
                ("run.boundary", false),
            ],
            Kind::DisorderStats => &[
                ("geometry.domain", true),
                ("geometry.ell_smalls", true),
                ("geometry.ell_big", true),
                ("geometry.kappa", false),
                ("geometry.lambda", false),
                ("geometry.l", true),
                ("run.trials", true),
                ("run.seed", false),
                ("run.sizes", false),
                ("run.a_values", false),
            ],
            Kind::EntropyCheck => &[
                ("run.rho", true),
                ("run.delta", true),
                ("run.n_spins", true),
                ("run.samples", true),
                ("run.seed", false),
            ],
            Kind::EnergyApprox => &[
                ("physical.beta", true),
                ("physical.eps", true),
                ("geometry.n", true),
                ("geometry.ls", true),
                ("geometry.ell_smalls", true),
                ("geometry.ell_big", true),
                ("geometry.kappa", false),
                ("geometry.lambda", false),
                ("run.seed", false),
            ],
        }
    }
}

/// Parsed key=value pairs, keyed "section.key".
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    pairs: BTreeMap<String, String>,
}

/// Parse the line-oriented config format: [section] headers, key = value
/// lines, # comments, blank lines ignored.
pub fn parse_config(text: &str) -> Result<RawConfig> {
    let mut pairs = BTreeMap::new();
    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| {
                Error::Config(format!("line {}: malformed section header", lineno + 1))
            })?;
            section = name.trim().to_string();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected key = value", lineno + 1))
        })?;
        let key = key.trim();
        if key.is_empty() || section.is_empty() {
            return Err(Error::Config(format!(
                "line {}: key outside a [section] or empty",
                lineno + 1
            )));
        }
        let full = format!("{section}.{key}");
        if pairs.insert(full.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Config(format!("duplicate key {full}")));
        }
    }
    Ok(RawConfig { pairs })
}

impl RawConfig {
    pub fn set(&mut self, key: &str, value: &str) {
        self.pairs.insert(key.to_string(), value.to_string());
    }

    /// Fail-closed schema check: unknown keys rejected, missing required
    /// keys enumerated in one message.
    pub fn validate(&self, kind: Kind) -> Result<()> {
        let schema = kind.schema();
        let unknown: Vec<&str> = self
            .pairs
            .keys()
            .filter(|k| !schema.iter().any(|(s, _)| s == &k.as_str()))
            .map(|k| k.as_str())
            .collect();
        if !unknown.is_empty() {
            return Err(Error::Config(format!(
                "unknown keys for {}: {}",
                kind.name(),
                unknown.join(", ")
            )));
        }
        let missing: Vec<&str> = schema
            .iter()
            .filter(|(k, required)| *required && !self.pairs.contains_key(*k))
            .map(|(k, _)| *k)
            .collect();
        if !missing.is_empty() {
            return Err(Error::Config(format!(
                "missing required keys: {}",
                missing.join(", ")
            )));
        }
        Ok(())
    }

    fn raw(&self, key: &str) -> Result<&str> {
        self.pairs
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Config(format!("missing key {key}")))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        self.raw(key)?
            .parse()
            .map_err(|_| Error::Config(format!("key {key}: not a number")))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        if self.pairs.contains_key(key) {
            self.f64(key)
        } else {
            Ok(default)
        }
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.raw(key)?
            .parse()
            .map_err(|_| Error::Config(format!("key {key}: not a non-negative integer")))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        if self.pairs.contains_key(key) {
            self.usize(key)
        } else {
            Ok(default)
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        if self.pairs.contains_key(key) {
            self.raw(key)?
                .parse()
                .map_err(|_| Error::Config(format!("key {key}: not a u64")))
        } else {
            Ok(default)
        }
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.pairs.get(key).map(String::as_str).unwrap_or(default)
    }

    pub fn list_f64(&self, key: &str) -> Result<Vec<f64>> {
        self.raw(key)?
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("key {key}: bad list element '{s}'")))
            })
            .collect()
    }

    pub fn list_usize(&self, key: &str) -> Result<Vec<usize>> {
        self.raw(key)?
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("key {key}: bad list element '{s}'")))
            })
            .collect()
    }
}

/// Override precedence: config file < RFIO_ environment < CLI flags.
/// Recognized environment overrides: RFIO_SEED, RFIO_THREADS.
pub fn apply_env_overrides(cfg: &mut RawConfig) -> Result<Option<usize>> {
    let mut threads = None;
    if let Ok(v) = std::env::var("RFIO_SEED") {
        v.parse::<u64>()
            .map_err(|_| Error::Config(format!("RFIO_SEED: bad u64 '{v}'")))?;
        cfg.set("run.seed", &v);
    }
    if let Ok(v) = std::env::var("RFIO_THREADS") {
        threads = Some(
            v.parse::<usize>()
                .map_err(|_| Error::Config(format!("RFIO_THREADS: bad value '{v}'")))?,
        );
    }
    Ok(threads)
}

/// Everything a run leaves on disk.
#[derive(Debug)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub summary: Value,
}

struct Outputs {
    files: Vec<(String, String)>,
    summary: Value,
    realized_scales: Value,
}

/// Execute an experiment: read and validate the config, apply overrides,
/// dispatch, and write the manifest plus result tables into `out_dir`.
pub fn run(
    kind: Kind,
    config_path: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
    threads: Option<usize>,
) -> Result<RunArtifacts> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", config_path.display())))?;
    let mut cfg = parse_config(&text)?;
    cfg.validate(kind)?;
    let env_threads = apply_env_overrides(&mut cfg)?;
    if let Some(seed) = seed_override {
        cfg.set("run.seed", &seed.to_string());
    }
    let threads = threads.or(env_threads).unwrap_or(1);

    let outputs = dispatch(kind, &cfg)?;

    std::fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    for (name, contents) in &outputs.files {
        std::fs::write(out_dir.join(name), contents)?;
        files.push(name.clone());
    }
    std::fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(&outputs.summary).unwrap(),
    )?;
    files.push("summary.json".to_string());

    let manifest = json!({
        "kind": kind.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "timestamp_unix": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        "threads": threads,
        "config": cfg.pairs,
        "realized_scales": outputs.realized_scales,
        "files": files,
    });
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).unwrap(),
    )?;
    files.push("manifest.json".to_string());

    Ok(RunArtifacts {
        out_dir: out_dir.to_path_buf(),
        files,
        summary: outputs.summary,
    })
}

fn dispatch(kind: Kind, cfg: &RawConfig) -> Result<Outputs> {
    match kind {
        Kind::MfScan => run_mf_scan(cfg),
        Kind::Barrier => run_barrier(cfg),
        Kind::Contraction => run_contraction(cfg),
        Kind::FlowStrip => run_flow_strip(cfg),
        Kind::McRun => run_mc(cfg),
        Kind::DisorderStats => run_disorder_stats(cfg),
        Kind::EntropyCheck => run_entropy(cfg),
        Kind::EnergyApprox => run_energy_approx(cfg),
    }
}

fn scales_echo(scales: &[Scales]) -> Value {
    Value::Array(
        scales
            .iter()
            .map(|s| {
                json!({
                    "ell_small": s.ell_small,
                    "ell_big": s.ell_big,
                    "small_side": s.small_side(),
                    "big_side": s.big_side(),
                    "domain_side": s.domain_side,
                    "kappa": s.kappa,
                    "p_dirty": s.p_dirty,
                    "range": s.range,
                    "lambda": s.lambda,
                })
            })
            .collect(),
    )
}

fn run_mf_scan(cfg: &RawConfig) -> Result<Outputs> {
    let betas = cfg.list_f64("physical.betas")?;
    let epses = cfg.list_f64("physical.epses")?;
    let tol = cfg.f64_or("run.tol", 1e-12)?;
    let mut csv = String::from(
        "beta,eps,rho,sin_theta,phi,field_residual,radial_residual\n",
    );
    let mut max_field = 0.0_f64;
    let mut max_radial = 0.0_f64;
    for &beta in &betas {
        let rho_ref = rho_beta(beta, tol);
        for &eps in &epses {
            let params = MFParams::new(beta, eps);
            let (a, _) = minimizers(&params, tol)?;
            let sin_theta = a.pair.m_plus.y / a.rho;
            let field_residual = (a.rho * sin_theta - eps).abs();
            let radial_residual = (a.rho - rho_ref).abs();
            max_field = max_field.max(field_residual);
            max_radial = max_radial.max(radial_residual);
            let _ = writeln!(
                csv,
                "{beta},{eps},{},{sin_theta},{},{field_residual},{radial_residual}",
                a.rho, a.phi_value
            );
        }
    }
    Ok(Outputs {
        files: vec![("result.csv".into(), csv)],
        summary: json!({
            "max_field_residual": max_field,
            "max_radial_residual": max_radial,
            "grid_points": betas.len() * epses.len(),
        }),
        realized_scales: Value::Null,
    })
}

fn run_barrier(cfg: &RawConfig) -> Result<Outputs> {
    let betas = cfg.list_f64("physical.betas")?;
    let epses = cfg.list_f64("physical.epses")?;
    let mut csv = String::from("beta,eps,barrier,expected,error\n");
    let mut max_err = 0.0_f64;
    for &beta in &betas {
        for &eps in &epses {
            let b = barrier(&MFParams::new(beta, eps))?;
            let expected = eps * eps / 2.0;
            let err = (b - expected).abs();
            max_err = max_err.max(err);
            let _ = writeln!(csv, "{beta},{eps},{b},{expected},{err}");
        }
    }
    Ok(Outputs {
        files: vec![("result.csv".into(), csv)],
        summary: json!({ "max_barrier_error": max_err }),
        realized_scales: Value::Null,
    })
}

fn run_contraction(cfg: &RawConfig) -> Result<Outputs> {
    let beta = cfg.f64("physical.beta")?;
    let epses = cfg.list_f64("physical.epses")?;
    let radius = cfg.f64_or("run.radius", 0.02)?;
    let samples = cfg.usize_or("run.samples", 4000)?;
    let seed = cfg.u64_or("run.seed", 0)?;
    let mut csv = String::from("beta,eps,radius,factor,one_minus_factor\n");
    let mut pts = Vec::new();
    for &eps in &epses {
        let rep = contraction_factor(&MFParams::new(beta, eps), radius, samples, seed)?;
        let _ = writeln!(
            csv,
            "{beta},{eps},{radius},{},{}",
            rep.factor,
            1.0 - rep.factor
        );
        pts.push((eps.ln(), (1.0 - rep.factor).ln()));
    }
    // least-squares slope of log(1 - factor) vs log(eps)
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = if pts.len() > 1 {
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    } else {
        f64::NAN
    };
    Ok(Outputs {
        files: vec![("result.csv".into(), csv)],
        summary: json!({ "loglog_slope": slope }),
        realized_scales: Value::Null,
    })
}

fn run_flow_strip(cfg: &RawConfig) -> Result<Outputs> {
    let beta = cfg.f64("physical.beta")?;
    let eps = cfg.f64("physical.eps")?;
    let cells = cfg.usize("geometry.cells")?;
    let range = cfg.f64("geometry.l")?;
    let xi = cfg.f64("geometry.xi")?;
    let dt = cfg.f64_or("run.dt", 0.5)?;
    let tol = cfg.f64_or("run.tol", 1e-8)?;
    let max_steps = cfg.usize_or("run.max_steps", 200_000)?;

    let params = MFParams::new(beta, eps);
    let kernel = KacKernel::new(range, 1.0)?;
    let (min_a, _) = minimizers(&params, 1e-12)?;
    let bar = min_a.pair.m_bar();
    // boundary perturbed inside E: rotate m_bar by an angle that moves it
    // half the tube width
    let d = 0.5 * xi / bar.norm();
    let boundary = Vec2::new(
        bar.x * d.cos() - bar.y * d.sin(),
        bar.x * d.sin() + bar.y * d.cos(),
    );
    let grid = ProfileGrid::uniform(cells, kernel.half_width(), min_a.pair, boundary);
    let (stationary, diag) =
        evolve_to_stationary(&grid, &kernel, &params, xi, dt, tol, max_steps)?;
    let bands = decay_profile(&stationary, &kernel, &params, tol.max(10.0 * tol))?;

    let mut band_csv = String::from("distance,sup_deviation\n");
    for (d, s) in &bands {
        let _ = writeln!(band_csv, "{d},{s}");
    }
    let mut trace_csv = String::from("step,free_energy\n");
    for (i, f) in diag.free_energy_trace.iter().enumerate() {
        let _ = writeln!(trace_csv, "{i},{f}");
    }
    let monotone = diag
        .free_energy_trace
        .windows(2)
        .all(|w| w[1] <= w[0] + 1e-12);
    Ok(Outputs {
        files: vec![
            ("result.csv".into(), band_csv),
            ("trace.csv".into(), trace_csv),
            ("profile.csv".into(), stationary.to_csv()),
        ],
        summary: json!({
            "stationarity_residual": diag.stationarity_residual,
            "steps": diag.wall_steps,
            "free_energy_monotone": monotone,
            "bands": bands.len(),
        }),
        realized_scales: Value::Null,
    })
}

fn mc_scales(cfg: &RawConfig) -> Result<Scales> {
    let n = cfg.usize("geometry.n")?;
    let range = cfg.f64("geometry.l")?;
    let lambda = cfg.f64_or("geometry.lambda", 0.25)?;
    let kappa = cfg.f64_or("geometry.kappa", 0.2)?;
    let p_dirty = cfg.f64_or(
        "geometry.p_dirty",
        range.powf(-2.0 * (1.0 - lambda) / 3.0),
    )?;
    let ell_small = cfg.usize("geometry.ell_small")?;
    let ell_big = cfg.usize("geometry.ell_big")?;
    Scales::explicit(ell_small, ell_big, n, kappa, p_dirty, range, lambda).map_err(|e| {
        // turn the tiling failure into a config error with a suggestion
        let side = 2 * ell_small + 1;
        if n % side != 0 {
            let best = (1..=n)
                .filter(|s| s % 2 == 1 && n % s == 0 && *s <= side)
                .max()
                .unwrap_or(1);
            Error::Config(format!(
                "small block side {side} does not tile n = {n}; nearest workable side is {best} (ell_small = {})",
                (best - 1) / 2
            ))
        } else {
            Error::Config(e.to_string())
        }
    })
}

fn run_mc(cfg: &RawConfig) -> Result<Outputs> {
    let beta = cfg.f64("physical.beta")?;
    let eps = cfg.f64("physical.eps")?;
    let p = cfg.f64_or("physical.p", 0.5)?;
    let scales = mc_scales(cfg)?;
    let n = scales.domain_side;
    let range = scales.range;
    let xi = cfg.f64("geometry.xi")?;
    let sweeps = cfg.usize("run.sweeps")?;
    let burn_in = cfg.usize("run.burn_in")?;
    let thinning = cfg.usize_or("run.thinning", 10)?;
    let seed = cfg.u64_or("run.seed", 0)?;

    let params = MFParams::with_bias(beta, eps, p);
    let kernel = KacKernel::new(range, 1.0)?;
    let (min_a, _) = minimizers(&params, 1e-12)?;
    let bar = min_a.pair.m_bar();
    let boundary = match cfg.str_or("run.boundary", "horizontal") {
        "horizontal" => BoundaryCondition::Horizontal(bar),
        "reflected" => BoundaryCondition::ReflectedHorizontal(bar),
        "staggered" => BoundaryCondition::Staggered { a: bar.x, b: bar.y.abs().max(0.1) },
        other => {
            return Err(Error::Config(format!(
                "run.boundary: unknown value '{other}'"
            )))
        }
    };

    let field = sample_disorder(n, p, seed);
    let clean = xi_and_dirty(&field, &scales)?;
    let lat = SpinLattice::random(n, kernel.half_width(), boundary, seed)?;
    let out = run_chain(
        lat,
        &field,
        &kernel,
        &params,
        &ChainSettings { sweeps, burn_in, thinning, seed },
    )?;
    let report = crate::lattice::measure_order(
        &out.samples,
        &field,
        &scales,
        &min_a.pair,
        xi,
        Some(&clean),
    )?;

    let mut trace_csv = String::from("index,energy\n");
    for (i, e) in out.energy_trace.iter().enumerate() {
        let _ = writeln!(trace_csv, "{i},{e}");
    }
    // bulk statistics over unflagged blocks
    let bulk: Vec<_> = report.rows.iter().filter(|r| !r.flagged).collect();
    let bn = bulk.len().max(1) as f64;
    let m1 = bulk.iter().map(|r| r.m.x).sum::<f64>() / bn;
    let m2 = bulk.iter().map(|r| r.m.y).sum::<f64>() / bn;
    let se1 = (bulk.iter().map(|r| r.m_stderr.x.powi(2)).sum::<f64>()).sqrt() / bn;
    let se2 = (bulk.iter().map(|r| r.m_stderr.y.powi(2)).sum::<f64>()).sqrt() / bn;
    Ok(Outputs {
        files: vec![
            ("result.csv".into(), order_report_csv(&report)),
            ("trace.csv".into(), trace_csv),
        ],
        summary: json!({
            "samples": out.samples.len(),
            "bulk_m_e1": m1,
            "bulk_m_e1_stderr": se1,
            "bulk_m_e2": m2,
            "bulk_m_e2_stderr": se2,
            "frac_pm_ok": report.frac_pm_ok,
            "frac_bar_ok": report.frac_bar_ok,
            "mean_contour_count": report.mean_contour_count,
            "mean_contour_volume": report.mean_contour_volume,
            "bulk_blocks": bulk.len(),
        }),
        realized_scales: scales_echo(&[scales]),
    })
}

fn run_disorder_stats(cfg: &RawConfig) -> Result<Outputs> {
    let domain = cfg.usize("geometry.domain")?;
    let ell_smalls = cfg.list_usize("geometry.ell_smalls")?;
    let ell_big = cfg.usize("geometry.ell_big")?;
    let kappa = cfg.f64_or("geometry.kappa", 0.2)?;
    let lambda = cfg.f64_or("geometry.lambda", 0.25)?;
    let range = cfg.f64("geometry.l")?;
    let trials = cfg.usize("run.trials")?;
    let seed = cfg.u64_or("run.seed", 0)?;
    let p_dirty = range.powf(-2.0 * (1.0 - lambda) / 3.0);
    let scales: Vec<Scales> = ell_smalls
        .iter()
        .map(|&e| Scales::explicit(e, ell_big, domain, kappa, p_dirty, range, lambda))
        .collect::<Result<_>>()?;
    let rows = dirty_fraction_stats(&scales, trials, seed)?;
    let mut files = vec![("result.csv".into(), dirty_fraction_csv(&rows, &scales))];
    let mut hoeffding_summary = Value::Null;
    if cfg.pairs.contains_key("run.sizes") {
        let sizes = cfg.list_usize("run.sizes")?;
        let a_values = cfg.list_f64("run.a_values")?;
        let hrows = hoeffding_check(&sizes, &a_values, trials, seed);
        let worst = hrows
            .iter()
            .map(|r| (r.empirical - r.bound) / r.std_err.max(1e-15))
            .fold(f64::NEG_INFINITY, f64::max);
        hoeffding_summary = json!({ "worst_sigma_above_bound": worst, "rows": hrows.len() });
        files.push(("hoeffding.csv".into(), hoeffding_csv(&hrows)));
    }
    let means: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    let decreasing = means.windows(2).all(|w| w[1] <= w[0]);
    Ok(Outputs {
        files,
        summary: json!({
            "dirty_fraction_means": means,
            "decreasing": decreasing,
            "trials": trials,
            "hoeffding": hoeffding_summary,
        }),
        realized_scales: scales_echo(&scales),
    })
}

fn run_entropy(cfg: &RawConfig) -> Result<Outputs> {
    let rho = cfg.f64("run.rho")?;
    let delta = cfg.f64("run.delta")?;
    let n_spins = cfg.usize("run.n_spins")?;
    let samples = cfg.usize("run.samples")?;
    let seed = cfg.u64_or("run.seed", 0)?;
    let est = finite_volume_entropy(rho, delta, n_spins, samples, seed)?;
    let within = (est.estimate - est.reference_s).abs() <= est.bound + 3.0 * est.stderr;
    let summary = json!({
        "estimate": est.estimate,
        "stderr": est.stderr,
        "reference_s": est.reference_s,
        "bound": est.bound,
        "within_bound": within,
        "accepted": est.accepted,
    });
    Ok(Outputs {
        files: vec![("result.csv".into(), entropy_csv(&[est]))],
        summary,
        realized_scales: Value::Null,
    })
}

fn run_energy_approx(cfg: &RawConfig) -> Result<Outputs> {
    let beta = cfg.f64("physical.beta")?;
    let eps = cfg.f64("physical.eps")?;
    let n = cfg.usize("geometry.n")?;
    let ls = cfg.list_f64("geometry.ls")?;
    let ell_smalls = cfg.list_usize("geometry.ell_smalls")?;
    let ell_big = cfg.usize("geometry.ell_big")?;
    let kappa = cfg.f64_or("geometry.kappa", 0.2)?;
    let lambda = cfg.f64_or("geometry.lambda", 0.25)?;
    let seed = cfg.u64_or("run.seed", 0)?;
    if ls.len() != ell_smalls.len() {
        return Err(Error::Config(
            "geometry.ls and geometry.ell_smalls must have equal length".into(),
        ));
    }
    let params = MFParams::new(beta, eps);
    let field = sample_disorder(n, 0.5, seed);
    let max_half = ls
        .iter()
        .map(|&l| KacKernel::new(l, 1.0).map(|k| k.half_width()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .max()
        .unwrap_or(0);
    let lat = SpinLattice::random(
        n,
        max_half,
        BoundaryCondition::Horizontal(Vec2::new(0.6, 0.0)),
        seed,
    )?;
    let mut csv = String::from("l,ell_small,per_site_error\n");
    let mut errors = Vec::new();
    let mut all_scales = Vec::new();
    for (&l, &e) in ls.iter().zip(&ell_smalls) {
        let kernel = KacKernel::new(l, 1.0)?;
        let p_dirty = l.powf(-2.0 * (1.0 - lambda) / 3.0);
        let scales = Scales::explicit(e, ell_big, n, kappa, p_dirty, l, lambda)?;
        let rep = energy_approximation_check(&lat, &field, &scales, &kernel, &params)?;
        let _ = writeln!(csv, "{l},{e},{}", rep.per_site_error);
        errors.push(rep.per_site_error);
        all_scales.push(scales);
    }
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    Ok(Outputs {
        files: vec![("result.csv".into(), csv)],
        summary: json!({ "per_site_errors": errors, "decreasing": decreasing }),
        realized_scales: scales_echo(&all_scales),
    })
}

/// Aggregate a completed run directory into a machine-readable summary.
pub fn report(dir: &Path) -> Result<Value> {
    let manifest_path = dir.join("manifest.json");
    let summary_path = dir.join("summary.json");
    let mut missing = Vec::new();
    if !manifest_path.exists() {
        missing.push("manifest.json");
    }
    if !summary_path.exists() {
        missing.push("summary.json");
    }
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "run directory {} is missing artifacts: {}",
            dir.display(),
            missing.join(", ")
        )));
    }
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(&manifest_path)?)
        .map_err(|e| Error::Config(format!("manifest.json: {e}")))?;
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(&summary_path)?)
        .map_err(|e| Error::Config(format!("summary.json: {e}")))?;
    // confirm that every listed artifact is present
    if let Some(files) = manifest.get("files").and_then(|f| f.as_array()) {
        let absent: Vec<String> = files
            .iter()
            .filter_map(|f| f.as_str())
            .filter(|f| !dir.join(f).exists())
            .map(String::from)
            .collect();
        if !absent.is_empty() {
            return Err(Error::Config(format!(
                "artifacts listed in manifest are missing: {}",
                absent.join(", ")
            )));
        }
    }
    Ok(json!({
        "kind": manifest.get("kind").cloned().unwrap_or(Value::Null),
        "realized_scales": manifest.get("realized_scales").cloned().unwrap_or(Value::Null),
        "summary": summary,
    }))
}

/// Exit code contract: 0 success, 2 configuration error, 3 numerical
/// non-convergence or statistical failure.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Geometry(_)
        | Error::MissingCollar { .. }
        | Error::KernelTooCoarse { .. }
        | Error::BadTimeStep(_)
        | Error::Io(_) => 2,
        _ => 3,
    }
}
