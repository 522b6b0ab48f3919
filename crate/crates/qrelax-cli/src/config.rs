//! Flag and config-file handling. Precedence: family defaults, then the
//! `key = value` config file, then command-line flags.

use anyhow::{anyhow, bail, Context, Result};
use clap::Parser;
use qrelax::generators::{ExampleConfig, Family};
use qrelax::pick::TieBreakMode;
use qrelax::solvers::Method;
use std::path::PathBuf;

#[derive(Parser, Debug, Default)]
#[command(name = "qrelax", version, about = "Coordinate-descent benchmark driver")]
pub struct Cli {
    /// Experiment family: ex1..ex6 (may also come from the config file).
    #[arg(long)]
    pub example: Option<String>,
    /// `key = value` settings file; flags given here override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated method tags (cd-d, sr-d, h-r, bi-r, cg-d).
    #[arg(long)]
    pub methods: Option<String>,
    /// Column-call budget per method. Default: 2000 * N.
    #[arg(long = "budget-calls")]
    pub budget_calls: Option<u64>,
    /// Stop when the objective falls below this fraction of its start value.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Base seed; replicate j uses seed + j.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write an SVG objective plot.
    #[arg(long)]
    pub plot: bool,
    /// Replicate count; more than 1 switches to distribution mode.
    #[arg(long)]
    pub replicates: Option<u64>,
    /// Matrix Market file for the network family (ex6).
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Worker threads for generation (0 = library default).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Append a wall_ns column to trace CSVs. Timing varies run to run, so
    /// this breaks byte-identical reruns by design.
    #[arg(long = "wall-clock")]
    pub wall_clock: bool,
}

/// Everything the driver needs, fully resolved.
#[derive(Debug, Clone)]
pub struct Job {
    pub cfg: ExampleConfig,
    pub methods: Vec<Method>,
    /// None means 2000 * N, decided once the instance size is known.
    pub budget_calls: Option<u64>,
    /// Relative to the starting objective.
    pub tol: Option<f64>,
    pub out: PathBuf,
    pub plot: bool,
    pub replicates: u64,
    pub threads: usize,
    pub wall_clock: bool,
    pub tie_break: TieBreakMode,
    pub refresh_every: Option<u64>,
}

pub fn resolve(cli: Cli) -> Result<Job> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config file {}", path.display()))?;
            parse_file(&text)?
        }
        None => Vec::new(),
    };
    let file_get = |key: &str| file.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str());

    let family_tag = cli
        .example
        .as_deref()
        .or_else(|| file_get("example"))
        .ok_or_else(|| anyhow!("no experiment family: pass --example or set `example` in the config file"))?;
    let family = Family::parse(family_tag)
        .ok_or_else(|| anyhow!("unknown example '{family_tag}' (expected ex1..ex6)"))?;

    let mut cfg = ExampleConfig::defaults(family);
    let mut job = Job {
        cfg: cfg.clone(),
        methods: Method::ALL.to_vec(),
        budget_calls: None,
        tol: None,
        out: PathBuf::from("out"),
        plot: false,
        replicates: 1,
        threads: 0,
        wall_clock: false,
        tie_break: TieBreakMode::LowestIndex,
        refresh_every: Some(1000),
    };

    for (key, value) in &file {
        apply_file_entry(&mut cfg, &mut job, key, value)
            .with_context(|| format!("config entry `{key} = {value}`"))?;
    }

    // Flags override the file.
    if let Some(m) = &cli.methods {
        job.methods = parse_methods(m)?;
    }
    if let Some(b) = cli.budget_calls {
        job.budget_calls = Some(b);
    }
    if let Some(t) = cli.tol {
        job.tol = Some(t);
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        job.out = o.clone();
    }
    if cli.plot {
        job.plot = true;
    }
    if let Some(r) = cli.replicates {
        job.replicates = r;
    }
    if let Some(m) = &cli.matrix {
        cfg.matrix_path = Some(m.clone());
    }
    if let Some(t) = cli.threads {
        job.threads = t;
    }
    if cli.wall_clock {
        job.wall_clock = true;
    }

    if job.replicates == 0 {
        bail!("replicates must be at least 1");
    }
    if let Some(t) = job.tol {
        if !(t > 0.0 && t.is_finite()) {
            bail!("tol must be a positive finite fraction, got {t}");
        }
    }
    if job.methods.is_empty() {
        bail!("no methods selected");
    }
    job.cfg = cfg;
    Ok(job)
}

/// `key = value` lines; `#` starts a comment; blank lines ignored.
fn parse_file(text: &str) -> Result<Vec<(String, String)>> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`, got `{raw}`", idx + 1))?;
        entries.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(entries)
}

fn apply_file_entry(cfg: &mut ExampleConfig, job: &mut Job, key: &str, value: &str) -> Result<()> {
    match key {
        "example" => {} // consumed during family selection
        "methods" => job.methods = parse_methods(value)?,
        "budget_calls" => job.budget_calls = Some(value.parse()?),
        "tol" => job.tol = Some(value.parse()?),
        "seed" => cfg.seed = value.parse()?,
        "out" => job.out = PathBuf::from(value),
        "plot" => job.plot = parse_bool(value)?,
        "replicates" => job.replicates = value.parse()?,
        "matrix" => cfg.matrix_path = Some(PathBuf::from(value)),
        "threads" => job.threads = value.parse()?,
        "wall_clock" => job.wall_clock = parse_bool(value)?,
        "n" => cfg.n = value.parse()?,
        "m" => cfg.m = value.parse()?,
        "sparsity" => cfg.sparsity = value.parse()?,
        "gamma" => cfg.gamma = value.parse()?,
        "beta" => cfg.beta = value.parse()?,
        "delta" => cfg.delta = value.parse()?,
        "zeta" => cfg.zeta = value.parse()?,
        "x_lo" => cfg.x_range.0 = value.parse()?,
        "x_hi" => cfg.x_range.1 = value.parse()?,
        "alpha_lo" => cfg.alpha_range.0 = value.parse()?,
        "alpha_hi" => cfg.alpha_range.1 = value.parse()?,
        "c_lo" => cfg.c_range.0 = value.parse()?,
        "c_hi" => cfg.c_range.1 = value.parse()?,
        "memory_budget" => cfg.memory_budget = value.parse()?,
        "cg_tol" => cfg.cg_rel_tol = value.parse()?,
        "cg_max_iters" => cfg.cg_max_iters = value.parse()?,
        "tie_break" => {
            job.tie_break = match value {
                "lowest" => TieBreakMode::LowestIndex,
                "seeded" => TieBreakMode::SeededRandom(cfg.seed),
                other => bail!("tie_break must be `lowest` or `seeded`, got `{other}`"),
            }
        }
        "refresh_every" => {
            let v: u64 = value.parse()?;
            job.refresh_every = if v == 0 { None } else { Some(v) };
        }
        other => bail!("unknown config key `{other}`"),
    }
    Ok(())
}

fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let mut methods = Vec::new();
    for tag in list.split(',') {
        let tag = tag.trim();
        if tag.is_empty() {
            continue;
        }
        let m = Method::parse(tag).ok_or_else(|| anyhow!("unknown method tag `{tag}`"))?;
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    Ok(methods)
}

fn parse_bool(value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => bail!("expected a boolean, got `{other}`"),
    }
}
