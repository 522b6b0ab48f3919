//! Execute a resolved job: generate the instance, run the selected methods,
//! and write trace CSVs, the manifest, and the optional plot — or, in
//! distribution mode, the acceleration-factor CSV across replicates.
//!
//! Everything written (except the opt-in wall-clock column) is a pure
//! function of the job, so reruns are byte-identical.

use crate::config::Job;
use crate::output::{self, Series, TraceWriter};
use anyhow::{Context, Result};
use qrelax::diagnostics::{self, EigenOpts, RateValue};
use qrelax::generators::{self, BatchRateRow, ExampleConfig};
use qrelax::pick::TieBreakMode;
use qrelax::quadratic::QuadProblem;
use qrelax::solvers::{run_with, SolverOptions, StopRule};
use serde::Serialize;
use std::fs;
use std::path::PathBuf;

pub struct Outcome {
    pub manifest_path: PathBuf,
    pub outputs: Vec<PathBuf>,
}

pub fn execute(job: &Job) -> Result<Outcome> {
    init_threads(job.threads);
    fs::create_dir_all(&job.out)
        .with_context(|| format!("creating output directory {}", job.out.display()))?;
    if job.replicates > 1 {
        run_distribution(job)
    } else {
        run_traces(job)
    }
}

#[cfg(feature = "parallel")]
fn init_threads(threads: usize) {
    if threads > 0 {
        // A second configuration attempt in the same process is harmless:
        // results do not depend on the pool size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
}

#[cfg(not(feature = "parallel"))]
fn init_threads(_threads: usize) {}

fn generate_instance(cfg: &ExampleConfig) -> qrelax::Result<QuadProblem> {
    #[cfg(feature = "parallel")]
    {
        generators::generate_par(cfg)
    }
    #[cfg(not(feature = "parallel"))]
    {
        generators::generate(cfg)
    }
}

fn batch_rates(cfg: &ExampleConfig, count: u64) -> qrelax::Result<Vec<BatchRateRow>> {
    #[cfg(feature = "parallel")]
    {
        generators::batch_a_infinity_par(cfg, count)
    }
    #[cfg(not(feature = "parallel"))]
    {
        generators::batch_a_infinity(cfg, count)
    }
}

#[derive(Serialize)]
struct Manifest {
    example: String,
    mode: &'static str,
    n: usize,
    seed: u64,
    replicates: u64,
    budget_calls: Option<u64>,
    tol: Option<f64>,
    methods: Vec<&'static str>,
    config: ConfigEcho,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate_constants: Option<RateJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate_note: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    runs: Vec<RunJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    distribution: Option<DistJson>,
    outputs: Vec<String>,
}

#[derive(Serialize)]
struct ConfigEcho {
    family: String,
    n: usize,
    m: usize,
    seed: u64,
    x_range: (f64, f64),
    alpha_range: (f64, f64),
    c_range: (f64, f64),
    sparsity: f64,
    gamma: f64,
    beta: f64,
    delta: f64,
    zeta: f64,
    matrix: Option<String>,
    memory_budget: u64,
    cg_tol: f64,
    cg_max_iters: usize,
    tie_break: String,
    refresh_every: Option<u64>,
    threads: usize,
    wall_clock: bool,
}

impl ConfigEcho {
    fn new(job: &Job) -> Self {
        let cfg = &job.cfg;
        ConfigEcho {
            family: cfg.family.tag().to_string(),
            n: cfg.n,
            m: cfg.m,
            seed: cfg.seed,
            x_range: cfg.x_range,
            alpha_range: cfg.alpha_range,
            c_range: cfg.c_range,
            sparsity: cfg.sparsity,
            gamma: cfg.gamma,
            beta: cfg.beta,
            delta: cfg.delta,
            zeta: cfg.zeta,
            matrix: cfg.matrix_path.as_ref().map(|p| p.display().to_string()),
            memory_budget: cfg.memory_budget,
            cg_tol: cfg.cg_rel_tol,
            cg_max_iters: cfg.cg_max_iters,
            tie_break: match job.tie_break {
                TieBreakMode::LowestIndex => "lowest".to_string(),
                TieBreakMode::SeededRandom(s) => format!("seeded({s})"),
            },
            refresh_every: job.refresh_every,
            threads: job.threads,
            wall_clock: job.wall_clock,
        }
    }
}

#[derive(Serialize)]
struct RateJson {
    #[serde(skip_serializing_if = "Option::is_none")]
    iota: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iota_tilde: Option<f64>,
    a_inf: serde_json::Value,
    a_inf_up: serde_json::Value,
}

fn rate_json(v: RateValue) -> serde_json::Value {
    match v {
        RateValue::Finite(x) => serde_json::json!(x),
        RateValue::Infinite => serde_json::json!("inf"),
    }
}

#[derive(Serialize)]
struct RunJson {
    method: &'static str,
    termination: &'static str,
    steps: u64,
    column_calls: u64,
    final_d: f64,
    final_r: f64,
    final_s: f64,
    csv: String,
}

#[derive(Serialize)]
struct DistJson {
    count: u64,
    unbounded_a_inf: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_a_inf: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    median_a_inf: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_a_inf: Option<f64>,
}

fn run_traces(job: &Job) -> Result<Outcome> {
    let cfg = &job.cfg;
    let problem = generate_instance(cfg).context("generating the instance")?;
    let n = problem.n();
    let budget = job.budget_calls.unwrap_or(2000 * n as u64);
    let stop = StopRule {
        max_column_calls: Some(budget),
        objective_tolerance: job.tol.map(|t| t * problem.const_term()),
        target: None,
    };
    let opts = SolverOptions { tie_break: job.tie_break, refresh_every: job.refresh_every };

    let mut outputs = Vec::new();
    let mut runs = Vec::new();
    let mut series = Vec::new();
    for &method in &job.methods {
        let name = format!("{}_{}.csv", cfg.family.tag(), method.tag());
        let path = job.out.join(&name);
        let file = fs::File::create(&path)
            .with_context(|| format!("creating trace file {}", path.display()))?;
        let mut writer = TraceWriter::new(std::io::BufWriter::new(file), budget, job.wall_clock)?;
        let mut io_err: Option<std::io::Error> = None;
        let summary = run_with(&problem, method, &stop, &opts, &mut |rec| {
            if io_err.is_none() {
                if let Err(e) = writer.push(rec) {
                    io_err = Some(e);
                }
            }
        })
        .with_context(|| format!("running {method}"))?;
        if let Some(e) = io_err {
            return Err(e).with_context(|| format!("writing trace file {}", path.display()));
        }
        let kept = writer.finish()?;
        // R methods estimate the solution at the rescaled iterate, where the
        // quadratic objective equals R; plot each method's own yardstick.
        let points: Vec<(f64, f64)> = kept
            .iter()
            .map(|&(calls, d, r)| (calls, if method.is_relaxed() { r } else { d }))
            .collect();
        series.push(Series { label: method.tag(), points });
        let last = summary.final_record;
        runs.push(RunJson {
            method: method.tag(),
            termination: summary.termination.tag(),
            steps: summary.steps,
            column_calls: summary.column_calls,
            final_d: last.d,
            final_r: last.r,
            final_s: last.s,
            csv: name.clone(),
        });
        outputs.push(path);
    }

    let opts_eig = EigenOpts::default();
    let (a_inf, a_inf_up) = diagnostics::a_infinity(&problem);
    let mut rate_note = None;
    let iota = match diagnostics::iota(&problem, &opts_eig) {
        Ok(v) => Some(v),
        Err(e) => {
            rate_note = Some(format!("iota unavailable: {e}"));
            None
        }
    };
    let iota_tilde = match diagnostics::iota_tilde(&problem, &opts_eig) {
        Ok(v) => Some(v),
        Err(e) => {
            rate_note = Some(match rate_note {
                Some(prev) => format!("{prev}; iota_tilde unavailable: {e}"),
                None => format!("iota_tilde unavailable: {e}"),
            });
            None
        }
    };

    if job.plot {
        let path = job.out.join(format!("{}.svg", cfg.family.tag()));
        let title = format!("{} seed {} (objective vs column calls)", cfg.family.tag(), cfg.seed);
        fs::write(&path, output::render_svg(&title, &series))?;
        outputs.push(path);
    }

    let manifest = Manifest {
        example: cfg.family.tag().to_string(),
        mode: "trace",
        n,
        seed: cfg.seed,
        replicates: 1,
        budget_calls: Some(budget),
        tol: job.tol,
        methods: job.methods.iter().map(|m| m.tag()).collect(),
        config: ConfigEcho::new(job),
        rate_constants: Some(RateJson {
            iota,
            iota_tilde,
            a_inf: rate_json(a_inf),
            a_inf_up: rate_json(a_inf_up),
        }),
        rate_note,
        runs,
        distribution: None,
        outputs: outputs.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect(),
    };
    write_manifest(job, manifest, outputs)
}

fn run_distribution(job: &Job) -> Result<Outcome> {
    let cfg = &job.cfg;
    let rows = batch_rates(cfg, job.replicates).context("sampling replicates")?;
    let name = format!("{}_dist.csv", cfg.family.tag());
    let path = job.out.join(&name);
    let file =
        fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    output::write_distribution(std::io::BufWriter::new(file), &rows)?;

    let mut finite: Vec<f64> = rows.iter().filter_map(|r| r.a_inf.finite()).collect();
    finite.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if finite.is_empty() {
        None
    } else if finite.len() % 2 == 1 {
        Some(finite[finite.len() / 2])
    } else {
        Some((finite[finite.len() / 2 - 1] + finite[finite.len() / 2]) / 2.0)
    };
    let manifest = Manifest {
        example: cfg.family.tag().to_string(),
        mode: "distribution",
        n: cfg.n,
        seed: cfg.seed,
        replicates: job.replicates,
        budget_calls: None,
        tol: None,
        methods: Vec::new(),
        config: ConfigEcho::new(job),
        rate_constants: None,
        rate_note: None,
        runs: Vec::new(),
        distribution: Some(DistJson {
            count: rows.len() as u64,
            unbounded_a_inf: rows.iter().filter(|r| r.a_inf == RateValue::Infinite).count() as u64,
            min_a_inf: finite.first().copied(),
            median_a_inf: median,
            max_a_inf: finite.last().copied(),
        }),
        outputs: vec![name],
    };
    write_manifest(job, manifest, vec![path])
}

fn write_manifest(job: &Job, manifest: Manifest, mut outputs: Vec<PathBuf>) -> Result<Outcome> {
    let path = job.out.join("meta.json");
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text)?;
    outputs.push(path.clone());
    Ok(Outcome { manifest_path: path, outputs })
}
