//! `lsras` command-line workflows.
//!
//! Each run resolves its flags into a [`RunConfig`] that is embedded in the
//! JSON output (or written next to the CSV for `sweep`), so `lsras replay`
//! on any emitted file reproduces it byte for byte.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::harness::{log_grid, sweep, verify_guarantee_capped, HarnessError, SweepGrid};
use crate::model::{
    evidence_prob_lower, evidence_prob_upper, exact_query_capped, parse_network_with, Evidence,
    ModelError, Network, ParseOptions, DEFAULT_STATE_CAP,
};
use crate::planner::{g_upper, BoundsReport, ConvergencePlan, PlanError};
use crate::sampler::{
    default_batch, AdaptiveConfig, LogicSampler, SamplerError, SamplingMode, SeedSpec,
};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Exit {
    Ok = 0,
    Input = 1,
    Infeasible = 2,
    NoSuccesses = 3,
    OracleCap = 4,
}

const SAMPLE_NOTE: &str = "the a-priori guarantee holds before sampling; after the planned trials \
K may still be at most N, so check successes_exceed_required";

#[derive(Debug, Parser)]
#[command(
    name = "lsras",
    version,
    about = "Logic sampling with a-priori trial-count bounds"
)]
pub struct Cli {
    /// Worker threads for sampling and sweeps. Never changes results.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Trial-count bounds for an (alpha, delta, sigma) request.
    Bounds {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run logic sampling, by default for the planned number of trials.
    Sample {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fixed trial count instead of the planned g_upper.
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long, value_enum, default_value_t = SamplingMode::Fixed)]
        mode: SamplingMode,
        /// Trials per batch in adaptive modes (default max(64, N/100)).
        #[arg(long)]
        batch: Option<u64>,
        /// Stop adaptive runs after this many trials.
        #[arg(long)]
        max_trials: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact P(findings) and posteriors by joint enumeration.
    Exact {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
        state_cap: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trial-count bounds over a (sigma, N, p) grid, as CSV.
    Sweep {
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.9, 0.99])]
        sigmas: Vec<f64>,
        #[arg(long = "n-values", value_delimiter = ',', default_values_t = [500u64, 2000, 50000])]
        n_values: Vec<u64>,
        #[arg(long, default_value_t = 1e-4)]
        p_min: f64,
        #[arg(long, default_value_t = 1.0)]
        p_max: f64,
        #[arg(long, default_value_t = 25)]
        p_points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Empirical coverage of the guarantee against the exact oracle.
    Verify {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        replications: u64,
        #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
        state_cap: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run the configuration embedded in an earlier output.
    Replay { file: PathBuf },
}

#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long)]
    pub evidence: Option<PathBuf>,
    /// Rescale CPT rows to sum to 1 instead of rejecting them.
    #[arg(long)]
    pub renormalize: bool,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub delta: f64,
    #[arg(long)]
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Bounds,
    Sample,
    Exact,
    Sweep,
    Verify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub sigmas: Vec<f64>,
    #[serde(rename = "N")]
    pub n_values: Vec<u64>,
    pub p_min: f64,
    pub p_max: f64,
    pub p_points: usize,
}

/// Fully resolved run parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub network: Option<PathBuf>,
    pub evidence: Option<PathBuf>,
    pub renormalize: bool,
    pub alpha: Option<f64>,
    pub delta: Option<f64>,
    pub sigma: Option<f64>,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub mode: Option<SamplingMode>,
    pub batch: Option<u64>,
    pub max_trials: Option<u64>,
    pub replications: Option<u64>,
    pub state_cap: Option<u64>,
    pub sweep: Option<SweepSpec>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    fn empty(command: CommandKind) -> Self {
        RunConfig {
            command,
            network: None,
            evidence: None,
            renormalize: false,
            alpha: None,
            delta: None,
            sigma: None,
            seed: None,
            trials: None,
            mode: None,
            batch: None,
            max_trials: None,
            replications: None,
            state_cap: None,
            sweep: None,
            out: None,
        }
    }

    fn with_input(mut self, input: InputArgs) -> Self {
        self.network = Some(input.network);
        self.evidence = input.evidence;
        self.renormalize = input.renormalize;
        self
    }

    fn with_plan(mut self, plan: PlanArgs) -> Self {
        self.alpha = Some(plan.alpha);
        self.delta = Some(plan.delta);
        self.sigma = Some(plan.sigma);
        self
    }

    /// Builds a config from a parsed command; `None` for `replay`.
    pub fn from_command(cmd: Command) -> Option<Self> {
        use CommandKind as K;
        Some(match cmd {
            Command::Bounds { input, plan, out } => RunConfig {
                out,
                ..RunConfig::empty(K::Bounds)
                    .with_input(input)
                    .with_plan(plan)
            },
            Command::Sample {
                input,
                plan,
                seed,
                trials,
                mode,
                batch,
                max_trials,
                out,
            } => RunConfig {
                seed: Some(seed),
                trials,
                mode: Some(mode),
                batch,
                max_trials,
                out,
                ..RunConfig::empty(K::Sample)
                    .with_input(input)
                    .with_plan(plan)
            },
            Command::Exact {
                input,
                state_cap,
                out,
            } => RunConfig {
                state_cap: Some(state_cap),
                out,
                ..RunConfig::empty(K::Exact).with_input(input)
            },
            Command::Sweep {
                sigmas,
                n_values,
                p_min,
                p_max,
                p_points,
                out,
            } => RunConfig {
                sweep: Some(SweepSpec {
                    sigmas,
                    n_values,
                    p_min,
                    p_max,
                    p_points,
                }),
                out,
                ..RunConfig::empty(K::Sweep)
            },
            Command::Verify {
                input,
                plan,
                seed,
                replications,
                state_cap,
                out,
            } => RunConfig {
                seed: Some(seed),
                replications: Some(replications),
                state_cap: Some(state_cap),
                out,
                ..RunConfig::empty(K::Verify)
                    .with_input(input)
                    .with_plan(plan)
            },
            Command::Replay { .. } => return None,
        })
    }
}

/// Result of executing a [`RunConfig`]: the primary output, an optional
/// config sidecar (for CSV output), diagnostics, and the exit code.
#[derive(Debug)]
pub struct Outcome {
    pub exit: Exit,
    pub output: Option<Vec<u8>>,
    pub sidecar: Option<Vec<u8>>,
    pub messages: Vec<String>,
}

impl Outcome {
    fn fail(exit: Exit, msg: impl Into<String>) -> Self {
        Outcome {
            exit,
            output: None,
            sidecar: None,
            messages: vec![msg.into()],
        }
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    config: &'a RunConfig,
    result: T,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<&'static str>,
}

fn json<T: Serialize>(cfg: &RunConfig, result: T, note: Option<&'static str>) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(&Envelope {
        config: cfg,
        result,
        note,
    })
    .expect("report serialization cannot fail");
    s.push('\n');
    s.into_bytes()
}

fn load(cfg: &RunConfig) -> Result<(Network, Evidence), Outcome> {
    let path = cfg
        .network
        .as_ref()
        .ok_or_else(|| Outcome::fail(Exit::Input, "a --network file is required"))?;
    let read = |p: &Path| {
        fs::read_to_string(p)
            .map_err(|e| Outcome::fail(Exit::Input, format!("{}: {e}", p.display())))
    };
    let in_file =
        |p: &Path, e: ModelError| Outcome::fail(Exit::Input, format!("{}: {e}", p.display()));
    let opts = ParseOptions {
        renormalize: cfg.renormalize,
    };
    let net = parse_network_with(&read(path)?, opts).map_err(|e| in_file(path, e))?;
    let ev = match &cfg.evidence {
        Some(p) => Evidence::parse(&read(p)?, &net).map_err(|e| in_file(p, e))?,
        None => Evidence::empty(),
    };
    Ok((net, ev))
}

fn plan_of(cfg: &RunConfig) -> Result<ConvergencePlan, Outcome> {
    let (Some(a), Some(d), Some(s)) = (cfg.alpha, cfg.delta, cfg.sigma) else {
        return Err(Outcome::fail(
            Exit::Input,
            "--alpha, --delta and --sigma are all required",
        ));
    };
    ConvergencePlan::new(a, d, s).map_err(|e| Outcome::fail(Exit::Input, e.to_string()))
}

fn plan_failure(e: PlanError) -> Outcome {
    match e {
        PlanError::ZeroProbability
        | PlanError::SigmaAboveCap { .. }
        | PlanError::BracketExhausted { .. } => {
            Outcome::fail(Exit::Infeasible, format!("cannot certify: {e}"))
        }
        e => Outcome::fail(Exit::Input, e.to_string()),
    }
}

pub fn execute(cfg: &RunConfig) -> Outcome {
    let run = match cfg.command {
        CommandKind::Bounds => cmd_bounds(cfg),
        CommandKind::Sample => cmd_sample(cfg),
        CommandKind::Exact => cmd_exact(cfg),
        CommandKind::Sweep => cmd_sweep(cfg),
        CommandKind::Verify => cmd_verify(cfg),
    };
    run.unwrap_or_else(|o| o)
}

pub fn cmd_bounds(cfg: &RunConfig) -> Result<Outcome, Outcome> {
    let (net, ev) = load(cfg)?;
    let plan = plan_of(cfg)?;
    let p_lower = evidence_prob_lower(&net, &ev);
    let p_upper = evidence_prob_upper(&net, &ev);
    let report = BoundsReport::compute(&plan, p_lower, p_upper).map_err(plan_failure)?;
    let mut messages = Vec::new();
    let exit = if report.feasible {
        Exit::Ok
    } else {
        let reason = report
            .infeasible_reason
            .as_deref()
            .unwrap_or("sigma is infeasible");
        messages.push(format!("cannot certify: {reason}"));
        Exit::Infeasible
    };
    Ok(Outcome {
        exit,
        output: Some(json(cfg, &report, None)),
        sidecar: None,
        messages,
    })
}

pub fn cmd_sample(cfg: &RunConfig) -> Result<Outcome, Outcome> {
    let (net, ev) = load(cfg)?;
    let plan = plan_of(cfg)?;
    let seed = SeedSpec::new(cfg.seed.unwrap_or(0));
    let mode = cfg.mode.unwrap_or(SamplingMode::Fixed);
    let sampler = LogicSampler::new(&net, &ev, seed);
    let p_lower = evidence_prob_lower(&net, &ev);
    let mut resolved = cfg.clone();

    let result = match mode {
        SamplingMode::Fixed => {
            let planned = if p_lower > 0.0 {
                g_upper(plan.sigma, p_lower, plan.n_required)
            } else {
                Err(PlanError::ZeroProbability)
            };
            let trials = match (cfg.trials, &planned) {
                (Some(t), _) => t,
                (None, Ok(g)) => *g,
                (None, Err(e)) => return Err(plan_failure(e.clone())),
            };
            resolved.trials = Some(trials);
            let r = sampler.run(trials);
            match planned {
                Ok(g) => r.with_plan(g, plan.n_required),
                Err(_) => SampleNoPlan::mark(r, plan.n_required),
            }
        }
        SamplingMode::Conservative | SamplingMode::Empirical => {
            let batch = cfg.batch.unwrap_or_else(|| default_batch(plan.n_required));
            resolved.batch = Some(batch);
            let adaptive = AdaptiveConfig {
                mode,
                batch: Some(batch),
                max_trials: cfg.max_trials,
            };
            sampler.run_adaptive(&plan, adaptive).map_err(|e| match e {
                SamplerError::Plan(p) => plan_failure(p),
                e => Outcome::fail(Exit::Input, e.to_string()),
            })?
        }
    };

    let mut messages = Vec::new();
    let exit = if result.k_success == 0 {
        messages.push("no successful trials: estimates are undefined".to_string());
        Exit::NoSuccesses
    } else {
        Exit::Ok
    };
    Ok(Outcome {
        exit,
        output: Some(json(&resolved, result.report(&net), Some(SAMPLE_NOTE))),
        sidecar: None,
        messages,
    })
}

struct SampleNoPlan;

impl SampleNoPlan {
    fn mark(
        mut r: crate::sampler::SamplingResult,
        n_required: u64,
    ) -> crate::sampler::SamplingResult {
        r.successes_required = Some(n_required);
        r.warnings
            .push("no a-priori trial count could be certified for this request".to_string());
        r
    }
}

pub fn cmd_exact(cfg: &RunConfig) -> Result<Outcome, Outcome> {
    let (net, ev) = load(cfg)?;
    let cap = cfg.state_cap.unwrap_or(DEFAULT_STATE_CAP);
    let exact = exact_query_capped(&net, &ev, cap).map_err(|e| match e {
        e @ ModelError::StateCapExceeded { .. } => Outcome::fail(Exit::OracleCap, e.to_string()),
        e => Outcome::fail(Exit::Input, e.to_string()),
    })?;
    let mut resolved = cfg.clone();
    resolved.state_cap = Some(cap);
    Ok(Outcome {
        exit: Exit::Ok,
        output: Some(json(&resolved, exact.report(&net), None)),
        sidecar: None,
        messages: Vec::new(),
    })
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<Outcome, Outcome> {
    let spec = cfg.sweep.clone().unwrap_or_else(|| {
        let d = SweepGrid::default();
        SweepSpec {
            sigmas: d.sigma,
            n_values: d.n_values,
            p_min: 1e-4,
            p_max: 1.0,
            p_points: 25,
        }
    });
    let bad = |m: &str| Err(Outcome::fail(Exit::Input, m.to_string()));
    if !(spec.p_min > 0.0 && spec.p_min <= spec.p_max && spec.p_max <= 1.0) {
        return bad("sweep needs 0 < p_min <= p_max <= 1");
    }
    if spec.sigmas.iter().any(|s| !(*s > 0.0 && *s < 1.0)) {
        return bad("sweep sigmas must lie in (0, 1)");
    }
    if spec.n_values.contains(&0) {
        return bad("sweep N values must be positive");
    }
    let grid = SweepGrid {
        p: log_grid(spec.p_min, spec.p_max, spec.p_points),
        n_values: spec.n_values.clone(),
        sigma: spec.sigmas.clone(),
    };
    let table = sweep(&grid).map_err(|e| Outcome::fail(Exit::Input, e.to_string()))?;
    let mut resolved = cfg.clone();
    resolved.sweep = Some(spec);
    let mut sidecar = serde_json::to_string_pretty(&resolved).expect("config serializes");
    sidecar.push('\n');
    Ok(Outcome {
        exit: Exit::Ok,
        output: Some(table.to_csv_string().into_bytes()),
        sidecar: Some(sidecar.into_bytes()),
        messages: Vec::new(),
    })
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<Outcome, Outcome> {
    let (net, ev) = load(cfg)?;
    let plan = plan_of(cfg)?;
    let seed = SeedSpec::new(cfg.seed.unwrap_or(0));
    let reps = cfg.replications.unwrap_or(200);
    let cap = cfg.state_cap.unwrap_or(DEFAULT_STATE_CAP);
    let report =
        verify_guarantee_capped(&net, &ev, &plan, reps, seed, cap).map_err(|e| match e {
            HarnessError::Model(e @ ModelError::StateCapExceeded { .. }) => {
                Outcome::fail(Exit::OracleCap, e.to_string())
            }
            HarnessError::Plan(p) => plan_failure(p),
            e @ HarnessError::ZeroEvidence => {
                Outcome::fail(Exit::Infeasible, format!("cannot certify: {e}"))
            }
            e => Outcome::fail(Exit::Input, e.to_string()),
        })?;
    let mut resolved = cfg.clone();
    resolved.seed = Some(seed.seed);
    resolved.replications = Some(reps);
    resolved.state_cap = Some(cap);
    let messages = if report.pass {
        Vec::new()
    } else {
        vec!["coverage below the 3-sigma threshold".to_string()]
    };
    Ok(Outcome {
        exit: Exit::Ok,
        output: Some(json(&resolved, &report, None)),
        sidecar: None,
        messages,
    })
}

/// Reads the config embedded in an earlier JSON output, or a bare config
/// such as a sweep sidecar.
pub fn config_from_output(text: &str) -> Result<RunConfig, String> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let cfg = value.get("config").cloned().unwrap_or(value);
    serde_json::from_value(cfg).map_err(|e| e.to_string())
}

/// Writes via a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".config.json");
    PathBuf::from(s)
}

fn emit(cfg: &RunConfig, outcome: &Outcome) -> io::Result<()> {
    if let Some(bytes) = &outcome.output {
        match &cfg.out {
            Some(path) => {
                write_atomic(path, bytes)?;
                if let Some(side) = &outcome.sidecar {
                    write_atomic(&sidecar_path(path), side)?;
                }
            }
            None => {
                io::stdout().write_all(bytes)?;
                if let Some(side) = &outcome.sidecar {
                    io::stderr().write_all(side)?;
                }
            }
        }
    }
    for m in &outcome.messages {
        eprintln!("lsras: {m}");
    }
    Ok(())
}

/// Parses arguments, runs, writes output, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                Exit::Input as i32
            } else {
                0
            };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match cli.command {
        Command::Replay { file } => {
            let parsed = fs::read_to_string(&file)
                .map_err(|e| e.to_string())
                .and_then(|t| config_from_output(&t));
            match parsed {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("lsras: {}: {e}", file.display());
                    return Exit::Input as i32;
                }
            }
        }
        cmd => RunConfig::from_command(cmd).expect("non-replay command"),
    };

    let outcome = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(&cfg)),
            Err(e) => Outcome::fail(Exit::Input, e.to_string()),
        },
        None => execute(&cfg),
    };
    if let Err(e) = emit(&cfg, &outcome) {
        eprintln!("lsras: writing output: {e}");
        return Exit::Input as i32;
    }
    outcome.exit as i32
}
