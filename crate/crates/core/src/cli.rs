//! Operator commands: feature extraction, store seeding, prior construction,
//! stratification, search runs, and report generation.
//!
//! Every command is a plain function over a clap argument struct so the same
//! entry points drive the `ember` binary and the integration tests. Outputs
//! are written atomically (temp file + rename) and embed a hash of the
//! resolved run configuration, so a command rerun with identical inputs and
//! seed reproduces its outputs byte for byte under the virtual clock.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, SecondsFormat, TimeZone, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    self, normalized_group_hypervolumes, MarginalSeries, PlotData, PlotSeries, Summary,
};
use crate::error::{Error, Result};
use crate::meta::{
    self, DistanceMetric, HashEmbedder, MetaFeatureVector, SystemOverrides, Template,
};
use crate::prior::{
    build_prior, knn_prior, stratify_priors, BetaVariant, PriorParams, PriorReport, RateScheme,
    UtilityScheme,
};
use crate::search::{
    pareto_archive, read_trace, run_search, write_trace, Budget, RunRates, SearchTrace,
    DEFAULT_BATCH_SIZE,
};
use crate::space::{SamplerState, SearchSpace};
use crate::store::{ExperienceDraft, ExperienceStore, Outcome};
use crate::surrogate::{make_task_family, FamilySpec, SurrogateTask};

/// Epoch used for reproducible timestamps under the virtual clock.
const VIRTUAL_EPOCH_UNIX_SECS: i64 = 1_767_225_600; // 2026-01-01T00:00:00Z

#[derive(Debug, Parser)]
#[command(
    name = "ember",
    about = "Experience-aware warm starting for multi-objective pipeline search",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract task meta-features from a TAB-delimited dataset file.
    ExtractFeatures(ExtractFeaturesArgs),
    /// Run the zero-shot optimizer over every task of a surrogate family and
    /// append all outcomes to the experience store.
    SeedStore(SeedStoreArgs),
    /// Build a warm-start prior for one task from stored experiences.
    BuildPrior(BuildPriorArgs),
    /// Evaluate a grid of prior parameterizations and cut them into
    /// low/moderate/high bias strata by TV distance from uniform.
    Stratify(StratifyArgs),
    /// Run one search (zero-shot, kNN, or warm-started) on a surrogate task.
    Run(RunArgs),
    /// Compare traces against a baseline: summary table, win ratios, and
    /// Pareto plot data.
    Report(ReportArgs),
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::ExtractFeatures(args) => cmd_extract_features(&args),
        Command::SeedStore(args) => cmd_seed_store(&args).map(|_| ()),
        Command::BuildPrior(args) => cmd_build_prior(&args).map(|_| ()),
        Command::Stratify(args) => cmd_stratify(&args).map(|_| ()),
        Command::Run(args) => cmd_run(&args).map(|_| ()),
        Command::Report(args) => cmd_report(&args).map(|_| ()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum TemplateArg {
    LabelBased,
    Generation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ZeroShot,
    Knn,
    Warm,
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

/// Stable 64-bit hash of a command's resolved configuration, embedded in its
/// outputs so any artifact can be traced back to the exact invocation.
fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let canonical = serde_json::to_vec(config)?;
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in canonical {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x100_0000_01b3);
    }
    Ok(format!("{hash:016x}"))
}

/// Overwrite `path` atomically.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn load_space(path: &Path) -> Result<SearchSpace> {
    SearchSpace::parse(&fs::read_to_string(path)?)
}

fn load_family(path: &Path) -> Result<FamilySpec> {
    FamilySpec::parse(&fs::read_to_string(path)?)
}

fn load_prior_params(path: &Path) -> Result<PriorParams> {
    PriorParams::parse(&fs::read_to_string(path)?)
}

fn find_task<'a>(tasks: &'a [SurrogateTask], task_id: &str) -> Result<&'a SurrogateTask> {
    tasks.iter().find(|t| t.task_id == task_id).ok_or_else(|| {
        let known: Vec<&str> = tasks.iter().map(|t| t.task_id.as_str()).collect();
        Error::Invalid(format!("unknown task `{task_id}`; family has {known:?}"))
    })
}

/// Timestamp source: a fixed epoch advanced by the virtual clock for
/// reproducible outputs, or the actual wall clock.
struct Clock {
    virtual_clock: bool,
}

impl Clock {
    fn stamp(&self, virtual_secs: f64) -> String {
        let t: DateTime<Utc> = if self.virtual_clock {
            Utc.timestamp_opt(VIRTUAL_EPOCH_UNIX_SECS, 0).unwrap()
                + Duration::milliseconds((virtual_secs * 1e3) as i64)
        } else {
            Utc::now()
        };
        t.to_rfc3339_opts(SecondsFormat::Millis, true)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BudgetArgs {
    /// Maximum number of pipeline evaluations.
    #[arg(long)]
    pub budget_evals: Option<u64>,
    /// Wall-clock budget in seconds, measured on the virtual clock the
    /// evaluators advance.
    #[arg(long)]
    pub budget_seconds: Option<f64>,
    /// Per-pipeline timeout in seconds; slower successes become timeouts.
    #[arg(long, default_value_t = 5400.0)]
    pub per_eval_timeout: f64,
}

impl BudgetArgs {
    fn to_budget(&self) -> Result<Budget> {
        let budget = Budget {
            max_evaluations: self.budget_evals,
            wall_clock_limit_secs: self.budget_seconds,
            per_pipeline_timeout_secs: self.per_eval_timeout,
        };
        budget.validate()?;
        Ok(budget)
    }
}

// ---------------------------------------------------------------------------
// extract-features
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExtractFeaturesArgs {
    /// Dataset file: `label TAB text` or `prompt TAB target` lines.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub template: TemplateArg,
    /// Output file; stdout when omitted.
    #[arg(long, env = "EMBER_OUT")]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

/// Feature document written by extract-features and read back by
/// build-prior --features.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureDoc {
    pub config_hash: String,
    pub template: Template,
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

pub fn cmd_extract_features(args: &ExtractFeaturesArgs) -> Result<()> {
    let text = fs::read_to_string(&args.data)?;
    let vector = match args.template {
        TemplateArg::LabelBased => meta::extract_label_based(&meta::parse_labeled(&text)?)?,
        TemplateArg::Generation => {
            meta::extract_generation(&meta::parse_pairs(&text)?, &HashEmbedder::default())?
        }
    };
    let doc = FeatureDoc {
        config_hash: config_hash(args)?,
        template: vector.template,
        names: vector.names(),
        values: vector.values,
    };
    match &args.out {
        Some(path) => write_json(path, &doc)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, &doc)?;
            writeln!(stdout)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// seed-store
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Args, Serialize)]
pub struct SeedStoreArgs {
    /// Space definition file (TOML).
    #[arg(long)]
    pub space: PathBuf,
    /// Surrogate family spec file (TOML).
    #[arg(long)]
    pub family: PathBuf,
    /// Experience store to append to (created if missing).
    #[arg(long, env = "EMBER_STORE")]
    #[serde(skip)]
    pub store: PathBuf,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    pub batch_size: usize,
    /// Stamp records with the fixed virtual epoch instead of wall time.
    #[arg(long)]
    pub virtual_clock: bool,
    /// Directory for per-task trace files; skipped when omitted.
    #[arg(long, env = "EMBER_OUT")]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

pub fn cmd_seed_store(args: &SeedStoreArgs) -> Result<Vec<Summary>> {
    let space = load_space(&args.space)?;
    let family = load_family(&args.family)?;
    let budget = args.budget.to_budget()?;
    let tasks = make_task_family(&space, &family)?;
    let mut store = ExperienceStore::open(&args.store)?;
    let clock = Clock {
        virtual_clock: args.virtual_clock,
    };
    let hash = config_hash(args)?;

    let mut summaries = Vec::new();
    for (ti, task) in tasks.iter().enumerate() {
        let state = space.init_uniform();
        let trace = run_search(
            &space,
            &state,
            task,
            &budget,
            args.batch_size,
            args.seed.wrapping_add(ti as u64),
            RunRates::default(),
        )?;
        for record in &trace.records {
            store.append(
                ExperienceDraft {
                    task_id: task.task_id.clone(),
                    family: task.family.clone(),
                    config: record.config.clone(),
                    outcome: record.outcome.clone(),
                    task_features: task.features.clone(),
                    system: task.system.clone(),
                },
                &clock.stamp(record.timestamp_secs),
            )?;
        }
        if let Some(out) = &args.out {
            fs::create_dir_all(out)?;
            let path = out.join(format!("seed_{}.trace.ndjson", task.task_id));
            let mut buf = Vec::new();
            write_trace(&mut buf, &trace, &hash)?;
            write_atomic(&path, &buf)?;
        }
        summaries.push(analysis::summarize(&trace, None));
    }
    Ok(summaries)
}

// ---------------------------------------------------------------------------
// build-prior
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Args, Serialize)]
pub struct BuildPriorArgs {
    #[arg(long)]
    pub space: PathBuf,
    #[arg(long, env = "EMBER_STORE")]
    pub store: PathBuf,
    /// Surrogate family spec; supplies the task's features, system profile,
    /// and store family name.
    #[arg(long)]
    pub family: Option<PathBuf>,
    /// Task the prior is built for (excluded from retrieval).
    #[arg(long)]
    pub task: Option<String>,
    /// Feature document (extract-features output); alternative to --family.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Store family to retrieve when using --features.
    #[arg(long)]
    pub store_family: Option<String>,
    /// Prior parameter file (TOML).
    #[arg(long)]
    pub prior: PathBuf,
    #[arg(long, env = "EMBER_OUT")]
    #[serde(skip)]
    pub out: PathBuf,
}

/// Warmed-state document: the sampler state plus provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateDoc {
    pub config_hash: String,
    pub methods: Vec<String>,
    pub state: SamplerState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorReportDoc {
    pub config_hash: String,
    /// Absent for the kNN baseline, whose only knob is k.
    pub params: Option<PriorParams>,
    pub used: PriorReport,
}

fn current_task_context(
    space: &SearchSpace,
    args_family: &Option<PathBuf>,
    args_task: &Option<String>,
    args_features: &Option<PathBuf>,
    args_store_family: &Option<String>,
) -> Result<(
    MetaFeatureVector,
    crate::store::SystemProfile,
    String,
    Option<String>,
)> {
    match (args_features, args_family) {
        (Some(features_path), _) => {
            let doc: FeatureDoc = serde_json::from_str(&fs::read_to_string(features_path)?)?;
            let family = args_store_family
                .clone()
                .ok_or_else(|| Error::Invalid("--features requires --store-family".into()))?;
            let system = meta::system_profile(&SystemOverrides::default());
            Ok((
                MetaFeatureVector {
                    template: doc.template,
                    values: doc.values,
                },
                system,
                family,
                args_task.clone(),
            ))
        }
        (None, Some(family_path)) => {
            let spec = load_family(family_path)?;
            let task_id = args_task
                .clone()
                .ok_or_else(|| Error::Invalid("--family requires --task".into()))?;
            let tasks = make_task_family(space, &spec)?;
            let task = find_task(&tasks, &task_id)?;
            Ok((
                task.features.clone(),
                task.system.clone(),
                task.family.clone(),
                Some(task_id),
            ))
        }
        (None, None) => Err(Error::Invalid("provide --family or --features".into())),
    }
}

pub fn cmd_build_prior(args: &BuildPriorArgs) -> Result<(SamplerState, PriorReport)> {
    let space = load_space(&args.space)?;
    let params = load_prior_params(&args.prior)?;
    let (features, system, family, exclude) = current_task_context(
        &space,
        &args.family,
        &args.task,
        &args.features,
        &args.store_family,
    )?;
    let store = ExperienceStore::open(&args.store)?;
    let experiences = store.query(&family, exclude.as_deref())?;
    let state = space.init_uniform();
    let (warmed, report) = build_prior(&space, &state, &experiences, &features, &system, &params)?;

    let hash = config_hash(args)?;
    fs::create_dir_all(&args.out)?;
    write_json(
        &args.out.join("state.json"),
        &StateDoc {
            config_hash: hash.clone(),
            methods: space.methods().to_vec(),
            state: warmed.clone(),
        },
    )?;
    write_json(
        &args.out.join("prior_report.json"),
        &PriorReportDoc {
            config_hash: hash.clone(),
            params: Some(params),
            used: report.clone(),
        },
    )?;
    write_json(
        &args.out.join("marginal.json"),
        &MarginalSeries {
            label: "warmed".into(),
            methods: space.methods().to_vec(),
            probs: warmed.method_marginal(),
        },
    )?;
    Ok((warmed, report))
}

// ---------------------------------------------------------------------------
// stratify
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Args, Serialize)]
pub struct StratifyArgs {
    #[arg(long)]
    pub space: PathBuf,
    #[arg(long, env = "EMBER_STORE")]
    pub store: PathBuf,
    #[arg(long)]
    pub family: PathBuf,
    #[arg(long)]
    pub task: String,
    /// Grid spec file (TOML) enumerating candidate prior parameters.
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long, env = "EMBER_OUT")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum KLimit {
    Count(usize),
    Word(String),
}

impl KLimit {
    fn resolve(&self) -> Result<Option<usize>> {
        match self {
            KLimit::Count(n) => Ok(Some(*n)),
            KLimit::Word(w) if w == "all" => Ok(None),
            KLimit::Word(w) => Err(Error::Invalid(format!(
                "k limit must be an integer or \"all\", got `{w}`"
            ))),
        }
    }
}

/// Cartesian grid of prior parameterizations.
#[derive(Debug, Clone, Deserialize)]
pub struct GridSpec {
    distance_metrics: Vec<DistanceMetric>,
    utility_schemes: Vec<UtilityScheme>,
    beta_scales: Vec<f64>,
    beta_variants: Vec<BetaVariant>,
    /// "fixed" and/or "adaptive".
    rate_schemes: Vec<String>,
    #[serde(default = "default_alpha_pos")]
    alpha_pos_max: f64,
    #[serde(default = "default_alpha_neg")]
    alpha_neg_max: f64,
    k_pos: Vec<KLimit>,
    k_neg: Vec<KLimit>,
}

fn default_alpha_pos() -> f64 {
    0.05
}
fn default_alpha_neg() -> f64 {
    0.02
}

impl GridSpec {
    pub fn parse(text: &str) -> Result<GridSpec> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// All combinations, in deterministic nesting order.
    pub fn candidates(&self) -> Result<Vec<PriorParams>> {
        let mut out = Vec::new();
        for &metric in &self.distance_metrics {
            for &scheme in &self.utility_schemes {
                for &beta_scale in &self.beta_scales {
                    for &variant in &self.beta_variants {
                        for rates in &self.rate_schemes {
                            let rate_scheme = match rates.as_str() {
                                "fixed" => RateScheme::Fixed {
                                    alpha_pos_max: self.alpha_pos_max,
                                    alpha_neg_max: self.alpha_neg_max,
                                },
                                "adaptive" => RateScheme::Adaptive,
                                other => {
                                    return Err(Error::Invalid(format!(
                                        "unknown rate scheme `{other}`"
                                    )))
                                }
                            };
                            for k_pos in &self.k_pos {
                                for k_neg in &self.k_neg {
                                    let params = PriorParams {
                                        distance_metric: metric,
                                        utility_scheme: scheme,
                                        beta_scale,
                                        beta_variant: variant,
                                        rate_scheme,
                                        k_pos: k_pos.resolve()?,
                                        k_neg: k_neg.resolve()?,
                                        ..PriorParams::default()
                                    };
                                    params.validate()?;
                                    out.push(params);
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StratifyDoc {
    pub config_hash: String,
    pub candidates: Vec<PriorParams>,
    pub tvs: Vec<f64>,
    /// stratum index (0 = low, 1 = moderate, 2 = high) per candidate
    pub stratum_of: Vec<usize>,
    /// (median, max) candidate ids per stratum
    pub representatives: Vec<(usize, usize)>,
}

pub fn cmd_stratify(args: &StratifyArgs) -> Result<StratifyDoc> {
    let space = load_space(&args.space)?;
    let family = load_family(&args.family)?;
    let tasks = make_task_family(&space, &family)?;
    let task = find_task(&tasks, &args.task)?;
    let store = ExperienceStore::open(&args.store)?;
    let experiences = store.query(&task.family, Some(&args.task))?;
    let grid = GridSpec::parse(&fs::read_to_string(&args.grid)?)?;
    let candidates = grid.candidates()?;
    if candidates.len() < 3 {
        return Err(Error::Invalid("grid yields fewer than 3 candidates".into()));
    }

    let state = space.init_uniform();
    let marginals: Vec<Vec<f64>> = candidates
        .iter()
        .map(|params| {
            let (warmed, _) = build_prior(
                &space,
                &state,
                &experiences,
                &task.features,
                &task.system,
                params,
            )?;
            Ok(warmed.method_marginal())
        })
        .collect::<Result<_>>()?;
    let stratification = stratify_priors(&marginals)?;

    let mut stratum_of = vec![0usize; candidates.len()];
    for (si, stratum) in stratification.strata.iter().enumerate() {
        for &member in &stratum.members {
            stratum_of[member] = si;
        }
    }
    let doc = StratifyDoc {
        config_hash: config_hash(args)?,
        candidates,
        tvs: stratification.tvs.clone(),
        stratum_of,
        representatives: stratification
            .strata
            .iter()
            .map(|s| (s.median, s.max))
            .collect(),
    };

    fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("strata.json"), &doc)?;

    let mut tsv = String::from("candidate\ttv\tstratum\trole\n");
    let stratum_name = ["low", "moderate", "high"];
    for (i, tv) in doc.tvs.iter().enumerate() {
        let si = doc.stratum_of[i];
        let role = match doc.representatives[si] {
            (median, max) if median == i && max == i => "median+max",
            (median, _) if median == i => "median",
            (_, max) if max == i => "max",
            _ => "",
        };
        tsv.push_str(&format!("{i}\t{tv:.6}\t{}\t{role}\n", stratum_name[si]));
    }
    write_atomic(&args.out.join("strata.tsv"), tsv.as_bytes())?;

    let marginal_doc: Vec<MarginalSeries> = marginals
        .iter()
        .enumerate()
        .map(|(i, probs)| MarginalSeries {
            label: format!("candidate_{i}"),
            methods: space.methods().to_vec(),
            probs: probs.clone(),
        })
        .collect();
    write_json(&args.out.join("marginals.json"), &marginal_doc)?;
    Ok(doc)
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunArgs {
    #[arg(long)]
    pub space: PathBuf,
    /// Experience store; required for knn and warm modes.
    #[arg(long, env = "EMBER_STORE")]
    pub store: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Neighbour count for knn mode.
    #[arg(long)]
    pub k: Option<usize>,
    /// Prior parameter file for warm mode.
    #[arg(long)]
    pub prior: Option<PathBuf>,
    #[arg(long)]
    pub family: PathBuf,
    #[arg(long)]
    pub task: String,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    pub batch_size: usize,
    /// Reproducible virtual-epoch timestamps in outputs.
    #[arg(long)]
    pub virtual_clock: bool,
    #[arg(long, env = "EMBER_OUT")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummaryDoc {
    pub config_hash: String,
    pub mode: Mode,
    pub task: String,
    pub summary: Summary,
}

pub fn cmd_run(args: &RunArgs) -> Result<SearchTrace> {
    let space = load_space(&args.space)?;
    let family = load_family(&args.family)?;
    let budget = args.budget.to_budget()?;
    let tasks = make_task_family(&space, &family)?;
    let task = find_task(&tasks, &args.task)?;
    let uniform = space.init_uniform();
    let hash = config_hash(args)?;

    let open_store = || -> Result<Vec<crate::store::Experience>> {
        let path = args
            .store
            .as_ref()
            .ok_or_else(|| Error::Invalid(format!("{:?} mode requires --store", args.mode)))?;
        let store = ExperienceStore::open(path)?;
        store.query(&task.family, Some(&task.task_id))
    };

    let (initial, prior_report) = match args.mode {
        Mode::ZeroShot => (uniform, None),
        Mode::Knn => {
            let k = args
                .k
                .ok_or_else(|| Error::Invalid("knn mode requires --k".into()))?;
            let experiences = open_store()?;
            let (state, report) = knn_prior(
                &space,
                &uniform,
                &experiences,
                k,
                &task.features,
                &task.system,
                DistanceMetric::Euclidean,
                None,
            )?;
            (state, Some(report))
        }
        Mode::Warm => {
            let prior_path = args
                .prior
                .as_ref()
                .ok_or_else(|| Error::Invalid("warm mode requires --prior".into()))?;
            let params = load_prior_params(prior_path)?;
            let experiences = open_store()?;
            let (state, report) = build_prior(
                &space,
                &uniform,
                &experiences,
                &task.features,
                &task.system,
                &params,
            )?;
            (state, Some(report))
        }
    };

    let trace = run_search(
        &space,
        &initial,
        task,
        &budget,
        args.batch_size,
        args.seed,
        RunRates::default(),
    )?;

    fs::create_dir_all(&args.out)?;
    let mut buf = Vec::new();
    write_trace(&mut buf, &trace, &hash)?;
    write_atomic(&args.out.join("trace.ndjson"), &buf)?;
    write_json(
        &args.out.join("summary.json"),
        &RunSummaryDoc {
            config_hash: hash.clone(),
            mode: args.mode,
            task: task.task_id.clone(),
            summary: analysis::summarize(&trace, None),
        },
    )?;
    write_json(
        &args.out.join("initial_marginal.json"),
        &MarginalSeries {
            label: format!("{:?}", args.mode),
            methods: space.methods().to_vec(),
            probs: initial.method_marginal(),
        },
    )?;
    if let Some(report) = prior_report {
        write_json(
            &args.out.join("prior_report.json"),
            &PriorReportDoc {
                config_hash: hash,
                params: match args.mode {
                    Mode::Warm => Some(load_prior_params(args.prior.as_ref().unwrap())?),
                    _ => None,
                },
                used: report,
            },
        )?;
    }
    Ok(trace)
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    /// Baseline trace file (its Pareto archive is the reference front).
    #[arg(long)]
    pub baseline: PathBuf,
    /// Candidate trace files.
    #[arg(long, num_args = 1.., required = true)]
    pub trace: Vec<PathBuf>,
    #[arg(long, env = "EMBER_OUT")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub summary: Summary,
    pub win_ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportDoc {
    pub config_hash: String,
    pub rows: Vec<ReportRow>,
}

fn trace_label(path: &Path) -> String {
    let stem = path.file_stem().map_or_else(
        || path.display().to_string(),
        |s| s.to_string_lossy().into_owned(),
    );
    // bare "trace.ndjson" files disambiguate by their directory
    match stem
        .strip_suffix(".trace")
        .or(if stem == "trace" { Some("") } else { None })
    {
        Some(prefix) => {
            let dir = path
                .parent()
                .and_then(|p| p.file_name())
                .map(|s| s.to_string_lossy().into_owned());
            match (dir, prefix.is_empty()) {
                (Some(dir), true) => dir,
                (Some(dir), false) => format!("{dir}/{prefix}"),
                (None, _) => stem,
            }
        }
        None => stem,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

pub fn cmd_report(args: &ReportArgs) -> Result<ReportDoc> {
    let (baseline, _) = read_trace(&args.baseline)?;
    let baseline_front = pareto_archive(&baseline);

    let mut traces = vec![(trace_label(&args.baseline), baseline)];
    for path in &args.trace {
        let (t, _) = read_trace(path)?;
        traces.push((trace_label(path), t));
    }

    let refs: Vec<&SearchTrace> = traces.iter().map(|(_, t)| t).collect();
    let hvs = normalized_group_hypervolumes(&refs);

    let rows: Vec<ReportRow> = traces
        .iter()
        .zip(&hvs)
        .map(|((label, trace), &hv)| {
            let mut summary = analysis::summarize(trace, None);
            summary.hypervolume = Some(hv);
            Ok(ReportRow {
                label: label.clone(),
                summary,
                win_ratio: analysis::win_ratio(trace, &baseline_front)?,
            })
        })
        .collect::<Result<_>>()?;

    let doc = ReportDoc {
        config_hash: config_hash(args)?,
        rows,
    };
    fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("report.json"), &doc)?;

    let mut tsv = String::from(
        "trace\tmax_quality\tmean_quality\tmin_et\tmean_et\thv\tn_eval\terror_ratio\twin_ratio\n",
    );
    for row in &doc.rows {
        let s = &row.summary;
        tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.4}\t{:.4}\n",
            row.label,
            fmt_opt(s.max_quality),
            fmt_opt(s.mean_quality),
            fmt_opt(s.min_et),
            fmt_opt(s.mean_et),
            fmt_opt(s.hypervolume),
            s.n_eval,
            s.error_ratio,
            row.win_ratio,
        ));
    }
    write_atomic(&args.out.join("report.tsv"), tsv.as_bytes())?;

    let plot = PlotData {
        pareto_fronts: traces
            .iter()
            .map(|(label, trace)| PlotSeries {
                label: label.clone(),
                points: pareto_archive(trace)
                    .into_iter()
                    .map(|(q, et)| (et, q))
                    .collect(),
            })
            .collect(),
        method_marginals: traces
            .iter()
            .map(|(label, trace)| MarginalSeries {
                label: label.clone(),
                methods: Vec::new(),
                probs: trace.final_state.method_marginal(),
            })
            .collect(),
    };
    write_json(&args.out.join("plot_data.json"), &plot)?;
    Ok(doc)
}

// ---------------------------------------------------------------------------

/// Fraction of store records that are failures; used by seeding sanity
/// checks and tests.
pub fn store_error_ratio(store: &ExperienceStore, family: &str) -> Result<f64> {
    let records = store.query(family, None)?;
    if records.is_empty() {
        return Ok(0.0);
    }
    let failures = records
        .iter()
        .filter(|e| matches!(e.outcome, Outcome::Failure(_)))
        .count();
    Ok(failures as f64 / records.len() as f64)
}
