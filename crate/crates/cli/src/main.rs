mod config;
mod exit;

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use finbench_core::corpus::{self, label_space, load_manifests, DatasetManifest, LabelSpace};
use finbench_core::fixtures::{write_fixtures, FixtureSpec};
use finbench_core::instruct::{build_records, read_records, write_records, PromptPools};
use finbench_core::mixer::{assemble_phase, write_mix, Assembly};
use finbench_core::report::{render_tables, ResultGrid};
use finbench_core::runner::{
    estimate_cost, execute_plan, plan_run, records_for_phase, Adapter, ModelSpec, Overrides, PlanInputs,
    RunnerError,
};
use finbench_core::scorer::{read_completions, score_records, write_metrics};
use finbench_core::task::{Mode, Phase, Split, TaskKind};
use finbench_core::io;

use config::{CliConfig, ConfigError};

fn parse_enum<T>(s: &str) -> Result<T, String>
where
    T: FromStr,
    T::Err: Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

#[derive(Parser)]
#[command(name = "finbench", version, about = "Financial instruction-tuning benchmark harness", after_help = exit::HELP)]
struct Cli {
    /// JSON config file; flags take precedence over its values.
    #[arg(long, env = "FINBENCH_CONFIG", global = true)]
    config: Option<PathBuf>,
    /// Dataset manifest file.
    #[arg(long, global = true)]
    manifests: Option<PathBuf>,
    /// Prompt pool JSON (task → prompts); the built-in pool is used when absent.
    #[arg(long, global = true)]
    prompt_pool: Option<PathBuf>,
    /// Where sample, record and mix stores are written [default: data].
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Root of the run directory tree [default: runs].
    #[arg(long, global = true)]
    runs_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CountSource {
    /// Published dataset sizes.
    Published,
    /// Each manifest's expected_count.
    Manifest,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scale {
    Published,
    Small,
}

#[derive(Subcommand)]
enum Command {
    /// Load every dataset, write normalized sample stores and check counts.
    Ingest {
        #[arg(long, value_enum, default_value = "published")]
        counts: CountSource,
    },
    /// Build instruction records for one task.
    Build {
        #[arg(long, value_parser = parse_enum::<TaskKind>)]
        task: TaskKind,
        #[arg(long, value_parser = parse_enum::<Mode>, default_value = "standard")]
        mode: Mode,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Assemble the train/eval mix of a phase.
    Mix {
        #[arg(long)]
        phase: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Task for task_specific mixes; all four primary tasks when omitted.
        #[arg(long, value_parser = parse_enum::<TaskKind>)]
        task: Option<TaskKind>,
    },
    /// Plan, train, infer and score through an adapter.
    Run {
        #[arg(long)]
        phase: String,
        /// Model name or preset prefix; repeatable. `all` selects the six presets.
        #[arg(long = "model", required = true)]
        models: Vec<String>,
        /// Adapter executable (path or name on PATH).
        #[arg(long, env = "FINBENCH_ADAPTER")]
        adapter: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<f64>,
        #[arg(long)]
        checkpoint_every: Option<u64>,
        /// Restrict task_specific runs to these tasks.
        #[arg(long = "task", value_parser = parse_enum::<TaskKind>)]
        tasks: Vec<TaskKind>,
    },
    /// Score a completions file against an eval record store.
    Score {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        completions: PathBuf,
        /// Output path [default: metrics.json next to the completions].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Collect metrics under a run tree into report.csv and report.txt.
    Report {
        #[arg(long)]
        runs: Option<PathBuf>,
        /// Output directory [default: the runs directory].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Training cost for a GPU-hour budget.
    Cost {
        #[arg(long, allow_negative_numbers = true)]
        hours: f64,
        #[arg(long, allow_negative_numbers = true)]
        rate: f64,
    },
    /// Write synthetic datasets and their manifest.
    Fixtures {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "published")]
        scale: Scale,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

struct Settings {
    manifests: Option<PathBuf>,
    prompt_pool: Option<PathBuf>,
    data_dir: PathBuf,
    runs_dir: PathBuf,
    adapter: Option<String>,
    seed: u64,
    overrides: Overrides,
}

impl Settings {
    fn resolve(cli: &Cli) -> Result<Self> {
        let config = match &cli.config {
            Some(path) => CliConfig::load(path)?,
            None => CliConfig::default(),
        };
        Ok(Settings {
            manifests: cli.manifests.clone().or(config.manifests),
            prompt_pool: cli.prompt_pool.clone().or(config.prompt_pool),
            data_dir: cli.data_dir.clone().or(config.data_dir).unwrap_or_else(|| "data".into()),
            runs_dir: cli.runs_dir.clone().or(config.runs_dir).unwrap_or_else(|| "runs".into()),
            adapter: config.adapter,
            seed: config.seed.unwrap_or(0),
            overrides: config.overrides,
        })
    }

    fn manifests(&self) -> Result<(PathBuf, Vec<DatasetManifest>)> {
        let path = self
            .manifests
            .clone()
            .ok_or_else(|| ConfigError("no manifest file given (--manifests or config `manifests`)".into()))?;
        let manifests = load_manifests(&path)?;
        Ok((path, manifests))
    }

    fn pools(&self) -> Result<PromptPools> {
        Ok(match &self.prompt_pool {
            Some(p) => PromptPools::load(p)?,
            None => PromptPools::builtin(),
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code(&e))
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let settings = Settings::resolve(cli)?;
    match &cli.command {
        Command::Ingest { counts } => ingest(&settings, *counts),
        Command::Build { task, mode, seed } => build(&settings, *task, *mode, seed.unwrap_or(settings.seed)),
        Command::Mix { phase, seed, task } => mix(&settings, phase, seed.unwrap_or(settings.seed), *task),
        Command::Run {
            phase,
            models,
            adapter,
            seed,
            epochs,
            checkpoint_every,
            tasks,
        } => {
            let mut overrides = settings.overrides.clone();
            overrides.epochs = epochs.or(overrides.epochs);
            overrides.checkpoint_every_steps = checkpoint_every.or(overrides.checkpoint_every_steps);
            if !tasks.is_empty() {
                overrides.tasks = Some(tasks.clone());
            }
            let adapter = adapter.clone().or(settings.adapter.clone());
            run_phase(&settings, phase, models, adapter, seed.unwrap_or(settings.seed), &overrides)
        }
        Command::Score { gold, completions, out } => score(&settings, gold, completions, out.as_deref()),
        Command::Report { runs, out } => {
            let runs = runs.clone().unwrap_or_else(|| settings.runs_dir.clone());
            let out = out.clone().unwrap_or_else(|| runs.clone());
            report(&runs, &out)
        }
        Command::Cost { hours, rate } => {
            println!("{}", estimate_cost(*hours, *rate)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Fixtures { out, scale, seed } => {
            let mut spec = match scale {
                Scale::Published => FixtureSpec::published(),
                Scale::Small => FixtureSpec::small(),
            };
            spec.seed = *seed;
            let path = write_fixtures(out, &spec)?;
            println!("{}", path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load_samples(manifests: &[DatasetManifest]) -> Result<BTreeMap<String, Vec<corpus::Sample>>> {
    Ok(corpus::load_all(manifests)?)
}

fn ingest(settings: &Settings, counts: CountSource) -> Result<ExitCode> {
    let (_, manifests) = settings.manifests()?;
    let mut loaded = BTreeMap::new();
    for m in &manifests {
        let mut m = m.clone();
        if counts == CountSource::Published {
            // Count checks happen in the report, not as a load failure.
            m.expected_count = None;
        }
        loaded.insert(m.name.clone(), corpus::load_dataset(&m)?);
    }
    let report = match counts {
        CountSource::Published => corpus::validate_counts(&loaded),
        CountSource::Manifest => {
            let expected = manifests
                .iter()
                .filter_map(|m| m.expected_count.map(|n| (m.name.clone(), n)))
                .collect();
            corpus::validate_counts_against(&loaded, &expected)
        }
    };
    let samples_dir = settings.data_dir.join("samples");
    for (name, samples) in &loaded {
        corpus::write_samples(&samples_dir.join(format!("{name}.jsonl")), samples)?;
    }
    io::write_json(&settings.data_dir.join("count_report.json"), &report)?;
    print!("{}", report.render());
    Ok(if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(exit::COUNT_FAILURE)
    })
}

fn build(settings: &Settings, task: TaskKind, mode: Mode, seed: u64) -> Result<ExitCode> {
    let (_, manifests) = settings.manifests()?;
    let labels = label_space(&manifests);
    let pools = settings.pools()?;
    let samples = load_samples(&manifests)?;
    let by_task = corpus::by_task(&samples);
    let samples = by_task.get(&task).cloned().unwrap_or_default();
    let pool = pools.get(task)?;
    let dir = settings.data_dir.join("records");
    for split in [Split::Train, Split::Test] {
        let part: Vec<_> = samples.iter().filter(|s| s.split() == split).cloned().collect();
        let records = build_records(&part, pool, mode, split, seed, &labels)?;
        let path = dir.join(format!("{task}_{mode}_{seed}.{split}.jsonl"));
        write_records(&path, &records)?;
        println!("{} {} records → {}", records.len(), split, path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_phase(phase: &str) -> Result<Phase> {
    Ok(phase.parse().map_err(|_| RunnerError::UnknownPhase(phase.to_string()))?)
}

fn mix(settings: &Settings, phase: &str, seed: u64, task: Option<TaskKind>) -> Result<ExitCode> {
    let phase = parse_phase(phase)?;
    let (_, manifests) = settings.manifests()?;
    let labels = label_space(&manifests);
    let samples = load_samples(&manifests)?;
    let records = records_for_phase(phase, &corpus::by_task(&samples), &settings.pools()?, &labels, seed)?;
    let assemblies = match phase {
        Phase::TaskSpecific => match task {
            Some(t) => vec![Assembly::TaskSpecific(t)],
            None => TaskKind::PRIMARY.iter().map(|t| Assembly::TaskSpecific(*t)).collect(),
        },
        Phase::MultiTask => vec![Assembly::MultiTask],
        Phase::ZeroShot => vec![Assembly::ZeroShot],
    };
    let dir = settings.data_dir.join("mixes");
    for assembly in assemblies {
        let mix = assemble_phase(assembly, &records, seed)?;
        let files = write_mix(&dir, &mix)?;
        println!(
            "{} {}: {} train, {} eval → {}",
            phase,
            mix.plan.label,
            mix.plan.train_size,
            mix.plan.eval_size,
            files.plan.display()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn run_phase(
    settings: &Settings,
    phase: &str,
    models: &[String],
    adapter: Option<String>,
    seed: u64,
    overrides: &Overrides,
) -> Result<ExitCode> {
    let specs: Vec<ModelSpec> = if models.iter().any(|m| m == "all") {
        ModelSpec::presets()
    } else {
        models.iter().map(|m| ModelSpec::resolve(m)).collect()
    };
    let plans = plan_run(phase, &specs, overrides, seed)?;
    let adapter_spec = adapter.ok_or_else(|| RunnerError::AdapterNotFound("no adapter given (--adapter, FINBENCH_ADAPTER or config `adapter`)".into()))?;
    let adapter = Adapter::resolve(&adapter_spec)?;

    let (manifest_path, manifests) = settings.manifests()?;
    let labels = label_space(&manifests);
    let samples = load_samples(&manifests)?;
    let records = records_for_phase(plans[0].phase, &corpus::by_task(&samples), &settings.pools()?, &labels, seed)?;

    let mut sources = vec![("manifests".to_string(), manifest_path)];
    if let Some(p) = &settings.prompt_pool {
        sources.push(("prompt_pool".into(), p.clone()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for m in &manifests {
        if seen.insert(m.source_path.clone()) {
            sources.push((format!("source:{}", m.name), m.source_path.clone()));
        }
    }
    let inputs = PlanInputs {
        records: &records,
        labels: &labels,
        sources,
    };
    for plan in &plans {
        let outcome = execute_plan(plan, &inputs, &adapter, &settings.runs_dir)
            .with_context(|| format!("{} {} {}", plan.phase, plan.model.name, plan.label))?;
        for m in &outcome.metrics {
            println!(
                "{} {} {} {}: f1 {:.4} (p {:.4}, r {:.4}, unparsed {})",
                plan.phase, plan.model.name, m.task, m.dataset, m.f1, m.precision, m.recall, m.unparsed_count
            );
        }
        println!("manifest → {}", outcome.run_dir.join("manifest.json").display());
    }
    Ok(ExitCode::SUCCESS)
}

fn score(settings: &Settings, gold: &Path, completions_path: &Path, out: Option<&Path>) -> Result<ExitCode> {
    let records = read_records(gold)?;
    let completions = read_completions(completions_path)?;
    let labels: LabelSpace = match &settings.manifests {
        Some(_) => label_space(&settings.manifests()?.1),
        None => LabelSpace::new(),
    };
    let reports = score_records(&records, &completions, &labels)?;
    let out = out.map_or_else(|| completions_path.with_file_name("metrics.json"), Path::to_path_buf);
    write_metrics(&out, &reports)?;
    for r in &reports {
        println!(
            "{} {}: f1 {:.4} (p {:.4}, r {:.4}, unparsed {})",
            r.task, r.dataset, r.f1, r.precision, r.recall, r.unparsed_count
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn report(runs: &Path, out: &Path) -> Result<ExitCode> {
    let grid = ResultGrid::from_runs(runs)?;
    let rendered = render_tables(&grid);
    io::write_atomic(&out.join("report.csv"), rendered.csv.as_bytes())?;
    io::write_atomic(&out.join("report.txt"), rendered.text.as_bytes())?;
    print!("{}", rendered.text);
    Ok(ExitCode::SUCCESS)
}
