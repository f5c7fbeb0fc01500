//! `cfguide`: train classifiers, build the synthetic benchmark, generate
//! and evaluate counterfactual explanations, and run the augmentation and
//! faithfulness studies from the command line.

mod kvconfig;

use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cfguide::augment::augment_and_retrain;
use cfguide::classifier::{accuracy, fit_logistic, TrainConfig};
use cfguide::dataset::read_jsonl;
use cfguide::generate::GeneratorKind;
use cfguide::metrics::{
    build_report, fit_ngram, read_record_rows, EvaluationReport, RecordRow, DEFAULT_ADD_K,
    DEFAULT_NGRAM_ORDER, JUDGE_TEMPERATURE,
};
use cfguide::pipeline::{
    label_token_correlation, make_synthetic_corpus, probe_faithfulness, run_experiment,
    AttributionMethod, ClassifierSource, CorpusSpec, ExperimentConfig, POSITIVE_LABEL,
};
use cfguide::prompt::Task;
use cfguide::select::{CounterfactualRecord, Method};
use cfguide::{Generator, GeneratorConfig, TextGenerator};

use kvconfig::{parse_kv, Settings};

#[derive(Parser)]
#[command(
    name = "cfguide",
    version,
    about = "Classifier-guided counterfactual generation and evaluation for text classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the in-repo linear classifier on a labeled JSONL dataset
    TrainClassifier(TrainClassifierArgs),
    /// Generate the synthetic sentiment benchmark (train/test/ood + lexicon)
    MakeCorpus(MakeCorpusArgs),
    /// Generate counterfactuals for a dataset and evaluate them
    Explain(ExperimentArgs),
    /// Recompute evaluation metrics from per-record JSONL rows
    Evaluate(EvaluateArgs),
    /// Retrain with flipped counterfactuals and compare accuracies
    Augment(AugmentArgs),
    /// Run the explain config against baseline and reversed-label
    /// classifiers and report the flip-rate delta
    ProbeFaithfulness(ProbeArgs),
}

#[derive(Args, Clone)]
struct TrainHyper {
    /// Gradient-descent epochs
    #[arg(long, default_value_t = 400)]
    epochs: usize,
    /// Learning rate
    #[arg(long, default_value_t = 0.5)]
    learning_rate: f64,
    /// L2 penalty on the weights
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    /// Training seed, recorded in the model file
    #[arg(long, default_value_t = 42)]
    train_seed: u64,
}

impl TrainHyper {
    fn to_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            l2: self.l2,
            seed: self.train_seed,
        }
    }
}

#[derive(Args)]
struct TrainClassifierArgs {
    /// Labeled training JSONL
    #[arg(long)]
    train: PathBuf,
    /// Where to write the model JSON
    #[arg(long)]
    out: PathBuf,
    /// Optional labeled JSONL to report held-out accuracy on
    #[arg(long)]
    eval: Option<PathBuf>,
    #[command(flatten)]
    hyper: TrainHyper,
}

#[derive(Args)]
struct MakeCorpusArgs {
    /// Directory for train.jsonl, test.jsonl, ood.jsonl, lexicon.jsonl
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Training documents (minimum 50)
    #[arg(long, default_value_t = 500)]
    train_size: usize,
    /// Defaults to train-size / 5 (minimum 20)
    #[arg(long)]
    test_size: Option<usize>,
    /// Defaults to train-size / 5 (minimum 20)
    #[arg(long)]
    ood_size: Option<usize>,
    /// Antonym pairs to draw on (capped at the built-in list)
    #[arg(long, default_value_t = 30)]
    pairs: usize,
    /// Token correlated with the positive label in train/test but
    /// decorrelated in the OOD split
    #[arg(long)]
    spurious_token: Option<String>,
}

/// Experiment settings; every flag can also come from `--config` (same
/// names in snake_case), with flags taking precedence.
#[derive(Args, Clone, Default)]
struct ExperimentArgs {
    /// Flat `key = value` config file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// Task: sentiment | nli
    #[arg(long)]
    task: Option<String>,
    /// Dataset JSONL to explain
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Trained model JSON (local classifier)
    #[arg(long)]
    model: Option<PathBuf>,
    /// Remote classifier endpoint (alternative to --model)
    #[arg(long)]
    classifier_endpoint: Option<String>,
    /// Comma-separated class names for the remote classifier
    #[arg(long)]
    class_names: Option<String>,
    /// Method: vanilla | cgg | cgv | cggv
    #[arg(long)]
    method: Option<String>,
    /// Candidates per document for cgv/cggv
    #[arg(long)]
    n: Option<usize>,
    /// Worked examples per prompt
    #[arg(long)]
    shots: Option<usize>,
    /// JSONL shot exemplars (defaults to the built-in examples)
    #[arg(long)]
    shot_file: Option<PathBuf>,
    /// Attribution for guided methods: saliency | shap
    #[arg(long)]
    attribution: Option<String>,
    /// Share of distinct attributed words injected as guidance
    #[arg(long)]
    fraction: Option<f64>,
    /// Generator backend: mock | http
    #[arg(long)]
    generator: Option<String>,
    /// Antonym lexicon JSONL (mock generator)
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Per-word swap probability of the mock generator
    #[arg(long)]
    flip_probability: Option<f64>,
    /// Chat-completions endpoint (http generator)
    #[arg(long)]
    llm_endpoint: Option<String>,
    /// Model name (http generator)
    #[arg(long)]
    llm_model: Option<String>,
    /// Environment variable holding the API key
    #[arg(long)]
    api_key_env: Option<String>,
    /// Sampling temperature
    #[arg(long)]
    temperature: Option<f64>,
    /// HTTP timeout in seconds
    #[arg(long)]
    timeout_secs: Option<u64>,
    /// Judge chat-completions endpoint; enables 1-5 quality scoring
    #[arg(long)]
    judge_endpoint: Option<String>,
    /// Judge model name
    #[arg(long)]
    judge_model: Option<String>,
    /// Environment variable holding the judge API key
    #[arg(long)]
    judge_api_key_env: Option<String>,
    /// Corpus for the perplexity scorer (defaults to the dataset)
    #[arg(long)]
    scorer_corpus: Option<PathBuf>,
    /// Fixed target label; falls back to the cyclic successor when it
    /// equals the prediction
    #[arg(long)]
    target_label: Option<String>,
    /// Seed driving document and candidate sampling
    #[arg(long)]
    seed: Option<u64>,
    /// Documents processed in parallel
    #[arg(long)]
    max_parallel: Option<usize>,
    /// Per-record JSONL output
    #[arg(long)]
    records_out: Option<PathBuf>,
    /// Report JSON output
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Per-record JSONL produced by `explain --records-out`
    #[arg(long)]
    records: PathBuf,
    /// Corpus for the perplexity scorer (omit to skip perplexity)
    #[arg(long)]
    scorer_corpus: Option<PathBuf>,
    /// Judge chat-completions endpoint; enables 1-5 quality scoring
    #[arg(long)]
    judge_endpoint: Option<String>,
    /// Judge model name
    #[arg(long)]
    judge_model: Option<String>,
    /// Environment variable holding the judge API key
    #[arg(long)]
    judge_api_key_env: Option<String>,
    /// Report JSON output
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(Args)]
struct AugmentArgs {
    /// Original labeled training JSONL
    #[arg(long)]
    train: PathBuf,
    /// Per-record JSONL produced by `explain` (only flipped rows are added)
    #[arg(long)]
    records: PathBuf,
    /// Eval sets as name=path, repeatable: --eval id=test.jsonl --eval ood=ood.jsonl
    #[arg(long = "eval", value_name = "NAME=PATH")]
    eval: Vec<String>,
    /// Accuracy table JSON output
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    hyper: TrainHyper,
}

#[derive(Args)]
struct ProbeArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Labeled training JSONL for the baseline and reversed classifiers
    #[arg(long)]
    train: PathBuf,
    /// Probe summary JSON output
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    hyper: TrainHyper,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::TrainClassifier(args) => cmd_train_classifier(&args),
        Command::MakeCorpus(args) => cmd_make_corpus(&args),
        Command::Explain(args) => cmd_explain(&args),
        Command::Evaluate(args) => cmd_evaluate(&args),
        Command::Augment(args) => cmd_augment(&args),
        Command::ProbeFaithfulness(args) => cmd_probe(&args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

/// Parses an optional string flag, attributing errors to the flag name.
fn parse_flag<T: FromStr>(flag: &Option<String>, name: &str) -> Result<Option<T>>
where
    T::Err: Display,
{
    flag.as_deref()
        .map(|raw| {
            raw.parse()
                .map_err(|e| anyhow!("--{name}: invalid value {raw:?}: {e}"))
        })
        .transpose()
}

/// Merges CLI flags over config-file entries into an [`ExperimentConfig`].
/// The probe supplies its own classifiers, so it resolves without one.
fn resolve_experiment(args: &ExperimentArgs, require_classifier: bool) -> Result<ExperimentConfig> {
    let mut s = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            Settings::new(parse_kv(&text)?)
        }
        None => Settings::empty(),
    };

    // consume every known key first so typos are reported as unknown keys
    let cfg_task: Option<Task> = s.take("task")?;
    let cfg_dataset: Option<PathBuf> = s.take("dataset")?;
    let cfg_model: Option<PathBuf> = s.take("model")?;
    let cfg_classifier_endpoint: Option<String> = s.take("classifier_endpoint")?;
    let cfg_class_names: Option<String> = s.take("class_names")?;
    let cfg_method: Option<Method> = s.take("method")?;
    let cfg_n: Option<usize> = s.take("n")?;
    let cfg_shots: Option<usize> = s.take("shots")?;
    let cfg_shot_file: Option<PathBuf> = s.take("shot_file")?;
    let cfg_attribution: Option<AttributionMethod> = s.take("attribution")?;
    let cfg_fraction: Option<f64> = s.take("fraction")?;
    let cfg_generator: Option<String> = s.take("generator")?;
    let cfg_lexicon: Option<PathBuf> = s.take("lexicon")?;
    let cfg_flip_probability: Option<f64> = s.take("flip_probability")?;
    let cfg_llm_endpoint: Option<String> = s.take("llm_endpoint")?;
    let cfg_llm_model: Option<String> = s.take("llm_model")?;
    let cfg_api_key_env: Option<String> = s.take("api_key_env")?;
    let cfg_temperature: Option<f64> = s.take("temperature")?;
    let cfg_timeout_secs: Option<u64> = s.take("timeout_secs")?;
    let cfg_judge_endpoint: Option<String> = s.take("judge_endpoint")?;
    let cfg_judge_model: Option<String> = s.take("judge_model")?;
    let cfg_judge_api_key_env: Option<String> = s.take("judge_api_key_env")?;
    let cfg_scorer_corpus: Option<PathBuf> = s.take("scorer_corpus")?;
    let cfg_target_label: Option<String> = s.take("target_label")?;
    let cfg_seed: Option<u64> = s.take("seed")?;
    let cfg_max_parallel: Option<usize> = s.take("max_parallel")?;
    let cfg_records_out: Option<PathBuf> = s.take("records_out")?;
    let cfg_report_out: Option<PathBuf> = s.take("report_out")?;
    s.finish()?;

    let task = parse_flag::<Task>(&args.task, "task")?
        .or(cfg_task)
        .context("task is required (--task or config key `task`)")?;
    let dataset = args
        .dataset
        .clone()
        .or(cfg_dataset)
        .context("dataset is required (--dataset or config key `dataset`)")?;

    let model = args.model.clone().or(cfg_model);
    let endpoint = args.classifier_endpoint.clone().or(cfg_classifier_endpoint);
    let class_names_raw = args.class_names.clone().or(cfg_class_names);
    let classifier = match (model, endpoint) {
        (Some(_), Some(_)) => bail!("give either --model or --classifier-endpoint, not both"),
        (Some(path), None) => ClassifierSource::Model(path),
        (None, Some(endpoint)) => {
            let raw = class_names_raw
                .context("--class-names is required with --classifier-endpoint")?;
            let class_names: Vec<String> = raw
                .split(',')
                .map(|c| c.trim().to_string())
                .filter(|c| !c.is_empty())
                .collect();
            ClassifierSource::Remote {
                endpoint,
                class_names,
            }
        }
        (None, None) if require_classifier => {
            bail!("a classifier is required: --model or --classifier-endpoint")
        }
        // the probe trains its own pair of classifiers
        (None, None) => ClassifierSource::Model(PathBuf::from("unused-by-probe")),
    };

    let seed = args.seed.or(cfg_seed).unwrap_or(42);
    let temperature = args.temperature.or(cfg_temperature).unwrap_or(1.0);
    let timeout = Duration::from_secs(args.timeout_secs.or(cfg_timeout_secs).unwrap_or(60));
    let max_parallel = args.max_parallel.or(cfg_max_parallel).unwrap_or(4);

    let generator_kind = args
        .generator
        .clone()
        .or(cfg_generator)
        .unwrap_or_else(|| "mock".to_string());
    let generator = match generator_kind.as_str() {
        "mock" => {
            let lexicon = args
                .lexicon
                .clone()
                .or(cfg_lexicon)
                .context("the mock generator needs --lexicon (or config key `lexicon`)")?;
            let flip = args
                .flip_probability
                .or(cfg_flip_probability)
                .unwrap_or(0.6);
            let mut g = GeneratorConfig::mock(lexicon, flip, seed);
            g.temperature = temperature;
            g.timeout = timeout;
            g.max_parallel = max_parallel;
            g
        }
        "http" => {
            let endpoint = args
                .llm_endpoint
                .clone()
                .or(cfg_llm_endpoint)
                .context("the http generator needs --llm-endpoint")?;
            let model = args
                .llm_model
                .clone()
                .or(cfg_llm_model)
                .context("the http generator needs --llm-model")?;
            let mut g = GeneratorConfig::http(endpoint, model);
            if let Some(env) = args.api_key_env.clone().or(cfg_api_key_env) {
                set_api_key_env(&mut g, env);
            }
            g.temperature = temperature;
            g.timeout = timeout;
            g.max_parallel = max_parallel;
            g
        }
        other => bail!("unknown generator {other:?}, expected mock|http"),
    };

    let judge = build_judge(
        args.judge_endpoint.clone().or(cfg_judge_endpoint),
        args.judge_model.clone().or(cfg_judge_model),
        args.judge_api_key_env.clone().or(cfg_judge_api_key_env),
        timeout,
    )?;

    let mut cfg = ExperimentConfig::new(task, dataset, classifier, generator);
    if let Some(method) = parse_flag::<Method>(&args.method, "method")?.or(cfg_method) {
        cfg.method = method;
    }
    if let Some(n) = args.n.or(cfg_n) {
        cfg.n_candidates = n;
    }
    if let Some(shots) = args.shots.or(cfg_shots) {
        cfg.shots = shots;
    }
    cfg.shot_file = args.shot_file.clone().or(cfg_shot_file);
    if let Some(attribution) =
        parse_flag::<AttributionMethod>(&args.attribution, "attribution")?.or(cfg_attribution)
    {
        cfg.attribution = attribution;
    }
    if let Some(fraction) = args.fraction.or(cfg_fraction) {
        cfg.fraction = fraction;
    }
    cfg.judge = judge;
    cfg.scorer_corpus = args.scorer_corpus.clone().or(cfg_scorer_corpus);
    cfg.target_label = args.target_label.clone().or(cfg_target_label);
    cfg.seed = seed;
    cfg.max_parallel = max_parallel;
    cfg.records_out = args.records_out.clone().or(cfg_records_out);
    cfg.report_out = args.report_out.clone().or(cfg_report_out);
    Ok(cfg)
}

fn set_api_key_env(cfg: &mut GeneratorConfig, env: String) {
    if let GeneratorKind::Http { api_key_env, .. } = &mut cfg.kind {
        *api_key_env = env;
    }
}

/// A judge needs both an endpoint and a model name; it always runs at the
/// fixed judging temperature.
fn build_judge(
    endpoint: Option<String>,
    model: Option<String>,
    api_key_env: Option<String>,
    timeout: Duration,
) -> Result<Option<GeneratorConfig>> {
    match (endpoint, model) {
        (None, None) => Ok(None),
        (Some(endpoint), Some(model)) => {
            let mut judge =
                GeneratorConfig::http(endpoint, model).with_temperature(JUDGE_TEMPERATURE);
            judge.timeout = timeout;
            if let Some(env) = api_key_env {
                set_api_key_env(&mut judge, env);
            }
            Ok(Some(judge))
        }
        _ => bail!("a judge needs both --judge-endpoint and --judge-model"),
    }
}

fn print_report_summary(report: &EvaluationReport) {
    let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
    println!("n                      {}", report.n);
    println!("flip_rate              {:.4}", report.flip_rate);
    println!("mean_distance          {:.4}", report.mean_distance);
    println!("mean_perplexity        {}", opt(report.mean_perplexity));
    println!("mean_modification_rate {}", opt(report.mean_modification_rate));
    if let Some(q) = &report.quality {
        println!(
            "quality                grammar {:.2} cohesiveness {:.2} fluency {:.2}",
            q.grammar, q.cohesiveness, q.fluency
        );
    }
}

fn cmd_train_classifier(args: &TrainClassifierArgs) -> Result<()> {
    let train = read_jsonl(&args.train)?;
    let model = fit_logistic::<f64>(&train, &args.hyper.to_config())?;
    println!("classes    {}", model.class_names().join(", "));
    println!("vocabulary {} words", model.vocabulary().len());
    println!("train accuracy {:.4}", accuracy(&model, &train)?);
    if let Some(eval) = &args.eval {
        let docs = read_jsonl(eval)?;
        println!("eval accuracy  {:.4}", accuracy(&model, &docs)?);
    }
    model.save(&args.out)?;
    println!("model written to {}", args.out.display());
    Ok(())
}

fn cmd_make_corpus(args: &MakeCorpusArgs) -> Result<()> {
    if args.train_size < 50 {
        bail!("--train-size must be at least 50, got {}", args.train_size);
    }
    let mut spec = CorpusSpec::new(args.seed, args.train_size);
    if let Some(test_size) = args.test_size {
        spec.test_size = test_size;
    }
    if let Some(ood_size) = args.ood_size {
        spec.ood_size = ood_size;
    }
    spec.lexicon_pairs = args.pairs;
    spec.spurious_token = args.spurious_token.clone();

    let corpus = make_synthetic_corpus(&spec);
    corpus.write_to_dir(&args.out_dir)?;
    println!(
        "train {} / test {} / ood {} documents, lexicon {} words",
        corpus.train.len(),
        corpus.test.len(),
        corpus.ood.len(),
        corpus.lexicon.len()
    );
    if let Some(token) = &spec.spurious_token {
        println!(
            "spurious token {token:?}: train correlation {:.3}, ood correlation {:.3}",
            label_token_correlation(&corpus.train, token, POSITIVE_LABEL),
            label_token_correlation(&corpus.ood, token, POSITIVE_LABEL),
        );
    }
    println!("written to {}", args.out_dir.display());
    Ok(())
}

fn cmd_explain(args: &ExperimentArgs) -> Result<()> {
    let cfg = resolve_experiment(args, true)?;
    let output = run_experiment(&cfg)?;
    print_report_summary(&output.report);
    if !output.failures.is_empty() {
        eprintln!("{} document(s) failed:", output.failures.len());
        for failure in &output.failures {
            eprintln!("  {}: {}", failure.id, failure.error);
        }
    }
    if let Some(path) = &cfg.records_out {
        println!("records written to {}", path.display());
    }
    if let Some(path) = &cfg.report_out {
        println!("report written to {}", path.display());
    }
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let rows = read_record_rows(&args.records)?;
    let records: Vec<CounterfactualRecord> =
        rows.iter().map(RecordRow::to_counterfactual_record).collect();

    let scorer = match &args.scorer_corpus {
        Some(path) => Some(fit_ngram::<f64>(
            &read_jsonl(path)?,
            DEFAULT_NGRAM_ORDER,
            DEFAULT_ADD_K,
        )?),
        None => None,
    };
    let judge_cfg = build_judge(
        args.judge_endpoint.clone(),
        args.judge_model.clone(),
        args.judge_api_key_env.clone(),
        Duration::from_secs(60),
    )?;
    let judge = judge_cfg
        .as_ref()
        .map(Generator::from_config)
        .transpose()?;

    let report = build_report(
        &records,
        scorer.as_ref(),
        judge.as_ref().map(|g| g as &dyn TextGenerator),
    )?;
    print_report_summary(&report);
    if let Some(path) = &args.report_out {
        let json = serde_json::to_string_pretty(&report)?;
        std::fs::write(path, json + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        println!("report written to {}", path.display());
    }
    Ok(())
}

fn cmd_augment(args: &AugmentArgs) -> Result<()> {
    if args.eval.is_empty() {
        bail!("at least one --eval name=path is required");
    }
    let train = read_jsonl(&args.train)?;
    let rows = read_record_rows(&args.records)?;
    let cfs: Vec<CounterfactualRecord> =
        rows.iter().map(RecordRow::to_counterfactual_record).collect();

    let mut eval_sets = Vec::new();
    for spec in &args.eval {
        let (name, path) = spec
            .split_once('=')
            .with_context(|| format!("--eval expects name=path, got {spec:?}"))?;
        eval_sets.push((name.trim().to_string(), read_jsonl(path.trim())?));
    }

    let outcome = augment_and_retrain::<f64>(&train, &cfs, &eval_sets, &args.hyper.to_config())?;
    println!("flipped counterfactuals added: {}", outcome.flipped_added);
    let json = serde_json::to_string_pretty(&outcome.table)?;
    println!("{json}");
    if let Some(path) = &args.out {
        std::fs::write(path, json + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        println!("table written to {}", path.display());
    }
    Ok(())
}

fn cmd_probe(args: &ProbeArgs) -> Result<()> {
    let cfg = resolve_experiment(&args.experiment, false)?;
    let train = read_jsonl(&args.train)?;
    let outcome = probe_faithfulness(&cfg, &train, &args.hyper.to_config())?;
    let summary = serde_json::json!({
        "n": outcome.baseline_report.n,
        "baseline_flip_rate": outcome.baseline_flip_rate,
        "reversed_flip_rate": outcome.reversed_flip_rate,
        "delta": outcome.delta,
    });
    let json = serde_json::to_string_pretty(&summary)?;
    println!("{json}");
    if let Some(path) = &args.out {
        std::fs::write(path, json + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        println!("summary written to {}", path.display());
    }
    Ok(())
}
