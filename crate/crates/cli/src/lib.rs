//! The `ifjudge` command line: ingest documents, generate instructions and
//! answers, score answers, serve annotation, meta-evaluate and report.
//!
//! Exit codes: 0 on success, 1 on a domain error (bad data, failed model
//! calls), 2 on a usage error (bad flags or config).

pub mod config;
pub mod score;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ifjudge_annotate::AnnotationService;
use ifjudge_core::dataset::{read_records, Record};
use ifjudge_core::meta::{meta_evaluate, render_report, MetaEvalConfig, MetaEvalReport, ReportFormat};
use ifjudge_core::score::{read_scores, ScoreWriter};
use ifjudge_core::{load_dataset, sample_documents, save_dataset, CorpusText, Dataset, DatasetError};
use ifjudge_gateway::{build_gateways, ExternalScorer, Gateway};
use ifjudge_methods::{generate_answers, generate_instructions, FewShotExample, GenerationDefaults, Templates};

pub use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration: exit 2.
    Usage(String),
    /// Bad data or a failed step: exit 1.
    Domain(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Domain(e.into())
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "ifjudge", version, about = "Instruction-following evaluation pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Method to run (repeatable).
    #[arg(long = "method", global = true)]
    pub methods: Vec<String>,
    /// Backend id from the config (repeatable); all configured ones if absent.
    #[arg(long = "backend", global = true)]
    pub backends: Vec<String>,
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    /// Monte Carlo runs for the model table (0 skips it).
    #[arg(long, global = true)]
    pub runs: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Text,
    Markdown,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample documents from a corpus, or merge a ratings log into a dataset.
    Ingest {
        /// JSONL corpus of `{"source": .., "text": ..}` lines.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Number of documents to sample.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        min_words: usize,
        #[arg(long, default_value_t = usize::MAX)]
        max_words: usize,
        /// Annotation log to merge into the dataset.
        #[arg(long)]
        ratings: Option<PathBuf>,
    },
    /// Generate 3–5 instructions for every document that has none.
    GenInstructions,
    /// Generate one answer per backend for every instruction.
    GenAnswers,
    /// Score answers with the selected methods; resumes a partial output.
    Score {
        #[arg(long)]
        references: Option<PathBuf>,
        #[arg(long)]
        examples: Option<PathBuf>,
    },
    /// Compare method scores with the human ratings.
    MetaEval {
        /// Score files (repeatable).
        #[arg(long = "scores", required = true)]
        scores: Vec<PathBuf>,
    },
    /// Render a meta-evaluation report as a table.
    Report {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Serve annotation tasks over HTTP.
    ServeAnnotation {
        /// Append-only ratings log.
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Directory with the browser client, served under /ui.
        #[arg(long)]
        ui: Option<PathBuf>,
    },
    /// Check a dataset file.
    Validate { path: Option<PathBuf> },
}

/// Parse `args` (including the program name) and run. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Domain(e)) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

/// Config file values with flags applied.
struct Settings {
    config: RunConfig,
    backends: Vec<String>,
    methods: Vec<String>,
}

impl Settings {
    fn new(global: &GlobalArgs) -> Result<Self> {
        let mut config = match &global.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if global.dataset.is_some() {
            config.dataset = global.dataset.clone();
        }
        if global.out.is_some() {
            config.out = global.out.clone();
        }
        if global.seed.is_some() {
            config.seed = global.seed;
        }
        if global.parallelism.is_some() {
            config.parallelism = global.parallelism;
        }
        if global.runs.is_some() {
            config.runs = global.runs;
        }
        if let Some(seed) = config.seed {
            config.judge.seed = seed;
        }
        if config.parallelism == Some(0) {
            return Err(usage("--parallelism must be positive"));
        }
        let methods = if global.methods.is_empty() {
            config.methods.clone()
        } else {
            global.methods.clone()
        };
        Ok(Self {
            backends: global.backends.clone(),
            methods,
            config,
        })
    }

    fn dataset_path(&self) -> Result<&Path> {
        self.config
            .dataset
            .as_deref()
            .ok_or_else(|| usage("no dataset given; pass --dataset or set \"dataset\" in the config"))
    }

    fn out_path(&self) -> Result<&Path> {
        self.config
            .out
            .as_deref()
            .ok_or_else(|| usage("no output path given; pass --out or set \"out\" in the config"))
    }

    fn seed(&self, step: &str) -> Result<u64> {
        self.config
            .seed
            .ok_or_else(|| usage(format!("{step} is stochastic and needs --seed or \"seed\" in the config")))
    }

    fn parallelism(&self) -> usize {
        self.config.parallelism.unwrap_or(ifjudge_gateway::DEFAULT_PARALLELISM)
    }

    fn dataset(&self) -> Result<Dataset> {
        let path = self.dataset_path()?;
        load_dataset(path)
            .with_context(|| format!("loading {}", path.display()))
            .map_err(CliError::Domain)
    }

    fn templates(&self) -> Result<Templates> {
        Ok(match &self.config.templates {
            Some(dir) => Templates::with_overrides(dir)?,
            None => Templates::builtin(),
        })
    }

    fn gateways(&self) -> Result<Vec<Arc<Gateway>>> {
        let descriptors = self.config.select_backends(&self.backends)?;
        let mut built = build_gateways(&descriptors, self.config.cache.as_deref())?;
        let limit = self.parallelism();
        Ok(descriptors
            .iter()
            .filter_map(|d| built.remove(&d.backend_id))
            .map(|g| match Arc::try_unwrap(g) {
                Ok(g) => Arc::new(g.with_parallelism(limit)),
                Err(shared) => shared,
            })
            .collect())
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(self.parallelism())
            .build()?)
    }
}

fn execute(cli: Cli) -> Result<()> {
    let settings = Settings::new(&cli.global)?;
    match cli.command {
        Command::Ingest {
            corpus,
            n,
            min_words,
            max_words,
            ratings,
        } => ingest(&settings, corpus, n, min_words, max_words, ratings),
        Command::GenInstructions => gen_instructions(&settings),
        Command::GenAnswers => gen_answers(&settings),
        Command::Score { references, examples } => score_cmd(&settings, references, examples),
        Command::MetaEval { scores } => meta_eval(&settings, &scores),
        Command::Report { input, format } => report(&settings, &input, format),
        Command::ServeAnnotation { log, addr, ui } => serve_annotation(&settings, &log, addr, ui),
        Command::Validate { path } => validate(&settings, path),
    }
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}: line {}", path.display(), i + 1))?);
    }
    Ok(out)
}

fn ingest(
    s: &Settings,
    corpus: Option<PathBuf>,
    n: Option<usize>,
    min_words: usize,
    max_words: usize,
    ratings: Option<PathBuf>,
) -> Result<()> {
    let out = s.out_path()?;
    match (corpus, ratings) {
        (Some(corpus), None) => {
            let n = n.ok_or_else(|| usage("--corpus needs --n"))?;
            let seed = s.seed("document sampling")?;
            let texts: Vec<CorpusText> = read_jsonl(&corpus)?;
            let docs = sample_documents(&texts, n, min_words, max_words, seed)?;
            let base = match &s.config.dataset {
                Some(p) if p.exists() => s.dataset()?.to_builder(),
                _ => Dataset::builder(),
            };
            let dataset = base
                .provenance("sampling_seed", seed.into())
                .documents(docs)
                .build()?;
            save_dataset(&dataset, out)?;
            eprintln!("wrote {} documents to {}", dataset.counts().0, out.display());
        }
        (None, Some(log)) => {
            let dataset = s.dataset()?;
            let file = File::open(&log).with_context(|| format!("opening {}", log.display()))?;
            let mut builder = dataset.to_builder();
            let (mut added, mut skipped) = (0, 0);
            for record in read_records(BufReader::new(file))? {
                let Record::Rating(r) = record else {
                    return Err(anyhow!("{}: only rating records can be merged", log.display()).into());
                };
                if dataset.ratings_for(&r.answer_id).any(|x| x.annotator_id == r.annotator_id) {
                    skipped += 1;
                } else {
                    builder = builder.rating(r);
                    added += 1;
                }
            }
            save_dataset(&builder.build()?, out)?;
            eprintln!("merged {added} ratings ({skipped} already present) into {}", out.display());
        }
        _ => return Err(usage("ingest needs exactly one of --corpus or --ratings")),
    }
    Ok(())
}

fn single_gateway(s: &Settings) -> Result<Arc<Gateway>> {
    let mut gateways = s.gateways()?;
    if gateways.len() != 1 {
        return Err(usage(format!(
            "expected exactly one backend, got {}; select one with --backend",
            gateways.len()
        )));
    }
    Ok(gateways.remove(0))
}

fn report_failures(failures: &[String], total: usize) -> Result<()> {
    for f in failures {
        eprintln!("failed: {f}");
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(anyhow!("{} of {total} items failed; rerun to retry them", failures.len()).into())
    }
}

fn gen_instructions(s: &Settings) -> Result<()> {
    let dataset = s.dataset()?;
    let out = s.out_path()?;
    let gateway = single_gateway(s)?;
    let templates = s.templates()?;
    let params = GenerationDefaults::default().instruction_params;
    let todo: Vec<_> = dataset
        .documents()
        .filter(|d| !dataset.instructions().any(|i| i.document_id == d.id))
        .collect();
    let results: Vec<_> = s.pool()?.install(|| {
        use rayon::prelude::*;
        todo.par_iter()
            .map(|d| generate_instructions(d, &gateway, &templates, &params))
            .collect()
    });
    let mut builder = dataset.to_builder();
    let mut failures = Vec::new();
    for (doc, result) in todo.iter().zip(results) {
        match result {
            Ok(instructions) => builder = builder.instructions(instructions),
            Err(e) => failures.push(format!("document '{}': {e}", doc.id)),
        }
    }
    let dataset = builder.build()?;
    save_dataset(&dataset, out)?;
    eprintln!("{} instructions in {}", dataset.counts().1, out.display());
    report_failures(&failures, todo.len())
}

fn gen_answers(s: &Settings) -> Result<()> {
    let dataset = s.dataset()?;
    let out = s.out_path()?;
    let gateways = s.gateways()?;
    if gateways.is_empty() {
        return Err(usage("no backends configured"));
    }
    let templates = s.templates()?;
    let params = GenerationDefaults::default().answer_params;
    let mut todo = Vec::new();
    for instr in dataset.instructions() {
        let missing: Vec<Arc<Gateway>> = gateways
            .iter()
            .filter(|g| dataset.answer(&format!("{}:{}", instr.id, g.backend_id())).is_none())
            .cloned()
            .collect();
        if !missing.is_empty() {
            let doc = dataset
                .document(&instr.document_id)
                .ok_or_else(|| anyhow!("instruction '{}' has no document", instr.id))?;
            todo.push((doc, instr, missing));
        }
    }
    let results: Vec<_> = s.pool()?.install(|| {
        use rayon::prelude::*;
        todo.par_iter()
            .map(|(doc, instr, gs)| generate_answers(doc, instr, gs, &templates, &params))
            .collect()
    });
    let mut builder = dataset.to_builder();
    let mut failures = Vec::new();
    let mut total = 0;
    for ((_, instr, gs), result) in todo.iter().zip(results) {
        total += gs.len();
        match result {
            Ok((answers, errors)) => {
                builder = builder.answers(answers.into_iter().map(|mut a| {
                    if let Some(g) = gs.iter().find(|g| g.backend_id() == a.generator_id) {
                        a.lm_family = g.lm_family().to_owned();
                    }
                    a
                }));
                failures.extend(
                    errors
                        .into_iter()
                        .map(|(b, e)| format!("instruction '{}', backend '{b}': {e}", instr.id)),
                );
            }
            Err(e) => failures.push(format!("instruction '{}': {e}", instr.id)),
        }
    }
    let dataset = builder.build()?;
    save_dataset(&dataset, out)?;
    eprintln!("{} answers in {}", dataset.counts().2, out.display());
    report_failures(&failures, total)
}

fn score_cmd(s: &Settings, references: Option<PathBuf>, examples: Option<PathBuf>) -> Result<()> {
    let dataset = s.dataset()?;
    let out = s.out_path()?;
    let scorers = s.config.external.as_ref().map(|e| e.scorers.clone()).unwrap_or_default();
    let llm = s.methods.iter().any(|m| {
        matches!(m.as_str(), "constrained_softmax" | "multi_llm") || m.starts_with("self_agreement")
    });
    let gateways = if llm { s.gateways()? } else { Vec::new() };
    let methods = score::parse_methods(&s.methods, &gateways, &scorers).map_err(CliError::Usage)?;
    if llm {
        s.seed("LLM scoring")?;
    }
    let references = references.or_else(|| s.config.references.clone());
    let reference_set = score::load_references(references.as_deref(), &dataset, &s.config.reference_generators)?;
    let examples = score::load_examples(examples.as_deref().or(s.config.examples.as_deref()))?;
    let dataset_examples = FewShotExample::from_dataset(&dataset);
    let external = match &s.config.external {
        Some(e) => Some(ExternalScorer::new(e.endpoint.clone(), e.scorers.iter().map(|x| x.id.clone()))?),
        None => None,
    };
    let templates = s.templates()?;
    let scorer = score::Scorer {
        dataset: &dataset,
        templates: &templates,
        judge: &s.config.judge,
        examples: &examples,
        dataset_examples: &dataset_examples,
        references: &reference_set,
        external: external.as_ref(),
    };
    let mut writer = ScoreWriter::open(out)?;
    let summary = score::run_scoring(&scorer, &methods, &mut writer, &s.pool()?)?;
    eprintln!(
        "wrote {} scores to {} ({} answer-method items already done)",
        summary.written,
        out.display(),
        summary.skipped
    );
    report_failures(&summary.failures, dataset.counts().2 * methods.len() - summary.skipped)
}

/// Families for `name@backend` methods from the configured backends.
fn method_families(s: &Settings, report_ids: impl Iterator<Item = String>) -> BTreeMap<String, String> {
    let mut families = BTreeMap::new();
    for id in report_ids {
        if let Some((_, backend)) = id.rsplit_once('@') {
            if let Some(d) = s.config.backends.iter().find(|d| d.backend_id == backend) {
                if !d.lm_family.is_empty() {
                    families.insert(id.clone(), d.lm_family.clone());
                }
            }
        }
    }
    families.extend(s.config.meta.method_families.clone());
    families
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?);
            w.write_all(text.as_bytes())?;
            w.flush()?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn meta_eval(s: &Settings, score_files: &[PathBuf]) -> Result<()> {
    let dataset = s.dataset()?;
    let seed = s.seed("meta-evaluation")?;
    let mut scores = Vec::new();
    for path in score_files {
        scores.extend(read_scores(path).with_context(|| format!("reading {}", path.display()))?);
    }
    let bases = scores
        .iter()
        .map(|sc| match sc.method_id.rsplit_once(':') {
            Some((b, "fi" | "hw")) => b.to_owned(),
            _ => sc.method_id.clone(),
        })
        .collect::<std::collections::BTreeSet<_>>();
    let config = MetaEvalConfig {
        seed,
        bootstrap_resamples: s.config.meta.bootstrap_resamples,
        human_aggregation: s.config.meta.human_aggregation,
        method_families: method_families(s, bases.into_iter()),
        model_table_runs: s.config.runs.unwrap_or(100_000),
    };
    let report = meta_evaluate(&dataset, &scores, &config)?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    write_output(s.config.out.as_deref(), &json)
}

fn report(s: &Settings, input: &Path, format: Format) -> Result<()> {
    let text = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let report: MetaEvalReport =
        serde_json::from_str(&text).with_context(|| format!("{} is not a meta-evaluation report", input.display()))?;
    let format = match format {
        Format::Text => ReportFormat::Text,
        Format::Markdown => ReportFormat::Markdown,
    };
    write_output(s.config.out.as_deref(), &render_report(&report, format))
}

fn serve_annotation(s: &Settings, log: &Path, addr: SocketAddr, ui: Option<PathBuf>) -> Result<()> {
    let service = Arc::new(AnnotationService::open(s.dataset()?, log)?);
    let runtime = tokio::runtime::Runtime::new()?;
    eprintln!("serving annotation tasks on http://{addr}");
    runtime.block_on(ifjudge_annotate::serve(service, addr, ui))?;
    Ok(())
}

fn validate(s: &Settings, path: Option<PathBuf>) -> Result<()> {
    let path = match path {
        Some(p) => p,
        None => s.dataset_path()?.to_path_buf(),
    };
    match load_dataset(&path) {
        Ok(d) => {
            let (docs, instrs, answers, ratings) = d.counts();
            println!("{}: ok ({docs} documents, {instrs} instructions, {answers} answers, {ratings} ratings)", path.display());
            Ok(())
        }
        Err(e @ DatasetError::Parse { .. }) => Err(anyhow!("{}:{e}", path.display()).into()),
        Err(e) => Err(anyhow!("{}: {e}", path.display()).into()),
    }
}
