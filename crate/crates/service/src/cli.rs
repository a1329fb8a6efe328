//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 data
//! error. JSON results go to stdout, diagnostics to stderr.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use graphrule_core::dataset::{
    load_dataset, load_rules, save_rules, Dataset, DatasetFormat, LoadOptions, LoadReport, Split,
};
use graphrule_core::features::{FeatureConfig, DEFAULT_MAX_EDGES, DEFAULT_SIZE_GUARD};
use graphrule_core::learn::{RankMethod, DEFAULT_MAX_DEPTH};
use graphrule_core::parse_penman;
use graphrule_core::refine::DEFAULT_THRESHOLD;
use graphrule_core::rules::{Rule, RuleSystem};
use serde_json::{json, Value};

use crate::api::NodeRef;
use crate::config::{Mode, ServiceConfig, DEFAULT_K, DEFAULT_PORT, STATE_DIR_ENV};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "graphrule", version, about = "Graph-pattern rule systems for text classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the REST service.
    Serve(ServeArgs),
    /// Apply a rule system to graphs.
    Predict(PredictArgs),
    /// Evaluate one class of a rule system on a dataset split.
    Evaluate(EvaluateArgs),
    /// Rank subgraph features of the training split as rule suggestions.
    Suggest(SuggestArgs),
    /// Replace a regex node of a rule with high-precision labels.
    Refine(RefineArgs),
    /// Convert a corpus to JSONL rows.
    Convert(ConvertArgs),
}

#[derive(Args, Debug, Clone)]
pub struct DatasetArgs {
    /// Corpus file (jsonl, tsv or conllu).
    #[arg(long)]
    pub dataset: PathBuf,
    /// Corpus format; guessed from the extension when omitted.
    #[arg(long)]
    pub format: Option<DatasetFormat>,
    /// CoNLL-U label sidecar, one comma-separated line per sentence.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Put rows without labels in the unlabeled split.
    #[arg(long)]
    pub unlabeled: bool,
    /// Seed of the train/val split.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long, value_enum, default_value = "simple")]
    pub mode: Mode,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<DatasetFormat>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub unlabeled: bool,
    /// Directory holding rules.json and annotations.json.
    #[arg(long, env = STATE_DIR_ENV, default_value = "graphrule-state")]
    pub state_dir: PathBuf,
    /// Rules file; defaults to rules.json in the state directory.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = DEFAULT_PORT)]
    pub port: u16,
    /// Largest number of edges in a suggested feature.
    #[arg(long, default_value_t = DEFAULT_MAX_EDGES)]
    pub n_edges: usize,
    #[arg(short = 'k', long, default_value_t = DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl ServeArgs {
    pub fn config(&self) -> ServiceConfig {
        let mut c = ServiceConfig::new(self.mode, &self.state_dir);
        c.dataset_path = self.dataset.clone();
        c.dataset_format = self.format;
        c.labels_path = self.labels.clone();
        c.unlabeled = self.unlabeled || self.mode == Mode::Advanced;
        c.rules_path = self.rules.clone();
        c.port = self.port;
        c.n_edges = self.n_edges;
        c.suggestion_k = self.k;
        c.refine_threshold = self.threshold;
        c.max_depth = self.max_depth;
        c.seed = self.seed;
        c
    }
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub rules: PathBuf,
    /// JSONL with one PENMAN string, or an object with a "penman" field, per line.
    #[arg(long)]
    pub input: PathBuf,
    /// Output JSONL; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub rules: PathBuf,
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long)]
    pub class: String,
    #[arg(long, default_value = "val")]
    pub split: Split,
}

#[derive(Args, Debug)]
pub struct SuggestArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long)]
    pub class: String,
    #[arg(short = 'k', long, default_value_t = DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value = "gini")]
    pub method: RankMethod,
    #[arg(long, default_value_t = DEFAULT_MAX_EDGES)]
    pub n_edges: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
    pub max_depth: usize,
}

#[derive(Args, Debug)]
pub struct RefineArgs {
    #[arg(long)]
    pub rules: PathBuf,
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long)]
    pub class: String,
    #[arg(long)]
    pub rule_index: usize,
    #[arg(long, default_value_t = 0)]
    pub clause_index: usize,
    /// Pattern node: a u_k variable of the clause's PENMAN text or a node id.
    #[arg(long)]
    pub node: String,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Write the refined rule back to the rules file.
    #[arg(long)]
    pub apply: bool,
}

#[derive(Args, Debug)]
pub struct ConvertArgs {
    #[arg(long)]
    pub from: DatasetFormat,
    #[arg(long, default_value = "jsonl")]
    pub to: DatasetFormat,
    /// Input file; stdin when omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn data(e: impl std::fmt::Display) -> Self {
        CliError::Data(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "error: {m}"),
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(cli.command, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "{e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Serve(args) => serve(args),
        Command::Predict(args) => predict(args, stdout),
        Command::Evaluate(args) => evaluate(args, stdout, stderr),
        Command::Suggest(args) => suggest(args, stdout, stderr),
        Command::Refine(args) => refine(args, stdout, stderr),
        Command::Convert(args) => convert(args, stdout, stderr),
    }
}

fn serve(args: ServeArgs) -> Result<(), CliError> {
    let config = args.config();
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let runtime = tokio::runtime::Runtime::new().map_err(CliError::data)?;
    runtime
        .block_on(crate::serve(config, &args.host))
        .map_err(|e| CliError::Data(format!("{e:#}")))
}

fn print_json(stdout: &mut dyn Write, value: &Value) -> Result<(), CliError> {
    writeln!(stdout, "{}", serde_json::to_string_pretty(value).expect("json")).map_err(CliError::data)
}

fn read_rules(path: &Path) -> Result<RuleSystem, CliError> {
    if !path.is_file() {
        return Err(CliError::Data(format!("rules file {} not found", path.display())));
    }
    load_rules(path).map_err(CliError::data)
}

fn report_load(report: &LoadReport, stderr: &mut dyn Write) {
    for e in &report.errors {
        let _ = writeln!(stderr, "warning: skipped {e}");
    }
}

fn read_dataset(args: &DatasetArgs, stderr: &mut dyn Write) -> Result<Dataset, CliError> {
    let format = match args.format.or_else(|| DatasetFormat::from_path(&args.dataset)) {
        Some(f) => f,
        None => {
            return Err(CliError::Usage(format!(
                "cannot tell the format of {}; pass --format",
                args.dataset.display()
            )))
        }
    };
    let options = LoadOptions {
        format,
        seed: args.seed,
        unlabeled: args.unlabeled,
        labels_path: args.labels.clone(),
    };
    let (d, report) = load_dataset(&args.dataset, &options).map_err(CliError::data)?;
    report_load(&report, stderr);
    Ok(d)
}

fn predict(args: PredictArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let rs = read_rules(&args.rules)?;
    let text = std::fs::read_to_string(&args.input)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.input.display())))?;
    let mut out = String::new();
    let mut count = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line)
            .map_err(|e| CliError::Data(format!("line {}: invalid JSON: {e}", i + 1)))?;
        let penman = match &value {
            Value::String(s) => s.as_str(),
            Value::Object(o) => o.get("penman").and_then(Value::as_str).ok_or_else(|| {
                CliError::Data(format!("line {}: object has no \"penman\" string", i + 1))
            })?,
            _ => return Err(CliError::Data(format!("line {}: expected a string or an object", i + 1))),
        };
        let g = parse_penman(penman).map_err(|e| CliError::Data(format!("line {}: {e}", i + 1)))?;
        let labels: BTreeSet<String> = rs.predict(&g);
        out.push_str(&json!({"line": i + 1, "labels": labels}).to_string());
        out.push('\n');
        count += 1;
    }
    match &args.output {
        Some(path) => {
            std::fs::write(path, out).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            print_json(stdout, &json!({"rows": count, "output": path}))
        }
        None => stdout.write_all(out.as_bytes()).map_err(CliError::data),
    }
}

fn evaluate(args: EvaluateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let rs = read_rules(&args.rules)?;
    let d = read_dataset(&args.data, stderr)?;
    let report = d.evaluate(&rs, &args.class, args.split).map_err(CliError::data)?;
    print_json(stdout, &serde_json::to_value(report).expect("report serializes"))
}

fn suggest(args: SuggestArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let d = read_dataset(&args.data, stderr)?;
    let config = FeatureConfig {
        max_edges: args.n_edges,
        size_guard: DEFAULT_SIZE_GUARD.max(args.n_edges),
    };
    let table = d.training_table(config).map_err(CliError::data)?;
    let suggestions = d
        .suggest(&table, &args.class, args.k, args.method, args.max_depth)
        .map_err(CliError::data)?;
    print_json(
        stdout,
        &json!({"class": args.class, "method": args.method, "suggestions": suggestions}),
    )
}

fn refine(args: RefineArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&args.threshold) {
        return Err(CliError::Usage(format!("threshold must be within [0, 1], got {}", args.threshold)));
    }
    let mut rs = read_rules(&args.rules)?;
    let d = read_dataset(&args.data, stderr)?;
    let rule = rs.rule(&args.class, args.rule_index).map_err(CliError::data)?;
    let clause = rule
        .clauses()
        .get(args.clause_index)
        .ok_or_else(|| CliError::Data(format!("rule has no clause {}", args.clause_index)))?;
    let node = NodeRef::Name(args.node.clone())
        .resolve(&clause.pattern)
        .ok_or_else(|| CliError::Data(format!("pattern has no node {}", args.node)))?;
    let result = d
        .refine(&rs, &args.class, args.rule_index, args.clause_index, node, args.threshold)
        .map_err(CliError::data)?;
    let mut v = serde_json::to_value(&result).expect("result serializes");
    v["applied"] = json!(args.apply);
    if args.apply {
        let mut clauses = rule.clauses().to_vec();
        clauses[args.clause_index].pattern = result.refined_pattern.clone();
        let refined = Rule::new(args.class.clone(), clauses).map_err(CliError::data)?;
        rs.replace_rule(&args.class, args.rule_index, refined)
            .map_err(CliError::data)?;
        save_rules(&args.rules, &rs).map_err(CliError::data)?;
    }
    print_json(stdout, &v)
}

fn convert(args: ConvertArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    if args.to != DatasetFormat::Jsonl {
        return Err(CliError::Usage("only --to jsonl is supported".to_owned()));
    }
    let text = match &args.input {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
        None => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s).map_err(CliError::data)?;
            s
        }
    };
    let sidecar = match &args.labels {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let (d, report) = graphrule_core::dataset::parse_dataset(&text, sidecar.as_deref(), &LoadOptions::new(args.from))
        .map_err(CliError::data)?;
    report_load(&report, stderr);
    let out: String = d
        .rows()
        .iter()
        .map(|r| json!({"text": r.text, "penman": r.penman, "labels": r.labels}).to_string() + "\n")
        .collect();
    match &args.output {
        Some(path) => {
            std::fs::write(path, out).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            print_json(
                stdout,
                &json!({"rows": d.len(), "skipped": report.errors.len(), "output": path}),
            )
        }
        None => stdout.write_all(out.as_bytes()).map_err(CliError::data),
    }
}
