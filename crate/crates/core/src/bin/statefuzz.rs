use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use statefuzz::campaign::{self, CampaignConfig};
use statefuzz::grammar::{self, FixtureClient, LlmClient, LlmSettings, RecordingClient};
use statefuzz::harness::{self, VarId};
use statefuzz::message::{load_corpus, load_grammar, save_grammar};
use statefuzz::var_miner::{self, FilterConfig};
use statefuzz::{Seed, StateModel, Target};

/// Environment variable holding the API token for live grammar learning.
const TOKEN_ENV: &str = "STATEFUZZ_LLM_TOKEN";

#[derive(Parser)]
#[command(
    name = "statefuzz",
    version,
    about = "Stateful protocol greybox fuzzer"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a fuzzing campaign.
    Fuzz(FuzzArgs),
    /// Run saved seeds and print their outcomes.
    Replay(ReplayArgs),
    /// Calibrate, filter and report candidate state variables.
    AnalyzeVars(AnalyzeArgs),
    /// Learn a field grammar for the seed messages from a language model.
    LearnGrammar(LearnArgs),
    /// Score a learned field list against ground truth.
    EvalGrammar(EvalArgs),
    /// Rebuild the state model of a corpus and write it as DOT.
    ExportStateModel(ExportArgs),
}

#[derive(Args)]
struct StateVarArgs {
    /// Variable report from analyze-vars; its selection is used.
    #[arg(long)]
    vars: Option<PathBuf>,
    /// Comma-separated state variable names (overrides --vars).
    #[arg(long, value_delimiter = ',')]
    state_vars: Vec<String>,
}

#[derive(Args)]
struct FuzzArgs {
    #[arg(long)]
    target: String,
    /// Corpus file or directory of corpus files.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    grammar: Option<PathBuf>,
    #[command(flatten)]
    vars: StateVarArgs,
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    execs: Option<u64>,
    /// Wall-clock budget in seconds; stats then carry real timings.
    #[arg(long)]
    wall_secs: Option<f64>,
    #[arg(long)]
    no_state_feedback: bool,
    #[arg(long)]
    no_field_mutations: bool,
    /// JSON campaign config applied before the flags above.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    target: String,
    /// Corpus file or directory to replay.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    vars: StateVarArgs,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    target: String,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    execs: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hit threshold below which values are pruned.
    #[arg(long)]
    hit_threshold: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LearnArgs {
    /// Protocol name given to the model.
    #[arg(long)]
    protocol: String,
    #[arg(long)]
    corpus: PathBuf,
    /// Replay recorded transcripts from this directory instead of calling out.
    #[arg(long)]
    offline: Option<PathBuf>,
    /// Save every reply of this session as transcripts in this directory.
    #[arg(long)]
    record: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    attempts: u32,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    hypothesis: PathBuf,
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    target: String,
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    vars: StateVarArgs,
    #[arg(long)]
    out: PathBuf,
    /// Also write vertex and edge statistics as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

type Res<T> = Result<T, Failure>;

trait Classify<T> {
    fn config(self) -> Res<T>;
    fn runtime(self) -> Res<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config(self) -> Res<T> {
        self.map_err(|e| Failure::Config(e.into()))
    }
    fn runtime(self) -> Res<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Fuzz(a) => fuzz(a),
        Cmd::Replay(a) => replay(a),
        Cmd::AnalyzeVars(a) => analyze_vars(a),
        Cmd::LearnGrammar(a) => learn(a),
        Cmd::EvalGrammar(a) => eval(a),
        Cmd::ExportStateModel(a) => export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn print_json(v: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(v).expect("json value serializes")
    );
}

fn target(name: &str) -> Res<Box<dyn Target>> {
    harness::target_by_name(name).ok_or_else(|| {
        Failure::Config(anyhow!(
            "unknown target {name:?} (known: {})",
            harness::target_names().join(", ")
        ))
    })
}

fn corpus(path: &Path) -> Res<Vec<Seed>> {
    let seeds = load_corpus(path)
        .with_context(|| format!("loading corpus {}", path.display()))
        .config()?;
    if seeds.is_empty() {
        return Err(Failure::Config(anyhow!(
            "corpus {} holds no seeds",
            path.display()
        )));
    }
    Ok(seeds)
}

#[derive(Deserialize)]
struct Selection {
    selected: Vec<String>,
}

/// Names from `--state-vars`, else the selection of a `--vars` report.
fn state_var_names(a: &StateVarArgs) -> Res<Vec<String>> {
    if !a.state_vars.is_empty() {
        return Ok(a.state_vars.clone());
    }
    let Some(path) = &a.vars else {
        return Ok(Vec::new());
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .config()?;
    let sel: Selection = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .config()?;
    if sel.selected.is_empty() {
        return Err(Failure::Config(anyhow!(
            "{} selects no variables",
            path.display()
        )));
    }
    Ok(sel.selected)
}

/// Resolved ids; without any names every declared variable is used.
fn selection(t: &dyn Target, a: &StateVarArgs) -> Res<Vec<VarId>> {
    let names = state_var_names(a)?;
    if names.is_empty() {
        return Ok((0..t.variables().len()).collect());
    }
    harness::resolve_vars(t, &names).map_err(|e| Failure::Config(anyhow!(e)))
}

fn fuzz(a: FuzzArgs) -> Res<()> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))
                .config()?;
            serde_json::from_str::<CampaignConfig>(&text)
                .with_context(|| format!("parsing {}", p.display()))
                .config()?
        }
        None => CampaignConfig::default(),
    };
    cfg.target = a.target.clone();
    cfg.mutation.epsilon = a.epsilon;
    cfg.mutation.rng_seed = a.seed;
    if a.execs.is_some() || a.wall_secs.is_some() {
        cfg.max_execs = a.execs;
        cfg.max_wall_secs = a.wall_secs;
    }
    if a.no_state_feedback {
        cfg.state_feedback = false;
    }
    if a.no_field_mutations {
        cfg.field_mutations = false;
    }
    let names = state_var_names(&a.vars)?;
    if !names.is_empty() {
        cfg.state_vars = names;
    }
    cfg.validate().config()?;
    let seeds = corpus(&a.corpus)?;
    let grammar = match &a.grammar {
        Some(p) => Some(
            load_grammar(p)
                .with_context(|| format!("loading grammar {}", p.display()))
                .config()?,
        ),
        None => None,
    };
    let result = campaign::run_campaign(&cfg, seeds, grammar).map_err(|e| match e {
        campaign::CampaignError::Config(c) => Failure::Config(c.into()),
        other => Failure::Runtime(other.into()),
    })?;
    result.write_outputs(&a.out).runtime()?;
    let stats = result.model.stats();
    print_json(&serde_json::json!({
        "target": cfg.target,
        "state_vars": result.state_vars,
        "execs": result.execs,
        "execs_per_sec": result.execs_per_sec(),
        "corpus": result.corpus.len(),
        "vertices": stats.n_vertices,
        "edges": stats.n_edges,
        "hangs": result.hangs,
        "crashes": result.crashes.iter().map(|c| serde_json::json!({
            "site": c.site,
            "exec_index": c.exec_index,
        })).collect::<Vec<_>>(),
        "out": a.out,
    }));
    Ok(())
}

fn replay(a: ReplayArgs) -> Res<()> {
    let t = target(&a.target)?;
    let sel = selection(&*t, &a.vars)?;
    let seeds = corpus(&a.input)?;
    let schema = harness::schema_for(&*t, &sel);
    let mut ex = harness::Executor::new(t, sel);
    for (i, s) in seeds.iter().enumerate() {
        let out = ex.run(&s.messages);
        let verdict = match &out.verdict {
            statefuzz::Verdict::Ok => "ok".to_string(),
            statefuzz::Verdict::Crash(site) => format!("crash:{site}"),
            statefuzz::Verdict::Hang => "hang".to_string(),
        };
        let states: Vec<String> = out.state_seq.iter().map(|s| schema.render(s)).collect();
        println!(
            "{}",
            serde_json::json!({"seed": i, "verdict": verdict, "states": states})
        );
    }
    Ok(())
}

fn analyze_vars(a: AnalyzeArgs) -> Res<()> {
    let t = target(&a.target)?;
    let seeds = corpus(&a.corpus)?;
    let mut cfg = FilterConfig::default();
    if let Some(h) = a.hit_threshold {
        cfg.hit_threshold = h;
    }
    let traces = var_miner::calibrate(t, &seeds, a.execs, a.seed).config()?;
    let selected = var_miner::filter_vars(&traces, &cfg);
    let report = var_miner::emit_report(&traces, &selected, &cfg, &a.out).runtime()?;
    print_json(&serde_json::json!({"selected": report.selected, "out": a.out}));
    Ok(())
}

fn live_client(settings: LlmSettings) -> Res<Box<dyn LlmClient>> {
    #[cfg(feature = "live-llm")]
    {
        Ok(Box::new(grammar::HttpClient::new(settings)))
    }
    #[cfg(not(feature = "live-llm"))]
    {
        let _ = settings;
        Err(Failure::Config(anyhow!(
            "built without the live-llm feature; pass --offline DIR"
        )))
    }
}

fn learn(a: LearnArgs) -> Res<()> {
    let seeds = corpus(&a.corpus)?;
    let mut client: Box<dyn LlmClient> = match &a.offline {
        Some(dir) => Box::new(
            FixtureClient::from_dir(dir)
                .with_context(|| format!("loading transcripts from {}", dir.display()))
                .config()?,
        ),
        None => {
            let token = std::env::var(TOKEN_ENV)
                .map_err(|_| Failure::Config(anyhow!("{TOKEN_ENV} is not set")))?;
            let mut settings = LlmSettings {
                token: Some(token),
                ..LlmSettings::default()
            };
            if let Some(e) = &a.endpoint {
                settings.endpoint = e.clone();
            }
            if let Some(m) = &a.model {
                settings.model = m.clone();
            }
            live_client(settings)?
        }
    };
    let g = match &a.record {
        Some(dir) => {
            let mut rec = RecordingClient::new(&mut *client);
            let g = grammar::learn_grammar(&mut rec, &a.protocol, &seeds, a.attempts);
            rec.save(dir).runtime()?;
            g
        }
        None => grammar::learn_grammar(&mut *client, &a.protocol, &seeds, a.attempts),
    };
    save_grammar(&g, &a.out).runtime()?;
    print_json(&serde_json::json!({
        "protocol": g.protocol,
        "fields": g.fields.len(),
        "out": a.out,
    }));
    Ok(())
}

fn eval(a: EvalArgs) -> Res<()> {
    let load = |p: &PathBuf| {
        load_grammar(p)
            .with_context(|| format!("loading {}", p.display()))
            .config()
    };
    let hyp = load(&a.hypothesis)?;
    let truth = load(&a.truth)?;
    let report = grammar::classify_fields(&hyp.fields, &truth.fields).config()?;
    let acc = grammar::accuracy(&report);
    print_json(&serde_json::json!({
        "report": report,
        "exact_acc": acc.exact_acc,
        "multi_acc": acc.multi_acc,
    }));
    Ok(())
}

fn export(a: ExportArgs) -> Res<()> {
    let t = target(&a.target)?;
    let sel = selection(&*t, &a.vars)?;
    let seeds = corpus(&a.corpus)?;
    let mut ex = harness::Executor::new(t, sel);
    let mut model = StateModel::new(ex.initial_state()).with_schema(ex.schema());
    for s in &seeds {
        let out = ex.run(&s.messages);
        model.update(&out.state_seq);
    }
    model.export_dot(&a.out).runtime()?;
    if let Some(p) = &a.json {
        model.export_stats_json(p).runtime()?;
    }
    let stats = model.stats();
    print_json(&serde_json::json!({
        "vertices": stats.n_vertices,
        "edges": stats.n_edges,
        "out": a.out,
    }));
    Ok(())
}
