//! The fuzzing loop: state selection, region split, deterministic and stacked
//! mutation, execution, feedback and corpus/crash bookkeeping.

mod stats;

pub use stats::{read_stats, write_stats, StatsRow};

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::FormatError;
use crate::feedback::{is_interesting, ExecOutcome, GlobalCoverage, StateId, Verdict};
use crate::harness::{self, Executor, Target, VarId, DEFAULT_STEP_BUDGET};
use crate::message::{save_corpus, Grammar, Message, Seed};
use crate::mutation::{deterministic_ops, mutate, MutationConfig, MutationError, MutationPlan};
use crate::scheduler::{
    assign_energy, choose_sequence, choose_state, split_regions, Regions, SchedulerConfig,
};
use crate::state_model::StateModel;
use crate::var_miner::{self, FilterConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown target {0:?}")]
    UnknownTarget(String),
    #[error("{0}")]
    UnknownVariable(String),
    #[error("initial corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Mutation(#[from] MutationError),
    #[error("no execution or time budget given")]
    NoBudget,
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub target: String,
    /// Names of the variables whose values define a state. Empty means
    /// calibrate and pick them automatically.
    pub state_vars: Vec<String>,
    pub mutation: MutationConfig,
    pub scheduler: SchedulerConfig,
    pub filter: FilterConfig,
    pub state_feedback: bool,
    pub field_mutations: bool,
    pub max_execs: Option<u64>,
    pub max_wall_secs: Option<f64>,
    pub stats_interval: u64,
    pub step_budget: u64,
    /// Executions used to calibrate state variables when none are given.
    pub calibration_execs: u64,
    /// Report real elapsed time in stats rows. Off by default so that
    /// count-bounded runs produce byte-identical outputs.
    pub measure_time: bool,
    /// Stop as soon as a crash with this site is recorded.
    pub stop_on_site: Option<String>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            target: "toy-ftp".into(),
            state_vars: Vec::new(),
            mutation: MutationConfig::default(),
            scheduler: SchedulerConfig::default(),
            filter: FilterConfig::default(),
            state_feedback: true,
            field_mutations: true,
            max_execs: Some(100_000),
            max_wall_secs: None,
            stats_interval: 1000,
            step_budget: DEFAULT_STEP_BUDGET,
            calibration_execs: 10_000,
            measure_time: false,
            stop_on_site: None,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.mutation.validate()?;
        if self.max_execs.is_none() && self.max_wall_secs.is_none() {
            return Err(ConfigError::NoBudget);
        }
        if harness::target_by_name(&self.target).is_none() {
            return Err(ConfigError::UnknownTarget(self.target.clone()));
        }
        Ok(())
    }
}

/// First discovery of a crash site.
#[derive(Clone, Debug, PartialEq)]
pub struct CrashRecord {
    pub site: String,
    /// 1-based index of the execution that found it.
    pub exec_index: u64,
    /// Messages up to and including the one that faulted.
    pub seed: Seed,
    /// State reached before the faulting message.
    pub last_state: Option<StateId>,
}

/// Distinct sites, each with its earliest record, in order of discovery.
pub fn dedup(crashes: &[CrashRecord]) -> Vec<CrashRecord> {
    let mut out: Vec<CrashRecord> = Vec::new();
    for c in crashes {
        match out.iter_mut().find(|o| o.site == c.site) {
            Some(o) if c.exec_index < o.exec_index => *o = c.clone(),
            Some(_) => {}
            None => out.push(c.clone()),
        }
    }
    out
}

/// Runs `seed` on a freshly reset target.
pub fn replay(target: Box<dyn Target>, selection: &[VarId], seed: &Seed) -> ExecOutcome {
    Executor::new(target, selection.to_vec()).run(&seed.messages)
}

pub struct CampaignResult {
    pub corpus: Vec<Seed>,
    pub crashes: Vec<CrashRecord>,
    pub hangs: u64,
    pub stats: Vec<StatsRow>,
    pub model: StateModel,
    pub execs: u64,
    pub messages_sent: u64,
    pub state_vars: Vec<String>,
    /// Measured wall time of the run, whatever the stats timing mode.
    pub elapsed: Duration,
}

impl CampaignResult {
    pub fn first_crash(&self, site: &str) -> Option<&CrashRecord> {
        self.crashes.iter().find(|c| c.site == site)
    }

    pub fn execs_per_sec(&self) -> f64 {
        self.execs as f64 / self.elapsed.as_secs_f64().max(1e-9)
    }

    /// Writes queue, crashes, stats and the state model under `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<(), FormatError> {
        fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
        save_corpus(&self.corpus, dir.join("queue.apfz"))?;
        let crash_dir = dir.join("crashes");
        fs::create_dir_all(&crash_dir).map_err(|e| FormatError::io(&crash_dir, e))?;
        let mut index = Vec::new();
        for c in &self.crashes {
            let file = format!("{}.apfz", c.site);
            save_corpus(std::slice::from_ref(&c.seed), crash_dir.join(&file))?;
            index.push(serde_json::json!({
                "site": c.site,
                "exec_index": c.exec_index,
                "messages": c.seed.messages.len(),
                "last_state": c.last_state.as_ref().map(|s| self.model.label(s)),
                "file": format!("crashes/{file}"),
            }));
        }
        let path = dir.join("crashes.json");
        fs::write(&path, serde_json::to_string_pretty(&index)? + "\n")
            .map_err(|e| FormatError::io(&path, e))?;
        write_stats(&self.stats, dir.join("stats.csv"))?;
        self.model.export_dot(dir.join("state_model.dot"))?;
        self.model.export_stats_json(dir.join("state_model.json"))?;
        Ok(())
    }
}

/// The campaign state; [`Fuzzer::run`] drives it to its budget.
pub struct Fuzzer {
    cfg: CampaignConfig,
    grammar: Option<Grammar>,
    executor: Executor,
    model: StateModel,
    global: GlobalCoverage,
    corpus: Vec<Seed>,
    pending: Vec<Seed>,
    crashes: Vec<CrashRecord>,
    hangs: u64,
    stats: Vec<StatsRow>,
    rng: ChaCha8Rng,
    execs: u64,
    start: Instant,
    done: bool,
    traces: Option<Vec<BTreeMap<i64, u64>>>,
}

impl Fuzzer {
    /// Builds a campaign over explicitly selected variables.
    pub fn new(
        cfg: CampaignConfig,
        target: Box<dyn Target>,
        selection: Vec<VarId>,
        seeds: Vec<Seed>,
        grammar: Option<Grammar>,
    ) -> Result<Self, ConfigError> {
        cfg.mutation.validate()?;
        if seeds.is_empty() {
            return Err(ConfigError::EmptyCorpus);
        }
        let mut executor = Executor::new(target, selection).with_step_budget(cfg.step_budget);
        let initial = executor.initial_state();
        let model = StateModel::new(initial).with_schema(executor.schema());
        let grammar = grammar.filter(|g| cfg.field_mutations && !g.is_empty());
        Ok(Fuzzer {
            rng: ChaCha8Rng::seed_from_u64(cfg.mutation.rng_seed),
            cfg,
            grammar,
            executor,
            model,
            global: GlobalCoverage::new(),
            corpus: Vec::new(),
            pending: seeds.into_iter().map(|s| Seed::new(s.messages)).collect(),
            crashes: Vec::new(),
            hangs: 0,
            stats: Vec::new(),
            execs: 0,
            start: Instant::now(),
            done: false,
            traces: None,
        })
    }

    /// Records every variable's value after every delivered message.
    pub fn enable_tracing(&mut self) {
        let n = self.executor.target().variables().len();
        self.traces = Some(vec![BTreeMap::new(); n]);
    }

    pub fn traces(&self) -> Option<&[BTreeMap<i64, u64>]> {
        self.traces.as_deref()
    }

    pub fn target(&self) -> &dyn Target {
        self.executor.target()
    }

    pub fn model(&self) -> &StateModel {
        &self.model
    }

    pub fn corpus(&self) -> &[Seed] {
        &self.corpus
    }

    pub fn execs(&self) -> u64 {
        self.execs
    }

    fn budget_left(&self) -> bool {
        if self.done {
            return false;
        }
        if self.cfg.max_execs.is_some_and(|m| self.execs >= m) {
            return false;
        }
        if let Some(w) = self.cfg.max_wall_secs {
            if self.start.elapsed().as_secs_f64() >= w {
                return false;
            }
        }
        true
    }

    fn push_stats(&mut self) {
        let (wall, eps, mps) = if self.cfg.measure_time || self.cfg.max_execs.is_none() {
            let w = self.start.elapsed().as_secs_f64();
            let d = w.max(1e-9);
            (
                w,
                self.execs as f64 / d,
                self.executor.messages_sent() as f64 / d,
            )
        } else {
            (0.0, 0.0, 0.0)
        };
        let ms = self.model.stats();
        self.stats.push(StatsRow {
            exec_index: self.execs,
            wall_seconds: wall,
            execs_per_sec: eps,
            msgs_per_sec: mps,
            edges_covered: self.global.edges_covered() as u64,
            vertices: ms.n_vertices as u64,
            state_edges: ms.n_edges as u64,
            corpus_size: self.corpus.len() as u64,
            unique_crashes: self.crashes.len() as u64,
        });
    }

    fn run_one(&mut self, messages: &[Message]) -> ExecOutcome {
        match self.traces.as_mut() {
            Some(traces) => self.executor.run_observed(messages, |vals| {
                for (t, v) in traces.iter_mut().zip(vals) {
                    if let Some(v) = v {
                        *t.entry(*v).or_default() += 1;
                    }
                }
            }),
            None => self.executor.run(messages),
        }
    }

    /// Executes one candidate and applies all feedback. Returns whether it
    /// was admitted to the corpus.
    fn execute(&mut self, cand: &Seed, parent: Option<usize>, chosen: Option<&StateId>) -> bool {
        let out = self.run_one(&cand.messages);
        self.execs += 1;
        let admitted = match &out.verdict {
            Verdict::Ok => {
                let interest = is_interesting(
                    &out,
                    &mut self.global,
                    &mut self.model,
                    self.cfg.state_feedback,
                );
                if !interest.interesting {
                    self.model.update(&out.state_seq);
                    false
                } else {
                    debug!(
                        "exec {}: admitted ({})",
                        self.execs,
                        interest.reasons().join(",")
                    );
                    let mut seed = Seed::new(cand.messages[..out.state_seq.len()].to_vec());
                    seed.state_seq = out.state_seq;
                    self.corpus.push(seed);
                    if let Some(p) = parent {
                        self.corpus[p].perf.coverage_gains += 1;
                    }
                    if let Some(v) = chosen.and_then(|s| self.model.vertex_mut(s)) {
                        v.coverage_gains += 1;
                    }
                    true
                }
            }
            Verdict::Crash(site) => {
                self.model.update(&out.state_seq);
                if !self.crashes.iter().any(|c| &c.site == site) {
                    info!("exec {}: new crash site {site}", self.execs);
                    let n = out.state_seq.len() + 1;
                    self.crashes.push(CrashRecord {
                        site: site.clone(),
                        exec_index: self.execs,
                        seed: Seed::new(cand.messages[..n].to_vec()),
                        last_state: out.state_seq.last().cloned(),
                    });
                    if self.cfg.stop_on_site.as_ref() == Some(site) {
                        self.done = true;
                    }
                }
                false
            }
            Verdict::Hang => {
                self.model.update(&out.state_seq);
                self.hangs += 1;
                false
            }
        };
        if self.execs.is_multiple_of(self.cfg.stats_interval.max(1)) {
            self.push_stats();
        }
        admitted
    }

    fn dry_run(&mut self) {
        let pending = std::mem::take(&mut self.pending);
        for seed in pending {
            if !self.budget_left() {
                break;
            }
            let out = self.run_one(&seed.messages);
            self.execs += 1;
            match out.verdict {
                Verdict::Ok => {
                    self.global.merge(&out.coverage);
                    self.model.update(&out.state_seq);
                    let mut s = Seed::new(seed.messages[..out.state_seq.len()].to_vec());
                    s.state_seq = out.state_seq;
                    self.corpus.push(s);
                }
                ref v => {
                    log::warn!("initial seed does not run cleanly: {v:?}");
                    self.model.update(&out.state_seq);
                }
            }
            if self.execs.is_multiple_of(self.cfg.stats_interval.max(1)) {
                self.push_stats();
            }
        }
    }

    fn round(&mut self) {
        let (idx, chosen, regions) = if self.cfg.state_feedback {
            let Ok(s) = choose_state(&self.model, &self.cfg.scheduler, &mut self.rng) else {
                self.done = true;
                return;
            };
            let idx =
                choose_sequence(&self.corpus, &s, &mut self.rng).expect("corpus is non-empty");
            let regions = split_regions(&self.corpus[idx], &s).expect("seed has been executed");
            (idx, Some(s), regions)
        } else {
            let idx = self.rng.gen_range(0..self.corpus.len());
            (idx, None, Regions::whole(self.corpus[idx].messages.len()))
        };
        let seed = self.corpus[idx].clone();
        if !seed.perf.det_done {
            self.corpus[idx].perf.det_done = true;
            for op in deterministic_ops(&seed, &regions, self.cfg.mutation.det_window) {
                if !self.budget_left() {
                    return;
                }
                let cand = crate::mutation::apply_det(&seed, &regions, op);
                self.execute(&cand, Some(idx), chosen.as_ref());
            }
        }
        let energy = assign_energy(&self.corpus[idx].perf, &self.cfg.scheduler);
        self.corpus[idx].perf.times_selected += 1;
        if let Some(v) = chosen.as_ref().and_then(|s| self.model.vertex_mut(s)) {
            v.times_selected += 1;
        }
        let grammar = self.grammar.clone();
        let plan = MutationPlan::new(regions, grammar.as_ref());
        for _ in 0..energy {
            if !self.budget_left() {
                return;
            }
            let (cand, _) = mutate(&seed, &plan, &self.cfg.mutation, &mut self.rng);
            self.execute(&cand, Some(idx), chosen.as_ref());
        }
    }

    pub fn run(mut self) -> CampaignResult {
        self.start = Instant::now();
        self.dry_run();
        while self.budget_left() && !self.corpus.is_empty() {
            self.round();
        }
        if self.stats.last().map(|r| r.exec_index) != Some(self.execs) {
            self.push_stats();
        }
        let schema = self.executor.schema();
        CampaignResult {
            corpus: self.corpus,
            crashes: self.crashes,
            hangs: self.hangs,
            stats: self.stats,
            model: self.model,
            execs: self.execs,
            messages_sent: self.executor.messages_sent(),
            state_vars: schema.var_names,
            elapsed: self.start.elapsed(),
        }
    }
}

/// Resolves the state variables for `cfg`, calibrating when none are named.
pub fn select_state_vars(
    cfg: &CampaignConfig,
    seeds: &[Seed],
) -> Result<Vec<VarId>, CampaignError> {
    let target = harness::target_by_name(&cfg.target)
        .ok_or_else(|| ConfigError::UnknownTarget(cfg.target.clone()))?;
    if !cfg.state_vars.is_empty() {
        return Ok(harness::resolve_vars(&*target, &cfg.state_vars)
            .map_err(ConfigError::UnknownVariable)?);
    }
    let traces = var_miner::calibrate(target, seeds, cfg.calibration_execs, cfg.mutation.rng_seed)?;
    Ok(var_miner::filter_vars(&traces, &cfg.filter))
}

/// Runs a full campaign for `cfg` over `seeds`.
pub fn run_campaign(
    cfg: &CampaignConfig,
    seeds: Vec<Seed>,
    grammar: Option<Grammar>,
) -> Result<CampaignResult, CampaignError> {
    cfg.validate()?;
    let selection = select_state_vars(cfg, &seeds)?;
    let target = harness::target_by_name(&cfg.target)
        .ok_or_else(|| ConfigError::UnknownTarget(cfg.target.clone()))?;
    info!(
        "fuzzing {} on state variables {:?}",
        cfg.target,
        selection
            .iter()
            .map(|&v| target.variables()[v].name)
            .collect::<Vec<_>>()
    );
    Ok(Fuzzer::new(cfg.clone(), target, selection, seeds, grammar)?.run())
}

/// Values seen per variable during a run with full tracing.
pub(crate) fn traced_values(
    target: Box<dyn Target>,
    seeds: &[Seed],
    execs: u64,
    rng_seed: u64,
) -> Result<Vec<BTreeMap<i64, u64>>, ConfigError> {
    let cfg = CampaignConfig {
        target: target.name().to_string(),
        state_feedback: false,
        field_mutations: false,
        max_execs: Some(execs),
        mutation: MutationConfig {
            epsilon: 0.0,
            rng_seed,
            // the deterministic walk would spend the whole budget on the
            // first few seeds
            det_window: 0,
            ..MutationConfig::default()
        },
        ..CampaignConfig::default()
    };
    let mut f = Fuzzer::new(cfg, target, Vec::new(), seeds.to_vec(), None)?;
    f.enable_tracing();
    f.dry_run();
    while f.budget_left() && !f.corpus.is_empty() {
        f.round();
    }
    Ok(f.traces.take().unwrap_or_default())
}
