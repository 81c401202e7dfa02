//! `farmic`: microphone selection, speaker counting, SP-MWF enhancement,
//! scene simulation and DER scoring over session directories.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use farmic::pipeline::{
    cmd_count, cmd_enhance, cmd_micsel, cmd_score, cmd_simulate, CountReport, EnhanceReport, MicselReport,
    PipelineConfig, PipelineError, ScoreReport,
};
use farmic::sim::Manifest;
use serde::Serialize;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "farmic", version, about = "Multichannel far-field speech front-end")]
struct Cli {
    /// JSON pipeline config; missing fields take their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Print a machine-readable JSON result (or error) on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Sessions processed in parallel.
    #[arg(long, global = true, default_value_t = 1, value_name = "N")]
    jobs: usize,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Config values that can be set directly on the command line.
#[derive(Args, Debug)]
struct Overrides {
    /// SP-MWF speech-distortion trade-off.
    #[arg(long, global = true, allow_negative_numbers = true)]
    mu: Option<f64>,
    /// Smallest subset the selection rule may return.
    #[arg(long, global = true)]
    min_mics: Option<usize>,
    /// Fraction of channels kept by each ranking.
    #[arg(long, global = true, allow_negative_numbers = true)]
    k_pct: Option<f64>,
    /// Correlation above which channels share a group.
    #[arg(long, global = true, allow_negative_numbers = true)]
    corr_threshold: Option<f64>,
    /// Upper bound on the speaker count per group.
    #[arg(long, global = true)]
    max_speakers: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize scenes from a JSON spec.
    Simulate {
        spec: PathBuf,
        out_dir: PathBuf,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of scenes; more than one writes `<out_dir>/sess-NNN` with consecutive seeds.
        #[arg(long, default_value_t = 1)]
        sessions: usize,
    },
    /// Rank channels and apply the subset selection rule.
    Micsel {
        #[arg(required = true)]
        sessions: Vec<PathBuf>,
    },
    /// Estimate the number of speakers.
    Count {
        #[arg(required = true)]
        sessions: Vec<PathBuf>,
        /// Embedding file, relative to each session directory.
        #[arg(long)]
        embeddings: Option<String>,
    },
    /// Beamform one output per speaker into `enhanced/`.
    Enhance {
        #[arg(required = true)]
        sessions: Vec<PathBuf>,
        /// Mask directory, relative to each session directory.
        #[arg(long)]
        masks: Option<String>,
        /// Speaker segments (RTTM), relative to each session directory.
        #[arg(long)]
        segments: Option<String>,
    },
    /// Print the effective configuration (defaults, file and flags merged).
    Config,
    /// Diarization error rate of a hypothesis RTTM against a reference.
    Score {
        reference: PathBuf,
        hypothesis: PathBuf,
        #[arg(long, default_value_t = 0.25, allow_negative_numbers = true)]
        collar: f64,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let o = &cli.overrides;
    if let Some(v) = o.mu {
        cfg.beamform.mu = v;
    }
    if let Some(v) = o.min_mics {
        cfg.selection.min_mics = v;
    }
    if let Some(v) = o.k_pct {
        cfg.selection.k_pct = v;
    }
    if let Some(v) = o.corr_threshold {
        cfg.count.corr_threshold = v;
    }
    if let Some(v) = o.max_speakers {
        cfg.count.nmesc.max_speakers = v;
    }
    match &cli.command {
        Command::Count { embeddings: Some(e), .. } => cfg.paths.embeddings = e.clone(),
        Command::Enhance { masks, segments, .. } => {
            if let Some(m) = masks {
                cfg.paths.masks_dir = m.clone();
            }
            if let Some(s) = segments {
                cfg.paths.segments = s.clone();
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs `f` on every session, in parallel when `jobs > 1`; results keep the
/// input order.
fn for_sessions<I: Sync, T: Send>(
    jobs: usize,
    sessions: &[I],
    f: impl Fn(&I) -> Result<T, PipelineError> + Sync,
) -> Result<Vec<Result<T, PipelineError>>, PipelineError> {
    if jobs <= 1 {
        return Ok(sessions.iter().map(&f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
    use rayon::prelude::*;
    Ok(pool.install(|| sessions.par_iter().map(&f).collect()))
}

trait Summary {
    fn summary(&self, session: &Path) -> String;
}

impl Summary for MicselReport {
    fn summary(&self, session: &Path) -> String {
        let sel = &self.selection;
        let ids: Vec<&str> = sel.selected.iter().map(String::as_str).collect();
        format!(
            "{}: {}, {}/{} channels: {}",
            session.display(),
            json!(sel.rule_branch).as_str().unwrap_or_default(),
            ids.len(),
            self.scores.len(),
            ids.join(" ")
        )
    }
}

impl Summary for CountReport {
    fn summary(&self, session: &Path) -> String {
        let e = &self.estimate;
        let groups: Vec<String> = e.per_group.iter().map(|g| format!("{}x{}", g.count, g.num_embeddings)).collect();
        format!(
            "{}: {} speakers from {} groups [{}]",
            session.display(),
            e.session_count,
            e.per_group.len(),
            groups.join(", ")
        )
    }
}

impl Summary for EnhanceReport {
    fn summary(&self, session: &Path) -> String {
        let outs: Vec<String> = self
            .speakers
            .iter()
            .map(|s| format!("{} (ref {})", s.file, s.reference_channel))
            .collect();
        format!("{}: {} channels -> {}", session.display(), self.channels.len(), outs.join(", "))
    }
}

impl Summary for Manifest {
    fn summary(&self, session: &Path) -> String {
        let m = self;
        format!(
            "{}: {} speakers, {} mics, {:.1} s",
            session.display(),
            m.n_speakers,
            m.channel_ids.len(),
            m.num_samples as f64 / f64::from(m.sample_rate)
        )
    }
}

fn print_error(json: bool, session: Option<&Path>, e: &PipelineError) {
    if json {
        let v = json!({
            "status": "error",
            "exit_code": e.exit_code(),
            "session": session.map(|s| s.display().to_string()),
            "message": e.to_string(),
        });
        println!("{v}");
    } else {
        match session {
            Some(s) => eprintln!("farmic: {}: {e}", s.display()),
            None => eprintln!("farmic: {e}"),
        }
    }
}

/// Prints per-session results; the exit code is that of the first failing
/// session in input order.
fn report<T: Serialize + Summary>(
    json: bool,
    command: &str,
    sessions: &[PathBuf],
    results: Vec<Result<T, PipelineError>>,
) -> u8 {
    let code = results
        .iter()
        .find_map(|r| r.as_ref().err())
        .map_or(0, |e| e.exit_code() as u8);
    if json {
        let items: Vec<serde_json::Value> = results
            .iter()
            .zip(sessions)
            .map(|(r, s)| match r {
                Ok(v) => json!({"session": s.display().to_string(), "status": "ok", "result": v}),
                Err(e) => json!({
                    "session": s.display().to_string(),
                    "status": "error",
                    "exit_code": e.exit_code(),
                    "message": e.to_string(),
                }),
            })
            .collect();
        let status = if code == 0 { "ok" } else { "error" };
        println!("{}", json!({"status": status, "exit_code": code, "command": command, "sessions": items}));
    } else {
        for (r, s) in results.iter().zip(sessions) {
            match r {
                Ok(v) => println!("{}", v.summary(s)),
                Err(e) => print_error(false, Some(s), e),
            }
        }
    }
    code
}

fn print_score(json: bool, r: &ScoreReport) {
    if json {
        println!("{}", json!({"status": "ok", "exit_code": 0, "command": "score", "result": r}));
        return;
    }
    println!("{:<24} {:>9} {:>9} {:>9} {:>9} {:>8}", "session", "scored_s", "missed_s", "falarm_s", "conf_s", "DER%");
    let row = |id: &str, s: f64, m: f64, f: f64, c: f64, d: f64| {
        println!("{id:<24} {s:>9.2} {m:>9.2} {f:>9.2} {c:>9.2} {:>8.2}", 100.0 * d);
    };
    for s in &r.sessions {
        let b = &s.breakdown;
        row(&s.session_id, b.scored_speech_s, b.missed_s, b.falarm_s, b.confusion_s, b.der);
    }
    row("TOTAL", r.scored_speech_s, r.missed_s, r.falarm_s, r.confusion_s, r.der);
}

fn run(cli: &Cli) -> Result<u8, PipelineError> {
    if cli.jobs == 0 {
        return Err(PipelineError::Config("--jobs must be at least 1".into()));
    }
    let cfg = load_config(cli)?;
    let code = match &cli.command {
        Command::Simulate { spec, out_dir, seed, sessions } => {
            if *sessions == 0 {
                return Err(PipelineError::Config("--sessions must be at least 1".into()));
            }
            let dirs: Vec<PathBuf> = if *sessions == 1 {
                vec![out_dir.clone()]
            } else {
                (0..*sessions).map(|i| out_dir.join(format!("sess-{i:03}"))).collect()
            };
            let base = match seed {
                Some(s) => Some(*s),
                None if *sessions > 1 => Some(read_seed(spec)?),
                None => None,
            };
            let jobs: Vec<(PathBuf, Option<u64>)> =
                dirs.iter().enumerate().map(|(i, d)| (d.clone(), base.map(|s| s + i as u64))).collect();
            let results = for_sessions(cli.jobs, &jobs, |(d, seed)| {
                cmd_simulate(spec, d, *seed)
            })?;
            report(cli.json, "simulate", &dirs, results)
        }
        Command::Micsel { sessions } => {
            let results = for_sessions(cli.jobs, sessions, |d| cmd_micsel(d, &cfg))?;
            report(cli.json, "micsel", sessions, results)
        }
        Command::Count { sessions, .. } => {
            let results = for_sessions(cli.jobs, sessions, |d| cmd_count(d, &cfg))?;
            report(cli.json, "count", sessions, results)
        }
        Command::Enhance { sessions, .. } => {
            let results = for_sessions(cli.jobs, sessions, |d| cmd_enhance(d, &cfg))?;
            report(cli.json, "enhance", sessions, results)
        }
        Command::Config => {
            println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
            0
        }
        Command::Score { reference, hypothesis, collar } => {
            print_score(cli.json, &cmd_score(reference, hypothesis, *collar)?);
            0
        }
    };
    Ok(code)
}

fn read_seed(spec: &Path) -> Result<u64, PipelineError> {
    let text = std::fs::read_to_string(spec).map_err(|e| PipelineError::Config(format!("{}: {e}", spec.display())))?;
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", spec.display())))?;
    Ok(v.get("seed").and_then(serde_json::Value::as_u64).unwrap_or(0))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            print_error(cli.json, None, &e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
