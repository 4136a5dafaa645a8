use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::thread;

use clap::{Args, Parser, Subcommand};
use crossbeam_channel::bounded;
use scoreforge::document::{parse_scenario_with, ParseOptions};
use scoreforge::harness::{audio_jitter, dispatch_jitter, mean_dispatch_lateness_us, micro_checks, MicroCheck};
use scoreforge::load::{default_workers, generate_load};
use scoreforge::realtime::{run_realtime, Inputs, RealtimeConfig, RealtimeError, Transport};
use scoreforge::session::{bind, serve, ServeConfig};
use scoreforge::tables::{jitter_summary, read_trigger_script, write_event_log, write_jitter_report, write_micro_schedule};
use scoreforge::wav::{load_sources, write_wav, SampleFormat};
use scoreforge_core::analysis::JitterMode;
use scoreforge_core::compile::compile;
use scoreforge_core::dsp::{AudioClip, RenderConfig};
use scoreforge_core::offline::{render_scenario, OfflineConfig, OfflineError, DEFAULT_SEED};
use scoreforge_core::scheduler::{EngineConfig, EngineError, TriggerEvent, TriggerPolicy};
use scoreforge_core::score::{validate, ObjectId, Score};
use scoreforge_core::solver::check_playable;

#[derive(Parser)]
#[command(name = "scoreforge", version, about = "Interactive score engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario document and report every finding.
    Validate {
        score: PathBuf,
        #[arg(long)]
        tick_ms: Option<u32>,
    },
    /// Execute on logical time and write audio, event log and micro schedule.
    Render {
        score: PathBuf,
        #[command(flatten)]
        exec: ExecArgs,
        /// Output WAV file.
        #[arg(short, long)]
        out: PathBuf,
        /// Event log CSV (default: next to the WAV).
        #[arg(long)]
        events: Option<PathBuf>,
        /// Micro schedule CSV (default: next to the WAV).
        #[arg(long)]
        micro: Option<PathBuf>,
        /// Directory receiving one WAV per producing object.
        #[arg(long)]
        stems: Option<PathBuf>,
        #[arg(long, default_value = "float32", value_parser = parse_format)]
        format: SampleFormat,
    },
    /// Execute against the wall clock, reading trigger ids from stdin.
    Run {
        score: PathBuf,
        #[command(flatten)]
        exec: ExecArgs,
        /// Synthetic CPU load fraction while running.
        #[arg(long, default_value_t = 0.0)]
        load: f64,
        /// Load worker threads (default: available CPUs).
        #[arg(long)]
        load_workers: Option<usize>,
        /// Jitter report CSV.
        #[arg(long, default_value = "jitter-report.csv")]
        report: PathBuf,
        #[arg(long)]
        events: Option<PathBuf>,
        /// Write the null-sink capture as a WAV file.
        #[arg(long)]
        wav: Option<PathBuf>,
        /// Ignore stdin; end once the score can no longer progress.
        #[arg(long)]
        no_stdin: bool,
    },
    /// Serve a live session over a websocket.
    Serve {
        score: PathBuf,
        #[command(flatten)]
        exec: ExecArgs,
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        /// Wait for a transport start message before ticking.
        #[arg(long)]
        paused: bool,
        /// Exit when the score completes.
        #[arg(long)]
        exit_on_complete: bool,
    },
    /// Render offline and compare rendered onsets with the schedule.
    JitterReport {
        score: PathBuf,
        #[command(flatten)]
        exec: ExecArgs,
        #[arg(short, long, default_value = "jitter-report.csv")]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct ExecArgs {
    /// Trigger script CSV (`tick,interactive_id`).
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long, default_value = "auto-latest", value_parser = parse_policy)]
    policy: TriggerPolicy,
    #[arg(long)]
    tick_ms: Option<u32>,
    /// Noise seed for strings without an explicit one.
    #[arg(long, env = "SCOREFORGE_SEED")]
    seed: Option<u64>,
    #[arg(long, default_value_t = 64, value_parser = parse_block_size)]
    block_size: usize,
}

fn parse_policy(s: &str) -> Result<TriggerPolicy, String> {
    s.parse().map_err(|_| format!("unknown policy `{s}` (expected auto-latest or cancel)"))
}

fn parse_block_size(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(format!("block size must be a positive integer, got `{s}`")),
    }
}

fn parse_format(s: &str) -> Result<SampleFormat, String> {
    s.parse()
}

/// A failed command: message and exit status.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn rejected(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { score, tick_ms } => cmd_validate(&score, tick_ms),
        Command::Render {
            score,
            exec,
            out,
            events,
            micro,
            stems,
            format,
        } => cmd_render(&score, &exec, &out, events, micro, stems, format),
        Command::Run {
            score,
            exec,
            load,
            load_workers,
            report,
            events,
            wav,
            no_stdin,
        } => cmd_run(&score, &exec, load, load_workers, &report, events, wav, no_stdin),
        Command::Serve {
            score,
            exec,
            port,
            bind,
            paused,
            exit_on_complete,
        } => cmd_serve(&score, &exec, SocketAddr::new(bind, port), paused, exit_on_complete),
        Command::JitterReport { score, exec, out } => cmd_jitter_report(&score, &exec, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}

fn read_score(path: &Path, tick_ms: Option<u32>) -> Result<Score, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    let parsed = parse_scenario_with(&text, ParseOptions { tick_ms })
        .map_err(|e| Failure::rejected(format!("{}: {e}", path.display())))?;
    for w in &parsed.warnings {
        eprintln!("warning: {w}");
    }
    Ok(parsed.score)
}

/// Parsed, validated, playable score plus its acquisition sources.
fn load_playable(path: &Path, exec: &ExecArgs) -> Result<(Score, BTreeMap<ObjectId, AudioClip>), Failure> {
    let score = read_score(path, exec.tick_ms)?;
    let report = validate(&score);
    if !report.is_valid() {
        for f in report.errors() {
            eprintln!("{f}");
        }
        return Err(Failure::rejected("scenario has validation errors"));
    }
    let graph = compile(&score).map_err(|e| Failure::rejected(e.to_string()))?;
    if !check_playable(&graph) {
        return Err(Failure::rejected(EngineError::Unplayable.to_string()));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let sources = load_sources(&score, base).map_err(|e| Failure::input(e.to_string()))?;
    Ok((score, sources))
}

fn read_script(exec: &ExecArgs) -> Result<Vec<TriggerEvent>, Failure> {
    let Some(path) = &exec.script else {
        return Ok(Vec::new());
    };
    let f = File::open(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    read_trigger_script(f).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn engine_config(score: &Score, exec: &ExecArgs) -> EngineConfig {
    EngineConfig::for_score(score, exec.policy)
}

fn seed(exec: &ExecArgs) -> u64 {
    exec.seed.unwrap_or(DEFAULT_SEED)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::input(format!("cannot create {}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn write_csv(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> csv::Result<()>) -> CmdResult {
    let mut w = create(path)?;
    f(&mut w).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    w.flush().map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn cmd_validate(path: &Path, tick_ms: Option<u32>) -> CmdResult {
    let score = read_score(path, tick_ms)?;
    let report = validate(&score);
    for f in &report.findings {
        println!("{f}");
    }
    if !report.is_valid() {
        return Err(Failure::rejected(""));
    }
    let graph = compile(&score).map_err(|e| Failure::rejected(e.to_string()))?;
    if !check_playable(&graph) {
        println!("unplayable: temporal constraints admit no schedule");
        return Err(Failure::rejected(""));
    }
    Ok(())
}

fn offline_failure(e: OfflineError) -> Failure {
    match e {
        OfflineError::Invalid(report) => {
            for f in report.errors() {
                eprintln!("{f}");
            }
            Failure::rejected("scenario has validation errors")
        }
        other => Failure::rejected(other.to_string()),
    }
}

fn cmd_render(
    path: &Path,
    exec: &ExecArgs,
    out: &Path,
    events: Option<PathBuf>,
    micro: Option<PathBuf>,
    stems: Option<PathBuf>,
    format: SampleFormat,
) -> CmdResult {
    let (score, sources) = load_playable(path, exec)?;
    let script = read_script(exec)?;
    let config = OfflineConfig {
        engine: engine_config(&score, exec),
        render: RenderConfig {
            block_size: exec.block_size,
            capture_stems: stems.is_some(),
        },
        seed: seed(exec),
    };
    let run = render_scenario(&score, &sources, &script, config).map_err(offline_failure)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::input(format!("cannot create {}: {e}", dir.display())))?;
    }
    write_wav(out, score.sample_rate, &run.audio.channels, format).map_err(|e| Failure::input(e.to_string()))?;
    let events = events.unwrap_or_else(|| sibling(out, ".events.csv"));
    write_csv(&events, |w| write_event_log(w, &run.log))?;
    let micro = micro.unwrap_or_else(|| sibling(out, ".micro.csv"));
    write_csv(&micro, |w| write_micro_schedule(w, &run.schedule))?;
    if let Some(dir) = stems {
        std::fs::create_dir_all(&dir).map_err(|e| Failure::input(format!("cannot create {}: {e}", dir.display())))?;
        for (id, chans) in &run.audio.stems {
            let file = dir.join(format!("{id}.wav"));
            write_wav(&file, score.sample_rate, chans, format).map_err(|e| Failure::input(e.to_string()))?;
        }
    }
    let canceled = run
        .log
        .entries
        .iter()
        .filter(|e| e.resolution.as_str() == "canceled")
        .count();
    println!(
        "rendered {} samples x {} channels to {}",
        run.audio.channels.first().map_or(0, Vec::len),
        run.audio.channels.len(),
        out.display()
    );
    println!(
        "{} control events, {} canceled points, final tick {}{}",
        run.log.events.len(),
        canceled,
        run.log.final_tick,
        if run.log.completed { "" } else { " (incomplete)" }
    );
    if !run.audio.unrendered.is_empty() {
        println!("{} events fell beyond the end of the render", run.audio.unrendered.len());
    }
    Ok(())
}

fn print_micro_checks(checks: &[MicroCheck]) {
    for c in checks {
        match c.deviation() {
            Some(d) => println!(
                "micro {} -> {}: expected {} samples, measured {}, deviation {d}",
                c.from,
                c.to,
                c.expected_samples,
                c.measured_samples.unwrap_or_default()
            ),
            None => println!("micro {} -> {}: not sounded", c.from, c.to),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    path: &Path,
    exec: &ExecArgs,
    load: f64,
    load_workers: Option<usize>,
    report_path: &Path,
    events: Option<PathBuf>,
    wav: Option<PathBuf>,
    no_stdin: bool,
) -> CmdResult {
    if !(0.0..=1.0).contains(&load) {
        return Err(Failure::input(format!("--load must be within [0, 1], got {load}")));
    }
    let (score, sources) = load_playable(path, exec)?;
    let script = read_script(exec)?;
    let transport = Transport::new(true);
    {
        let t = Arc::clone(&transport);
        if let Err(e) = ctrlc::set_handler(move || t.request_stop()) {
            eprintln!("warning: cannot install interrupt handler: {e}");
        }
    }
    eprintln!("note: no audio device backend; rendering to a null sink");

    let (tx, rx) = bounded::<String>(256);
    if no_stdin {
        drop(tx);
    } else {
        thread::spawn(move || {
            for line in io::stdin().lock().lines() {
                let Ok(line) = line else { break };
                let id = line.trim();
                if !id.is_empty() && tx.send(id.to_string()).is_err() {
                    break;
                }
            }
        });
    }

    let mut config = RealtimeConfig::new(engine_config(&score, exec));
    config.block_size = exec.block_size;
    config.seed = seed(exec);
    let generator = (load > 0.0).then(|| generate_load(load, load_workers.unwrap_or_else(default_workers)));
    let inputs = Inputs {
        triggers: rx,
        script,
        snapshots: None,
    };
    let result = run_realtime(&score, &sources, config, inputs, transport);
    let stats = generator.map(|g| g.stop());
    let run = result.map_err(|e| match e {
        RealtimeError::Io(e) => Failure::input(e.to_string()),
        other => Failure::rejected(other.to_string()),
    })?;

    if run.interrupted {
        println!("interrupted at tick {}; report is partial", run.log.final_tick);
    }
    let measured = stats.map(|s| s.measured);
    if let Some(s) = stats {
        println!("load: target {:.0}%, measured {:.1}%", s.target * 100.0, s.measured * 100.0);
    }
    println!(
        "mean dispatch lateness: {:.1} us over {} events",
        mean_dispatch_lateness_us(&run.dispatches),
        run.dispatches.len()
    );
    match dispatch_jitter(&score, &run.dispatches, measured.or(Some(0.0))) {
        Ok(report) => {
            write_csv(report_path, |w| write_jitter_report(w, &report))?;
            println!("{}", jitter_summary(&report));
            println!("report written to {}", report_path.display());
        }
        Err(e) => println!("no jitter report: {e}"),
    }
    print_micro_checks(&micro_checks(&score, &run.stems));
    if let Some(events) = events {
        write_csv(&events, |w| write_event_log(w, &run.log))?;
    }
    if let Some(wav) = wav {
        if !run.audio.is_empty() {
            write_wav(&wav, score.sample_rate, &run.audio, SampleFormat::Float32)
                .map_err(|e| Failure::input(e.to_string()))?;
        }
    }
    Ok(())
}

fn cmd_serve(path: &Path, exec: &ExecArgs, addr: SocketAddr, paused: bool, exit_on_complete: bool) -> CmdResult {
    let (score, sources) = load_playable(path, exec)?;
    let listener = bind(addr).map_err(|e| Failure::input(format!("cannot listen on {addr}: {e}")))?;
    let local = listener.local_addr().map_err(|e| Failure::input(e.to_string()))?;
    println!("listening on ws://{local}");
    let _ = io::stdout().flush();
    let transport = Transport::new(!paused);
    {
        let t = Arc::clone(&transport);
        if let Err(e) = ctrlc::set_handler(move || t.request_stop()) {
            eprintln!("warning: cannot install interrupt handler: {e}");
        }
    }
    let mut realtime = RealtimeConfig::new(engine_config(&score, exec));
    realtime.block_size = exec.block_size;
    realtime.seed = seed(exec);
    let config = ServeConfig {
        realtime,
        start_paused: paused,
        exit_on_complete,
    };
    let run = serve(listener, &score, &sources, config, transport).map_err(|e| Failure::rejected(e.to_string()))?;
    println!(
        "session ended at tick {}{}",
        run.log.final_tick,
        if run.log.completed { " (completed)" } else { "" }
    );
    Ok(())
}

fn cmd_jitter_report(path: &Path, exec: &ExecArgs, out: &Path) -> CmdResult {
    let (score, sources) = load_playable(path, exec)?;
    let script = read_script(exec)?;
    let config = OfflineConfig {
        engine: engine_config(&score, exec),
        render: RenderConfig {
            block_size: exec.block_size,
            capture_stems: true,
        },
        seed: seed(exec),
    };
    let run = render_scenario(&score, &sources, &script, config).map_err(offline_failure)?;
    let report = audio_jitter(&score, &run.schedule, &run.audio.stems, JitterMode::Offline, None)
        .map_err(|e| Failure::rejected(format!("cannot compute jitter: {e}")))?;
    write_csv(out, |w| write_jitter_report(w, &report))?;
    println!("{}", jitter_summary(&report));
    print_micro_checks(&micro_checks(&score, &run.audio.stems));
    println!("report written to {}", out.display());
    Ok(())
}

