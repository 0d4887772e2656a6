use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use focus360::bench::{bench, BenchConfig};
use focus360::effects::EffectConfig;
use focus360::kv::KeyValues;
use focus360::locate::remote::SidecarClient;
use focus360::locate::{EntryReport, EntryStatus};
use focus360::pipeline::{load_config_file, load_script, render, RenderError, RunConfig, DEFAULT_SIDECAR_TIMEOUT};

const SIDECAR_ENV: &str = "FOCUS360_SIDECAR_URL";

#[derive(Parser)]
#[command(name = "focus360", version, about = "Guide viewer attention in equirectangular 360° frame sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a frame sequence with attention effects.
    Render(RenderArgs),
    /// Convert a roadmap (or CSV) script to canonical CSV on stdout.
    ParseScript(ParseArgs),
    /// Measure CPU throughput on synthetic frames.
    Bench(BenchArgs),
}

#[derive(Args)]
struct RenderArgs {
    /// Flat key=value run config; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// file | synthetic | remote
    #[arg(long)]
    provider: Option<String>,
    #[arg(long)]
    mask_dir: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Also write the focus field of each rendered frame as field_NNNNNN.pgm.
    #[arg(long)]
    dump_field: bool,
    /// Sidecar base URL; falls back to $FOCUS360_SIDECAR_URL.
    #[arg(long)]
    sidecar_url: Option<String>,
    /// Any other config key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct ParseArgs {
    path: PathBuf,
    /// Sidecar used when the roadmap does not match the grammar.
    #[arg(long)]
    sidecar_url: Option<String>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 1024)]
    width: usize,
    #[arg(long, default_value_t = 512)]
    height: usize,
    #[arg(long, default_value_t = 10)]
    frames: usize,
    /// Thread count compared against one thread (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
}

fn sidecar_from_env() -> Option<String> {
    std::env::var(SIDECAR_ENV).ok().filter(|s| !s.is_empty())
}

fn build_run_config(args: &RenderArgs) -> Result<(RunConfig, Vec<String>), RenderError> {
    let mut kv = match &args.config {
        Some(path) => load_config_file(path)?,
        None => KeyValues::default(),
    };
    let path_str = |p: &PathBuf| p.to_string_lossy().into_owned();
    if let Some(p) = &args.manifest {
        kv.insert("manifest", path_str(p));
    }
    if let Some(p) = &args.script {
        kv.insert("script", path_str(p));
    }
    if let Some(p) = &args.output {
        kv.insert("output", path_str(p));
    }
    if let Some(p) = &args.provider {
        kv.insert("provider", p.clone());
    }
    if let Some(p) = &args.mask_dir {
        kv.insert("mask_dir", path_str(p));
    }
    if let Some(n) = args.threads {
        kv.insert("threads", n.to_string());
    }
    if args.dump_field {
        kv.insert("dump_field", "true");
    }
    for o in &args.overrides {
        let (k, v) =
            o.split_once('=').ok_or_else(|| RenderError::Config(format!("--set expects KEY=VALUE, got `{o}`")))?;
        kv.insert(k.trim(), v.trim());
    }
    if let Some(url) = &args.sidecar_url {
        kv.insert("sidecar_url", url.clone());
    } else if kv.get("sidecar_url").is_none() {
        if let Some(url) = sidecar_from_env() {
            kv.insert("sidecar_url", url);
        }
    }
    RunConfig::from_key_values(&kv)
}

fn describe_status(r: &EntryReport) -> String {
    match &r.status {
        EntryStatus::Tracked => "tracked".into(),
        EntryStatus::Deactivated { at_frame } => format!("deactivated at frame {at_frame}"),
        EntryStatus::Skipped { reason } => format!("skipped: {reason}"),
        EntryStatus::NoFrames => "no frames in interval".into(),
    }
}

fn cmd_render(args: &RenderArgs) -> Result<i32, RenderError> {
    let (cfg, warnings) = build_run_config(args)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let report = render(&cfg)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for e in &report.entries {
        let score = e.score.map(|s| format!(" score={s:.3}")).unwrap_or_default();
        println!(
            "entry {} [{}..{}) \"{}\": {} (detected={} held={} dropped={}{score})",
            e.entry_index,
            e.frames.start,
            e.frames.end,
            e.description,
            describe_status(e),
            e.detected,
            e.held,
            e.dropped,
        );
        for n in &e.notes {
            println!("  {n}");
        }
    }
    let total = report.resolve_time + report.render_time;
    let fps = report.frame_count as f64 / total.as_secs_f64().max(1e-9);
    println!(
        "{} frames ({} rendered, {} passthrough) in {:.3}s: locate {:.3}s, render {:.3}s, {fps:.2} fps",
        report.frame_count,
        report.rendered,
        report.passthrough,
        total.as_secs_f64(),
        report.resolve_time.as_secs_f64(),
        report.render_time.as_secs_f64(),
    );
    Ok(report.exit_code())
}

fn cmd_parse_script(args: &ParseArgs) -> Result<i32, RenderError> {
    let url = args.sidecar_url.clone().or_else(sidecar_from_env);
    let client = url.as_deref().map(|u| SidecarClient::new(u, DEFAULT_SIDECAR_TIMEOUT));
    let (script, warnings) = load_script(&args.path, client.as_ref())?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    print!("{}", script.to_csv());
    Ok(0)
}

fn cmd_bench(args: &BenchArgs) -> Result<i32, RenderError> {
    let d = BenchConfig::default();
    let cfg = BenchConfig {
        width: args.width,
        height: args.height,
        frames: args.frames,
        threads: args.threads.unwrap_or(d.threads),
        repetitions: args.repetitions,
        fps: d.fps,
        effects: EffectConfig::default(),
    };
    let r = bench(&cfg)?;
    println!(
        "{}x{}, {} frames ({} composited), best of {}",
        cfg.width, cfg.height, cfg.frames, r.rendered, cfg.repetitions
    );
    println!("1 thread:   {:.3}s  {:.2} fps", r.single.as_secs_f64(), r.fps_single);
    println!("{} threads: {:.3}s  {:.2} fps", cfg.threads, r.multi.as_secs_f64(), r.fps_multi);
    println!("speedup: {:.2}x", r.speedup);
    println!("identical output: {}", if r.identical { "yes" } else { "no" });
    Ok(if r.identical { 0 } else { 1 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Render(a) => cmd_render(a),
        Command::ParseScript(a) => cmd_parse_script(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
