//! CPU throughput benchmark on synthetic frames.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use crate::effects::EffectConfig;
use crate::geom::RasterDims;
use crate::locate::synthetic::DiscTrajectory;
use crate::locate::{resolve_timeline, HoldPolicy, ProviderConfig};
use crate::media::{FrameBuffer, VideoMeta};
use crate::pipeline::{render_sequence, thread_pool, FrameOutcome, RenderError};
use crate::script::{Script, ScriptEntry};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// Thread count compared against the single-threaded run.
    pub threads: usize,
    pub repetitions: usize,
    pub fps: f64,
    pub effects: EffectConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            width: 1024,
            height: 512,
            frames: 10,
            threads: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            repetitions: 3,
            fps: 30.0,
            effects: EffectConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub config: BenchConfig,
    /// Best wall-clock time over the repetitions.
    pub single: Duration,
    pub multi: Duration,
    pub fps_single: f64,
    pub fps_multi: f64,
    /// `single / multi`.
    pub speedup: f64,
    /// Frames that went through the compositor (frame 0 sits at the ramp
    /// start and passes through). Throughput counts only these.
    pub rendered: usize,
    /// Whether the multi-threaded output matched the single-threaded one byte for byte.
    pub identical: bool,
}

/// Deterministic textured test frame.
pub fn synthetic_frame(dims: RasterDims, seed: u64) -> FrameBuffer {
    let mut f = FrameBuffer::filled(dims, [0, 0, 0]);
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    for v in 0..dims.height {
        for u in 0..dims.width {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            let noise = (state >> 58) as u8;
            let r = ((u * 255) / dims.width) as u8;
            let g = ((v * 255) / dims.height.max(1)) as u8;
            let b = (((u / 8 + v / 8) % 2) * 160) as u8;
            f.set(u, v, [r.saturating_add(noise), g.saturating_add(noise), b.saturating_add(noise)]);
        }
    }
    f
}

/// Deterministic synthetic workload: frames, a one-entry script and its meta.
pub fn synthetic_workload(cfg: &BenchConfig) -> Result<(VideoMeta, Script, Vec<FrameBuffer>), RenderError> {
    let dims = RasterDims::new(cfg.width, cfg.height)?;
    let frames: Vec<FrameBuffer> = (0..cfg.frames).map(|k| synthetic_frame(dims, k as u64)).collect();
    let meta = VideoMeta {
        width: cfg.width,
        height: cfg.height,
        fps: cfg.fps,
        frame_count: cfg.frames,
        frame_pattern: "bench_%06d.ppm".into(),
        base_dir: PathBuf::new(),
    };
    let disc = DiscTrajectory { lon: -0.5, lat: 0.2, radius: 0.25, rate: 0.4, heading: 0.3 };
    let duration = cfg.frames as f64 / cfg.fps;
    let entry = ScriptEntry::new(0.0, duration + 1.0, disc.describe()).map_err(RenderError::Config)?;
    let script = Script::new(vec![entry]).map_err(|source| RenderError::Script { path: PathBuf::new(), source })?;
    Ok((meta, script, frames))
}

#[allow(clippy::ptr_arg)]
fn run_once(
    threads: usize,
    meta: &VideoMeta,
    script: &Script,
    frames: &Vec<FrameBuffer>,
    effects: &EffectConfig,
) -> Result<(Duration, Vec<FrameBuffer>, usize), RenderError> {
    let pool = thread_pool(threads)?;
    let started = Instant::now();
    let timeline =
        resolve_timeline(script, meta, &ProviderConfig::Synthetic { default: None }, HoldPolicy::default(), frames);
    let mut out = Vec::with_capacity(frames.len());
    let mut rendered = 0;
    render_sequence(&pool, meta, script, &timeline, frames, effects, false, |k, o| {
        out.push(match o {
            FrameOutcome::Passthrough => frames[k].clone(),
            FrameOutcome::Rendered { frame, .. } => {
                rendered += 1;
                frame
            }
        });
        Ok(())
    })?;
    Ok((started.elapsed(), out, rendered))
}

pub fn bench(cfg: &BenchConfig) -> Result<BenchReport, RenderError> {
    cfg.effects.validate()?;
    if cfg.frames == 0 || cfg.repetitions == 0 || cfg.threads == 0 {
        return Err(RenderError::Config("frames, repetitions and threads must be positive".into()));
    }
    let (meta, script, frames) = synthetic_workload(cfg)?;
    let best = |threads: usize| -> Result<(Duration, Vec<FrameBuffer>, usize), RenderError> {
        let mut best: Option<(Duration, Vec<FrameBuffer>, usize)> = None;
        for _ in 0..cfg.repetitions {
            let run = run_once(threads, &meta, &script, &frames, &cfg.effects)?;
            if best.as_ref().is_none_or(|b| run.0 < b.0) {
                best = Some(run);
            }
        }
        Ok(best.expect("at least one repetition"))
    };
    let (single, out1, rendered) = best(1)?;
    let (multi, out_n, _) = best(cfg.threads)?;
    let secs = |d: Duration| d.as_secs_f64().max(1e-9);
    Ok(BenchReport {
        config: cfg.clone(),
        single,
        multi,
        fps_single: rendered as f64 / secs(single),
        fps_multi: rendered as f64 / secs(multi),
        speedup: secs(single) / secs(multi),
        rendered,
        identical: out1 == out_n,
    })
}
