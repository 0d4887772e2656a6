//! End-to-end rendering: manifest + script + locator + effects.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::effects::{compose_frame, frame_intensity, EffectConfig, EffectError, FieldMode};
use crate::geom::{focus_field_centroid, focus_field_mask, FocusField, GeomError, TargetGeometry};
use crate::kv::KeyValues;
use crate::locate::remote::SidecarClient;
use crate::locate::synthetic::DiscTrajectory;
use crate::locate::{
    resolve_timeline, DiskFrames, EntryReport, FrameSource, HoldPolicy, LocatorFactory, ProviderConfig, TargetState,
    Timeline,
};
use crate::media::{encode_pgm, frame_time, read_manifest, write_frame, FrameBuffer, MediaError, VideoMeta};
use crate::script::{is_csv, parse_script_auto, Script, ScriptError};

pub const DEFAULT_SIDECAR_TIMEOUT: Duration = Duration::from_secs(30);
pub const OUTPUT_MANIFEST: &str = "manifest.txt";

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("config: {0}")]
    Config(String),
    #[error("manifest {path}: {source}")]
    Manifest { path: PathBuf, source: MediaError },
    #[error("script {path}: {source}")]
    Script { path: PathBuf, source: ScriptError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Effect(#[from] EffectError),
    #[error(transparent)]
    Geometry(#[from] GeomError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RenderError + '_ {
    move |source| RenderError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub manifest: PathBuf,
    /// Roadmap or CSV; the kind is detected from the first line.
    pub script: PathBuf,
    pub output_dir: PathBuf,
    pub provider: ProviderConfig,
    pub effects: EffectConfig,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
    pub hold: HoldPolicy,
    pub dump_field: bool,
    /// Sidecar used for free-text scripts (and by the remote provider).
    pub sidecar_url: Option<String>,
    pub sidecar_timeout: Duration,
}

const PATH_KEYS: [&str; 4] = ["manifest", "script", "output", "mask_dir"];
const KNOWN_KEYS: [&str; 20] = [
    "manifest",
    "script",
    "output",
    "provider",
    "mask_dir",
    "synthetic_disc",
    "sidecar_url",
    "sidecar_timeout_ms",
    "threads",
    "max_hold_frames",
    "dump_field",
    "field_mode",
    "theta_in",
    "theta_out",
    "sigma_max",
    "k_gray",
    "k_dark",
    "k_halo",
    "w_halo",
    "ramp_tau",
];

/// Reads a config file, resolving relative paths against its directory.
pub fn load_config_file(path: &Path) -> Result<KeyValues, RenderError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut kv = KeyValues::parse(&text).map_err(|e| RenderError::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new(""));
    for key in PATH_KEYS {
        if let Some(v) = kv.get(key) {
            let p = Path::new(v);
            if p.is_relative() {
                let joined = base.join(p).to_string_lossy().into_owned();
                kv.insert(key, joined);
            }
        }
    }
    Ok(kv)
}

impl RunConfig {
    /// Builds a config from flat keys. Returns warnings for unknown keys.
    pub fn from_key_values(kv: &KeyValues) -> Result<(Self, Vec<String>), RenderError> {
        let cfg_err = |m: String| RenderError::Config(m);
        let req = |k: &str| kv.get(k).map(PathBuf::from).ok_or_else(|| cfg_err(format!("missing `{k}`")));
        fn num<T: std::str::FromStr>(kv: &KeyValues, k: &str) -> Result<Option<T>, RenderError> {
            kv.get(k)
                .map(|v| v.parse::<T>().map_err(|_| RenderError::Config(format!("bad value for `{k}`: `{v}`"))))
                .transpose()
        }

        let sidecar_url = kv.get("sidecar_url").filter(|s| !s.is_empty()).map(str::to_string);
        let sidecar_timeout =
            num::<u64>(kv, "sidecar_timeout_ms")?.map(Duration::from_millis).unwrap_or(DEFAULT_SIDECAR_TIMEOUT);
        let provider = match kv.get("provider").unwrap_or("file") {
            "file" => ProviderConfig::File { mask_dir: req("mask_dir")? },
            "synthetic" => {
                let default = match kv.get("synthetic_disc") {
                    Some(d) => {
                        Some(DiscTrajectory::parse(d).ok_or_else(|| cfg_err(format!("bad `synthetic_disc`: `{d}`")))?)
                    }
                    None => None,
                };
                ProviderConfig::Synthetic { default }
            }
            "remote" => ProviderConfig::Remote {
                url: sidecar_url.clone().ok_or_else(|| cfg_err("remote provider needs a sidecar URL".into()))?,
                timeout: sidecar_timeout,
            },
            other => return Err(cfg_err(format!("unknown provider `{other}` (file | synthetic | remote)"))),
        };

        let d = EffectConfig::default();
        let effects = EffectConfig {
            theta_in: num(kv, "theta_in")?.unwrap_or(d.theta_in),
            theta_out: num(kv, "theta_out")?.unwrap_or(d.theta_out),
            sigma_max: num(kv, "sigma_max")?.or(d.sigma_max),
            k_gray: num(kv, "k_gray")?.unwrap_or(d.k_gray),
            k_dark: num(kv, "k_dark")?.unwrap_or(d.k_dark),
            k_halo: num(kv, "k_halo")?.unwrap_or(d.k_halo),
            w_halo: num(kv, "w_halo")?.unwrap_or(d.w_halo),
            ramp_tau: num(kv, "ramp_tau")?.unwrap_or(d.ramp_tau),
            field_mode: match kv.get("field_mode") {
                Some(m) => m.parse::<FieldMode>().map_err(cfg_err)?,
                None => d.field_mode,
            },
        };
        effects.validate()?;

        let dump_field = match kv.get("dump_field") {
            None | Some("false") | Some("0") => false,
            Some("true") | Some("1") => true,
            Some(v) => return Err(cfg_err(format!("bad value for `dump_field`: `{v}`"))),
        };
        let cfg = RunConfig {
            manifest: req("manifest")?,
            script: req("script")?,
            output_dir: req("output")?,
            provider,
            effects,
            threads: num(kv, "threads")?.unwrap_or(0),
            hold: HoldPolicy {
                max_hold_frames: num(kv, "max_hold_frames")?.unwrap_or(HoldPolicy::default().max_hold_frames),
            },
            dump_field,
            sidecar_url,
            sidecar_timeout,
        };
        let warnings = kv
            .keys()
            .filter(|k| !KNOWN_KEYS.contains(k))
            .map(|k| format!("ignoring unknown config key `{k}`"))
            .collect();
        Ok((cfg, warnings))
    }
}

pub fn thread_pool(threads: usize) -> Result<rayon::ThreadPool, RenderError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| RenderError::Config(format!("thread pool: {e}")))
}

/// Loads a roadmap or CSV script. Roadmaps that do not match the grammar
/// are sent to the sidecar's `/parse` when one is configured.
pub fn load_script(path: &Path, sidecar: Option<&SidecarClient>) -> Result<(Script, Vec<String>), RenderError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let script_err = |source| RenderError::Script { path: path.to_path_buf(), source };
    let first = text.lines().next().unwrap_or("");
    if is_csv(first) {
        let (s, w) = Script::from_csv_with_warnings(text.trim_start_matches('\u{feff}')).map_err(script_err)?;
        return Ok((s, w));
    }
    match parse_script_auto(&text) {
        Ok(s) => Ok((s, Vec::new())),
        Err(e @ ScriptError::Syntax { .. }) => {
            let Some(client) = sidecar else { return Err(script_err(e)) };
            let csv =
                client.parse(&text).map_err(|se| RenderError::Config(format!("{e}; sidecar /parse failed: {se}")))?;
            let (s, mut w) = Script::from_csv_with_warnings(&csv).map_err(script_err)?;
            w.insert(0, format!("roadmap parsed by sidecar {}", client.base_url()));
            Ok((s, w))
        }
        Err(e) => Err(script_err(e)),
    }
}

/// What happened to one frame.
#[derive(Debug, Clone, PartialEq)]
pub enum FrameOutcome {
    /// No effect applies; the input frame is the output.
    Passthrough,
    Rendered {
        frame: FrameBuffer,
        field: Option<FocusField>,
    },
}

pub fn focus_field(meta: &VideoMeta, states: &[TargetState], mode: FieldMode) -> Result<FocusField, GeomError> {
    match mode {
        FieldMode::Centroid => {
            let geoms: Vec<TargetGeometry> = states.iter().map(|s| s.geometry).collect();
            focus_field_centroid(meta.dims(), &geoms)
        }
        FieldMode::Mask => {
            let masks: Vec<&crate::media::MaskBuffer> = states.iter().map(|s| s.mask.as_ref()).collect();
            focus_field_mask(meta.dims(), &masks)
        }
    }
}

/// Renders one frame given its active targets.
pub fn render_frame(
    index: usize,
    meta: &VideoMeta,
    script: &Script,
    states: &[TargetState],
    frames: &dyn FrameSource,
    effects: &EffectConfig,
    want_field: bool,
) -> Result<FrameOutcome, RenderError> {
    if states.is_empty() {
        return Ok(FrameOutcome::Passthrough);
    }
    let t = frame_time(index, meta.fps);
    let g = frame_intensity(t, states.iter().map(|s| &script.entries()[s.entry_index]), effects.ramp_tau);
    if !(g > 0.0) && !want_field {
        return Ok(FrameOutcome::Passthrough);
    }
    let field = focus_field(meta, states, effects.field_mode)?;
    let input = frames.frame(index)?;
    let frame = compose_frame(&input, &field, g, effects)?;
    if frame == input && !want_field {
        return Ok(FrameOutcome::Passthrough);
    }
    Ok(FrameOutcome::Rendered { frame, field: want_field.then_some(field) })
}

/// Renders every frame on `pool`, handing outcomes to `sink` in index order.
#[allow(clippy::too_many_arguments)]
pub fn render_sequence(
    pool: &rayon::ThreadPool,
    meta: &VideoMeta,
    script: &Script,
    timeline: &Timeline,
    frames: &dyn FrameSource,
    effects: &EffectConfig,
    want_field: bool,
    mut sink: impl FnMut(usize, FrameOutcome) -> Result<(), RenderError>,
) -> Result<(), RenderError> {
    let batch = pool.current_num_threads().max(1) * 2;
    let indices: Vec<usize> = (0..meta.frame_count).collect();
    for chunk in indices.chunks(batch) {
        let outcomes: Vec<Result<FrameOutcome, RenderError>> = pool.install(|| {
            chunk
                .par_iter()
                .map(|&k| render_frame(k, meta, script, &timeline.frames[k], frames, effects, want_field))
                .collect()
        });
        for (&k, outcome) in chunk.iter().zip(outcomes) {
            sink(k, outcome?)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RenderReport {
    pub frame_count: usize,
    pub rendered: usize,
    pub passthrough: usize,
    pub entries: Vec<EntryReport>,
    pub warnings: Vec<String>,
    pub resolve_time: Duration,
    pub render_time: Duration,
}

impl RenderReport {
    pub fn any_skipped(&self) -> bool {
        self.entries.iter().any(EntryReport::is_skipped)
    }

    /// 0 on full success, 2 when some entry was skipped.
    pub fn exit_code(&self) -> i32 {
        if self.any_skipped() {
            2
        } else {
            0
        }
    }
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

/// Renders the sequence described by `cfg` into `cfg.output_dir`.
pub fn render(cfg: &RunConfig) -> Result<RenderReport, RenderError> {
    let (meta, mut warnings) =
        read_manifest(&cfg.manifest).map_err(|source| RenderError::Manifest { path: cfg.manifest.clone(), source })?;
    cfg.effects.validate()?;
    fs::create_dir_all(&cfg.output_dir).map_err(io_err(&cfg.output_dir))?;
    let input_dir = if meta.base_dir.as_os_str().is_empty() { Path::new(".") } else { meta.base_dir.as_path() };
    if same_dir(input_dir, &cfg.output_dir) {
        return Err(RenderError::Config("output directory must differ from the input directory".into()));
    }
    let sidecar = cfg.sidecar_url.as_deref().map(|u| SidecarClient::new(u, cfg.sidecar_timeout));
    let (script, script_warnings) = load_script(&cfg.script, sidecar.as_ref())?;
    warnings.extend(script_warnings);
    let pool = thread_pool(cfg.threads)?;

    let source = DiskFrames(&meta);
    let started = Instant::now();
    let timeline = resolve_timeline(&script, &meta, &cfg.provider as &dyn LocatorFactory, cfg.hold, &source);
    let resolve_time = started.elapsed();

    let out_meta = VideoMeta { base_dir: cfg.output_dir.clone(), ..meta.clone() };
    let (mut rendered, mut passthrough) = (0, 0);
    let started = Instant::now();
    render_sequence(&pool, &meta, &script, &timeline, &source, &cfg.effects, cfg.dump_field, |k, outcome| {
        let dst = out_meta.frame_path(k);
        if let Some(parent) = dst.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        match outcome {
            FrameOutcome::Passthrough => {
                let src = meta.frame_path(k);
                fs::copy(&src, &dst).map_err(io_err(&src))?;
                passthrough += 1;
            }
            FrameOutcome::Rendered { frame, field } => {
                write_frame(&frame, &dst)?;
                if let Some(field) = field {
                    let path = cfg.output_dir.join(format!("field_{k:06}.pgm"));
                    fs::write(&path, encode_pgm(field.dims(), &field.to_gray())).map_err(io_err(&path))?;
                }
                rendered += 1;
            }
        }
        Ok(())
    })?;
    let manifest_path = cfg.output_dir.join(OUTPUT_MANIFEST);
    fs::write(&manifest_path, out_meta.to_manifest_text()).map_err(io_err(&manifest_path))?;

    Ok(RenderReport {
        frame_count: meta.frame_count,
        rendered,
        passthrough,
        entries: timeline.reports,
        warnings,
        resolve_time,
        render_time: started.elapsed(),
    })
}
