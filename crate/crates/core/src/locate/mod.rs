//! Target location: turns script entries into per-frame target states.
//!
//! A [`Locator`] is created per entry. It is initialized on the first frame
//! of the entry and then asked for one mask per following frame. Missing
//! masks are bridged by the [`HoldPolicy`]; an entry whose locator cannot
//! initialize is skipped without aborting the render.

pub mod remote;
pub mod synthetic;
pub mod wire;

use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use crate::geom::{mask_to_geometry, GeomError, TargetGeometry};
use crate::media::{frame_time, read_frame, read_mask, FrameBuffer, MaskBuffer, MediaError, VideoMeta};
use crate::script::{Script, ScriptEntry};

use remote::{SidecarClient, SidecarError};
use synthetic::DiscTrajectory;
use wire::encode_frame;

#[derive(Debug, thiserror::Error)]
pub enum LocateError {
    #[error("target not found: {0}")]
    TargetNotFound(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Sidecar(#[from] SidecarError),
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Geometry(#[from] GeomError),
}

/// One target on one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetState {
    pub entry_index: usize,
    pub frame_index: usize,
    pub mask: Arc<MaskBuffer>,
    pub geometry: TargetGeometry,
    /// Mask reused from an earlier frame during a dropout.
    pub held: bool,
}

impl TargetState {
    pub fn new(entry_index: usize, frame_index: usize, mask: MaskBuffer) -> Result<Self, GeomError> {
        let geometry = mask_to_geometry(&mask)?;
        Ok(Self { entry_index, frame_index, mask: Arc::new(mask), geometry, held: false })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HoldPolicy {
    pub max_hold_frames: usize,
}

impl Default for HoldPolicy {
    fn default() -> Self {
        Self { max_hold_frames: 3 }
    }
}

/// Random access to input frames.
pub trait FrameSource: Sync {
    fn frame(&self, index: usize) -> Result<FrameBuffer, MediaError>;
}

/// Frames read from disk as described by a manifest.
pub struct DiskFrames<'a>(pub &'a VideoMeta);

impl FrameSource for DiskFrames<'_> {
    fn frame(&self, index: usize) -> Result<FrameBuffer, MediaError> {
        read_frame(self.0, index)
    }
}

impl FrameSource for [FrameBuffer] {
    fn frame(&self, index: usize) -> Result<FrameBuffer, MediaError> {
        self.get(index).cloned().ok_or_else(|| MediaError::Format(format!("no frame {index}")))
    }
}

impl FrameSource for Vec<FrameBuffer> {
    fn frame(&self, index: usize) -> Result<FrameBuffer, MediaError> {
        self.as_slice().frame(index)
    }
}

/// Result of a successful initialization.
#[derive(Debug, Clone)]
pub struct Detection {
    pub mask: MaskBuffer,
    pub score: Option<f64>,
}

pub trait Locator: Send {
    fn init(
        &mut self,
        entry: &ScriptEntry,
        frames: &dyn FrameSource,
        frame_index: usize,
    ) -> Result<Detection, LocateError>;

    /// `Ok(None)` when no mask is available for this frame.
    fn next(&mut self, frames: &dyn FrameSource, frame_index: usize) -> Result<Option<MaskBuffer>, LocateError>;
}

/// Builds one locator per script entry.
pub trait LocatorFactory: Sync {
    fn create(&self, entry_index: usize, entry: &ScriptEntry, meta: &VideoMeta) -> Box<dyn Locator>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProviderConfig {
    /// Precomputed masks named `mask_e<entry>_f<frame:06>.pgm`.
    File {
        mask_dir: PathBuf,
    },
    /// Discs from entry descriptions (`disc lon=.. lat=.. r=..`), falling back
    /// to `default` when the description is not a disc.
    Synthetic {
        default: Option<DiscTrajectory>,
    },
    Remote {
        url: String,
        timeout: Duration,
    },
}

impl ProviderConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::File { .. } => "file",
            Self::Synthetic { .. } => "synthetic",
            Self::Remote { .. } => "remote",
        }
    }
}

pub fn mask_file_name(entry_index: usize, frame_index: usize) -> String {
    format!("mask_e{entry_index}_f{frame_index:06}.pgm")
}

pub fn mask_file_path(dir: &Path, entry_index: usize, frame_index: usize) -> PathBuf {
    dir.join(mask_file_name(entry_index, frame_index))
}

struct FileLocator {
    dir: PathBuf,
    entry_index: usize,
    dims: crate::geom::RasterDims,
}

impl FileLocator {
    fn load(&self, frame_index: usize) -> Result<Option<MaskBuffer>, LocateError> {
        let path = mask_file_path(&self.dir, self.entry_index, frame_index);
        if !path.is_file() {
            return Ok(None);
        }
        Ok(Some(read_mask(&path, self.dims)?))
    }
}

impl Locator for FileLocator {
    fn init(
        &mut self,
        _entry: &ScriptEntry,
        _frames: &dyn FrameSource,
        frame_index: usize,
    ) -> Result<Detection, LocateError> {
        match self.load(frame_index)? {
            Some(mask) => Ok(Detection { mask, score: None }),
            None => Err(LocateError::TargetNotFound(format!(
                "no mask file {}",
                mask_file_path(&self.dir, self.entry_index, frame_index).display()
            ))),
        }
    }

    fn next(&mut self, _frames: &dyn FrameSource, frame_index: usize) -> Result<Option<MaskBuffer>, LocateError> {
        self.load(frame_index)
    }
}

struct SyntheticLocator {
    trajectory: Option<DiscTrajectory>,
    meta_dims: crate::geom::RasterDims,
    fps: f64,
    first_frame: usize,
}

impl Locator for SyntheticLocator {
    fn init(
        &mut self,
        entry: &ScriptEntry,
        _frames: &dyn FrameSource,
        frame_index: usize,
    ) -> Result<Detection, LocateError> {
        let t = self.trajectory.ok_or_else(|| {
            LocateError::TargetNotFound(format!("`{}` is not a disc description", entry.description()))
        })?;
        self.first_frame = frame_index;
        Ok(Detection { mask: t.mask_at(self.meta_dims, 0.0), score: None })
    }

    fn next(&mut self, _frames: &dyn FrameSource, frame_index: usize) -> Result<Option<MaskBuffer>, LocateError> {
        let Some(t) = self.trajectory else { return Ok(None) };
        let elapsed = frame_time(frame_index - self.first_frame, self.fps);
        Ok(Some(t.mask_at(self.meta_dims, elapsed)))
    }
}

struct RemoteLocator {
    client: SidecarClient,
    session: Option<String>,
    dims: crate::geom::RasterDims,
}

impl RemoteLocator {
    fn decode_mask(&self, mask: &wire::WireMask) -> Result<MaskBuffer, LocateError> {
        let m = mask.decode().map_err(|e| LocateError::Protocol(e.to_string()))?;
        if m.dims() != self.dims {
            return Err(LocateError::Protocol(format!("mask is {}, video is {}", m.dims(), self.dims)));
        }
        Ok(m)
    }
}

impl Locator for RemoteLocator {
    fn init(
        &mut self,
        entry: &ScriptEntry,
        frames: &dyn FrameSource,
        frame_index: usize,
    ) -> Result<Detection, LocateError> {
        let frame = encode_frame(&frames.frame(frame_index)?);
        let det = match self.client.detect(frame.clone(), entry.description()) {
            Ok(d) => d,
            Err(SidecarError::Status { status: 404, message }) => {
                return Err(LocateError::TargetNotFound(message));
            }
            Err(e) => return Err(e.into()),
        };
        let init = self.client.track_init(frame, det.bbox)?;
        let mask = self.decode_mask(&init.mask)?;
        self.session = Some(init.session_id);
        Ok(Detection { mask, score: Some(det.score) })
    }

    fn next(&mut self, frames: &dyn FrameSource, frame_index: usize) -> Result<Option<MaskBuffer>, LocateError> {
        let Some(session) = self.session.clone() else {
            return Err(LocateError::Protocol("next called before init".into()));
        };
        let frame = encode_frame(&frames.frame(frame_index)?);
        let resp = self.client.track_next(&session, frame)?;
        match (resp.mask, resp.missing) {
            (Some(m), false) => Ok(Some(self.decode_mask(&m)?)),
            (None, true) => Ok(None),
            _ => Err(LocateError::Protocol("expected exactly one of `mask` or `missing`".into())),
        }
    }
}

impl LocatorFactory for ProviderConfig {
    fn create(&self, entry_index: usize, entry: &ScriptEntry, meta: &VideoMeta) -> Box<dyn Locator> {
        match self {
            Self::File { mask_dir } => Box::new(FileLocator { dir: mask_dir.clone(), entry_index, dims: meta.dims() }),
            Self::Synthetic { default } => Box::new(SyntheticLocator {
                trajectory: DiscTrajectory::parse(entry.description()).or(*default),
                meta_dims: meta.dims(),
                fps: meta.fps,
                first_frame: 0,
            }),
            Self::Remote { url, timeout } => {
                Box::new(RemoteLocator { client: SidecarClient::new(url, *timeout), session: None, dims: meta.dims() })
            }
        }
    }
}

/// Frames whose timestamps fall in `[start, end)`.
pub fn entry_frames(entry: &ScriptEntry, fps: f64, frame_count: usize) -> Range<usize> {
    let first_at_or_after = |t: f64| -> usize {
        let mut k = (t * fps).ceil().max(0.0).min(frame_count as f64) as usize;
        while k > 0 && frame_time(k - 1, fps) >= t {
            k -= 1;
        }
        while k < frame_count && frame_time(k, fps) < t {
            k += 1;
        }
        k
    };
    let a = first_at_or_after(entry.start());
    let b = first_at_or_after(entry.end()).max(a);
    a..b
}

#[derive(Debug, Clone, PartialEq)]
pub enum EntryStatus {
    /// Tracked to the end of the entry (possibly with held frames).
    Tracked,
    /// Stopped after too many consecutive missing masks.
    Deactivated { at_frame: usize },
    /// Locator never initialized; the entry contributes nothing.
    Skipped { reason: String },
    /// No frame timestamp falls inside the entry.
    NoFrames,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntryReport {
    pub entry_index: usize,
    pub description: String,
    pub frames: Range<usize>,
    pub status: EntryStatus,
    /// Frames with a freshly located mask, including the first.
    pub detected: usize,
    pub held: usize,
    /// Frames of the entry left without a target after deactivation.
    pub dropped: usize,
    pub score: Option<f64>,
    pub notes: Vec<String>,
}

impl EntryReport {
    pub fn is_skipped(&self) -> bool {
        matches!(self.status, EntryStatus::Skipped { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    /// Active target states per frame, ordered by entry index.
    pub frames: Vec<Vec<TargetState>>,
    pub reports: Vec<EntryReport>,
}

impl Timeline {
    pub fn any_skipped(&self) -> bool {
        self.reports.iter().any(EntryReport::is_skipped)
    }
}

fn resolve_entry(
    entry_index: usize,
    entry: &ScriptEntry,
    meta: &VideoMeta,
    factory: &dyn LocatorFactory,
    hold: HoldPolicy,
    frames: &dyn FrameSource,
) -> (Vec<TargetState>, EntryReport) {
    let range = entry_frames(entry, meta.fps, meta.frame_count);
    let mut report = EntryReport {
        entry_index,
        description: entry.description().to_string(),
        frames: range.clone(),
        status: EntryStatus::Tracked,
        detected: 0,
        held: 0,
        dropped: 0,
        score: None,
        notes: Vec::new(),
    };
    let mut states = Vec::new();
    if range.is_empty() {
        report.status = EntryStatus::NoFrames;
        return (states, report);
    }
    let mut locator = factory.create(entry_index, entry, meta);
    let first = range.start;
    let initial = locator.init(entry, frames, first).map_err(|e| e.to_string()).and_then(|det| {
        report.score = det.score;
        TargetState::new(entry_index, first, det.mask).map_err(|e| format!("first mask unusable: {e}"))
    });
    let mut last = match initial {
        Ok(s) => s,
        Err(reason) => {
            report.status = EntryStatus::Skipped { reason };
            return (states, report);
        }
    };
    report.detected = 1;
    states.push(last.clone());

    let mut missing_run = 0usize;
    for k in range.start + 1..range.end {
        let fresh = match locator.next(frames, k) {
            Ok(Some(mask)) => match TargetState::new(entry_index, k, mask) {
                Ok(s) => Some(s),
                Err(e) => {
                    report.notes.push(format!("frame {k}: mask unusable ({e})"));
                    None
                }
            },
            Ok(None) => None,
            Err(e) => {
                report.notes.push(format!("frame {k}: {e}"));
                None
            }
        };
        match fresh {
            Some(s) => {
                missing_run = 0;
                report.detected += 1;
                last = s.clone();
                states.push(s);
            }
            None => {
                missing_run += 1;
                if missing_run > hold.max_hold_frames {
                    report.status = EntryStatus::Deactivated { at_frame: k };
                    report.dropped = range.end - k;
                    break;
                }
                report.held += 1;
                let mut s = last.clone();
                s.frame_index = k;
                s.held = true;
                states.push(s);
            }
        }
    }
    (states, report)
}

/// Resolves every entry in script order. Failures stay local to their entry.
pub fn resolve_timeline(
    script: &Script,
    meta: &VideoMeta,
    factory: &dyn LocatorFactory,
    hold: HoldPolicy,
    frames: &dyn FrameSource,
) -> Timeline {
    let mut per_frame: Vec<Vec<TargetState>> = vec![Vec::new(); meta.frame_count];
    let mut reports = Vec::with_capacity(script.len());
    for (i, entry) in script.entries().iter().enumerate() {
        let (states, report) = resolve_entry(i, entry, meta, factory, hold, frames);
        for s in states {
            per_frame[s.frame_index].push(s);
        }
        reports.push(report);
    }
    Timeline { frames: per_frame, reports }
}
