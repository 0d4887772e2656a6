//! Attention guidance for equirectangular 360° frame sequences.
//!
//! A script names, per time interval, the element the viewer should look
//! at. A locator turns each interval into per-frame target masks, the masks
//! become a spherical focus field, and four effects (blur, fade to gray,
//! radial darkening, halo darkening) are composited around the target.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod effects;
pub mod geom;
pub mod kv;
pub mod locate;
pub mod media;
pub mod pipeline;
pub mod script;

pub use effects::{compose_frame, EffectConfig, FieldMode};
pub use geom::{Direction, FocusField, RasterDims, TargetGeometry};
pub use locate::{HoldPolicy, ProviderConfig, TargetState, Timeline};
pub use media::{FrameBuffer, MaskBuffer, VideoMeta};
pub use pipeline::{render, RenderReport, RunConfig};
pub use script::{Script, ScriptEntry};
