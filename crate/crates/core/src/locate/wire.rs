//! JSON wire types shared with the model sidecar.
//!
//! Frames travel as base64 of the exact PPM P6 bytes. Masks travel as
//! run-length encoded set bits over row-major order.

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::geom::RasterDims;
use crate::media::{decode_ppm, encode_ppm, FrameBuffer, MaskBuffer};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WireError {
    #[error("bad base64 frame: {0}")]
    Base64(String),
    #[error("bad frame payload: {0}")]
    Frame(String),
    #[error("bad mask: {0}")]
    Mask(String),
}

pub fn encode_frame(frame: &FrameBuffer) -> String {
    STANDARD.encode(encode_ppm(frame))
}

pub fn decode_frame(b64: &str) -> Result<FrameBuffer, WireError> {
    let bytes = STANDARD.decode(b64).map_err(|e| WireError::Base64(e.to_string()))?;
    decode_ppm(&bytes).map_err(|e| WireError::Frame(e.to_string()))
}

/// `{"width": W, "height": H, "runs": [[start, length], ...]}`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireMask {
    pub width: usize,
    pub height: usize,
    pub runs: Vec<[u64; 2]>,
}

impl WireMask {
    /// Maximal runs of set bits, in ascending order.
    pub fn encode(mask: &MaskBuffer) -> Self {
        let dims = mask.dims();
        let mut runs = Vec::new();
        let mut open: Option<u64> = None;
        for (i, &b) in mask.bits().iter().enumerate() {
            match (b, open) {
                (true, None) => open = Some(i as u64),
                (false, Some(s)) => {
                    runs.push([s, i as u64 - s]);
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(s) = open {
            runs.push([s, mask.bits().len() as u64 - s]);
        }
        Self { width: dims.width, height: dims.height, runs }
    }

    pub fn decode(&self) -> Result<MaskBuffer, WireError> {
        let dims = RasterDims::new(self.width, self.height).map_err(|e| WireError::Mask(e.to_string()))?;
        let total = dims.pixel_count() as u64;
        let mut bits = vec![false; dims.pixel_count()];
        let mut cursor = 0u64;
        for (k, &[start, len]) in self.runs.iter().enumerate() {
            if len == 0 {
                return Err(WireError::Mask(format!("run {k} has zero length")));
            }
            if start < cursor {
                return Err(WireError::Mask(format!("run {k} is unsorted or overlaps the previous run")));
            }
            let end = start
                .checked_add(len)
                .filter(|&e| e <= total)
                .ok_or_else(|| WireError::Mask(format!("run {k} exceeds {total} pixels")))?;
            bits[start as usize..end as usize].fill(true);
            cursor = end;
        }
        MaskBuffer::from_bits(dims, bits).map_err(|e| WireError::Mask(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParseRequest {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParseResponse {
    pub csv: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectRequest {
    pub frame: String,
    pub description: String,
}

/// Inclusive pixel box `[x0, y0, x1, y1]` of the top-scoring candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectResponse {
    pub bbox: [u32; 4],
    pub score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackInitRequest {
    pub frame: String,
    pub bbox: [u32; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackInitResponse {
    pub session_id: String,
    pub mask: WireMask,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackNextRequest {
    pub session_id: String,
    pub frame: String,
}

/// Either `{"mask": ...}` or `{"missing": true}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackNextResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<WireMask>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub missing: bool,
}

/// Body of any non-2xx response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
}
