//! Frame-sequence I/O: the video manifest, binary PPM frames and PGM masks.

use std::fs;
use std::path::{Path, PathBuf};

use crate::geom::RasterDims;
use crate::kv::KeyValues;

#[derive(Debug, thiserror::Error)]
pub enum MediaError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest is missing key `{0}`")]
    MissingKey(String),
    #[error("bad value for `{key}`: {reason}")]
    BadValue { key: String, reason: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("dims mismatch: expected {expected}, found {found}")]
    DimsMismatch { expected: RasterDims, found: RasterDims },
}

impl MediaError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    fn bad(key: &str, reason: impl Into<String>) -> Self {
        Self::BadValue { key: key.to_string(), reason: reason.into() }
    }
}

/// 8-bit RGB equirectangular raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameBuffer {
    dims: RasterDims,
    pixels: Vec<u8>,
}

impl FrameBuffer {
    pub fn new(dims: RasterDims, pixels: Vec<u8>) -> Result<Self, MediaError> {
        if pixels.len() != dims.pixel_count() * 3 {
            return Err(MediaError::Format(format!("{} bytes do not form a {dims} RGB raster", pixels.len())));
        }
        Ok(Self { dims, pixels })
    }

    pub fn filled(dims: RasterDims, rgb: [u8; 3]) -> Self {
        let pixels = rgb.iter().copied().cycle().take(dims.pixel_count() * 3).collect();
        Self { dims, pixels }
    }

    pub fn dims(&self) -> RasterDims {
        self.dims
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn get(&self, u: usize, v: usize) -> [u8; 3] {
        let i = (v * self.dims.width + u) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, u: usize, v: usize, rgb: [u8; 3]) {
        let i = (v * self.dims.width + u) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Binary target mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskBuffer {
    dims: RasterDims,
    bits: Vec<bool>,
}

impl MaskBuffer {
    pub fn empty(dims: RasterDims) -> Self {
        Self { dims, bits: vec![false; dims.pixel_count()] }
    }

    pub fn from_bits(dims: RasterDims, bits: Vec<bool>) -> Result<Self, MediaError> {
        if bits.len() != dims.pixel_count() {
            return Err(MediaError::Format(format!("{} bits do not form a {dims} mask", bits.len())));
        }
        Ok(Self { dims, bits })
    }

    pub fn dims(&self) -> RasterDims {
        self.dims
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> bool {
        self.bits[v * self.dims.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, on: bool) {
        let w = self.dims.width;
        self.bits[v * w + u] = on;
    }

    pub fn any(&self) -> bool {
        self.bits.iter().any(|&b| b)
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Inclusive pixel extent `[x0, y0, x1, y1]` of the set pixels.
    pub fn bbox(&self) -> Option<[u32; 4]> {
        let w = self.dims.width;
        let mut out: Option<[u32; 4]> = None;
        for (i, _) in self.bits.iter().enumerate().filter(|(_, &b)| b) {
            let (x, y) = ((i % w) as u32, (i / w) as u32);
            out = Some(match out {
                None => [x, y, x, y],
                Some([x0, y0, x1, y1]) => [x0.min(x), y0.min(y), x1.max(x), y1.max(y)],
            });
        }
        out
    }
}

/// Geometry and timing of an input frame sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoMeta {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub frame_count: usize,
    /// printf-style pattern such as `frame_%06d.ppm`, relative to `base_dir`.
    pub frame_pattern: String,
    pub base_dir: PathBuf,
}

impl VideoMeta {
    pub fn dims(&self) -> RasterDims {
        RasterDims { width: self.width, height: self.height }
    }

    pub fn frame_file_name(&self, index: usize) -> String {
        // pattern validated on load
        format_frame_pattern(&self.frame_pattern, index).unwrap_or_default()
    }

    pub fn frame_path(&self, index: usize) -> PathBuf {
        self.base_dir.join(self.frame_file_name(index))
    }

    /// Manifest text for this sequence (base directory excluded).
    pub fn to_manifest_text(&self) -> String {
        let mut kv = KeyValues::default();
        kv.insert("width", self.width.to_string());
        kv.insert("height", self.height.to_string());
        kv.insert("fps", format!("{}", self.fps));
        kv.insert("frame_count", self.frame_count.to_string());
        kv.insert("frame_pattern", self.frame_pattern.clone());
        kv.to_text()
    }
}

/// Expands the single integer conversion (`%d`, `%6d`, `%06d`) in `pattern`.
/// `%%` is a literal percent sign.
pub fn format_frame_pattern(pattern: &str, index: usize) -> Result<String, MediaError> {
    let mut out = String::new();
    let mut chars = pattern.chars().peekable();
    let mut conversions = 0;
    while let Some(c) = chars.next() {
        if c != '%' {
            out.push(c);
            continue;
        }
        if chars.peek() == Some(&'%') {
            chars.next();
            out.push('%');
            continue;
        }
        let mut spec = String::new();
        while let Some(&d) = chars.peek() {
            if d.is_ascii_digit() {
                spec.push(d);
                chars.next();
            } else {
                break;
            }
        }
        if chars.next() != Some('d') {
            return Err(MediaError::bad("frame_pattern", "only %d conversions are supported"));
        }
        let zero = spec.starts_with('0');
        let width: usize = if spec.is_empty() { 0 } else { spec.parse().unwrap_or(0) };
        if zero {
            out.push_str(&format!("{index:0width$}"));
        } else {
            out.push_str(&format!("{index:width$}"));
        }
        conversions += 1;
    }
    if conversions != 1 {
        return Err(MediaError::bad(
            "frame_pattern",
            format!("expected exactly one %d conversion, found {conversions}"),
        ));
    }
    Ok(out)
}

/// Parses manifest text. Returns the metadata plus non-fatal warnings.
pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<(VideoMeta, Vec<String>), MediaError> {
    let kv = KeyValues::parse(text).map_err(|e| MediaError::Format(format!("manifest {e}")))?;
    let get = |key: &str| kv.get(key).ok_or_else(|| MediaError::MissingKey(key.to_string()));
    let positive = |key: &str| -> Result<usize, MediaError> {
        let raw = get(key)?;
        let n: usize = raw.parse().map_err(|_| MediaError::bad(key, format!("`{raw}` is not an integer")))?;
        if n == 0 {
            return Err(MediaError::bad(key, "must be positive"));
        }
        Ok(n)
    };
    let width = positive("width")?;
    let height = positive("height")?;
    if width < 2 {
        return Err(MediaError::bad("width", "must be at least 2"));
    }
    let fps_raw = get("fps")?;
    let fps: f64 = fps_raw.parse().map_err(|_| MediaError::bad("fps", format!("`{fps_raw}` is not a number")))?;
    if !(fps.is_finite() && fps > 0.0) {
        return Err(MediaError::bad("fps", "must be a positive finite number"));
    }
    let frame_count = positive("frame_count")?;
    let frame_pattern = get("frame_pattern")?.to_string();
    format_frame_pattern(&frame_pattern, 0)?;

    let mut warnings = Vec::new();
    if width != 2 * height {
        warnings.push(format!("{width}x{height} is not 2:1; treating it as equirectangular anyway"));
    }
    for key in kv.keys() {
        if !["width", "height", "fps", "frame_count", "frame_pattern"].contains(&key) {
            warnings.push(format!("ignoring unknown manifest key `{key}`"));
        }
    }
    let meta = VideoMeta { width, height, fps, frame_count, frame_pattern, base_dir: base_dir.to_path_buf() };
    Ok((meta, warnings))
}

pub fn read_manifest(path: &Path) -> Result<(VideoMeta, Vec<String>), MediaError> {
    let text = fs::read_to_string(path).map_err(|e| MediaError::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(&text, &base)
}

pub fn frame_time(index: usize, fps: f64) -> f64 {
    index as f64 / fps
}

struct PnmHeader {
    width: usize,
    height: usize,
    data_offset: usize,
}

fn parse_pnm_header(bytes: &[u8], magic: &[u8; 2]) -> Result<PnmHeader, MediaError> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(MediaError::Format(format!("expected magic {}, found `{found}`", String::from_utf8_lossy(magic))));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(MediaError::Format("truncated or malformed header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| MediaError::Format("header value out of range".into()))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(MediaError::Format("missing whitespace after maxval".into()));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(MediaError::Format(format!("maxval {maxval} unsupported (need 255)")));
    }
    if width < 2 || height < 1 {
        return Err(MediaError::Format(format!("raster {width}x{height} too small")));
    }
    Ok(PnmHeader { width, height, data_offset: pos })
}

fn pnm_payload<'a>(bytes: &'a [u8], header: &PnmHeader, channels: usize) -> Result<&'a [u8], MediaError> {
    let need = header.width * header.height * channels;
    let data = &bytes[header.data_offset..];
    if data.len() != need {
        return Err(MediaError::Format(format!("expected {need} payload bytes, found {}", data.len())));
    }
    Ok(data)
}

pub fn decode_ppm(bytes: &[u8]) -> Result<FrameBuffer, MediaError> {
    let header = parse_pnm_header(bytes, b"P6")?;
    let data = pnm_payload(bytes, &header, 3)?;
    let dims = RasterDims { width: header.width, height: header.height };
    FrameBuffer::new(dims, data.to_vec())
}

/// `P6\n<W> <H>\n255\n` followed by the raw RGB payload.
pub fn encode_ppm(frame: &FrameBuffer) -> Vec<u8> {
    let d = frame.dims();
    let mut out = format!("P6\n{} {}\n255\n", d.width, d.height).into_bytes();
    out.extend_from_slice(frame.pixels());
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<(RasterDims, Vec<u8>), MediaError> {
    let header = parse_pnm_header(bytes, b"P5")?;
    let data = pnm_payload(bytes, &header, 1)?;
    Ok((RasterDims { width: header.width, height: header.height }, data.to_vec()))
}

pub fn encode_pgm(dims: RasterDims, samples: &[u8]) -> Vec<u8> {
    assert_eq!(samples.len(), dims.pixel_count());
    let mut out = format!("P5\n{} {}\n255\n", dims.width, dims.height).into_bytes();
    out.extend_from_slice(samples);
    out
}

pub fn read_frame(meta: &VideoMeta, index: usize) -> Result<FrameBuffer, MediaError> {
    let path = meta.frame_path(index);
    let bytes = fs::read(&path).map_err(|e| MediaError::io(&path, e))?;
    let frame = decode_ppm(&bytes)?;
    if frame.dims() != meta.dims() {
        return Err(MediaError::DimsMismatch { expected: meta.dims(), found: frame.dims() });
    }
    Ok(frame)
}

pub fn write_frame(frame: &FrameBuffer, path: &Path) -> Result<(), MediaError> {
    fs::write(path, encode_ppm(frame)).map_err(|e| MediaError::io(path, e))
}

pub fn mask_from_gray(dims: RasterDims, samples: &[u8]) -> MaskBuffer {
    MaskBuffer { dims, bits: samples.iter().map(|&s| s >= 128).collect() }
}

pub fn read_mask(path: &Path, dims: RasterDims) -> Result<MaskBuffer, MediaError> {
    let bytes = fs::read(path).map_err(|e| MediaError::io(path, e))?;
    let (found, samples) = decode_pgm(&bytes)?;
    if found != dims {
        return Err(MediaError::DimsMismatch { expected: dims, found });
    }
    Ok(mask_from_gray(dims, &samples))
}

/// Writes set bits as 255 and clear bits as 0.
pub fn write_mask(mask: &MaskBuffer, path: &Path) -> Result<(), MediaError> {
    let samples: Vec<u8> = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    fs::write(path, encode_pgm(mask.dims(), &samples)).map_err(|e| MediaError::io(path, e))
}
