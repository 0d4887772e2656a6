//! The four attention effects and their compositor.
//!
//! All effects are driven by the focus field `D` through one smoothstep
//! falloff `s(D)` and by a per-frame temporal intensity `g`. Per pixel the
//! stages run in a fixed order: blur blend, fade to gray, radial darkening,
//! halo darkening. Everything is computed in `f64` and quantized once.

use rayon::prelude::*;

use crate::geom::{FocusField, RasterDims};
use crate::media::FrameBuffer;
use crate::script::ScriptEntry;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EffectError {
    #[error("invalid effect config: {0}")]
    Config(String),
    #[error("field is {field}, frame is {frame}")]
    DimsMismatch { frame: RasterDims, field: RasterDims },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FieldMode {
    /// Targets are spherical caps around their mask centroid.
    #[default]
    Centroid,
    /// Shortest-path distance to the mask pixels themselves.
    Mask,
}

impl std::str::FromStr for FieldMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "centroid" => Ok(Self::Centroid),
            "mask" => Ok(Self::Mask),
            other => Err(format!("unknown field mode `{other}` (centroid | mask)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectConfig {
    /// Field value (radians) where the falloff starts.
    pub theta_in: f64,
    /// Field value (radians) where the falloff saturates.
    pub theta_out: f64,
    /// Blur standard deviation in pixels; `None` means `width / 256`.
    pub sigma_max: Option<f64>,
    pub k_gray: f64,
    /// Radial darkening strength. Kept below 1 so the far side never goes black.
    pub k_dark: f64,
    pub k_halo: f64,
    /// Halo width in radians.
    pub w_halo: f64,
    /// Ease-in/ease-out duration in seconds.
    pub ramp_tau: f64,
    pub field_mode: FieldMode,
}

impl Default for EffectConfig {
    fn default() -> Self {
        Self {
            theta_in: 0.05,
            theta_out: 1.0,
            sigma_max: None,
            k_gray: 0.8,
            k_dark: 0.6,
            k_halo: 0.5,
            w_halo: 0.08,
            ramp_tau: 0.5,
            field_mode: FieldMode::Centroid,
        }
    }
}

impl EffectConfig {
    pub fn validate(&self) -> Result<(), EffectError> {
        let bad = |m: String| Err(EffectError::Config(m));
        let finite = [self.theta_in, self.theta_out, self.k_gray, self.k_dark, self.k_halo, self.w_halo, self.ramp_tau];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("all parameters must be finite".into());
        }
        if !(self.theta_in >= 0.0 && self.theta_in < self.theta_out) {
            return bad(format!("need 0 <= theta_in < theta_out, got {} and {}", self.theta_in, self.theta_out));
        }
        if let Some(s) = self.sigma_max {
            if !(s.is_finite() && s >= 0.0) {
                return bad(format!("sigma_max must be >= 0, got {s}"));
            }
        }
        if !(0.0..=1.0).contains(&self.k_gray) {
            return bad(format!("k_gray must be in [0, 1], got {}", self.k_gray));
        }
        if !(0.0..1.0).contains(&self.k_dark) {
            return bad(format!("k_dark must be in [0, 1), got {}", self.k_dark));
        }
        if !(0.0..=1.0).contains(&self.k_halo) {
            return bad(format!("k_halo must be in [0, 1], got {}", self.k_halo));
        }
        if !(self.w_halo > 0.0) {
            return bad(format!("w_halo must be > 0, got {}", self.w_halo));
        }
        if self.ramp_tau < 0.0 {
            return bad(format!("ramp_tau must be >= 0, got {}", self.ramp_tau));
        }
        Ok(())
    }

    pub fn sigma_for(&self, dims: RasterDims) -> f64 {
        self.sigma_max.unwrap_or(dims.width as f64 / 256.0)
    }
}

#[inline]
pub fn smoothstep(x: f64) -> f64 {
    x * x * (3.0 - 2.0 * x)
}

/// Spatial falloff in `[0, 1]`: 0 up to `theta_in`, 1 from `theta_out`.
#[inline]
pub fn falloff(d: f64, theta_in: f64, theta_out: f64) -> f64 {
    let x = ((d - theta_in) / (theta_out - theta_in)).clamp(0.0, 1.0);
    smoothstep(x)
}

/// Temporal intensity of one entry at time `t`.
pub fn ramp(t: f64, entry: &ScriptEntry, tau: f64) -> f64 {
    if !entry.contains(t) {
        return 0.0;
    }
    let tau = tau.min((entry.end() - entry.start()) / 2.0);
    if tau <= 0.0 {
        return 1.0;
    }
    let from_start = t - entry.start();
    let to_end = entry.end() - t;
    if from_start < tau {
        smoothstep((from_start / tau).clamp(0.0, 1.0))
    } else if to_end < tau {
        smoothstep((to_end / tau).clamp(0.0, 1.0))
    } else {
        1.0
    }
}

/// Frame intensity: the strongest ramp among the given entries.
pub fn frame_intensity<'a>(t: f64, entries: impl IntoIterator<Item = &'a ScriptEntry>, tau: f64) -> f64 {
    entries.into_iter().map(|e| ramp(t, e, tau)).fold(0.0, f64::max)
}

/// Normalized Gaussian taps for offsets `-r..=r`, `r = ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if !(sigma > 0.0) {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let denom = 2.0 * sigma * sigma;
    let raw: Vec<f64> = (-radius..=radius).map(|i| (-((i * i) as f64) / denom).exp()).collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|w| w / sum).collect()
}

/// Floating-point RGB raster produced by the blur pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatFrame {
    dims: RasterDims,
    data: Vec<f64>,
}

impl FloatFrame {
    pub fn dims(&self) -> RasterDims {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, u: usize, v: usize) -> [f64; 3] {
        let i = (v * self.dims.width + u) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn quantize(&self) -> FrameBuffer {
        let pixels = self.data.iter().map(|&x| quantize(x)).collect();
        FrameBuffer::new(self.dims, pixels).expect("dims preserved")
    }
}

/// Separable Gaussian blur. The horizontal pass wraps in longitude, the
/// vertical pass clamps at the poles. Taps are accumulated in ascending
/// offset order starting from zero.
pub fn blur_pass(frame: &FrameBuffer, sigma: f64) -> FloatFrame {
    let dims = frame.dims();
    let (w, h) = (dims.width, dims.height);
    let src: Vec<f64> = frame.pixels().iter().map(|&b| b as f64).collect();
    let kernel = gaussian_kernel(sigma);
    if kernel.len() == 1 {
        return FloatFrame { dims, data: src };
    }
    let r = kernel.len() / 2;
    let row_len = w * 3;

    let mut horiz = vec![0.0f64; src.len()];
    horiz.par_chunks_mut(row_len).zip(src.par_chunks(row_len)).for_each(|(out, row)| {
        // row padded by r pixels on each side, wrapped
        let mut padded = Vec::with_capacity((w + 2 * r) * 3);
        for i in 0..w + 2 * r {
            let u = (i as isize - r as isize).rem_euclid(w as isize) as usize;
            padded.extend_from_slice(&row[u * 3..u * 3 + 3]);
        }
        for u in 0..w {
            let mut acc = [0.0f64; 3];
            for (k, &wk) in kernel.iter().enumerate() {
                let p = (u + k) * 3;
                acc[0] += wk * padded[p];
                acc[1] += wk * padded[p + 1];
                acc[2] += wk * padded[p + 2];
            }
            out[u * 3..u * 3 + 3].copy_from_slice(&acc);
        }
    });

    let mut data = vec![0.0f64; src.len()];
    data.par_chunks_mut(row_len).enumerate().for_each(|(v, out)| {
        for (k, &wk) in kernel.iter().enumerate() {
            let sv = (v as isize + k as isize - r as isize).clamp(0, h as isize - 1) as usize;
            let row = &horiz[sv * row_len..(sv + 1) * row_len];
            for (o, &x) in out.iter_mut().zip(row) {
                *o += wk * x;
            }
        }
    });
    FloatFrame { dims, data }
}

/// Clamp to `[0, 255]` and round half up.
#[inline]
pub fn quantize(x: f64) -> u8 {
    (x.clamp(0.0, 255.0) + 0.5).floor() as u8
}

pub const LUMA_R: f64 = 0.2126;
pub const LUMA_G: f64 = 0.7152;
pub const LUMA_B: f64 = 0.0722;

/// Applies the four effects to one pixel. `c` is the original color and
/// `blurred` the blurred color at the same pixel.
#[inline]
pub fn shade_pixel(c: [f64; 3], blurred: [f64; 3], d: f64, g: f64, cfg: &EffectConfig) -> [f64; 3] {
    let s = falloff(d, cfg.theta_in, cfg.theta_out);
    let sg = s * g;
    let mut out = c;
    if sg > 0.0 {
        for i in 0..3 {
            out[i] = c[i] + sg * (blurred[i] - c[i]);
        }
        let y = LUMA_R * out[0] + LUMA_G * out[1] + LUMA_B * out[2];
        let sat = 1.0 - cfg.k_gray * s * g;
        for ch in &mut out {
            *ch = y + sat * (*ch - y);
        }
        let dark = 1.0 - cfg.k_dark * s * g;
        for ch in &mut out {
            *ch *= dark;
        }
    }
    if d > 0.0 && g > 0.0 {
        let h = 1.0 - cfg.k_halo * g * (1.0 - smoothstep((d / cfg.w_halo).clamp(0.0, 1.0)));
        for ch in &mut out {
            *ch *= h;
        }
    }
    out
}

/// Blurs once, shades every pixel and quantizes. Returns the input unchanged
/// when `g == 0` or the field is zero everywhere.
pub fn compose_frame(
    frame: &FrameBuffer,
    field: &FocusField,
    g: f64,
    cfg: &EffectConfig,
) -> Result<FrameBuffer, EffectError> {
    let dims = frame.dims();
    if field.dims() != dims {
        return Err(EffectError::DimsMismatch { frame: dims, field: field.dims() });
    }
    if !(g > 0.0) || field.is_all_zero() {
        return Ok(frame.clone());
    }
    let blurred = blur_pass(frame, cfg.sigma_for(dims));
    let w = dims.width;
    let mut out = vec![0u8; frame.pixels().len()];
    out.par_chunks_mut(w * 3).enumerate().for_each(|(v, row)| {
        let src = &frame.pixels()[v * w * 3..(v + 1) * w * 3];
        let blur = &blurred.data()[v * w * 3..(v + 1) * w * 3];
        let d_row = field.row(v);
        for (u, &d) in d_row.iter().enumerate() {
            let i = u * 3;
            let c = [src[i] as f64, src[i + 1] as f64, src[i + 2] as f64];
            let b = [blur[i], blur[i + 1], blur[i + 2]];
            let shaded = shade_pixel(c, b, d, g, cfg);
            row[i] = quantize(shaded[0]);
            row[i + 1] = quantize(shaded[1]);
            row[i + 2] = quantize(shaded[2]);
        }
    });
    Ok(FrameBuffer::new(dims, out).expect("dims preserved"))
}
