//! Spherical geometry on equirectangular rasters.
//!
//! Columns cover longitude `[-π, π)` and wrap around; rows cover latitude
//! from `+π/2` (row 0) down to `-π/2` and do not wrap. Every pixel is
//! addressed by its center, so column `u` sits at longitude
//! `2π(u + 0.5)/W − π` and row `v` at latitude `π/2 − π(v + 0.5)/H`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rayon::prelude::*;

use crate::media::MaskBuffer;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeomError {
    #[error("raster must be at least 2x1 pixels, got {width}x{height}")]
    BadDims { width: usize, height: usize },
    #[error("mask has no set pixels")]
    EmptyMask,
    #[error("mask is symmetric about the sphere center; no meaningful centroid")]
    DegenerateMask,
    #[error("no active target")]
    NoActiveTarget,
    #[error("raster dims mismatch: expected {expected}, found {found}")]
    DimsMismatch { expected: RasterDims, found: RasterDims },
}

/// Unit 3-vector on the sphere. `+x` points at (lon 0, lat 0), `+z` at the north pole.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Direction {
    /// Builds a direction from raw components, normalizing them.
    /// Returns `None` for a (near) zero vector.
    pub fn from_components(x: f64, y: f64, z: f64) -> Option<Self> {
        let n = (x * x + y * y + z * z).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return None;
        }
        Some(Self { x: x / n, y: y / n, z: z / n })
    }

    pub fn from_lon_lat(lon: f64, lat: f64) -> Self {
        let (sl, cl) = lon.sin_cos();
        let (sp, cp) = lat.sin_cos();
        Self { x: cp * cl, y: cp * sl, z: sp }
    }

    pub fn lon(&self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn lat(&self) -> f64 {
        self.z.atan2((self.x * self.x + self.y * self.y).sqrt())
    }

    pub fn dot(&self, o: &Direction) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RasterDims {
    pub width: usize,
    pub height: usize,
}

impl RasterDims {
    pub fn new(width: usize, height: usize) -> Result<Self, GeomError> {
        if width < 2 || height < 1 {
            return Err(GeomError::BadDims { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

impl std::fmt::Display for RasterDims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Longitude of the center of column `u`.
#[inline]
pub fn column_lon(u: usize, dims: RasterDims) -> f64 {
    TAU * (u as f64 + 0.5) / dims.width as f64 - PI
}

/// Latitude of the center of row `v`.
#[inline]
pub fn row_lat(v: usize, dims: RasterDims) -> f64 {
    FRAC_PI_2 - PI * (v as f64 + 0.5) / dims.height as f64
}

pub fn pixel_to_dir(u: usize, v: usize, dims: RasterDims) -> Direction {
    debug_assert!(u < dims.width && v < dims.height);
    let lon = column_lon(u, dims);
    let lat = row_lat(v, dims);
    let (cp, sp) = (lat.cos(), lat.sin());
    Direction { x: cp * lon.cos(), y: cp * lon.sin(), z: sp }
}

/// Great-circle angle between two unit vectors, in `[0, π]`.
pub fn angular_distance(a: &Direction, b: &Direction) -> f64 {
    let cx = a.y * b.z - a.z * b.y;
    let cy = a.z * b.x - a.x * b.z;
    let cz = a.x * b.y - a.y * b.x;
    let cross = (cx * cx + cy * cy + cz * cz).sqrt();
    cross.atan2(a.dot(b))
}

/// Relative solid angle of a pixel in row `v` (cosine of its latitude).
pub fn solid_angle_weight(v: usize, dims: RasterDims) -> f64 {
    row_lat(v, dims).cos()
}

/// Per-raster table of pixel-center directions, split into per-column and
/// per-row factors. Products reproduce [`pixel_to_dir`] bit for bit.
#[derive(Debug, Clone)]
pub(crate) struct DirTable {
    cos_lon: Vec<f64>,
    sin_lon: Vec<f64>,
    cos_lat: Vec<f64>,
    sin_lat: Vec<f64>,
}

impl DirTable {
    pub(crate) fn new(dims: RasterDims) -> Self {
        let lons: Vec<f64> = (0..dims.width).map(|u| column_lon(u, dims)).collect();
        let lats: Vec<f64> = (0..dims.height).map(|v| row_lat(v, dims)).collect();
        Self {
            cos_lon: lons.iter().map(|l| l.cos()).collect(),
            sin_lon: lons.iter().map(|l| l.sin()).collect(),
            cos_lat: lats.iter().map(|l| l.cos()).collect(),
            sin_lat: lats.iter().map(|l| l.sin()).collect(),
        }
    }

    #[inline]
    pub(crate) fn dir(&self, u: usize, v: usize) -> Direction {
        let cp = self.cos_lat[v];
        Direction { x: cp * self.cos_lon[u], y: cp * self.sin_lon[u], z: self.sin_lat[v] }
    }
}

/// Guidance anchor reduced from a target mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetGeometry {
    pub center: Direction,
    /// Largest angular distance from `center` to any set pixel center.
    pub radius: f64,
}

pub fn mask_to_geometry(mask: &MaskBuffer) -> Result<TargetGeometry, GeomError> {
    let dims = mask.dims();
    let table = DirTable::new(dims);
    let (mut sx, mut sy, mut sz) = (0.0f64, 0.0f64, 0.0f64);
    let mut any = false;
    for v in 0..dims.height {
        let w = table.cos_lat[v];
        for u in 0..dims.width {
            if mask.get(u, v) {
                any = true;
                let d = table.dir(u, v);
                sx += w * d.x;
                sy += w * d.y;
                sz += w * d.z;
            }
        }
    }
    if !any {
        return Err(GeomError::EmptyMask);
    }
    let n = (sx * sx + sy * sy + sz * sz).sqrt();
    if n < 1e-6 {
        return Err(GeomError::DegenerateMask);
    }
    let center = Direction { x: sx / n, y: sy / n, z: sz / n };
    let mut radius = 0.0f64;
    for v in 0..dims.height {
        for u in 0..dims.width {
            if mask.get(u, v) {
                radius = radius.max(angular_distance(&center, &table.dir(u, v)));
            }
        }
    }
    Ok(TargetGeometry { center, radius })
}

/// Per-pixel angular distance (radians) beyond the protected region of the
/// nearest target. Zero inside the protected region, at most π.
#[derive(Debug, Clone, PartialEq)]
pub struct FocusField {
    dims: RasterDims,
    values: Vec<f64>,
}

impl FocusField {
    pub fn from_values(dims: RasterDims, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), dims.pixel_count(), "field length must match dims");
        Self { dims, values }
    }

    /// A field that is zero everywhere.
    pub fn zeros(dims: RasterDims) -> Self {
        Self { dims, values: vec![0.0; dims.pixel_count()] }
    }

    pub fn dims(&self) -> RasterDims {
        self.dims
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[v * self.dims.width + u]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, v: usize) -> &[f64] {
        let w = self.dims.width;
        &self.values[v * w..(v + 1) * w]
    }

    pub fn is_all_zero(&self) -> bool {
        self.values.iter().all(|&d| d == 0.0)
    }

    /// Gray PGM samples `min(255, round(D/π·255))`, row-major.
    pub fn to_gray(&self) -> Vec<u8> {
        self.values.iter().map(|&d| (d / PI * 255.0).round().clamp(0.0, 255.0) as u8).collect()
    }
}

/// Analytic field for targets modeled as spherical caps.
pub fn focus_field_centroid(dims: RasterDims, targets: &[TargetGeometry]) -> Result<FocusField, GeomError> {
    if targets.is_empty() {
        return Err(GeomError::NoActiveTarget);
    }
    let table = DirTable::new(dims);
    let mut values = vec![0.0f64; dims.pixel_count()];
    values.par_chunks_mut(dims.width).enumerate().for_each(|(v, row)| {
        for (u, out) in row.iter_mut().enumerate() {
            let p = table.dir(u, v);
            let mut best = f64::INFINITY;
            for t in targets {
                let surplus = (angular_distance(&p, &t.center) - t.radius).max(0.0);
                best = best.min(surplus);
            }
            *out = best;
        }
    });
    Ok(FocusField { dims, values })
}

/// Horizontal reach of the shortest-path stencil, measured in vertical pixel
/// steps. Rows near the poles get proportionally more columns.
const STENCIL_REACH: f64 = 2.0;
/// Rows reachable in one edge, above and below.
const STENCIL_ROWS: isize = 2;

#[derive(Debug, Clone, Copy)]
struct Edge {
    du: usize,
    dv: isize,
    cost: f64,
}

/// Builds the per-row edge list. Costs depend only on (row, row offset,
/// column offset), so fields rotate exactly with their sources.
fn stencil(dims: RasterDims) -> Vec<Vec<Edge>> {
    let (w, h) = (dims.width, dims.height);
    let vstep = PI / h as f64;
    let mut rows = Vec::with_capacity(h);
    for v in 0..h {
        let hstep = TAU / w as f64 * row_lat(v, dims).cos();
        let reach = if hstep > 0.0 { (STENCIL_REACH * vstep / hstep).ceil().max(2.0) } else { w as f64 };
        let reach = (reach as usize).min(w / 2).max(1);
        let mut offsets: Vec<usize> = (0..=reach).flat_map(|k| [k % w, (w - k % w) % w]).collect();
        offsets.sort_unstable();
        offsets.dedup();
        let origin = pixel_to_dir(0, v, dims);
        let mut edges = Vec::new();
        for dv in -STENCIL_ROWS..=STENCIL_ROWS {
            let nv = v as isize + dv;
            if nv < 0 || nv >= h as isize {
                continue;
            }
            for &du in &offsets {
                if du == 0 && dv == 0 {
                    continue;
                }
                let cost = angular_distance(&origin, &pixel_to_dir(du, nv as usize, dims));
                edges.push(Edge { du, dv, cost });
            }
        }
        rows.push(edges);
    }
    rows
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, ties by pixel index
        other.dist.total_cmp(&self.dist).then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Exact-mask field: multi-source shortest paths over the pixel grid with
/// great-circle edge costs and longitude wrap.
///
/// The stencil links each pixel to rows `v-2..=v+2` and to as many columns
/// as needed to cover twice the vertical pixel pitch, which near the poles
/// means the whole ring (so paths can cross the pole directly).
pub fn focus_field_mask(dims: RasterDims, masks: &[&MaskBuffer]) -> Result<FocusField, GeomError> {
    if masks.is_empty() {
        return Err(GeomError::NoActiveTarget);
    }
    for m in masks {
        if m.dims() != dims {
            return Err(GeomError::DimsMismatch { expected: dims, found: m.dims() });
        }
        if !m.any() {
            return Err(GeomError::EmptyMask);
        }
    }
    let w = dims.width;
    let edges = stencil(dims);
    let mut dist = vec![f64::INFINITY; dims.pixel_count()];
    let mut heap = BinaryHeap::new();
    for (i, d) in dist.iter_mut().enumerate() {
        if masks.iter().any(|m| m.bits()[i]) {
            *d = 0.0;
            heap.push(Candidate { dist: 0.0, index: i });
        }
    }
    if heap.len() == dist.len() {
        return Ok(FocusField::zeros(dims));
    }
    while let Some(Candidate { dist: d, index }) = heap.pop() {
        if d > dist[index] {
            continue;
        }
        let (u, v) = (index % w, index / w);
        for e in &edges[v] {
            let nv = (v as isize + e.dv) as usize;
            let nu = (u + e.du) % w;
            let ni = nv * w + nu;
            let nd = d + e.cost;
            if nd < dist[ni] {
                dist[ni] = nd;
                heap.push(Candidate { dist: nd, index: ni });
            }
        }
    }
    for d in &mut dist {
        *d = d.min(PI);
    }
    Ok(FocusField { dims, values: dist })
}
