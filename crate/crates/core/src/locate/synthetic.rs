//! Spherical-disc targets moving along great circles.

use crate::geom::{angular_distance, DirTable, Direction, RasterDims};
use crate::media::MaskBuffer;

/// A disc of angular radius `radius` whose center starts at (`lon`, `lat`)
/// and travels along a great circle at `rate` radians per second. `heading`
/// is the initial bearing: 0 is east, π/2 is north.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscTrajectory {
    pub lon: f64,
    pub lat: f64,
    pub radius: f64,
    pub rate: f64,
    pub heading: f64,
}

impl DiscTrajectory {
    pub fn stationary(lon: f64, lat: f64, radius: f64) -> Self {
        Self { lon, lat, radius, rate: 0.0, heading: 0.0 }
    }

    /// Parses `disc lon=<rad> lat=<rad> r=<rad>` with optional `rate=<rad/s>`
    /// and `heading=<rad>`, in any order after the `disc` keyword.
    pub fn parse(description: &str) -> Option<Self> {
        let mut words = description.split_whitespace();
        if words.next()? != "disc" {
            return None;
        }
        let (mut lon, mut lat, mut radius) = (None, None, None);
        let (mut rate, mut heading) = (0.0, 0.0);
        for w in words {
            let (k, v) = w.split_once('=')?;
            let v: f64 = v.parse().ok().filter(|x: &f64| x.is_finite())?;
            match k {
                "lon" => lon = Some(v),
                "lat" => lat = Some(v),
                "r" => radius = Some(v),
                "rate" => rate = v,
                "heading" => heading = v,
                _ => return None,
            }
        }
        let radius = radius.filter(|r| *r >= 0.0)?;
        Some(Self { lon: lon?, lat: lat?, radius, rate, heading })
    }

    pub fn describe(&self) -> String {
        let mut s = format!("disc lon={} lat={} r={}", self.lon, self.lat, self.radius);
        if self.rate != 0.0 {
            s.push_str(&format!(" rate={} heading={}", self.rate, self.heading));
        }
        s
    }

    pub fn center_at(&self, elapsed: f64) -> Direction {
        let start = Direction::from_lon_lat(self.lon, self.lat);
        let angle = self.rate * elapsed;
        if angle == 0.0 {
            return start;
        }
        let (sl, cl) = self.lon.sin_cos();
        let (sp, cp) = self.lat.sin_cos();
        let east = [-sl, cl, 0.0];
        let north = [-sp * cl, -sp * sl, cp];
        let (sh, ch) = self.heading.sin_cos();
        let t = [ch * east[0] + sh * north[0], ch * east[1] + sh * north[1], ch * east[2] + sh * north[2]];
        let (sa, ca) = angle.sin_cos();
        Direction::from_components(ca * start.x + sa * t[0], ca * start.y + sa * t[1], ca * start.z + sa * t[2])
            .unwrap_or(start)
    }

    pub fn mask_at(&self, dims: RasterDims, elapsed: f64) -> MaskBuffer {
        rasterize_disc(dims, &self.center_at(elapsed), self.radius)
    }
}

/// All pixels whose center lies within `radius` of `center`.
pub fn rasterize_disc(dims: RasterDims, center: &Direction, radius: f64) -> MaskBuffer {
    let table = DirTable::new(dims);
    let mut m = MaskBuffer::empty(dims);
    for v in 0..dims.height {
        for u in 0..dims.width {
            if angular_distance(&table.dir(u, v), center) <= radius {
                m.set(u, v, true);
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn parses_descriptions() {
        let t = DiscTrajectory::parse("disc lon=0 lat=0 r=0.2").unwrap();
        assert_eq!(t, DiscTrajectory::stationary(0.0, 0.0, 0.2));
        let t = DiscTrajectory::parse("disc r=0.1 lat=-0.5 lon=1 rate=0.3 heading=1.57").unwrap();
        assert_eq!((t.lon, t.lat, t.radius, t.rate, t.heading), (1.0, -0.5, 0.1, 0.3, 1.57));
        assert_eq!(DiscTrajectory::parse(&t.describe()), Some(t));
        assert!(DiscTrajectory::parse("the farthest turtle").is_none());
        assert!(DiscTrajectory::parse("disc lon=0 lat=0").is_none());
        assert!(DiscTrajectory::parse("disc lon=0 lat=0 r=-1").is_none());
        assert!(DiscTrajectory::parse("disc lon=0 lat=0 r=0.1 size=2").is_none());
    }

    #[test]
    fn eastward_equator_motion() {
        let t = DiscTrajectory { lon: 0.1, lat: 0.0, radius: 0.1, rate: 0.5, heading: 0.0 };
        let c = t.center_at(2.0);
        assert!((c.lon() - 1.1).abs() < 1e-12);
        assert!(c.lat().abs() < 1e-12);
    }

    #[test]
    fn northward_motion_over_pole() {
        let t = DiscTrajectory { lon: 0.0, lat: 0.0, radius: 0.1, rate: 1.0, heading: PI / 2.0 };
        let c = t.center_at(PI / 2.0);
        assert!((c.z - 1.0).abs() < 1e-12);
    }
}
