use std::fmt;

use bytes::BufMut;

use crate::wire::payload::{get_f64, PayloadResult};

/// A position in meters. `+y` is north, `+x` east, `z` up.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2)).sqrt()
    }

    /// Compass bearing toward `target` in the horizontal plane:
    /// `atan2(dx, dy)` in degrees, normalized to [0, 360).
    pub fn bearing_to(&self, target: &Point3) -> f64 {
        let deg = (target.x - self.x).atan2(target.y - self.y).to_degrees();
        normalize_degrees(deg)
    }

    /// Moves up to `max_step` meters toward `target` without overshooting.
    pub fn step_toward(&self, target: &Point3, max_step: f64) -> Point3 {
        let d = self.distance(target);
        if d <= max_step || d == 0.0 {
            return *target;
        }
        let f = max_step / d;
        Point3::new(
            self.x + (target.x - self.x) * f,
            self.y + (target.y - self.y) * f,
            self.z + (target.z - self.z) * f,
        )
    }

    pub(crate) fn put(&self, out: &mut Vec<u8>) {
        out.put_f64(self.x);
        out.put_f64(self.y);
        out.put_f64(self.z);
    }

    pub(crate) fn get(buf: &mut &[u8], field: &'static str) -> PayloadResult<Self> {
        Ok(Point3::new(get_f64(buf, field)?, get_f64(buf, field)?, get_f64(buf, field)?))
    }
}

impl fmt::Display for Point3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.3}, {:.3}, {:.3})", self.x, self.y, self.z)
    }
}

pub fn normalize_degrees(deg: f64) -> f64 {
    let b = deg.rem_euclid(360.0);
    if b >= 360.0 {
        0.0
    } else {
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compass_bearings() {
        let o = Point3::default();
        assert_eq!(o.bearing_to(&Point3::new(0.0, 1.0, 0.0)), 0.0);
        assert_eq!(o.bearing_to(&Point3::new(10.0, 0.0, 0.0)), 90.0);
        assert_eq!(o.bearing_to(&Point3::new(0.0, -1.0, 0.0)), 180.0);
        assert_eq!(o.bearing_to(&Point3::new(-1.0, 0.0, 5.0)), 270.0);
        assert_eq!(normalize_degrees(-1e-18), 0.0);
        assert_eq!(normalize_degrees(720.5), 0.5);
    }

    #[test]
    fn step_clamps_at_target() {
        let o = Point3::default();
        let t = Point3::new(10.0, 0.0, 0.0);
        assert_eq!(o.step_toward(&t, 1.2), Point3::new(1.2, 0.0, 0.0));
        let near = Point3::new(0.05, 0.0, 0.0);
        assert_eq!(o.step_toward(&near, 1.2), near);
    }
}
