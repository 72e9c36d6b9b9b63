use std::fmt;
use std::str::FromStr;

use bytes::BufMut;

use crate::geom::{normalize_degrees, Point3};
use crate::wire::payload::{get_f64, get_opt_f64, get_str, get_u64, get_u8, put_opt_f64, put_str, PayloadError, PayloadResult};
use crate::wire::WirePayload;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MotionState {
    Still,
    Walking,
}

impl MotionState {
    pub fn name(self) -> &'static str {
        match self {
            MotionState::Still => "still",
            MotionState::Walking => "walking",
        }
    }
}

impl FromStr for MotionState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "still" => Ok(MotionState::Still),
            "walking" => Ok(MotionState::Walking),
            other => Err(format!("unknown motion state '{other}'")),
        }
    }
}

impl fmt::Display for MotionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Snapshot of what the glass senses about its user.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextRecord {
    pub user_id: String,
    pub timestamp_ms: u64,
    pub position: Point3,
    /// [0, 360)
    pub heading_deg: f64,
    pub motion: MotionState,
    pub illuminance_lux: Option<f64>,
    pub zone_id: Option<String>,
}

impl ContextRecord {
    pub fn new(user_id: impl Into<String>, timestamp_ms: u64, position: Point3) -> Self {
        Self {
            user_id: user_id.into(),
            timestamp_ms,
            position,
            heading_deg: 0.0,
            motion: MotionState::Still,
            illuminance_lux: None,
            zone_id: None,
        }
    }

    pub fn with_heading(mut self, deg: f64) -> Self {
        self.heading_deg = normalize_degrees(deg);
        self
    }

    pub fn with_zone(mut self, zone: impl Into<String>) -> Self {
        self.zone_id = Some(zone.into());
        self
    }

    pub fn with_lux(mut self, lux: f64) -> Self {
        self.illuminance_lux = Some(lux);
        self
    }

    pub fn with_motion(mut self, motion: MotionState) -> Self {
        self.motion = motion;
        self
    }
}

impl WirePayload for ContextRecord {
    fn encode_into(&self, out: &mut Vec<u8>) {
        put_str(out, &self.user_id);
        out.put_u64(self.timestamp_ms);
        self.position.put(out);
        out.put_f64(self.heading_deg);
        out.put_u8(match self.motion {
            MotionState::Still => 0,
            MotionState::Walking => 1,
        });
        put_opt_f64(out, self.illuminance_lux);
        match &self.zone_id {
            Some(zone) => {
                out.put_u8(1);
                put_str(out, zone);
            }
            None => out.put_u8(0),
        }
    }

    fn decode_from(buf: &mut &[u8]) -> PayloadResult<Self> {
        let user_id = get_str(buf, "user_id")?;
        let timestamp_ms = get_u64(buf, "timestamp_ms")?;
        let position = Point3::get(buf, "position")?;
        let heading_deg = get_f64(buf, "heading_deg")?;
        if !(0.0..360.0).contains(&heading_deg) {
            return Err(PayloadError::Invalid {
                field: "heading_deg",
                reason: format!("{heading_deg} outside [0, 360)"),
            });
        }
        let motion = match get_u8(buf, "motion")? {
            0 => MotionState::Still,
            1 => MotionState::Walking,
            other => {
                return Err(PayloadError::Invalid {
                    field: "motion",
                    reason: format!("code {other}"),
                })
            }
        };
        let illuminance_lux = get_opt_f64(buf, "illuminance_lux")?;
        if illuminance_lux.is_some_and(|l| !(l >= 0.0)) {
            return Err(PayloadError::Invalid {
                field: "illuminance_lux",
                reason: "must be non-negative".into(),
            });
        }
        let zone_id = match get_u8(buf, "zone flag")? {
            0 => None,
            1 => Some(get_str(buf, "zone_id")?),
            other => {
                return Err(PayloadError::Invalid {
                    field: "zone flag",
                    reason: format!("code {other}"),
                })
            }
        };
        Ok(Self {
            user_id,
            timestamp_ms,
            position,
            heading_deg,
            motion,
            illuminance_lux,
            zone_id,
        })
    }
}
