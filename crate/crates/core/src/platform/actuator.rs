use bytes::BufMut;

use super::ContextRecord;
use crate::wire::payload::{get_opt_f64, get_str, get_u8, put_opt_f64, put_str, PayloadError, PayloadResult};
use crate::wire::WirePayload;

/// Lights switch on below this illuminance...
pub const LIGHT_ON_BELOW_LUX: f64 = 50.0;
/// ...and off at or above this one.
pub const LIGHT_OFF_AT_LUX: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActuatorAction {
    On,
    Off,
    /// Level in [0, 1].
    SetLevel(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorCommand {
    pub device_id: String,
    pub action: ActuatorAction,
}

impl ActuatorCommand {
    pub fn level(&self) -> Option<f64> {
        match self.action {
            ActuatorAction::SetLevel(l) => Some(l),
            _ => None,
        }
    }
}

/// Light control for the user's zone: on when dark, off when bright, nothing
/// in between or when illuminance or zone is unknown.
pub fn lighting_demo(ctx: &ContextRecord) -> Option<ActuatorCommand> {
    let lux = ctx.illuminance_lux?;
    let zone = ctx.zone_id.as_ref()?;
    let action = if lux < LIGHT_ON_BELOW_LUX {
        ActuatorAction::On
    } else if lux >= LIGHT_OFF_AT_LUX {
        ActuatorAction::Off
    } else {
        return None;
    };
    Some(ActuatorCommand {
        device_id: format!("light-{zone}"),
        action,
    })
}

impl WirePayload for ActuatorCommand {
    fn encode_into(&self, out: &mut Vec<u8>) {
        put_str(out, &self.device_id);
        out.put_u8(match self.action {
            ActuatorAction::On => 0,
            ActuatorAction::Off => 1,
            ActuatorAction::SetLevel(_) => 2,
        });
        put_opt_f64(out, self.level());
    }

    fn decode_from(buf: &mut &[u8]) -> PayloadResult<Self> {
        let device_id = get_str(buf, "device_id")?;
        let code = get_u8(buf, "action")?;
        let level = get_opt_f64(buf, "level")?;
        let invalid = |reason: String| PayloadError::Invalid { field: "action", reason };
        let action = match (code, level) {
            (0, None) => ActuatorAction::On,
            (1, None) => ActuatorAction::Off,
            (2, Some(l)) if (0.0..=1.0).contains(&l) => ActuatorAction::SetLevel(l),
            (2, Some(l)) => return Err(invalid(format!("level {l} outside [0, 1]"))),
            (c, l) => return Err(invalid(format!("code {c} with level {l:?}"))),
        };
        Ok(Self { device_id, action })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point3;

    fn office(lux: Option<f64>) -> ContextRecord {
        let c = ContextRecord::new("u", 0, Point3::default()).with_zone("office");
        match lux {
            Some(l) => c.with_lux(l),
            None => c,
        }
    }

    #[test]
    fn thresholds() {
        let on = lighting_demo(&office(Some(30.0))).unwrap();
        assert_eq!(on.device_id, "light-office");
        assert_eq!(on.action, ActuatorAction::On);
        assert_eq!(lighting_demo(&office(Some(250.0))).unwrap().action, ActuatorAction::Off);
        assert_eq!(lighting_demo(&office(Some(200.0))).unwrap().action, ActuatorAction::Off);
        assert!(lighting_demo(&office(Some(50.0))).is_none());
        assert!(lighting_demo(&office(None)).is_none());
        assert!(lighting_demo(&ContextRecord::new("u", 0, Point3::default()).with_lux(10.0)).is_none());
    }

    #[test]
    fn wire_round_trip_and_level_rule() {
        for action in [ActuatorAction::On, ActuatorAction::Off, ActuatorAction::SetLevel(0.25)] {
            let c = ActuatorCommand {
                device_id: "light-x".into(),
                action,
            };
            assert_eq!(ActuatorCommand::from_bytes(&c.to_bytes()).unwrap(), c);
        }
        let mut bad = Vec::new();
        put_str(&mut bad, "d");
        bad.put_u8(0);
        put_opt_f64(&mut bad, Some(0.5));
        assert!(ActuatorCommand::from_bytes(&bad).is_err());
        let mut bad = Vec::new();
        put_str(&mut bad, "d");
        bad.put_u8(2);
        put_opt_f64(&mut bad, None);
        assert!(ActuatorCommand::from_bytes(&bad).is_err());
    }
}
