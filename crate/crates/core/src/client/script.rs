use std::fmt;
use std::path::Path;

use super::ClientError;
use crate::facerec::synth::{bench_frame, generate_gallery, two_face_fixture, FaceGenSpec};
use crate::geom::Point3;
use crate::image::GrayImage;
use crate::navigation::NodeId;
use crate::wire::MsgType;

#[derive(Debug, Clone, PartialEq)]
pub enum ScriptEvent {
    SetZone(Option<String>),
    SetIlluminance(Option<f64>),
    SetPosition(Point3),
    SelectDestination(NodeId),
    StartStreaming { source: String, fps: f64, duration_ms: u64 },
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedEvent {
    pub at_ms: u64,
    pub event: ScriptEvent,
}

/// Checked against the transcript once the scenario has finished.
#[derive(Debug, Clone, PartialEq)]
pub enum Assertion {
    /// At least one message of this type reached the glass, optionally
    /// before a deadline.
    Received { msg_type: MsgType, before_ms: Option<u64> },
    /// Exactly `n` messages of this type reached the glass.
    Count { msg_type: MsgType, n: usize },
    /// Every recognition result carries exactly these labels (any order),
    /// and there is at least one result.
    Labels(Vec<String>),
    /// The platform activated this service at some point.
    Activated(String),
}

impl fmt::Display for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assertion::Received {
                msg_type,
                before_ms: Some(t),
            } => write!(f, "received {} before={t}", msg_type.name()),
            Assertion::Received { msg_type, .. } => write!(f, "received {}", msg_type.name()),
            Assertion::Count { msg_type, n } => write!(f, "count {} = {n}", msg_type.name()),
            Assertion::Labels(l) => write!(f, "labels {}", l.join(",")),
            Assertion::Activated(s) => write!(f, "activated {s}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioScript {
    /// Non-decreasing in time.
    pub events: Vec<TimedEvent>,
    pub assertions: Vec<Assertion>,
}

impl ScenarioScript {
    pub fn load(path: &Path) -> Result<Self, ClientError> {
        parse_script(&std::fs::read_to_string(path)?)
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty() && self.assertions.is_empty()
    }
}

/// Parses a scenario script. Lines are either `t=<ms> <event>...` with events
/// `zone=<id|none>`, `lux=<f|none>`, `dest=<node>`, `pos=<x,y,z>`,
/// `stream <source> fps=<n> for=<ms>` and `stop`, or `assert <condition>`
/// with conditions `received <TYPE> [before=<ms>]`, `count <TYPE> = <n>`,
/// `labels <a,b,...>` and `activated <service>`. `#` starts a comment.
pub fn parse_script(text: &str) -> Result<ScenarioScript, ClientError> {
    let mut script = ScenarioScript::default();
    let mut last_t = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| ClientError::Script { line: idx + 1, reason };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens[0] == "assert" {
            script.assertions.push(parse_assertion(&tokens[1..]).map_err(err)?);
            continue;
        }
        let t: u64 = tokens[0]
            .strip_prefix("t=")
            .ok_or_else(|| err(format!("expected 't=<ms>' or 'assert', found '{}'", tokens[0])))?
            .parse()
            .map_err(|_| err(format!("bad time '{}'", tokens[0])))?;
        if t < last_t {
            return Err(err(format!("time {t} precedes earlier event at {last_t}")));
        }
        last_t = t;
        if tokens.len() == 1 {
            return Err(err("no event after the time".into()));
        }
        let mut rest = &tokens[1..];
        while let Some((&tok, tail)) = rest.split_first() {
            rest = tail;
            let event = if tok == "stop" {
                ScriptEvent::Stop
            } else if tok == "stream" {
                let (source, tail) = rest.split_first().ok_or_else(|| err("stream needs a source".into()))?;
                rest = tail;
                let mut fps = None;
                let mut duration_ms = None;
                while let Some((&opt, tail)) = rest.split_first() {
                    if let Some(v) = opt.strip_prefix("fps=") {
                        fps = Some(v.parse::<f64>().map_err(|_| err(format!("bad fps '{v}'")))?);
                    } else if let Some(v) = opt.strip_prefix("for=") {
                        duration_ms = Some(v.parse::<u64>().map_err(|_| err(format!("bad duration '{v}'")))?);
                    } else {
                        break;
                    }
                    rest = tail;
                }
                let fps = fps.ok_or_else(|| err("stream needs fps=<n>".into()))?;
                if !(fps > 0.0 && fps.is_finite()) {
                    return Err(err(format!("fps {fps} must be positive")));
                }
                ScriptEvent::StartStreaming {
                    source: source.to_string(),
                    fps,
                    duration_ms: duration_ms.ok_or_else(|| err("stream needs for=<ms>".into()))?,
                }
            } else if let Some(v) = tok.strip_prefix("zone=") {
                ScriptEvent::SetZone((v != "none").then(|| v.to_string()))
            } else if let Some(v) = tok.strip_prefix("lux=") {
                if v == "none" {
                    ScriptEvent::SetIlluminance(None)
                } else {
                    let lux: f64 = v.parse().map_err(|_| err(format!("bad lux '{v}'")))?;
                    if !(lux >= 0.0) {
                        return Err(err(format!("lux {lux} must be non-negative")));
                    }
                    ScriptEvent::SetIlluminance(Some(lux))
                }
            } else if let Some(v) = tok.strip_prefix("dest=") {
                ScriptEvent::SelectDestination(v.parse().map_err(|_| err(format!("bad node '{v}'")))?)
            } else if let Some(v) = tok.strip_prefix("pos=") {
                let nums: Vec<f64> = v
                    .split(',')
                    .map(str::parse)
                    .collect::<Result<_, _>>()
                    .map_err(|_| err(format!("bad position '{v}'")))?;
                match nums[..] {
                    [x, y, z] => ScriptEvent::SetPosition(Point3::new(x, y, z)),
                    [x, y] => ScriptEvent::SetPosition(Point3::new(x, y, 0.0)),
                    _ => return Err(err(format!("position '{v}' needs 2 or 3 numbers"))),
                }
            } else {
                return Err(err(format!("unknown event '{tok}'")));
            };
            script.events.push(TimedEvent { at_ms: t, event });
        }
    }
    Ok(script)
}

fn parse_assertion(tokens: &[&str]) -> Result<Assertion, String> {
    let msg_type = |s: Option<&&str>| -> Result<MsgType, String> { s.ok_or("missing message type")?.parse() };
    match tokens.first().copied() {
        Some("received") => {
            let msg_type = msg_type(tokens.get(1))?;
            let before_ms = match tokens.get(2) {
                None => None,
                Some(t) => Some(
                    t.strip_prefix("before=")
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| format!("expected before=<ms>, found '{t}'"))?,
                ),
            };
            if tokens.len() > 3 {
                return Err("trailing tokens after received".into());
            }
            Ok(Assertion::Received { msg_type, before_ms })
        }
        Some("count") => {
            let msg_type = msg_type(tokens.get(1))?;
            let n = match &tokens[2..] {
                ["=", n] => n,
                [n] => n.strip_prefix('=').unwrap_or(n),
                _ => return Err("expected count <TYPE> = <n>".into()),
            };
            let n = n.parse().map_err(|_| format!("bad count '{n}'"))?;
            Ok(Assertion::Count { msg_type, n })
        }
        Some("labels") if tokens.len() == 2 => {
            let mut labels: Vec<String> = tokens[1].split(',').map(String::from).collect();
            labels.sort();
            Ok(Assertion::Labels(labels))
        }
        Some("activated") if tokens.len() == 2 => Ok(Assertion::Activated(tokens[1].to_string())),
        Some(other) => Err(format!("unknown assertion '{other}'")),
        None => Err("empty assertion".into()),
    }
}

/// Frames for a `stream` event. `@two-face` is two faces of the standard
/// synthetic gallery on a flat background, `@bench` the 400x300 bench scenes;
/// anything else names a PGM file or a directory of PGM files (sorted by
/// name), relative to `base_dir`.
pub fn load_stream_source(source: &str, base_dir: &Path) -> Result<Vec<GrayImage>, ClientError> {
    match source {
        "@two-face" => {
            let g = generate_gallery(&FaceGenSpec::standard());
            let second = g.iter().position(|x| x.label != g[0].label).expect("several identities");
            Ok(vec![two_face_fixture(&g[0], &g[second], g[0].image.width / 4).frame])
        }
        "@bench" => {
            let g = generate_gallery(&FaceGenSpec::standard());
            Ok((0..20).map(|i| bench_frame(&g, i, 400, 300, 8).frame).collect())
        }
        path => {
            let path = base_dir.join(path);
            if path.is_dir() {
                let mut files: Vec<_> = std::fs::read_dir(&path)?
                    .filter_map(Result::ok)
                    .map(|e| e.path())
                    .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
                    .collect();
                files.sort();
                if files.is_empty() {
                    return Err(ClientError::Stream(format!("no .pgm files in {}", path.display())));
                }
                files
                    .iter()
                    .map(|f| GrayImage::read_pgm(f).map_err(|e| ClientError::Stream(format!("{}: {e}", f.display()))))
                    .collect()
            } else {
                let img = GrayImage::read_pgm(&path).map_err(|e| ClientError::Stream(format!("{}: {e}", path.display())))?;
                Ok(vec![img])
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_form() {
        let s = parse_script(
            "# gate walk\n\
             t=0 zone=gate lux=120\n\
             t=1000 dest=23\n\
             t=1000 pos=1,2\n\
             t=2000 stream @two-face fps=10 for=2000 zone=none\n\
             t=9000 stop\n\
             assert received NAV_ARRIVED before=120000\n\
             assert count RECOG_RESULT = 20\n\
             assert count FRAME =3\n\
             assert labels bob,alice\n\
             assert activated navigation\n",
        )
        .unwrap();
        assert_eq!(s.events.len(), 7);
        assert_eq!(s.events[1].event, ScriptEvent::SetIlluminance(Some(120.0)));
        assert_eq!(s.events[3].event, ScriptEvent::SetPosition(Point3::new(1.0, 2.0, 0.0)));
        assert_eq!(
            s.events[4].event,
            ScriptEvent::StartStreaming {
                source: "@two-face".into(),
                fps: 10.0,
                duration_ms: 2000
            }
        );
        assert_eq!(s.events[5].event, ScriptEvent::SetZone(None));
        assert_eq!(s.assertions[3], Assertion::Labels(vec!["alice".into(), "bob".into()]));
        assert_eq!(
            s.assertions[2],
            Assertion::Count {
                msg_type: MsgType::Frame,
                n: 3
            }
        );
        assert!(parse_script("").unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_scripts() {
        for bad in [
            "t=5 zone=a\nt=4 zone=b",
            "zone=a",
            "t=1",
            "t=1 fly=yes",
            "t=1 stream dir fps=0 for=10",
            "t=1 stream dir for=10",
            "t=1 pos=1",
            "assert received NOPE",
            "assert count FRAME",
            "assert maybe",
        ] {
            assert!(parse_script(bad).is_err(), "{bad}");
        }
        match parse_script("t=0 zone=a\n\nt=x zone=b") {
            Err(ClientError::Script { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn builtin_sources() {
        let two = load_stream_source("@two-face", Path::new(".")).unwrap();
        assert_eq!(two.len(), 1);
        assert!(load_stream_source("does/not/exist", Path::new(".")).is_err());
    }
}
