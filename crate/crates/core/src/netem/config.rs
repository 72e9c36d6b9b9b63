use std::collections::BTreeMap;
use std::path::Path;

use super::{Bandwidth, NetProfile, NetemError};

/// Named link profiles, seeded with the built-in defaults.
#[derive(Debug, Clone)]
pub struct ProfileSet {
    profiles: BTreeMap<String, NetProfile>,
}

impl Default for ProfileSet {
    fn default() -> Self {
        let mut profiles = BTreeMap::new();
        for p in [
            NetProfile::edge(),
            NetProfile::cloud(),
            NetProfile::control(),
            NetProfile::edge_stream(),
            NetProfile::ideal(),
        ] {
            profiles.insert(p.name.clone(), p);
        }
        Self { profiles }
    }
}

impl ProfileSet {
    /// Defaults overridden/extended by the profiles in `path`.
    pub fn load(path: &Path) -> Result<Self, NetemError> {
        let text = std::fs::read_to_string(path)?;
        let mut set = Self::default();
        for p in parse_profiles(&text)? {
            set.insert(p);
        }
        Ok(set)
    }

    pub fn insert(&mut self, profile: NetProfile) {
        self.profiles.insert(profile.name.clone(), profile);
    }

    pub fn get(&self, name: &str) -> Result<&NetProfile, NetemError> {
        self.profiles
            .get(name)
            .ok_or_else(|| NetemError::UnknownProfile(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.profiles.keys().map(String::as_str)
    }
}

/// Parses `profile <name> delay_ms=<f> jitter_ms=<f> bw_Bps=<f|inf>` lines.
/// Blank lines and `#` comments are skipped.
pub fn parse_profiles(text: &str) -> Result<Vec<NetProfile>, NetemError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| NetemError::Config {
            line: line_no,
            reason,
        };
        let mut words = line.split_whitespace();
        if words.next() != Some("profile") {
            return Err(err("expected 'profile'".into()));
        }
        let name = words.next().ok_or_else(|| err("missing profile name".into()))?;
        let (mut delay, mut jitter, mut bw) = (None, None, None);
        for word in words {
            let (key, value) = word
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got '{word}'")))?;
            let number = || {
                value
                    .parse::<f64>()
                    .map_err(|_| err(format!("bad number '{value}' for {key}")))
            };
            match key {
                "delay_ms" => delay = Some(number()?),
                "jitter_ms" => jitter = Some(number()?),
                "bw_Bps" => {
                    bw = Some(if value == "inf" {
                        Bandwidth::Unlimited
                    } else {
                        Bandwidth::BytesPerSec(number()?)
                    })
                }
                other => return Err(err(format!("unknown key '{other}'"))),
            }
        }
        let profile = NetProfile::new(
            name,
            delay.ok_or_else(|| err("missing delay_ms".into()))?,
            jitter.unwrap_or(0.0),
            bw.ok_or_else(|| err("missing bw_Bps".into()))?,
        );
        profile.validate()?;
        out.push(profile);
    }
    Ok(out)
}
