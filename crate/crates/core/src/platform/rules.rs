use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use super::{ContextRecord, MotionState, PlatformError};
use crate::geom::Point3;

pub const DEFAULT_DWELL_MS: u64 = 500;

/// One condition of a rule's conjunction.
#[derive(Debug, Clone, PartialEq)]
pub enum Atom {
    ZoneEquals(String),
    IlluminanceBelow(f64),
    MotionIs(MotionState),
    InsideBox { min: Point3, max: Point3 },
}

impl Atom {
    /// Missing optional context fields fail the atom.
    pub fn holds(&self, ctx: &ContextRecord) -> bool {
        match self {
            Atom::ZoneEquals(zone) => ctx.zone_id.as_deref() == Some(zone.as_str()),
            Atom::IlluminanceBelow(lux) => ctx.illuminance_lux.is_some_and(|l| l < *lux),
            Atom::MotionIs(m) => ctx.motion == *m,
            Atom::InsideBox { min, max } => {
                let p = ctx.position;
                (min.x..=max.x).contains(&p.x) && (min.y..=max.y).contains(&p.y) && (min.z..=max.z).contains(&p.z)
            }
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::ZoneEquals(z) => write!(f, "zone={z}"),
            Atom::IlluminanceBelow(l) => write!(f, "lux<{l}"),
            Atom::MotionIs(m) => write!(f, "motion={m}"),
            Atom::InsideBox { min, max } => {
                write!(f, "box={},{},{},{},{},{}", min.x, min.y, min.z, max.x, max.y, max.z)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceRule {
    pub service_id: String,
    /// Non-empty; all must hold.
    pub conditions: Vec<Atom>,
    pub priority: i64,
    pub dwell_ms: u64,
}

impl ServiceRule {
    pub fn matches(&self, ctx: &ContextRecord) -> bool {
        self.conditions.iter().all(|a| a.holds(ctx))
    }
}

impl fmt::Display for ServiceRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rule {} prio={} dwell_ms={}", self.service_id, self.priority, self.dwell_ms)?;
        for (i, a) in self.conditions.iter().enumerate() {
            if i > 0 {
                f.write_str(" &")?;
            }
            write!(f, " {a}")?;
        }
        Ok(())
    }
}

/// Validated rules, at most one per service.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleSet {
    rules: BTreeMap<String, ServiceRule>,
}

impl RuleSet {
    pub fn new(rules: impl IntoIterator<Item = ServiceRule>) -> Result<Self, PlatformError> {
        let mut set = Self::default();
        for r in rules {
            set.insert(r)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, rule: ServiceRule) -> Result<(), PlatformError> {
        if rule.conditions.is_empty() {
            return Err(PlatformError::Rules(format!("rule for {} has no conditions", rule.service_id)));
        }
        if self.rules.contains_key(&rule.service_id) {
            return Err(PlatformError::Rules(format!("second rule for {}", rule.service_id)));
        }
        self.rules.insert(rule.service_id.clone(), rule);
        Ok(())
    }

    pub fn get(&self, service_id: &str) -> Option<&ServiceRule> {
        self.rules.get(service_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ServiceRule> {
        self.rules.values()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Gate starts navigation, reception starts face recognition and a dark
    /// office starts lighting control.
    pub fn defaults() -> Self {
        parse_rules(
            "rule navigation prio=10 dwell_ms=500 zone=gate\n\
             rule facerec prio=10 dwell_ms=500 zone=reception\n\
             rule lighting prio=5 dwell_ms=500 zone=office & lux<50\n",
        )
        .expect("built-in rules parse")
    }

    pub fn load(path: &Path) -> Result<Self, PlatformError> {
        parse_rules(&std::fs::read_to_string(path)?)
    }
}

/// Services whose conditions all hold, by priority (highest first) then id.
pub fn evaluate_rules(ctx: &ContextRecord, rules: &RuleSet) -> Vec<String> {
    let mut hits: Vec<&ServiceRule> = rules.iter().filter(|r| r.matches(ctx)).collect();
    hits.sort_by(|a, b| b.priority.cmp(&a.priority).then_with(|| a.service_id.cmp(&b.service_id)));
    hits.into_iter().map(|r| r.service_id.clone()).collect()
}

/// Parses `rule <service> prio=<int> dwell_ms=<int> <atom> [& <atom>...]`
/// lines; `#` starts a comment. `prio` defaults to 0 and `dwell_ms` to 500.
pub fn parse_rules(text: &str) -> Result<RuleSet, PlatformError> {
    let mut set = RuleSet::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| PlatformError::RuleParse { line: i + 1, reason };
        let mut tokens = line.split_whitespace();
        if tokens.next() != Some("rule") {
            return Err(err("expected 'rule'".into()));
        }
        let service_id = tokens.next().ok_or_else(|| err("missing service id".into()))?.to_string();
        let mut rule = ServiceRule {
            service_id,
            conditions: Vec::new(),
            priority: 0,
            dwell_ms: DEFAULT_DWELL_MS,
        };
        for tok in tokens {
            if tok == "&" {
                continue;
            }
            if let Some(v) = tok.strip_prefix("prio=") {
                rule.priority = v.parse().map_err(|_| err(format!("bad priority '{v}'")))?;
            } else if let Some(v) = tok.strip_prefix("dwell_ms=") {
                rule.dwell_ms = v.parse().map_err(|_| err(format!("bad dwell_ms '{v}'")))?;
            } else {
                rule.conditions.push(parse_atom(tok).map_err(err)?);
            }
        }
        if rule.conditions.is_empty() {
            return Err(err("rule needs at least one condition".into()));
        }
        set.insert(rule).map_err(|e| err(e.to_string()))?;
    }
    Ok(set)
}

fn parse_atom(tok: &str) -> Result<Atom, String> {
    if let Some(zone) = tok.strip_prefix("zone=") {
        if zone.is_empty() {
            return Err("empty zone".into());
        }
        return Ok(Atom::ZoneEquals(zone.to_string()));
    }
    if let Some(v) = tok.strip_prefix("lux<") {
        let lux: f64 = v.parse().map_err(|_| format!("bad lux threshold '{v}'"))?;
        if !lux.is_finite() {
            return Err(format!("bad lux threshold '{v}'"));
        }
        return Ok(Atom::IlluminanceBelow(lux));
    }
    if let Some(v) = tok.strip_prefix("motion=") {
        return v.parse().map(Atom::MotionIs);
    }
    if let Some(v) = tok.strip_prefix("box=") {
        let nums: Vec<f64> = v
            .split(',')
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| format!("bad box '{v}'"))?;
        if nums.len() != 6 {
            return Err(format!("box needs 6 numbers, got {}", nums.len()));
        }
        let (min, max) = (Point3::new(nums[0], nums[1], nums[2]), Point3::new(nums[3], nums[4], nums[5]));
        if min.x > max.x || min.y > max.y || min.z > max.z {
            return Err(format!("box min exceeds max in '{v}'"));
        }
        return Ok(Atom::InsideBox { min, max });
    }
    Err(format!("unknown condition '{tok}'"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ctx() -> ContextRecord {
        ContextRecord::new("u", 0, Point3::new(1.0, 1.0, 0.0))
    }

    #[test]
    fn gate_and_dark_office() {
        let rules = RuleSet::defaults();
        assert_eq!(evaluate_rules(&ctx().with_zone("gate"), &rules), vec!["navigation"]);
        assert_eq!(evaluate_rules(&ctx().with_zone("office").with_lux(30.0), &rules), vec!["lighting"]);
        assert!(evaluate_rules(&ctx().with_zone("office").with_lux(60.0), &rules).is_empty());
        assert!(evaluate_rules(&ctx().with_zone("office"), &rules).is_empty());
        assert!(evaluate_rules(&ctx(), &RuleSet::default()).is_empty());
    }

    #[test]
    fn priority_then_id() {
        let rules = parse_rules(
            "rule b prio=1 motion=still\nrule a prio=1 motion=still\nrule c prio=7 box=0,0,0,2,2,0 # inside\n",
        )
        .unwrap();
        assert_eq!(evaluate_rules(&ctx(), &rules), vec!["c", "a", "b"]);
    }

    #[test]
    fn parse_errors() {
        for bad in [
            "rule x prio=1",
            "rule x zone=a\nrule x zone=b",
            "rul x zone=a",
            "rule x lux<abc",
            "rule x box=1,2,3",
            "rule x box=1,0,0,0,0,0",
            "rule x weather=rain",
            "rule x prio=high zone=a",
        ] {
            assert!(parse_rules(bad).is_err(), "{bad}");
        }
        let err = parse_rules("\n# c\nrule x zone=a\nrule y\n").unwrap_err();
        assert!(matches!(err, PlatformError::RuleParse { line: 4, .. }));
    }

    #[test]
    fn display_reparses() {
        let rules = parse_rules("rule x prio=-2 dwell_ms=30 zone=a & lux<12.5 & motion=walking & box=0,0,0,1,1,1").unwrap();
        let text = rules.iter().map(|r| r.to_string()).collect::<Vec<_>>().join("\n");
        assert_eq!(parse_rules(&text).unwrap(), rules);
    }

    fn arb_atom() -> impl Strategy<Value = Atom> {
        prop_oneof![
            prop::sample::select(vec!["a", "b", "c"]).prop_map(|z| Atom::ZoneEquals(z.to_string())),
            (0.0..100.0f64).prop_map(Atom::IlluminanceBelow),
            prop::bool::ANY.prop_map(|w| Atom::MotionIs(if w { MotionState::Walking } else { MotionState::Still })),
            (-5.0..5.0f64, -5.0..5.0f64, 0.0..6.0f64).prop_map(|(x, y, s)| Atom::InsideBox {
                min: Point3::new(x, y, -1.0),
                max: Point3::new(x + s, y + s, 1.0),
            }),
        ]
    }

    fn arb_ctx() -> impl Strategy<Value = ContextRecord> {
        (
            prop::option::of(prop::sample::select(vec!["a", "b", "c"])),
            prop::option::of(0.0..100.0f64),
            prop::bool::ANY,
            -6.0..6.0f64,
            -6.0..6.0f64,
        )
            .prop_map(|(zone, lux, walking, x, y)| ContextRecord {
                user_id: "u".into(),
                timestamp_ms: 0,
                position: Point3::new(x, y, 0.0),
                heading_deg: 0.0,
                motion: if walking { MotionState::Walking } else { MotionState::Still },
                illuminance_lux: lux,
                zone_id: zone.map(String::from),
            })
    }

    /// Independent evaluation: checks every atom field by field, then ranks
    /// by repeated selection of the best remaining rule.
    fn brute_force(ctx: &ContextRecord, rules: &[ServiceRule]) -> Vec<String> {
        let atom_ok = |a: &Atom| match a {
            Atom::ZoneEquals(z) => matches!(&ctx.zone_id, Some(cz) if cz == z),
            Atom::IlluminanceBelow(t) => match ctx.illuminance_lux {
                Some(l) => l < *t,
                None => false,
            },
            Atom::MotionIs(m) => ctx.motion == *m,
            Atom::InsideBox { min, max } => {
                let p = ctx.position;
                p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z && p.z <= max.z
            }
        };
        let mut pool: Vec<&ServiceRule> = rules
            .iter()
            .filter(|r| {
                let mut all = true;
                for a in &r.conditions {
                    all &= atom_ok(a);
                }
                all
            })
            .collect();
        let mut out = Vec::new();
        while !pool.is_empty() {
            let mut best = 0;
            for i in 1..pool.len() {
                let (p, b) = (pool[i], pool[best]);
                if p.priority > b.priority || (p.priority == b.priority && p.service_id < b.service_id) {
                    best = i;
                }
            }
            out.push(pool.remove(best).service_id.clone());
        }
        out
    }

    proptest! {
        #[test]
        fn evaluation_matches_brute_force(
            specs in prop::collection::vec((prop::collection::vec(arb_atom(), 1..4), -3i64..3), 0..8),
            contexts in prop::collection::vec(arb_ctx(), 1..10),
        ) {
            let rules: Vec<ServiceRule> = specs
                .into_iter()
                .enumerate()
                .map(|(i, (conditions, priority))| ServiceRule {
                    service_id: format!("svc{i}"),
                    conditions,
                    priority,
                    dwell_ms: 0,
                })
                .collect();
            let set = RuleSet::new(rules.clone()).unwrap();
            for c in &contexts {
                let got = evaluate_rules(c, &set);
                prop_assert_eq!(&got, &brute_force(c, &rules));
                prop_assert_eq!(got, evaluate_rules(c, &set));
            }
        }
    }
}
