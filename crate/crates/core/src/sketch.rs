//! The sketch language over the features `H, I, m, u, v`: rules
//! `C -> E`, rule-pair satisfaction, active-rule selection and a syntactic
//! termination check.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureVec {
    #[serde(rename = "H")]
    pub h: bool,
    #[serde(rename = "I")]
    pub i: bool,
    pub m: u32,
    pub u: u32,
    pub v: u32,
}

impl FeatureVec {
    pub fn is_goal(&self) -> bool {
        !self.h && self.m == 0
    }

    fn bool_of(&self, f: Feature) -> bool {
        match f {
            Feature::H => self.h,
            Feature::I => self.i,
            _ => self.num_of(f) > 0,
        }
    }

    fn num_of(&self, f: Feature) -> u32 {
        match f {
            Feature::H => self.h as u32,
            Feature::I => self.i as u32,
            Feature::M => self.m,
            Feature::U => self.u,
            Feature::V => self.v,
        }
    }
}

impl fmt::Display for FeatureVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}H, {}I, m={}, u={}, v={})",
            if self.h { "" } else { "!" },
            if self.i { "" } else { "!" },
            self.m,
            self.u,
            self.v
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Feature {
    H,
    I,
    M,
    U,
    V,
}

pub const FEATURES: [Feature; 5] = [Feature::H, Feature::I, Feature::M, Feature::U, Feature::V];

impl Feature {
    pub fn is_bool(self) -> bool {
        matches!(self, Feature::H | Feature::I)
    }

    fn name(self) -> &'static str {
        match self {
            Feature::H => "H",
            Feature::I => "I",
            Feature::M => "m",
            Feature::U => "u",
            Feature::V => "v",
        }
    }

    fn parse(s: &str) -> Option<Feature> {
        Some(match s {
            "H" => Feature::H,
            "I" => Feature::I,
            "m" => Feature::M,
            "u" => Feature::U,
            "v" => Feature::V,
            _ => return None,
        })
    }
}

/// `p`/`!p` for booleans, `n>0`/`n=0` for counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Condition {
    pub feature: Feature,
    pub positive: bool,
}

impl Condition {
    pub fn holds(&self, f: &FeatureVec) -> bool {
        f.bool_of(self.feature) == self.positive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EffectKind {
    True,
    False,
    Unknown,
    Dec,
    Inc,
    NonIncrease,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RuleEffect {
    pub feature: Feature,
    pub kind: EffectKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SketchRule {
    pub id: String,
    pub conditions: Vec<Condition>,
    pub effects: Vec<RuleEffect>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SketchError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("rule {0}: feature listed twice")]
    DuplicateFeature(String),
    #[error("rules {0} and {1} have overlapping conditions")]
    OverlappingRules(String, String),
    #[error("no sketch rule applies to {0}")]
    NoApplicableRule(FeatureVec),
}

impl SketchRule {
    pub fn condition(&self, f: Feature) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.feature == f)
    }

    pub fn effect(&self, f: Feature) -> Option<EffectKind> {
        self.effects.iter().find(|e| e.feature == f).map(|e| e.kind)
    }

    pub fn applies(&self, f: &FeatureVec) -> bool {
        self.conditions.iter().all(|c| c.holds(f))
    }

    /// Parses `{cond,...} -> {eff,...}`.
    pub fn parse(id: &str, line: &str, lineno: usize) -> Result<SketchRule, SketchError> {
        let err = |msg: String| SketchError::Parse { line: lineno, msg };
        let (lhs, rhs) = line.split_once("->").ok_or_else(|| err("missing '->'".into()))?;
        let set = |s: &str| -> Result<Vec<String>, SketchError> {
            let s = s.trim();
            let inner = s
                .strip_prefix('{')
                .and_then(|s| s.strip_suffix('}'))
                .ok_or_else(|| err(format!("expected '{{...}}', got '{s}'")))?;
            Ok(inner.split(',').map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect())
        };
        let mut conditions = Vec::new();
        for tok in set(lhs)? {
            let c = if let Some(f) = tok.strip_prefix('!').and_then(Feature::parse).filter(|f| f.is_bool()) {
                Condition { feature: f, positive: false }
            } else if let Some(f) = Feature::parse(&tok).filter(|f| f.is_bool()) {
                Condition { feature: f, positive: true }
            } else if let Some(f) = tok.strip_suffix("=0").and_then(Feature::parse).filter(|f| !f.is_bool()) {
                Condition { feature: f, positive: false }
            } else if let Some(f) = tok.strip_suffix(">0").and_then(Feature::parse).filter(|f| !f.is_bool()) {
                Condition { feature: f, positive: true }
            } else {
                return Err(err(format!("unknown condition '{tok}'")));
            };
            conditions.push(c);
        }
        let mut effects = Vec::new();
        for tok in set(rhs)? {
            let e = if let Some(f) = tok.strip_prefix('!').and_then(Feature::parse).filter(|f| f.is_bool()) {
                RuleEffect { feature: f, kind: EffectKind::False }
            } else if let Some(f) = Feature::parse(&tok).filter(|f| f.is_bool()) {
                RuleEffect { feature: f, kind: EffectKind::True }
            } else if let Some(f) = tok.strip_suffix('?').and_then(Feature::parse) {
                RuleEffect { feature: f, kind: EffectKind::Unknown }
            } else if let Some(f) = tok.strip_suffix("<=").and_then(Feature::parse).filter(|f| !f.is_bool()) {
                RuleEffect { feature: f, kind: EffectKind::NonIncrease }
            } else if let Some(f) = tok.strip_suffix('-').and_then(Feature::parse).filter(|f| !f.is_bool()) {
                RuleEffect { feature: f, kind: EffectKind::Dec }
            } else if let Some(f) = tok.strip_suffix('+').and_then(Feature::parse).filter(|f| !f.is_bool()) {
                RuleEffect { feature: f, kind: EffectKind::Inc }
            } else {
                return Err(err(format!("unknown effect '{tok}'")));
            };
            effects.push(e);
        }
        let rule = SketchRule { id: id.to_string(), conditions, effects };
        rule.check_unique()?;
        Ok(rule)
    }

    fn check_unique(&self) -> Result<(), SketchError> {
        for (i, c) in self.conditions.iter().enumerate() {
            if self.conditions[i + 1..].iter().any(|d| d.feature == c.feature) {
                return Err(SketchError::DuplicateFeature(self.id.clone()));
            }
        }
        for (i, e) in self.effects.iter().enumerate() {
            if self.effects[i + 1..].iter().any(|d| d.feature == e.feature) {
                return Err(SketchError::DuplicateFeature(self.id.clone()));
            }
        }
        Ok(())
    }
}

impl fmt::Display for SketchRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let conds: Vec<String> = self
            .conditions
            .iter()
            .map(|c| match (c.feature.is_bool(), c.positive) {
                (true, true) => c.feature.name().to_string(),
                (true, false) => format!("!{}", c.feature.name()),
                (false, true) => format!("{}>0", c.feature.name()),
                (false, false) => format!("{}=0", c.feature.name()),
            })
            .collect();
        let effs: Vec<String> = self
            .effects
            .iter()
            .map(|e| {
                let n = e.feature.name();
                match e.kind {
                    EffectKind::True => n.to_string(),
                    EffectKind::False => format!("!{n}"),
                    EffectKind::Unknown => format!("{n}?"),
                    EffectKind::Dec => format!("{n}-"),
                    EffectKind::Inc => format!("{n}+"),
                    EffectKind::NonIncrease => format!("{n}<="),
                }
            })
            .collect();
        write!(f, "{{{}}} -> {{{}}}", conds.join(","), effs.join(","))
    }
}

/// Whether the valuation pair `(f, f2)` satisfies `rule`.
pub fn pair_satisfies(rule: &SketchRule, f: &FeatureVec, f2: &FeatureVec) -> bool {
    if !rule.applies(f) {
        return false;
    }
    FEATURES.iter().all(|&feat| {
        let (a, b) = (f.num_of(feat), f2.num_of(feat));
        match rule.effect(feat) {
            None => a == b,
            Some(EffectKind::Unknown) => true,
            Some(EffectKind::True) => f2.bool_of(feat),
            Some(EffectKind::False) => !f2.bool_of(feat),
            Some(EffectKind::Dec) => b < a,
            Some(EffectKind::Inc) => b > a,
            Some(EffectKind::NonIncrease) => b <= a,
        }
    })
}

pub const DEFAULT_SKETCH: &str = "\
# r1: pick a misplaced object that can go straight to its goal
{!H, m>0, u=0} -> {H, I, m-, u?, v<=}
# r2: pick an object that obstructs misplaced objects
{!H, m>0, u>0} -> {H, I?, m?, u?, v-}
# r3: put the held object out of the way
{H, !I} -> {!H, I?, m?}
# r4: put the held object down without disturbing anything
{H, I} -> {!H, I?}
";

#[derive(Debug, Clone, PartialEq)]
pub struct Sketch {
    pub rules: Vec<SketchRule>,
}

impl Default for Sketch {
    fn default() -> Self {
        Sketch::parse(DEFAULT_SKETCH).expect("built-in sketch parses")
    }
}

impl Sketch {
    /// Builds a sketch, rejecting rules whose conditions can hold together.
    pub fn new(rules: Vec<SketchRule>) -> Result<Sketch, SketchError> {
        for (i, a) in rules.iter().enumerate() {
            for b in &rules[i + 1..] {
                let disjoint = a
                    .conditions
                    .iter()
                    .any(|c| b.condition(c.feature).is_some_and(|d| d.positive != c.positive));
                if !disjoint {
                    return Err(SketchError::OverlappingRules(a.id.clone(), b.id.clone()));
                }
            }
        }
        Ok(Sketch { rules })
    }

    /// One rule per non-empty line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Sketch, SketchError> {
        Sketch::new(Self::parse_rules(text)?)
    }

    /// Parses rules without the disjointness check.
    pub fn parse_rules(text: &str) -> Result<Vec<SketchRule>, SketchError> {
        let mut rules = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            rules.push(SketchRule::parse(&format!("r{}", rules.len() + 1), line, i + 1)?);
        }
        Ok(rules)
    }

    /// The unique rule whose conditions `f` satisfies.
    pub fn active_rule(&self, f: &FeatureVec) -> Result<&SketchRule, SketchError> {
        self.rules.iter().find(|r| r.applies(f)).ok_or(SketchError::NoApplicableRule(*f))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Terminating,
    Counterexample(Vec<String>),
}

/// Abstract post-valuation of a single feature after a rule: which of the
/// two condition values (`false`/`=0`, `true`/`>0`) are possible.
fn post_values(rule: &SketchRule, feat: Feature) -> [bool; 2] {
    let pre = rule.condition(feat).map(|c| c.positive);
    let any = [true, true];
    let only = |v: bool| if v { [false, true] } else { [true, false] };
    match rule.effect(feat) {
        None => pre.map_or(any, only),
        Some(EffectKind::Unknown) => any,
        Some(EffectKind::True) => only(true),
        Some(EffectKind::False) => only(false),
        Some(EffectKind::Inc) => only(true),
        // a decrement needs a positive value before; afterwards it may hit zero
        Some(EffectKind::Dec) => any,
        Some(EffectKind::NonIncrease) => match pre {
            Some(false) => only(false),
            _ => any,
        },
    }
}

/// Whether `next` may be the active rule right after `prev` reached its
/// subgoal.
fn can_follow(prev: &SketchRule, next: &SketchRule) -> bool {
    if prev.effects.iter().any(|e| e.kind == EffectKind::Dec && prev.condition(e.feature).map(|c| !c.positive) == Some(true)) {
        return false;
    }
    next.conditions.iter().all(|c| post_values(prev, c.feature)[c.positive as usize])
}

fn on_cycle(rules: &[&SketchRule], i: usize) -> bool {
    let n = rules.len();
    let mut seen = vec![false; n];
    let mut stack: Vec<usize> = (0..n).filter(|&j| can_follow(rules[i], rules[j])).collect();
    while let Some(j) = stack.pop() {
        if j == i {
            return true;
        }
        if seen[j] {
            continue;
        }
        seen[j] = true;
        stack.extend((0..n).filter(|&k| can_follow(rules[j], rules[k])));
    }
    false
}

fn same_component(rules: &[&SketchRule], a: usize, b: usize) -> bool {
    reaches(rules, a, b) && reaches(rules, b, a)
}

fn reaches(rules: &[&SketchRule], from: usize, to: usize) -> bool {
    let mut seen = vec![false; rules.len()];
    let mut stack = vec![from];
    while let Some(j) = stack.pop() {
        if j == to {
            return true;
        }
        if std::mem::replace(&mut seen[j], true) {
            continue;
        }
        stack.extend((0..rules.len()).filter(|&k| can_follow(rules[j], rules[k])));
    }
    false
}

/// Iteratively removes rules that can only be followed finitely often:
/// rules not on any cycle of the can-follow graph, and rules decrementing a
/// counter that no rule in their cycle component increments or scrambles.
pub fn check_termination(sketch: &[SketchRule]) -> Termination {
    let mut left: Vec<&SketchRule> = sketch.iter().collect();
    loop {
        let before = left.len();
        let keep: Vec<bool> = (0..left.len())
            .map(|i| {
                if !on_cycle(&left, i) {
                    return false;
                }
                let decs = left[i].effects.iter().filter(|e| e.kind == EffectKind::Dec);
                let mut keep = true;
                for e in decs {
                    let restored = (0..left.len()).any(|j| {
                        same_component(&left, i, j)
                            && matches!(left[j].effect(e.feature), Some(EffectKind::Inc | EffectKind::Unknown))
                    });
                    if !restored {
                        keep = false;
                    }
                }
                keep
            })
            .collect();
        left = left.into_iter().zip(keep).filter(|(_, k)| *k).map(|(r, _)| r).collect();
        if left.is_empty() {
            return Termination::Terminating;
        }
        if left.len() == before {
            return Termination::Counterexample(left.iter().map(|r| r.to_string()).collect());
        }
    }
}
