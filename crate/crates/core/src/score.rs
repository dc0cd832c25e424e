// SPDX-License-Identifier: Apache-2.0

//! Programmability scorecard: per device and component, scores on four
//! axes. E1 (input), E2 (output) and E3 (configuration parameters) are
//! data-type axes scored NA or 0..=2; E4 (processing logic) is NA or 0..=3.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoredComponent {
    Parser,
    IngressBufferEngine,
    IngressMau,
    Deparser,
    Bre,
    Scheduler,
}

impl ScoredComponent {
    pub const ALL: [ScoredComponent; 6] = [
        ScoredComponent::Parser,
        ScoredComponent::IngressBufferEngine,
        ScoredComponent::IngressMau,
        ScoredComponent::Deparser,
        ScoredComponent::Bre,
        ScoredComponent::Scheduler,
    ];

    pub fn title(self) -> &'static str {
        match self {
            ScoredComponent::Parser => "Parser",
            ScoredComponent::IngressBufferEngine => "Ingress Buffer Engine",
            ScoredComponent::IngressMau => "Ingress Match Action Unit",
            ScoredComponent::Deparser => "Deparser",
            ScoredComponent::Bre => "Buffer & Replication Engine (BRE)",
            ScoredComponent::Scheduler => "Scheduler",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    E1,
    E2,
    E3,
    E4,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::E1, Axis::E2, Axis::E3, Axis::E4];

    /// Highest score the rubric defines on this axis.
    pub fn max(self) -> u8 {
        match self {
            Axis::E4 => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::E1 => "E1",
            Axis::E2 => "E2",
            Axis::E3 => "E3",
            Axis::E4 => "E4",
        })
    }
}

/// `"NA"` or a number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Score {
    Na,
    Value(u8),
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Score::Na => f.write_str("NA"),
            Score::Value(v) => write!(f, "{v}"),
        }
    }
}

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Score::Na => s.serialize_str("NA"),
            Score::Value(v) => s.serialize_u8(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u8),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(v) => Ok(Score::Value(v)),
            Raw::S(s) if s.eq_ignore_ascii_case("na") => Ok(Score::Na),
            Raw::S(s) => s
                .parse()
                .map(Score::Value)
                .map_err(|_| serde::de::Error::custom(format!("bad score {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisScores {
    pub e1: Score,
    pub e2: Score,
    pub e3: Score,
    pub e4: Score,
}

impl AxisScores {
    pub fn get(&self, a: Axis) -> Score {
        match a {
            Axis::E1 => self.e1,
            Axis::E2 => self.e2,
            Axis::E3 => self.e3,
            Axis::E4 => self.e4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceScores {
    pub name: String,
    pub scores: BTreeMap<ScoredComponent, AxisScores>,
}

/// A cell allowed to exceed the rubric range, for transcribing published
/// tables that contain such values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellRef {
    pub device: String,
    pub component: ScoredComponent,
    pub axis: Axis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureMatrix {
    pub devices: Vec<DeviceScores>,
    /// Scores every device is compared against.
    #[serde(default)]
    pub baseline: BTreeMap<ScoredComponent, AxisScores>,
    #[serde(default)]
    pub allow_out_of_rubric: Vec<CellRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoreError {
    #[error("{device} / {component:?} / {axis}: score {value} is outside 0..={max}")]
    InvalidScore {
        device: String,
        component: ScoredComponent,
        axis: Axis,
        value: u8,
        max: u8,
    },
    #[error("device {0} lacks component {1:?}")]
    MissingComponent(String, ScoredComponent),
    #[error("device {0} listed twice")]
    DuplicateDevice(String),
    #[error("matrix is not valid JSON: {0}")]
    Syntax(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BelowBaseline {
    pub device: String,
    pub component: ScoredComponent,
    pub axis: Axis,
    pub score: Score,
    pub baseline: Score,
}

/// Sum of applicable scores; NA cells are left out rather than counted as 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Total {
    pub sum: u32,
    pub applicable: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Report {
    /// Rows in table order: component, device, then E1..E4.
    pub rows: Vec<(ScoredComponent, String, [Score; 4])>,
    pub totals: BTreeMap<String, Total>,
    pub below_baseline: Vec<BelowBaseline>,
}

impl FeatureMatrix {
    pub fn from_json(text: &str) -> Result<Self, ScoreError> {
        serde_json::from_str(text).map_err(|e| ScoreError::Syntax(e.to_string()))
    }

    fn allowed(&self, device: &str, component: ScoredComponent, axis: Axis) -> bool {
        self.allow_out_of_rubric
            .iter()
            .any(|c| c.device == device && c.component == component && c.axis == axis)
    }

    /// Every domain violation, in table order.
    pub fn validate(&self) -> Vec<ScoreError> {
        let mut out = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for d in &self.devices {
            if !seen.insert(d.name.as_str()) {
                out.push(ScoreError::DuplicateDevice(d.name.clone()));
            }
            for c in ScoredComponent::ALL {
                let Some(s) = d.scores.get(&c) else {
                    out.push(ScoreError::MissingComponent(d.name.clone(), c));
                    continue;
                };
                for a in Axis::ALL {
                    if let Score::Value(v) = s.get(a) {
                        if v > a.max() && !self.allowed(&d.name, c, a) {
                            out.push(ScoreError::InvalidScore {
                                device: d.name.clone(),
                                component: c,
                                axis: a,
                                value: v,
                                max: a.max(),
                            });
                        }
                    }
                }
            }
        }
        for (c, s) in &self.baseline {
            for a in Axis::ALL {
                if let Score::Value(v) = s.get(a) {
                    if v > a.max() {
                        out.push(ScoreError::InvalidScore {
                            device: "baseline".into(),
                            component: *c,
                            axis: a,
                            value: v,
                            max: a.max(),
                        });
                    }
                }
            }
        }
        out
    }

    pub fn score(&self) -> Result<Report, Vec<ScoreError>> {
        let errs = self.validate();
        if !errs.is_empty() {
            return Err(errs);
        }
        let mut rows = Vec::new();
        let mut totals: BTreeMap<String, Total> = BTreeMap::new();
        let mut below = Vec::new();
        for c in ScoredComponent::ALL {
            for d in &self.devices {
                let s = d.scores[&c];
                let cells = Axis::ALL.map(|a| s.get(a));
                rows.push((c, d.name.clone(), cells));
                let t = totals.entry(d.name.clone()).or_default();
                for (a, cell) in Axis::ALL.into_iter().zip(cells) {
                    if let Score::Value(v) = cell {
                        t.sum += u32::from(v);
                        t.applicable += 1;
                    }
                    let base = self.baseline.get(&c).map(|b| b.get(a));
                    // NA on either side is not comparable
                    if let (Score::Value(v), Some(Score::Value(b))) = (cell, base) {
                        if v < b {
                            below.push(BelowBaseline {
                                device: d.name.clone(),
                                component: c,
                                axis: a,
                                score: cell,
                                baseline: Score::Value(b),
                            });
                        }
                    }
                }
            }
        }
        Ok(Report {
            rows,
            totals,
            below_baseline: below,
        })
    }
}

impl Report {
    /// Plain-text comparison table plus derived totals.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "| Component | Products | E1 | E2 | E3 | E4 |");
        let _ = writeln!(s, "|---|---|---|---|---|---|");
        for (c, dev, cells) in &self.rows {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} |",
                c.title(),
                dev,
                cells[0],
                cells[1],
                cells[2],
                cells[3]
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "Derived totals (NA excluded, not part of the source table):");
        for (dev, t) in &self.totals {
            let _ = writeln!(s, "  {dev}: {} over {} applicable axes", t.sum, t.applicable);
        }
        if !self.below_baseline.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "Below baseline:");
            for b in &self.below_baseline {
                let _ = writeln!(
                    s,
                    "  {} / {} / {}: {} < {}",
                    b.device,
                    b.component.title(),
                    b.axis,
                    b.score,
                    b.baseline
                );
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: [Score; 4]) -> AxisScores {
        AxisScores {
            e1: v[0],
            e2: v[1],
            e3: v[2],
            e4: v[3],
        }
    }

    fn device(name: &str, v: [Score; 4]) -> DeviceScores {
        DeviceScores {
            name: name.into(),
            scores: ScoredComponent::ALL.into_iter().map(|c| (c, row(v))).collect(),
        }
    }

    const N: Score = Score::Na;
    const fn v(x: u8) -> Score {
        Score::Value(x)
    }

    #[test]
    fn na_is_excluded_from_totals() {
        let m = FeatureMatrix {
            devices: vec![device("a", [N, v(1), N, v(1)]), device("z", [v(0); 4])],
            baseline: BTreeMap::new(),
            allow_out_of_rubric: vec![],
        };
        let r = m.score().unwrap();
        assert_eq!(r.totals["a"], Total { sum: 12, applicable: 12 });
        assert_eq!(r.totals["z"], Total { sum: 0, applicable: 24 });
    }

    #[test]
    fn out_of_domain_rejected_unless_allowed() {
        let mut m = FeatureMatrix {
            devices: vec![device("a", [v(3), v(0), v(0), v(3)])],
            baseline: BTreeMap::new(),
            allow_out_of_rubric: vec![],
        };
        assert_eq!(m.validate().len(), 6);
        m.allow_out_of_rubric = ScoredComponent::ALL
            .into_iter()
            .map(|c| CellRef {
                device: "a".into(),
                component: c,
                axis: Axis::E1,
            })
            .collect();
        assert!(m.validate().is_empty());
    }

    #[test]
    fn baseline_flags() {
        let m = FeatureMatrix {
            devices: vec![device("a", [v(1), v(2), N, v(0)])],
            baseline: [(ScoredComponent::Parser, row([v(2), v(2), v(1), N]))].into(),
            allow_out_of_rubric: vec![],
        };
        let r = m.score().unwrap();
        assert_eq!(r.below_baseline.len(), 1);
        assert_eq!(r.below_baseline[0].axis, Axis::E1);
    }

    #[test]
    fn score_json_forms() {
        let s: Vec<Score> = serde_json::from_str(r#"["NA", 2, "1", "na"]"#).unwrap();
        assert_eq!(s, vec![N, v(2), v(1), N]);
        assert_eq!(serde_json::to_string(&s).unwrap(), r#"["NA",2,1,"NA"]"#);
    }
}
