//! Inconsistency estimation against the knowledge base and minimal revision
//! of violating groundings.
//!
//! A grounding outside its item's admissible interval is negated and paired
//! with a corrective grounding whose value is the original clamped into the
//! interval. After revision the asserted groundings carry zero inconsistency.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowledge::{Grounding, GroundingSet, KnowledgeBase, KnowledgeItem, Polarity, SampleGroundings};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inconsistency {
    pub grounding_id: u64,
    pub knowledge_id: u32,
    pub magnitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleInconsistencies {
    pub sample_id: usize,
    pub items: Vec<Inconsistency>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InconsistencySet {
    pub samples: Vec<SampleInconsistencies>,
    pub total: f64,
    /// Asserted groundings whose predicate has no knowledge item.
    pub skipped: usize,
}

impl InconsistencySet {
    pub fn len(&self) -> usize {
        self.samples.iter().map(|s| s.items.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReasoningParams {
    /// Magnitudes at or below this are treated as consistent.
    pub tolerance: f64,
}

impl Default for ReasoningParams {
    fn default() -> Self {
        Self { tolerance: 1e-9 }
    }
}

impl ReasoningParams {
    pub fn validate(&self) -> Result<()> {
        if !self.tolerance.is_finite() || self.tolerance < 0.0 {
            return Err(Error::Config(format!(
                "reasoning tolerance must be finite and non-negative, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

/// Weighted distance from `value` to the item's admissible interval.
pub fn inconsistency_magnitude(item: &KnowledgeItem, value: f64) -> f64 {
    item.weight * (item.admissible_lo - value).max(value - item.admissible_hi).max(0.0)
}

pub fn estimate_inconsistencies(g: &GroundingSet, kb: &KnowledgeBase, params: &ReasoningParams) -> InconsistencySet {
    let mut skipped = 0;
    let mut total = 0.0;
    let samples = g
        .samples
        .iter()
        .map(|sg| {
            let mut items = Vec::new();
            for grounding in sg.groundings.iter().filter(|x| x.polarity == Polarity::Asserted) {
                let Some(item) = kb.item_for(grounding.predicate) else {
                    skipped += 1;
                    continue;
                };
                let magnitude = inconsistency_magnitude(item, grounding.observed_value);
                if magnitude > params.tolerance {
                    total += magnitude;
                    items.push(Inconsistency {
                        grounding_id: grounding.id,
                        knowledge_id: item.id,
                        magnitude,
                    });
                }
            }
            SampleInconsistencies {
                sample_id: sg.sample_id,
                items,
            }
        })
        .collect();
    InconsistencySet { samples, total, skipped }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Revision {
    Kept {
        grounding: Grounding,
    },
    Negated {
        grounding: Grounding,
        knowledge_id: u32,
        magnitude: f64,
    },
    Added {
        grounding: Grounding,
        /// Id of the negated grounding this one corrects.
        replaces: u64,
    },
}

impl Revision {
    pub fn grounding(&self) -> &Grounding {
        match self {
            Revision::Kept { grounding } | Revision::Negated { grounding, .. } | Revision::Added { grounding, .. } => {
                grounding
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRevisions {
    pub sample_id: usize,
    /// Originals in id order (kept or negated), then added groundings.
    pub entries: Vec<Revision>,
}

impl SampleRevisions {
    pub fn kept(&self) -> usize {
        self.count(|r| matches!(r, Revision::Kept { .. }))
    }

    pub fn negated(&self) -> usize {
        self.count(|r| matches!(r, Revision::Negated { .. }))
    }

    pub fn added(&self) -> usize {
        self.count(|r| matches!(r, Revision::Added { .. }))
    }

    /// Number of original groundings, kept plus negated.
    pub fn originals(&self) -> usize {
        self.kept() + self.negated()
    }

    fn count(&self, f: impl Fn(&Revision) -> bool) -> usize {
        self.entries.iter().filter(|r| f(r)).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevisedGroundingSet {
    pub samples: Vec<SampleRevisions>,
}

impl RevisedGroundingSet {
    /// Flattened size: originals plus additions over all samples.
    pub fn size(&self) -> usize {
        self.samples.iter().map(|s| s.entries.len()).sum()
    }

    /// The asserted groundings (kept and added) as a plain grounding set.
    pub fn asserted(&self, params: &crate::knowledge::GroundingParams) -> GroundingSet {
        GroundingSet {
            samples: self
                .samples
                .iter()
                .map(|s| SampleGroundings {
                    sample_id: s.sample_id,
                    groundings: s
                        .entries
                        .iter()
                        .map(Revision::grounding)
                        .filter(|g| g.polarity == Polarity::Asserted)
                        .cloned()
                        .collect(),
                })
                .collect(),
            params: params.clone(),
        }
    }

    pub fn for_sample(&self, sample_id: usize) -> Option<&SampleRevisions> {
        self.samples.iter().find(|s| s.sample_id == sample_id)
    }
}

/// Negates every grounding named by `ic` and adds its clamped correction.
pub fn abduce_revisions(ic: &InconsistencySet, g: &GroundingSet, kb: &KnowledgeBase) -> Result<RevisedGroundingSet> {
    let mut located: HashMap<u64, (usize, &Grounding)> = HashMap::new();
    for (pos, sg) in g.samples.iter().enumerate() {
        for grounding in &sg.groundings {
            located.insert(grounding.id, (pos, grounding));
        }
    }
    let mut violations: HashMap<u64, &Inconsistency> = HashMap::new();
    for (pos, si) in ic.samples.iter().enumerate() {
        for inc in &si.items {
            match located.get(&inc.grounding_id) {
                Some(&(owner, _)) if owner == pos => {
                    violations.insert(inc.grounding_id, inc);
                }
                Some(_) => {
                    return Err(Error::Internal(format!(
                        "inconsistency for grounding {} listed under the wrong sample",
                        inc.grounding_id
                    )))
                }
                None => {
                    return Err(Error::Internal(format!(
                        "inconsistency references unknown grounding {}",
                        inc.grounding_id
                    )))
                }
            }
        }
    }

    let mut next_id = g.iter().map(|x| x.id).max().unwrap_or(0) + 1;
    let mut samples = Vec::with_capacity(g.samples.len());
    for sg in &g.samples {
        let mut originals: Vec<&Grounding> = sg.groundings.iter().collect();
        originals.sort_by_key(|x| x.id);
        let mut entries = Vec::with_capacity(originals.len());
        let mut additions = Vec::new();
        for grounding in originals {
            let Some(inc) = violations.get(&grounding.id) else {
                entries.push(Revision::Kept {
                    grounding: grounding.clone(),
                });
                continue;
            };
            let item = kb.get(inc.knowledge_id).ok_or_else(|| {
                Error::Internal(format!("inconsistency references unknown knowledge item {}", inc.knowledge_id))
            })?;
            if item.predicate != grounding.predicate {
                return Err(Error::Internal(format!(
                    "knowledge item {} does not constrain predicate {}",
                    item.id, grounding.predicate
                )));
            }
            entries.push(Revision::Negated {
                grounding: Grounding {
                    polarity: Polarity::Negated,
                    ..grounding.clone()
                },
                knowledge_id: item.id,
                magnitude: inc.magnitude,
            });
            additions.push(Revision::Added {
                grounding: Grounding {
                    id: next_id,
                    source_sample: grounding.source_sample,
                    predicate: grounding.predicate,
                    observed_value: item.clamp(grounding.observed_value),
                    polarity: Polarity::Asserted,
                },
                replaces: grounding.id,
            });
            next_id += 1;
        }
        entries.extend(additions);
        samples.push(SampleRevisions {
            sample_id: sg.sample_id,
            entries,
        });
    }
    Ok(RevisedGroundingSet { samples })
}
