//! Interactive re-ranking from relevance labels.

use alloc::collections::BTreeMap;
use alloc::string::String;

use crate::types::Qrels;

pub mod caaf;
pub mod topk;

pub use caaf::{
    apply_label, caaf_energy, caaf_init, caaf_ranking, caaf_recommend, caaf_step, Beta, CaafParams,
    CaafState,
};
pub use topk::{topk_candidates, topk_rearrange, TopKMode, TopKStrategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
        }
    }
}

impl core::str::FromStr for Polarity {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "positive" | "+" => Ok(Polarity::Positive),
            "negative" | "-" => Ok(Polarity::Negative),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label {
    pub shot_id: String,
    pub polarity: Polarity,
}

impl Label {
    pub fn positive(shot_id: impl Into<String>) -> Self {
        Label {
            shot_id: shot_id.into(),
            polarity: Polarity::Positive,
        }
    }

    pub fn negative(shot_id: impl Into<String>) -> Self {
        Label {
            shot_id: shot_id.into(),
            polarity: Polarity::Negative,
        }
    }
}

/// One polarity per shot; a later label overwrites an earlier one.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelSet {
    labels: BTreeMap<String, Polarity>,
}

impl LabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the previous polarity of the shot, if any.
    pub fn set(&mut self, label: Label) -> Option<Polarity> {
        self.labels.insert(label.shot_id, label.polarity)
    }

    pub fn get(&self, shot_id: &str) -> Option<Polarity> {
        self.labels.get(shot_id).copied()
    }

    pub fn contains(&self, shot_id: &str) -> bool {
        self.labels.contains_key(shot_id)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Label> + '_ {
        self.labels.iter().map(|(s, &p)| Label {
            shot_id: s.clone(),
            polarity: p,
        })
    }
}

impl FromIterator<Label> for LabelSet {
    fn from_iter<I: IntoIterator<Item = Label>>(iter: I) -> Self {
        let mut set = LabelSet::new();
        for l in iter {
            set.set(l);
        }
        set
    }
}

impl Extend<Label> for LabelSet {
    fn extend<I: IntoIterator<Item = Label>>(&mut self, iter: I) {
        for l in iter {
            self.set(l);
        }
    }
}

/// Simulated annotator: positive iff judged relevant, unjudged counts as
/// negative.
pub fn oracle_annotate<'a, I>(qrels: &Qrels, topic_id: &str, shots: I) -> LabelSet
where
    I: IntoIterator<Item = &'a str>,
{
    shots
        .into_iter()
        .map(|s| Label {
            shot_id: String::from(s),
            polarity: if qrels.is_relevant(topic_id, s) {
                Polarity::Positive
            } else {
                Polarity::Negative
            },
        })
        .collect()
}
