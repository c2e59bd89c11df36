//! The eight semantic relation types and their paraphrase schemas.
//!
//! Each relation carries the set of relational words (mostly prepositions)
//! that signal it, plus a paraphrase template. In the template the verb slot
//! is always open; which of the utterance's two tokens fills the direct
//! object depends on the relation family: locatum relations place the
//! denominal noun as the object ("put the carpet on the floor"), all other
//! relations place the context there ("drop the newspaper on the porch").

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelationType {
    LocatumOn,
    LocatumOut,
    LocationIn,
    LocationOut,
    Duration,
    Agent,
    Goal,
    Instrument,
}

/// Which utterance token fills the direct-object slot of a paraphrase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectSlot {
    /// The denominal noun is the thing placed or removed.
    DenominalNoun,
    /// The context word is acted upon; the denominal noun goes in the
    /// oblique slot.
    Context,
}

impl RelationType {
    pub const ALL: [RelationType; 8] = [
        RelationType::LocatumOn,
        RelationType::LocatumOut,
        RelationType::LocationIn,
        RelationType::LocationOut,
        RelationType::Duration,
        RelationType::Agent,
        RelationType::Goal,
        RelationType::Instrument,
    ];

    pub fn symbol(&self) -> &'static str {
        match self {
            RelationType::LocatumOn => "LOCATUM_ON",
            RelationType::LocatumOut => "LOCATUM_OUT",
            RelationType::LocationIn => "LOCATION_IN",
            RelationType::LocationOut => "LOCATION_OUT",
            RelationType::Duration => "DURATION",
            RelationType::Agent => "AGENT",
            RelationType::Goal => "GOAL",
            RelationType::Instrument => "INSTRUMENT",
        }
    }

    /// Relational words signalling this relation. Multi-word entries are
    /// space-separated phrases; ordering is the canonical alternation order.
    pub fn relational_words(&self) -> &'static [&'static str] {
        match self {
            RelationType::LocatumOn | RelationType::LocationIn => {
                &["on", "onto", "in", "into", "to", "at"]
            }
            RelationType::LocatumOut | RelationType::LocationOut => {
                &["out of", "out", "from", "of"]
            }
            RelationType::Duration => &["during"],
            RelationType::Agent => &["as", "like"],
            RelationType::Goal => &["become", "look like", "to be", "into"],
            RelationType::Instrument => &["with", "by", "using", "via", "through"],
        }
    }

    /// The first relational word, used when a single surface form has to
    /// stand in for the relation (e.g. as the speaker's input token).
    pub fn head_relational_word(&self) -> &'static str {
        self.relational_words()[0]
    }

    pub fn object_slot(&self) -> ObjectSlot {
        match self {
            RelationType::LocatumOn | RelationType::LocatumOut => ObjectSlot::DenominalNoun,
            _ => ObjectSlot::Context,
        }
    }

    /// Abstract paraphrase template with open slots.
    pub fn template(&self) -> String {
        let (obj, obl) = match self.object_slot() {
            ObjectSlot::DenominalNoun => ("<NOUN>", "<CONTEXT>"),
            ObjectSlot::Context => ("<CONTEXT>", "<NOUN>"),
        };
        format!(
            "<VERB> the {obj} {} the {obl}",
            self.relational_words().join("|")
        )
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for RelationType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RelationType::ALL
            .iter()
            .find(|r| r.symbol() == s)
            .copied()
            .ok_or_else(|| Error::format(format!("unknown relation symbol {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exactly_eight_relations() {
        assert_eq!(RelationType::ALL.len(), 8);
    }

    #[test]
    fn instrument_words_match_expected_set() {
        assert_eq!(
            RelationType::Instrument.relational_words(),
            &["with", "by", "using", "via", "through"]
        );
    }

    #[test]
    fn symbols_round_trip() {
        for r in RelationType::ALL {
            assert_eq!(r.symbol().parse::<RelationType>().unwrap(), r);
        }
        assert!("LOCATION_UNDER".parse::<RelationType>().is_err());
    }

    #[test]
    fn locatum_relations_put_the_noun_first() {
        assert_eq!(
            RelationType::LocatumOn.object_slot(),
            ObjectSlot::DenominalNoun
        );
        assert_eq!(RelationType::LocationIn.object_slot(), ObjectSlot::Context);
        assert_eq!(RelationType::Instrument.object_slot(), ObjectSlot::Context);
    }
}
