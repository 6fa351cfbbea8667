use std::collections::{BTreeMap, BTreeSet};

use super::{Corpus, DataError, Dialogue};
use crate::act_space::DialogueAct;

/// One-to-one renaming of slot names.
///
/// Names that are already targets of the mapping pass through unchanged,
/// which makes application idempotent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotMapping {
    map: BTreeMap<String, String>,
}

impl SlotMapping {
    pub fn new(pairs: impl IntoIterator<Item = (String, String)>) -> Result<Self, DataError> {
        let map: BTreeMap<String, String> = pairs.into_iter().collect();
        let mut targets = BTreeSet::new();
        for (k, v) in &map {
            if !targets.insert(v) {
                return Err(DataError::Mapping(format!("two source slots map to {v} (one is {k})")));
            }
        }
        Ok(SlotMapping { map })
    }

    pub fn identity<'a>(slots: impl IntoIterator<Item = &'a str>) -> Self {
        SlotMapping {
            map: slots.into_iter().map(|s| (s.to_string(), s.to_string())).collect(),
        }
    }

    pub fn inverse(&self) -> SlotMapping {
        SlotMapping {
            map: self.map.iter().map(|(k, v)| (v.clone(), k.clone())).collect(),
        }
    }

    pub fn apply(&self, slot: &str) -> Result<String, DataError> {
        if let Some(v) = self.map.get(slot) {
            return Ok(v.clone());
        }
        if self.map.values().any(|v| v == slot) {
            return Ok(slot.to_string());
        }
        Err(DataError::Mapping(format!("unmapped slot {slot}")))
    }

    fn text(&self, text: &str) -> Result<String, DataError> {
        let words: Result<Vec<String>, DataError> = text
            .split_whitespace()
            .map(|w| match w.strip_prefix('[').and_then(|x| x.strip_suffix(']')) {
                Some(slot) => Ok(format!("[{}]", self.apply(slot)?)),
                None => Ok(w.to_string()),
            })
            .collect();
        Ok(words?.join(" "))
    }

    fn keys(&self, m: &BTreeMap<String, String>) -> Result<BTreeMap<String, String>, DataError> {
        m.iter().map(|(k, v)| Ok((self.apply(k)?, v.clone()))).collect()
    }

    fn act(&self, act: &DialogueAct) -> Result<DialogueAct, DataError> {
        let mut err = None;
        let out = act.map_slots(|s| {
            self.apply(s).unwrap_or_else(|e| {
                err = Some(e);
                s.to_string()
            })
        })?;
        match err {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }

    pub fn dialogue(&self, d: &Dialogue) -> Result<Dialogue, DataError> {
        let mut out = d.clone();
        out.goal.constraints = self.keys(&d.goal.constraints)?;
        out.goal.requests = d.goal.requests.iter().map(|r| self.apply(r)).collect::<Result<_, _>>()?;
        for t in &mut out.turns {
            t.response = self.text(&t.response)?;
            t.user = self.text(&t.user)?;
            t.belief = self.keys(&t.belief)?;
            t.act = t.act.as_ref().map(|a| self.act(a)).transpose()?;
        }
        Ok(out)
    }
}

/// Rewrites every slot identifier in acts, placeholders, beliefs and goals.
pub fn map_slots(corpus: &Corpus, mapping: &SlotMapping) -> Result<Corpus, DataError> {
    let dialogues = corpus
        .dialogues
        .iter()
        .map(|d| mapping.dialogue(d))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(corpus.with_dialogues(dialogues))
}
