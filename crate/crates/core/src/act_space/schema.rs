use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::act::{parse_with, SlotArity};
use super::{ActError, ActType, DialogueAct, DialogueActTriple};

pub const DEFAULT_CAP: usize = 3;

/// Enumerations larger than this are refused unless the caller raises it.
pub const DEFAULT_ENUMERATION_LIMIT: u128 = 200_000;

fn default_cap() -> usize {
    DEFAULT_CAP
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSlots {
    #[serde(default)]
    pub informable: Vec<String>,
    #[serde(default)]
    pub requestable: Vec<String>,
}

/// Domains, their slots, the allowed act types and the triple cap.
///
/// Stored as TOML:
///
/// ```toml
/// cap = 3
/// act_types = ["inform", "request", "bye"]
///
/// [domains.restaurant]
/// informable = ["area", "pricerange"]
/// requestable = ["phone"]
/// ```
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActSchema {
    #[serde(default = "default_cap")]
    pub cap: usize,
    pub act_types: Vec<ActType>,
    pub domains: BTreeMap<String, DomainSlots>,
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '-')
}

impl ActSchema {
    pub fn validate(&self) -> Result<(), ActError> {
        let bad = |m: String| Err(ActError::Schema(m));
        if self.cap == 0 {
            return bad("cap must be at least 1".into());
        }
        if self.act_types.is_empty() {
            return bad("no act types".into());
        }
        if self.domains.is_empty() {
            return bad("no domains".into());
        }
        for (d, slots) in &self.domains {
            if !is_identifier(d) || d.parse::<ActType>().is_ok() {
                return bad(format!("invalid domain name {d:?}"));
            }
            for s in slots.informable.iter().chain(&slots.requestable) {
                if !is_identifier(s) {
                    return bad(format!("invalid slot name {s:?} in domain {d}"));
                }
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, ActError> {
        let s: ActSchema = toml::from_str(text).map_err(|e| ActError::Schema(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    pub fn load(path: &Path) -> Result<Self, ActError> {
        ActSchema::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ActError> {
        Ok(std::fs::write(path, self.to_toml())?)
    }

    /// Informable then requestable slots of `domain`, without repeats.
    pub fn slots(&self, domain: &str) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        if let Some(d) = self.domains.get(domain) {
            for s in d.informable.iter().chain(&d.requestable) {
                if !out.contains(s) {
                    out.push(s.clone());
                }
            }
        }
        out
    }

    /// Copy restricted to the given domains.
    pub fn restrict(&self, domains: &[&str]) -> Result<Self, ActError> {
        let mut out = self.clone();
        out.domains.retain(|d, _| domains.contains(&d.as_str()));
        for d in domains {
            if !out.domains.contains_key(*d) {
                return Err(ActError::Schema(format!("unknown domain {d:?}")));
            }
        }
        Ok(out)
    }

    /// Every triple the schema admits within `domain`, in canonical order.
    pub fn legal_triples(&self, domain: &str) -> Vec<DialogueActTriple> {
        let slots = self.slots(domain);
        let mut types = self.act_types.clone();
        types.sort();
        types.dedup();
        let mut out = Vec::new();
        for t in types {
            let arity = t.slot_arity();
            if arity != SlotArity::Required {
                out.push(DialogueActTriple { domain: domain.into(), act_type: t, slot: None });
            }
            if arity != SlotArity::Forbidden {
                out.extend(slots.iter().map(|s| DialogueActTriple {
                    domain: domain.into(),
                    act_type: t,
                    slot: Some(s.clone()),
                }));
            }
        }
        out.sort();
        out
    }

    /// Closed-form number of acts `enumerate` would produce, or `None` on overflow.
    pub fn act_count(&self) -> Option<u128> {
        let mut total: u128 = 0;
        for d in self.domains.keys() {
            let t = self.legal_triples(d).len() as u128;
            for k in 1..=(self.cap as u128).min(t) {
                total = total.checked_add(binomial(t, k)?)?;
            }
        }
        Some(total)
    }

    /// All nonempty single-domain triple sets of size at most `cap`.
    ///
    /// Order: domains alphabetically, then by size, then lexicographically
    /// by triple index.
    pub fn enumerate(&self, limit: u128) -> Result<Vec<DialogueAct>, ActError> {
        self.validate()?;
        let count = self.act_count();
        match count {
            Some(c) if c <= limit => {}
            _ => {
                return Err(ActError::Overflow {
                    count: count.map_or_else(|| "more than 2^128".into(), |c| c.to_string()),
                    limit,
                    cap: self.cap,
                })
            }
        }
        let mut out = Vec::new();
        for d in self.domains.keys() {
            let triples = self.legal_triples(d);
            for k in 1..=self.cap.min(triples.len()) {
                for_each_combination(triples.len(), k, |idx| {
                    let act = DialogueAct::new(idx.iter().map(|&i| triples[i].clone()))
                        .expect("legal triples form valid acts");
                    out.push(act);
                });
            }
        }
        Ok(out)
    }

    /// Parses an act and checks every domain, act type and slot against the schema.
    pub fn parse_act(&self, text: &str) -> Result<DialogueAct, ActError> {
        parse_with(text, Some(self))
    }

    /// Whether every triple of `act` is legal here.
    pub fn admits(&self, act: &DialogueAct) -> bool {
        act.triples().all(|t| self.legal_triples(&t.domain).contains(t))
    }
}

pub(crate) fn binomial(n: u128, k: u128) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r.checked_mul(n - i)? / (i + 1);
    }
    Some(r)
}

/// Visits k-subsets of `0..n` in lexicographic order.
fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
