use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ActError, ActSchema};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActType {
    // declaration order is alphabetical so the derived Ord matches string order
    Bye,
    Greet,
    Inform,
    NoOffer,
    Offer,
    Recommend,
    Request,
    Select,
}

/// Whether an act type carries a slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotArity {
    Required,
    Forbidden,
    Optional,
}

impl ActType {
    pub const ALL: [ActType; 8] = [
        ActType::Bye,
        ActType::Greet,
        ActType::Inform,
        ActType::NoOffer,
        ActType::Offer,
        ActType::Recommend,
        ActType::Request,
        ActType::Select,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActType::Bye => "bye",
            ActType::Greet => "greet",
            ActType::Inform => "inform",
            ActType::NoOffer => "no-offer",
            ActType::Offer => "offer",
            ActType::Recommend => "recommend",
            ActType::Request => "request",
            ActType::Select => "select",
        }
    }

    pub fn slot_arity(self) -> SlotArity {
        match self {
            ActType::Bye | ActType::Greet => SlotArity::Forbidden,
            ActType::Inform | ActType::Request | ActType::Offer => SlotArity::Required,
            ActType::NoOffer | ActType::Recommend | ActType::Select => SlotArity::Optional,
        }
    }
}

impl fmt::Display for ActType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActType {
    type Err = ActError;

    fn from_str(s: &str) -> Result<Self, ActError> {
        ActType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| ActError::Parse {
                position: 0,
                message: format!("unknown act type {s:?}"),
            })
    }
}

/// One (act type, domain, slot) element of a dialogue act. Ordering is
/// lexicographic over (domain, act type, slot) with the missing slot first.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DialogueActTriple {
    pub domain: String,
    pub act_type: ActType,
    pub slot: Option<String>,
}

impl DialogueActTriple {
    pub fn new(act_type: ActType, domain: impl Into<String>, slot: Option<&str>) -> Result<Self, ActError> {
        let t = DialogueActTriple {
            domain: domain.into(),
            act_type,
            slot: slot.map(str::to_string),
        };
        t.validate()?;
        Ok(t)
    }

    /// Shorthand for tests and rule tables; panics on an invalid triple.
    pub fn of(act_type: ActType, domain: &str, slot: Option<&str>) -> Self {
        DialogueActTriple::new(act_type, domain, slot).expect("valid triple")
    }

    fn validate(&self) -> Result<(), ActError> {
        let bad = match (self.act_type.slot_arity(), &self.slot) {
            (SlotArity::Required, None) => Some("requires a slot"),
            (SlotArity::Forbidden, Some(_)) => Some("takes no slot"),
            _ => None,
        };
        if let Some(why) = bad {
            return Err(ActError::InvalidTriple(format!("{} {why}", self.act_type)));
        }
        if self.domain.is_empty() || self.domain.contains(char::is_whitespace) {
            return Err(ActError::InvalidTriple(format!("bad domain {:?}", self.domain)));
        }
        Ok(())
    }
}

impl fmt::Display for DialogueActTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.act_type, self.domain, self.slot.as_deref().unwrap_or("NONE"))
    }
}

/// A nonempty set of triples kept in canonical order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DialogueAct(BTreeSet<DialogueActTriple>);

impl DialogueAct {
    pub fn new(triples: impl IntoIterator<Item = DialogueActTriple>) -> Result<Self, ActError> {
        let mut set = BTreeSet::new();
        for t in triples {
            t.validate()?;
            if let Some(dup) = set.replace(t) {
                return Err(ActError::InvalidTriple(format!("duplicate triple {dup}")));
            }
        }
        if set.is_empty() {
            return Err(ActError::Empty);
        }
        Ok(DialogueAct(set))
    }

    pub fn triples(&self) -> impl Iterator<Item = &DialogueActTriple> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, t: &DialogueActTriple) -> bool {
        self.0.contains(t)
    }

    pub fn domains(&self) -> BTreeSet<&str> {
        self.0.iter().map(|t| t.domain.as_str()).collect()
    }

    /// Slots licensed for placeholders in a response realizing this act.
    pub fn informed_slots(&self) -> BTreeSet<&str> {
        self.0
            .iter()
            .filter(|t| t.act_type != ActType::Request)
            .filter_map(|t| t.slot.as_deref())
            .collect()
    }

    pub fn as_set(&self) -> &BTreeSet<DialogueActTriple> {
        &self.0
    }

    /// Same act with every slot renamed through `f`.
    pub fn map_slots(&self, mut f: impl FnMut(&str) -> String) -> Result<Self, ActError> {
        DialogueAct::new(self.0.iter().map(|t| DialogueActTriple {
            domain: t.domain.clone(),
            act_type: t.act_type,
            slot: t.slot.as_deref().map(&mut f),
        }))
    }

    /// Same act moved to another domain.
    pub fn with_domain(&self, domain: &str) -> Self {
        DialogueAct(
            self.0
                .iter()
                .map(|t| DialogueActTriple {
                    domain: domain.to_string(),
                    act_type: t.act_type,
                    slot: t.slot.clone(),
                })
                .collect(),
        )
    }

    /// Canonical surface form, e.g. `[hotel] [inform] pricerange [request] area`.
    pub fn serialize(&self) -> String {
        let mut out: Vec<String> = Vec::new();
        let mut domain: Option<&str> = None;
        // open act group; a bare triple closes it
        let mut open: Option<ActType> = None;
        for t in &self.0 {
            if domain != Some(t.domain.as_str()) {
                out.push(format!("[{}]", t.domain));
                domain = Some(t.domain.as_str());
                open = None;
            }
            if open != Some(t.act_type) {
                out.push(format!("[{}]", t.act_type));
            }
            open = match &t.slot {
                Some(s) => {
                    out.push(s.clone());
                    Some(t.act_type)
                }
                None => None,
            };
        }
        out.join(" ")
    }

    /// Parses the canonical grammar without checking names against a schema.
    pub fn parse(text: &str) -> Result<Self, ActError> {
        parse_with(text, None)
    }
}

impl fmt::Display for DialogueAct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

impl FromStr for DialogueAct {
    type Err = ActError;

    fn from_str(s: &str) -> Result<Self, ActError> {
        DialogueAct::parse(s)
    }
}

impl Serialize for DialogueAct {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&DialogueAct::serialize(self))
    }
}

impl<'de> Deserialize<'de> for DialogueAct {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        DialogueAct::parse(&s).map_err(serde::de::Error::custom)
    }
}

fn err(position: usize, message: String) -> ActError {
    ActError::Parse { position, message }
}

/// Tokens with their byte offsets.
fn words(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((s, &text[s..i]));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, &text[s..]));
    }
    out
}

/// Grammar: `([domain] ([act-type] slot*)+)+`. A bracketed token naming an
/// act type opens an act group; any other bracketed token opens a domain.
pub(crate) fn parse_with(text: &str, schema: Option<&ActSchema>) -> Result<DialogueAct, ActError> {
    let mut triples = Vec::new();
    let mut domain: Option<(usize, String)> = None;
    // current act type, its position, and whether it produced a triple yet
    let mut act: Option<(usize, ActType, bool)> = None;

    let close_act = |act: &Option<(usize, ActType, bool)>, domain: &Option<(usize, String)>, triples: &mut Vec<DialogueActTriple>| -> Result<(), ActError> {
        if let (Some((pos, t, false)), Some((_, d))) = (act, domain) {
            if t.slot_arity() == SlotArity::Required {
                return Err(err(*pos, format!("act type {t} requires a slot")));
            }
            triples.push(DialogueActTriple {
                domain: d.clone(),
                act_type: *t,
                slot: None,
            });
        }
        Ok(())
    };

    for (pos, w) in words(text) {
        if let Some(inner) = w.strip_prefix('[').and_then(|x| x.strip_suffix(']')) {
            if inner.is_empty() {
                return Err(err(pos, "empty tag".into()));
            }
            if let Ok(t) = inner.parse::<ActType>() {
                if domain.is_none() {
                    return Err(err(pos, format!("act type [{t}] before any domain")));
                }
                if let Some(s) = schema {
                    if !s.act_types.contains(&t) {
                        return Err(err(pos, format!("act type {t} not allowed by schema")));
                    }
                }
                close_act(&act, &domain, &mut triples)?;
                act = Some((pos, t, false));
            } else {
                if let (Some(_), None) = (&domain, &act) {
                    return Err(err(pos, format!("domain [{inner}] follows a domain without any act")));
                }
                if let Some(s) = schema {
                    if !s.domains.contains_key(inner) {
                        return Err(err(pos, format!("unknown domain {inner:?}")));
                    }
                }
                close_act(&act, &domain, &mut triples)?;
                act = None;
                domain = Some((pos, inner.to_string()));
            }
        } else {
            let Some((apos, t, _)) = act else {
                return Err(err(pos, format!("slot {w:?} outside an act group")));
            };
            if t.slot_arity() == SlotArity::Forbidden {
                return Err(err(pos, format!("act type {t} takes no slot, got {w:?}")));
            }
            let d = &domain.as_ref().expect("act implies domain").1;
            if let Some(s) = schema {
                if !s.slots(d).iter().any(|x| x == w) {
                    return Err(err(pos, format!("unknown slot {w:?} for domain {d}")));
                }
            }
            triples.push(DialogueActTriple {
                domain: d.clone(),
                act_type: t,
                slot: Some(w.to_string()),
            });
            act = Some((apos, t, true));
        }
    }
    match (&domain, &act) {
        (None, _) => return Err(err(0, "empty act".into())),
        (Some((pos, d)), None) => return Err(err(*pos, format!("domain [{d}] has no act"))),
        _ => {}
    }
    close_act(&act, &domain, &mut triples)?;
    DialogueAct::new(triples).map_err(|e| match e {
        ActError::InvalidTriple(m) => err(0, m),
        other => other,
    })
}

/// Triple-level precision, recall and F1, with the raw counts.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ActScore {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl ActScore {
    pub fn precision(&self) -> f64 {
        ratio(self.true_positives, self.true_positives + self.false_positives)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.true_positives, self.true_positives + self.false_negatives)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn add(&mut self, other: ActScore) {
        self.true_positives += other.true_positives;
        self.false_positives += other.false_positives;
        self.false_negatives += other.false_negatives;
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Set overlap between predicted and gold triples.
pub fn act_f1(predicted: &DialogueAct, gold: &DialogueAct) -> ActScore {
    let tp = predicted.0.intersection(&gold.0).count();
    ActScore {
        true_positives: tp,
        false_positives: predicted.len() - tp,
        false_negatives: gold.len() - tp,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ActType::*;

    fn t(a: ActType, d: &str, s: Option<&str>) -> DialogueActTriple {
        DialogueActTriple::of(a, d, s)
    }

    #[test]
    fn serializes_single_request() {
        let a = DialogueAct::new([t(Request, "restaurant", Some("area"))]).unwrap();
        assert_eq!(a.serialize(), "[restaurant] [request] area");
    }

    #[test]
    fn serialization_groups_by_domain_then_type() {
        let a = DialogueAct::new([t(Request, "hotel", Some("area")), t(Inform, "hotel", Some("pricerange"))]).unwrap();
        let b = DialogueAct::new([t(Inform, "hotel", Some("pricerange")), t(Request, "hotel", Some("area"))]).unwrap();
        assert_eq!(a.serialize(), "[hotel] [inform] pricerange [request] area");
        assert_eq!(a.serialize(), b.serialize());
    }

    #[test]
    fn parses_slotless_bye() {
        let a: DialogueAct = "[restaurant] [bye]".parse().unwrap();
        assert_eq!(a, DialogueAct::new([t(Bye, "restaurant", None)]).unwrap());
    }

    #[test]
    fn rejects_unknown_act_type_with_position() {
        let e = DialogueAct::parse("[restaurant] [frobnicate] x").unwrap_err();
        match e {
            ActError::Parse { position, .. } => assert_eq!(position, 13),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_inputs() {
        for bad in ["", "area", "[restaurant]", "[restaurant] [inform]", "[restaurant] [bye] area", "[inform] area", "[a] [b] [inform] x"] {
            assert!(DialogueAct::parse(bad).is_err(), "{bad:?} should fail");
        }
    }

    #[test]
    fn multi_domain_round_trip() {
        let s = "[hotel] [bye] [restaurant] [inform] area name [request] food";
        assert_eq!(DialogueAct::parse(s).unwrap().serialize(), s);
    }

    #[test]
    fn optional_slot_types_accept_both_forms() {
        assert!(DialogueAct::parse("[hotel] [no-offer]").is_ok());
        assert!(DialogueAct::parse("[hotel] [no-offer] area").is_ok());
    }

    #[test]
    fn f1_examples() {
        let a = DialogueAct::parse("[r] [inform] a b").unwrap();
        let b = DialogueAct::parse("[r] [inform] b c").unwrap();
        let s = act_f1(&a, &b);
        assert_eq!((s.precision(), s.recall(), s.f1()), (0.5, 0.5, 0.5));
        let same = act_f1(&a, &a);
        assert_eq!((same.precision(), same.recall(), same.f1()), (1.0, 1.0, 1.0));
        let c = DialogueAct::parse("[r] [request] z").unwrap();
        let d = act_f1(&a, &c);
        assert_eq!((d.precision(), d.recall(), d.f1()), (0.0, 0.0, 0.0));
    }
}
