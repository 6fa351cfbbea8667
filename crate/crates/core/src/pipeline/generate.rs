use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use super::text::{context_sequence, decode_text, latent_ids, split_baseline_output};
use super::{Checkpoint, PipelineError};
use crate::act_space::{ActError, ActTable, ActType, ControlFilter, DialogueAct, DialogueActTriple, DEFAULT_CAP};
use crate::dialog_data::{INFORMABLE, NAME, REQUESTABLE};
use crate::latent_policy::{DbBucket, ModelMode};
use crate::seq_model::TokenSequence;

type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ControlMode {
    /// Quantize against the whole table.
    #[default]
    None,
    /// Only acts of the dialogue's domain.
    Schema,
    /// Schema restriction plus per-turn requirements derived from the goal state.
    Goal,
}

impl FromStr for ControlMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(ControlMode::None),
            "schema" => Ok(ControlMode::Schema),
            "goal" => Ok(ControlMode::Goal),
            _ => Err(format!("unknown control mode {s:?}; expected none, schema or goal")),
        }
    }
}

impl fmt::Display for ControlMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControlMode::None => "none",
            ControlMode::Schema => "schema",
            ControlMode::Goal => "goal",
        })
    }
}

/// Dialogue state behind goal-mode filters. It sees the raw user turns and
/// the acts actually generated so far, never the gold responses.
#[derive(Clone, Debug)]
pub struct GoalTracker {
    domain: String,
    name_offered: bool,
    informed: BTreeSet<String>,
    requested: BTreeSet<String>,
}

impl GoalTracker {
    pub fn new(domain: &str) -> Self {
        GoalTracker {
            domain: domain.to_string(),
            name_offered: false,
            informed: BTreeSet::new(),
            requested: BTreeSet::new(),
        }
    }

    /// Requirements for the next system turn.
    ///
    /// While several entities match and informable slots are unconstrained,
    /// request them. Once something matches, offer a name until one has been
    /// offered, and inform every slot the user asked for and has not been
    /// told. At most `DEFAULT_CAP` triples are required.
    pub fn filter(&mut self, user: &str, belief: &BTreeMap<String, String>, matches: usize) -> ControlFilter {
        for w in user.split(|c: char| !c.is_alphanumeric()) {
            if REQUESTABLE.contains(&w) {
                self.requested.insert(w.to_string());
            }
        }
        let d = self.domain.as_str();
        let mut required = Vec::new();
        let open: Vec<&str> = INFORMABLE.iter().copied().filter(|s| !belief.contains_key(*s)).collect();
        if matches > 1 && !open.is_empty() {
            required.extend(open.iter().map(|s| DialogueActTriple::of(ActType::Request, d, Some(s))));
        } else if matches >= 1 {
            if !self.name_offered {
                required.push(DialogueActTriple::of(ActType::Inform, d, Some(NAME)));
            }
            required.extend(
                self.requested
                    .difference(&self.informed)
                    .map(|r| DialogueActTriple::of(ActType::Inform, d, Some(r))),
            );
        }
        required.truncate(DEFAULT_CAP);
        ControlFilter::new(required, []).expect("nothing is forbidden")
    }

    /// Records the act used for the turn just generated.
    pub fn observe(&mut self, act: Option<&DialogueAct>) {
        let Some(act) = act else { return };
        for t in act.triples().filter(|t| t.act_type == ActType::Inform) {
            match t.slot.as_deref() {
                Some(NAME) => self.name_offered = true,
                Some(s) => {
                    self.informed.insert(s.to_string());
                }
                None => {}
            }
        }
    }
}

/// One generated turn.
#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub text: String,
    /// The act the response was conditioned on (parsed from the output in baseline mode).
    pub act: Option<DialogueAct>,
    /// Predicted latent before quantization.
    pub z_hat: Vec<f32>,
    /// Latent fed to the second policy pass.
    pub z: Vec<f32>,
    /// The control filter was unsatisfiable and the unfiltered table was used.
    pub fell_back: bool,
}

/// How the act for a turn is chosen.
#[derive(Clone, Debug)]
pub enum ActChoice<'a> {
    /// Quantize the prediction, optionally within a domain and a filter.
    Predicted { domain: Option<&'a str>, filter: &'a ControlFilter },
    /// Bypass quantization with this act's latent.
    Fixed(&'a DialogueAct),
}

/// Generates responses from a checkpoint against an act table.
pub struct Responder<'a> {
    pub ckpt: &'a Checkpoint,
    pub table: ActTable,
}

impl<'a> Responder<'a> {
    pub fn new(ckpt: &'a Checkpoint, table: ActTable) -> Self {
        Responder { ckpt, table }
    }

    pub fn context(&self, history: &[(String, String)], user: &str, db: DbBucket) -> TokenSequence {
        context_sequence(&self.ckpt.vocab, self.ckpt.model.mode, history, user, db)
    }

    pub fn encode_act(&self, act: &DialogueAct) -> Result<Vec<f32>> {
        let ids = latent_ids(&self.ckpt.model.act_encoder, &self.ckpt.vocab, &act.serialize())?;
        Ok(self.ckpt.model.encode_latent(&self.ckpt.store, &ids)?)
    }

    /// Policy pass, quantization (or a fixed act), second pass and greedy decoding.
    pub fn respond(&self, context: &TokenSequence, db: DbBucket, choice: ActChoice<'_>) -> Result<Generated> {
        let ck = self.ckpt;
        let specials = (ck.vocab.bos(), ck.vocab.eos());
        if ck.model.mode == ModelMode::BaselineConcat {
            let ids = ck.model.generate(&ck.store, context, db, None, specials)?;
            let (act, response) = split_baseline_output(&ck.vocab, &ids);
            return Ok(Generated {
                text: decode_text(&ck.vocab, &response),
                act,
                z_hat: Vec::new(),
                z: Vec::new(),
                fell_back: false,
            });
        }
        let z_hat = ck.model.predict_latent(&ck.store, context, db)?;
        let (act, z, fell_back) = match choice {
            ActChoice::Fixed(a) => (a.clone(), self.encode_act(a)?, false),
            ActChoice::Predicted { domain, filter } => {
                let base = match domain {
                    Some(d) => self.table.select(|a| a.domains().iter().all(|x| *x == d)).ok(),
                    None => None,
                };
                let base = base.as_ref().unwrap_or(&self.table);
                let (table, fell_back) = match base.filter(filter) {
                    Ok(t) => (t, false),
                    Err(ActError::Unsatisfiable(m)) => {
                        log::warn!("{m}; using the unfiltered table");
                        (base.clone(), true)
                    }
                    Err(e) => return Err(e.into()),
                };
                let q = table.quantize(&z_hat)?;
                (q.act.clone(), q.embedding.to_vec(), fell_back)
            }
        };
        let ids = ck.model.generate(&ck.store, context, db, Some(&z), specials)?;
        Ok(Generated {
            text: decode_text(&ck.vocab, &ids),
            act: Some(act),
            z_hat,
            z,
            fell_back,
        })
    }
}
