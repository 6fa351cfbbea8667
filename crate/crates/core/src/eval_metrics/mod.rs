//! Dialogue-level Inform and Success, corpus BLEU, the combined score and
//! act-prediction F1, plus the report that collects them.

mod bleu;

pub use bleu::{eval_bleu, BLEU_EPSILON};

use serde::{Deserialize, Serialize};

use crate::act_space::{act_f1, ActScore, DialogueAct};
use crate::dialog_data::{Dialogue, World, NAME};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{hypotheses} hypotheses but {references} references")]
    Length { hypotheses: usize, references: usize },
    #[error("dialogue {id} has {turns} turns but {responses} responses")]
    Responses { id: String, turns: usize, responses: usize },
    #[error("nothing to evaluate")]
    Empty,
}

/// Whether a delexicalized response mentions `[slot]`.
pub fn has_placeholder(response: &str, slot: &str) -> bool {
    let tag = format!("[{slot}]");
    response.split_whitespace().any(|w| w == tag)
}

/// 1 iff some response offers `[name]` at a turn whose belief has database
/// matches, and the top match satisfies every goal constraint.
pub fn eval_inform<S: AsRef<str>>(dialogue: &Dialogue, responses: &[S], world: &World) -> bool {
    let domain = &dialogue.goal.domain;
    dialogue.turns.iter().zip(responses).any(|(turn, r)| {
        if !has_placeholder(r.as_ref(), NAME) {
            return false;
        }
        match world.db_query(domain, &turn.belief) {
            Ok(matches) => matches.first().is_some_and(|top| top.satisfies(&dialogue.goal.constraints)),
            Err(_) => false,
        }
    })
}

/// 1 iff inform holds and every requested slot appears in some response.
pub fn eval_success<S: AsRef<str>>(dialogue: &Dialogue, responses: &[S], inform: bool) -> bool {
    inform
        && dialogue
            .goal
            .requests
            .iter()
            .all(|r| responses.iter().any(|x| has_placeholder(x.as_ref(), r)))
}

/// `(inform + success) / 2 + bleu`, all in percent.
pub fn combined_score(inform: f64, success: f64, bleu: f64) -> f64 {
    (inform + success) * 0.5 + bleu
}

/// Micro-averaged triple F1 over `(predicted, gold)` pairs.
pub fn aggregate_act_f1<'a>(pairs: impl IntoIterator<Item = (&'a DialogueAct, &'a DialogueAct)>) -> ActScore {
    let mut total = ActScore::default();
    for (p, g) in pairs {
        total.add(act_f1(p, g));
    }
    total
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DialogueScore {
    pub id: String,
    pub inform: bool,
    pub success: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub inform: f64,
    pub success: f64,
    pub bleu: f64,
    pub combined: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub act_f1: Option<f64>,
    /// Turns whose control filter was unsatisfiable and fell back to the full table.
    #[serde(default)]
    pub fallbacks: usize,
    pub dialogues: Vec<DialogueScore>,
}

impl EvalReport {
    /// Scores generated responses (one per turn) against the corpus.
    pub fn score<S: AsRef<str>>(dialogues: &[Dialogue], generated: &[Vec<S>], world: &World) -> Result<Self, EvalError> {
        if dialogues.is_empty() {
            return Err(EvalError::Empty);
        }
        if dialogues.len() != generated.len() {
            return Err(EvalError::Length {
                hypotheses: generated.len(),
                references: dialogues.len(),
            });
        }
        let mut hyps: Vec<&str> = Vec::new();
        let mut refs: Vec<&str> = Vec::new();
        let mut scores = Vec::with_capacity(dialogues.len());
        for (d, g) in dialogues.iter().zip(generated) {
            if d.turns.len() != g.len() {
                return Err(EvalError::Responses {
                    id: d.id.clone(),
                    turns: d.turns.len(),
                    responses: g.len(),
                });
            }
            let inform = eval_inform(d, g, world);
            let success = eval_success(d, g, inform);
            scores.push(DialogueScore {
                id: d.id.clone(),
                inform,
                success,
            });
            hyps.extend(g.iter().map(|s| s.as_ref()));
            refs.extend(d.turns.iter().map(|t| t.response.as_str()));
        }
        let n = scores.len() as f64;
        let inform = 100.0 * scores.iter().filter(|s| s.inform).count() as f64 / n;
        let success = 100.0 * scores.iter().filter(|s| s.success).count() as f64 / n;
        let bleu = eval_bleu(&hyps, &refs)?;
        Ok(EvalReport {
            inform,
            success,
            bleu,
            combined: combined_score(inform, success, bleu),
            act_f1: None,
            fallbacks: 0,
            dialogues: scores,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `metric<TAB>value` lines.
    pub fn to_tsv(&self) -> String {
        let mut s = format!(
            "metric\tvalue\ninform\t{:.2}\nsuccess\t{:.2}\nbleu\t{:.2}\ncombined\t{:.2}\n",
            self.inform, self.success, self.bleu, self.combined
        );
        if let Some(f) = self.act_f1 {
            s.push_str(&format!("act_f1\t{f:.4}\n"));
        }
        s.push_str(&format!("fallbacks\t{}\n", self.fallbacks));
        s
    }
}
