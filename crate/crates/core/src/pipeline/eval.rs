use std::collections::BTreeSet;

use super::generate::{ActChoice, ControlMode, GoalTracker, Responder};
use super::train::schema_table;
use super::{Checkpoint, PipelineError};
use crate::act_space::{act_f1, ActScore, ActTable, ControlFilter, DialogueAct};
use crate::dialog_data::{build_lexicon, delexicalize, Dialogue, Lexicon, World};
use crate::eval_metrics::EvalReport;
use crate::latent_policy::{DbBucket, ModelMode};

type Result<T> = std::result::Result<T, PipelineError>;

/// The checkpoint table when it covers every domain of `dialogues`,
/// otherwise the schema table of those domains (the zero-shot path).
pub fn eval_table(ckpt: &Checkpoint, dialogues: &[Dialogue]) -> Result<ActTable> {
    let wanted: BTreeSet<&str> = dialogues.iter().map(Dialogue::domain).collect();
    let covered: BTreeSet<&str> = ckpt.table.acts().iter().flat_map(|a| a.domains()).collect();
    if wanted.is_subset(&covered) {
        Ok(ckpt.table.clone())
    } else {
        let domains: Vec<&str> = wanted.into_iter().collect();
        log::info!("building schema act table for {}", domains.join(", "));
        schema_table(&ckpt.model, &ckpt.store, &ckpt.vocab, &domains)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalOptions {
    pub control: ControlMode,
    /// Condition on the gold act's latent; turns without a label use the prediction.
    pub gold_acts: bool,
}

/// One generated turn with the act it used.
#[derive(Clone, Debug, PartialEq)]
pub struct TurnOutput {
    pub text: String,
    pub act: Option<DialogueAct>,
    pub fell_back: bool,
}

/// Generates every turn of `dialogue` from its gold history and oracle belief.
pub fn generate_dialogue(responder: &Responder<'_>, dialogue: &Dialogue, lexicon: &Lexicon, opts: EvalOptions) -> Result<Vec<TurnOutput>> {
    let domain = dialogue.domain();
    let mut tracker = GoalTracker::new(domain);
    let mut history: Vec<(String, String)> = Vec::new();
    let mut out = Vec::with_capacity(dialogue.turns.len());
    let empty = ControlFilter::default();
    for turn in &dialogue.turns {
        let user = delexicalize(&turn.user, lexicon).0;
        let db = DbBucket::from_count(turn.db_count);
        let ctx = responder.context(&history, &user, db);
        let filter = match opts.control {
            ControlMode::Goal => tracker.filter(&turn.user, &turn.belief, turn.db_count),
            _ => empty.clone(),
        };
        let choice = match (&turn.act, opts.gold_acts) {
            (Some(a), true) => ActChoice::Fixed(a),
            _ => ActChoice::Predicted {
                domain: (opts.control != ControlMode::None).then_some(domain),
                filter: &filter,
            },
        };
        let g = responder.respond(&ctx, db, choice)?;
        tracker.observe(g.act.as_ref());
        out.push(TurnOutput { text: g.text, act: g.act, fell_back: g.fell_back });
        history.push((user, turn.response.clone()));
    }
    Ok(out)
}

/// Scores generated responses on `dialogues`; act F1 is included when gold acts exist.
pub fn run_eval(ckpt: &Checkpoint, dialogues: &[Dialogue], world: &World, opts: EvalOptions) -> Result<EvalReport> {
    if dialogues.is_empty() {
        return Err(PipelineError::Invalid("evaluation split is empty".into()));
    }
    let responder = Responder::new(ckpt, eval_table(ckpt, dialogues)?);
    let lexicon = build_lexicon(world, dialogues.iter().map(|d| &d.goal));
    let mut generated = Vec::with_capacity(dialogues.len());
    let mut acts = ActScore::default();
    let mut labeled = 0usize;
    let mut fallbacks = 0;
    for d in dialogues {
        let turns = generate_dialogue(&responder, d, &lexicon, opts)?;
        for (t, g) in d.turns.iter().zip(&turns) {
            fallbacks += g.fell_back as usize;
            if let Some(gold) = &t.act {
                labeled += 1;
                acts.add(match &g.act {
                    Some(p) => act_f1(p, gold),
                    None => ActScore { false_negatives: gold.len(), ..ActScore::default() },
                });
            }
        }
        generated.push(turns.into_iter().map(|t| t.text).collect::<Vec<_>>());
    }
    let mut report = EvalReport::score(dialogues, &generated, world)?;
    report.fallbacks = fallbacks;
    report.act_f1 = (labeled > 0).then(|| acts.f1());
    Ok(report)
}

/// Predicted act for one turn, with the gold act when labeled.
#[derive(Clone, Debug, PartialEq)]
pub struct ActPrediction {
    pub dialogue: String,
    pub turn: usize,
    /// `None` when a baseline output carries no parseable act.
    pub predicted: Option<DialogueAct>,
    pub gold: Option<DialogueAct>,
}

/// Quantized act predictions for every turn. The baseline has no latent,
/// so its act is read from the decoded output.
pub fn predict_acts(ckpt: &Checkpoint, dialogues: &[Dialogue], world: &World) -> Result<Vec<ActPrediction>> {
    let table = eval_table(ckpt, dialogues)?;
    let responder = Responder::new(ckpt, table);
    let lexicon = build_lexicon(world, dialogues.iter().map(|d| &d.goal));
    let empty = ControlFilter::default();
    let mut out = Vec::new();
    for d in dialogues {
        let mut history: Vec<(String, String)> = Vec::new();
        for (i, turn) in d.turns.iter().enumerate() {
            let user = delexicalize(&turn.user, &lexicon).0;
            let db = DbBucket::from_count(turn.db_count);
            let ctx = responder.context(&history, &user, db);
            let predicted = match ckpt.model.mode {
                ModelMode::Latent => {
                    let z_hat = ckpt.model.predict_latent(&ckpt.store, &ctx, db)?;
                    Some(responder.table.quantize(&z_hat)?.act.clone())
                }
                ModelMode::BaselineConcat => responder.respond(&ctx, db, ActChoice::Predicted { domain: None, filter: &empty })?.act,
            };
            out.push(ActPrediction {
                dialogue: d.id.clone(),
                turn: i,
                predicted,
                gold: turn.act.clone(),
            });
            history.push((user, turn.response.clone()));
        }
    }
    Ok(out)
}
