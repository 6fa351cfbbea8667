use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use super::text::{build_vocab, dialogue_examples, TaggedExample};
use super::{Checkpoint, PipelineError, TrainConfig, TrainMode};
use crate::act_space::{act_tokens, extract_corpus_acts, ActError, ActTable, DialogueAct, DEFAULT_ENUMERATION_LIMIT};
use crate::dialog_data::{build_lexicon, split_corpus, world_act_types, world_schema, Corpus, Dialogue, Lexicon, SplitMode};
use crate::latent_policy::{Example, LatentActModel, LossWeights, Trainer, TrainerConfig};
use crate::numerics::rng::{seeded, stream, Rng};
use crate::numerics::{AdamConfig, ParamStore};
use crate::seq_model::Vocab;

type Result<T> = std::result::Result<T, PipelineError>;

/// What a training run did, for logs and audits.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainSummary {
    pub steps: usize,
    pub dialogues: usize,
    pub examples: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// `(step, validation response loss)`, starting with step 0.
    pub validation: Vec<(usize, f64)>,
    /// Domains of every example that reached an optimizer step.
    pub domains: BTreeSet<String>,
}

/// Table of the acts labeled in `dialogues`, encoded with the model's act
/// encoder. Without any labels the schema acts of their domains are used.
pub fn corpus_table(model: &LatentActModel, store: &ParamStore<f32>, vocab: &Vocab, dialogues: &[Dialogue]) -> Result<ActTable> {
    match extract_corpus_acts(dialogues.iter().flat_map(|d| d.turns.iter().map(|t| t.act.as_ref()))) {
        Ok(acts) => encode_table(model, store, vocab, &acts),
        Err(ActError::NoLabels) => {
            let domains: BTreeSet<&str> = dialogues.iter().map(Dialogue::domain).collect();
            schema_table(model, store, vocab, &domains.into_iter().collect::<Vec<_>>())
        }
        Err(e) => Err(e.into()),
    }
}

/// Every act the world schema allows in `domains`.
pub fn schema_table(model: &LatentActModel, store: &ParamStore<f32>, vocab: &Vocab, domains: &[&str]) -> Result<ActTable> {
    let schema = world_schema(domains, world_act_types())?;
    encode_table(model, store, vocab, &schema.enumerate(DEFAULT_ENUMERATION_LIMIT)?)
}

pub fn encode_table(model: &LatentActModel, store: &ParamStore<f32>, vocab: &Vocab, acts: &[DialogueAct]) -> Result<ActTable> {
    Ok(ActTable::build(acts, |a| {
        let ids = model.act_encoder.token_ids(vocab, &act_tokens(&a.serialize()).join(" "))?;
        model.encode_latent(store, &ids).map_err(|e| ActError::Table(e.to_string()))
    })?)
}

fn examples(
    dialogues: &[Dialogue],
    vocab: &Vocab,
    lexicon: &Lexicon,
    model: &LatentActModel,
) -> Result<Vec<TaggedExample>> {
    let mut out = Vec::new();
    for d in dialogues {
        out.extend(dialogue_examples(d, vocab, lexicon, &model.act_encoder, model.mode)?);
    }
    Ok(out)
}

struct Loop<'a> {
    steps: usize,
    lr: f64,
    warmup: usize,
    batch_size: usize,
    val_every: usize,
    forbidden: Option<&'a str>,
}

fn train_loop(trainer: &mut Trainer<f32>, train: &[TaggedExample], val: &[Example], cfg: Loop<'_>, rng: &mut Rng) -> Result<TrainSummary> {
    if train.is_empty() {
        return Err(PipelineError::Invalid("no training examples".into()));
    }
    let mut summary = TrainSummary { examples: train.len(), ..TrainSummary::default() };
    let validate = |t: &mut Trainer<f32>| -> Result<Option<f64>> {
        if val.is_empty() {
            return Ok(None);
        }
        let mut total = 0.0;
        let mut tokens = 0usize;
        for chunk in val.chunks(16) {
            let n: usize = chunk.iter().map(|e| e.target.len().min(t.model.config.max_response_len) + 1).sum();
            total += t.evaluate(chunk)?.response * n as f64;
            tokens += n;
        }
        Ok(Some(total / tokens as f64))
    };
    if cfg.val_every > 0 {
        if let Some(v) = validate(trainer)? {
            summary.validation.push((0, v));
        }
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = order.len();
    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size.min(train.len()) {
            if cursor == order.len() {
                order.shuffle(rng);
                cursor = 0;
            }
            let ex = &train[order[cursor]];
            cursor += 1;
            if cfg.forbidden == Some(ex.domain.as_str()) {
                return Err(PipelineError::Leak(ex.domain.clone()));
            }
            summary.domains.insert(ex.domain.clone());
            batch.push(ex.example.clone());
        }
        let lr = if step < cfg.warmup { cfg.lr * (step + 1) as f64 / cfg.warmup as f64 } else { cfg.lr };
        trainer.set_learning_rate(lr);
        let m = trainer.train_step(&batch)?;
        if step == 0 {
            summary.initial_loss = m.loss;
        } else if m.loss > 10.0 * summary.initial_loss {
            return Err(PipelineError::Diverged(format!(
                "loss {:.4} at step {step} exceeds ten times the initial {:.4}",
                m.loss, summary.initial_loss
            )));
        }
        summary.final_loss = m.loss;
        summary.steps = step + 1;
        if cfg.val_every > 0 && (step + 1) % cfg.val_every == 0 {
            if let Some(v) = validate(trainer)? {
                log::info!("step {} loss {:.4} validation {:.4}", step + 1, m.loss, v);
                summary.validation.push((step + 1, v));
            }
        }
    }
    Ok(summary)
}

fn trainer_config(cfg: &TrainConfig, lr: f64) -> Result<TrainerConfig> {
    Ok(TrainerConfig {
        adam: AdamConfig { lr, ..AdamConfig::default() },
        weights: LossWeights::new(cfg.alpha)?,
        clip_norm: (cfg.clip_norm > 0.0).then_some(cfg.clip_norm),
        dropout: cfg.dropout,
        freeze_act_encoder: cfg.freeze_act_encoder,
        seed: cfg.seed,
    })
}

fn select_training(cfg: &TrainConfig, corpus: &Corpus) -> Result<(Vec<Dialogue>, Vec<Dialogue>)> {
    let mode = match cfg.mode {
        TrainMode::FewShot(k) => SplitMode::FewShot(k),
        _ => SplitMode::Full,
    };
    let splits = split_corpus(corpus, mode, cfg.seed)?;
    let mut train = splits.train;
    if cfg.labeled_only {
        train.retain(Dialogue::is_labeled);
    }
    Ok((train, splits.val))
}

/// Trains a fresh model on the training portion of `corpus`. Dialogues of
/// the corpus's holdout domain must never reach an update.
pub fn pretrain(cfg: &TrainConfig, corpus: &Corpus) -> Result<(Checkpoint, TrainSummary)> {
    cfg.validate()?;
    let world = corpus.world();
    let lexicon = build_lexicon(&world, corpus.dialogues.iter().map(|d| &d.goal));
    let vocab = build_vocab(&corpus.dialogues, &lexicon);
    let mut store = ParamStore::new();
    let model = LatentActModel::new(&mut store, cfg.model_config(vocab.len()), cfg.model_mode(), &mut seeded(cfg.seed, stream::INIT))?;
    let (train_dialogues, val_dialogues) = select_training(cfg, corpus)?;
    let train = examples(&train_dialogues, &vocab, &lexicon, &model)?;
    let mut val: Vec<Example> = examples(&val_dialogues, &vocab, &lexicon, &model)?.into_iter().map(|e| e.example).collect();
    val.truncate(cfg.val_examples);
    let table = corpus_table(&model, &store, &vocab, &train_dialogues)?;

    let mut trainer = Trainer::new(model, store, trainer_config(cfg, cfg.lr)?, (vocab.bos(), vocab.eos()));
    let mut rng = seeded(cfg.seed, stream::BATCHES);
    let loop_cfg = Loop {
        steps: cfg.steps,
        lr: cfg.lr,
        warmup: cfg.warmup,
        batch_size: cfg.batch_size,
        val_every: cfg.val_every,
        forbidden: corpus.config.holdout.as_deref(),
    };
    let mut summary = train_loop(&mut trainer, &train, &val, loop_cfg, &mut rng)?;
    summary.dialogues = train_dialogues.len();
    let (model, store) = trainer.into_parts();
    // a trainable act encoder moves the latents, so re-encode the table
    let table = if cfg.freeze_act_encoder { table } else { corpus_table(&model, &store, &vocab, &train_dialogues)? };
    Ok((
        Checkpoint {
            model,
            store,
            train: cfg.clone(),
            data: corpus.config.clone(),
            vocab,
            table,
        },
        summary,
    ))
}

/// Continues training on `examples` dialogues sampled from `corpus`, with
/// the step count and learning rate stored in the checkpoint's config.
/// New labeled acts are appended to the table.
pub fn finetune(ckpt: Checkpoint, corpus: &Corpus, examples_wanted: usize) -> Result<(Checkpoint, TrainSummary)> {
    let mut cfg = ckpt.train.clone();
    cfg.mode = TrainMode::FewShot(examples_wanted);
    cfg.validate()?;
    let world = corpus.world();
    let lexicon = build_lexicon(&world, corpus.dialogues.iter().map(|d| &d.goal));
    let (train_dialogues, val_dialogues) = select_training(&cfg, corpus)?;
    let Checkpoint { model, store, data, vocab, table, .. } = ckpt;
    let train = examples(&train_dialogues, &vocab, &lexicon, &model)?;
    let mut val: Vec<Example> = examples(&val_dialogues, &vocab, &lexicon, &model)?.into_iter().map(|e| e.example).collect();
    val.truncate(cfg.val_examples);

    let mut trainer = Trainer::new(model, store, trainer_config(&cfg, cfg.finetune_lr)?, (vocab.bos(), vocab.eos()));
    let mut rng = seeded(cfg.seed, stream::BATCHES);
    let loop_cfg = Loop {
        steps: cfg.finetune_steps,
        lr: cfg.finetune_lr,
        warmup: 0,
        batch_size: cfg.batch_size,
        val_every: cfg.val_every,
        forbidden: None,
    };
    let mut summary = train_loop(&mut trainer, &train, &val, loop_cfg, &mut rng)?;
    summary.dialogues = train_dialogues.len();
    let (model, store) = trainer.into_parts();
    let mut acts: Vec<DialogueAct> = table.acts().to_vec();
    acts.extend(train_dialogues.iter().flat_map(|d| d.turns.iter().filter_map(|t| t.act.clone())));
    let mut seen = std::collections::HashSet::new();
    acts.retain(|a| seen.insert(a.clone()));
    let table = encode_table(&model, &store, &vocab, &acts)?;
    Ok((Checkpoint { model, store, train: cfg, data, vocab, table }, summary))
}
