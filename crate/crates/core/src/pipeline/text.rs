use std::collections::BTreeSet;

use super::PipelineError;
use crate::act_space::{act_tokens, ActEncoder, ActType, DialogueAct};
use crate::dialog_data::{delexicalize, domain_noun, Dialogue, Lexicon, CANONICAL_SLOTS, DOMAINS};
use crate::latent_policy::{DbBucket, Example, ModelMode};
use crate::seq_model::{TokenSequence, Vocab, SEP, SYS, USR};

/// Vocabulary over delexicalized corpus text plus every act, domain and
/// slot token of the world, so unseen-domain acts still encode.
pub fn build_vocab<'a>(dialogues: impl IntoIterator<Item = &'a Dialogue>, lexicon: &Lexicon) -> Vocab {
    let mut texts: Vec<String> = Vec::new();
    for d in dialogues {
        for t in &d.turns {
            texts.push(delexicalize(&t.user, lexicon).0);
            texts.push(t.response.clone());
        }
    }
    let mut schema: BTreeSet<String> = BTreeSet::new();
    for d in DOMAINS {
        schema.insert(d.to_string());
        schema.insert(format!("[{d}]"));
        schema.insert(domain_noun(d).expect("known domain").to_string());
    }
    for t in ActType::ALL {
        schema.insert(t.to_string());
        schema.insert(format!("[{t}]"));
    }
    for s in CANONICAL_SLOTS {
        schema.insert(s.to_string());
        schema.insert(format!("[{s}]"));
    }
    texts.extend(schema);
    Vocab::build(texts.iter().map(String::as_str))
}

/// Delexicalized history `(user, system)` pairs followed by the current user turn.
pub fn context_tokens(vocab: &Vocab, history: &[(String, String)], user: &str) -> Vec<usize> {
    let mut ids = Vec::new();
    for (u, s) in history {
        ids.push(vocab.id(USR));
        ids.extend(vocab.encode(u));
        ids.push(vocab.id(SYS));
        ids.extend(vocab.encode(s));
    }
    ids.push(vocab.id(USR));
    ids.extend(vocab.encode(user));
    ids
}

/// Encoder input for a turn. The baseline appends the database token
/// since it has no policy branch to carry it.
pub fn context_sequence(vocab: &Vocab, mode: ModelMode, history: &[(String, String)], user: &str, db: DbBucket) -> TokenSequence {
    let mut ids = context_tokens(vocab, history, user);
    if mode == ModelMode::BaselineConcat {
        ids.push(vocab.id(db.token()));
    }
    TokenSequence::new(ids)
}

/// Decoder target: the response, or for the baseline the serialized act,
/// `<sep>`, then the response. Unlabeled baseline turns keep an empty act.
pub fn target_tokens(vocab: &Vocab, mode: ModelMode, act: Option<&DialogueAct>, response: &str) -> Vec<usize> {
    let mut ids = Vec::new();
    if mode == ModelMode::BaselineConcat {
        if let Some(a) = act {
            ids.extend(vocab.encode(&a.serialize()));
        }
        ids.push(vocab.id(SEP));
    }
    ids.extend(vocab.encode(response));
    ids
}

/// Splits a baseline output at `<sep>` into the act (if it parses) and the response.
pub fn split_baseline_output(vocab: &Vocab, ids: &[usize]) -> (Option<DialogueAct>, Vec<usize>) {
    let sep = vocab.id(SEP);
    match ids.iter().position(|&i| i == sep) {
        Some(p) => (DialogueAct::parse(&vocab.decode(&ids[..p])).ok(), ids[p + 1..].to_vec()),
        None => (None, ids.to_vec()),
    }
}

/// Act-encoder ids for a serialized act or proxy response.
pub fn latent_ids(encoder: &ActEncoder, vocab: &Vocab, text: &str) -> Result<Vec<usize>, PipelineError> {
    Ok(encoder.token_ids(vocab, &act_tokens(text).join(" "))?)
}

/// A training example with the domain it came from, for audits.
#[derive(Clone, Debug)]
pub struct TaggedExample {
    pub example: Example,
    pub domain: String,
}

/// One example per turn. Labeled turns encode their act; unlabeled turns
/// encode their response as a proxy.
pub fn dialogue_examples(
    dialogue: &Dialogue,
    vocab: &Vocab,
    lexicon: &Lexicon,
    encoder: &ActEncoder,
    mode: ModelMode,
) -> Result<Vec<TaggedExample>, PipelineError> {
    let mut history: Vec<(String, String)> = Vec::new();
    let mut out = Vec::with_capacity(dialogue.turns.len());
    for turn in &dialogue.turns {
        let user = delexicalize(&turn.user, lexicon).0;
        let db = DbBucket::from_count(turn.db_count);
        let latent = match (mode, &turn.act) {
            (ModelMode::BaselineConcat, _) => None,
            (_, Some(a)) => Some(latent_ids(encoder, vocab, &a.serialize())?),
            (_, None) => Some(latent_ids(encoder, vocab, &turn.response)?),
        };
        out.push(TaggedExample {
            example: Example {
                context: context_sequence(vocab, mode, &history, &user, db),
                db,
                target: target_tokens(vocab, mode, turn.act.as_ref(), &turn.response),
                latent_ids: latent,
                proxy: turn.act.is_none(),
            },
            domain: dialogue.domain().to_string(),
        });
        history.push((user, turn.response.clone()));
    }
    Ok(out)
}

/// Text of generated ids, cut at the first `<eos>` if any.
pub fn decode_text(vocab: &Vocab, ids: &[usize]) -> String {
    let end = ids.iter().position(|&i| i == vocab.eos()).unwrap_or(ids.len());
    vocab.decode(&ids[..end])
}

/// Replaces each `[slot]` placeholder for which `value` has an answer.
pub fn lexicalize(response: &str, value: impl Fn(&str) -> Option<String>) -> String {
    response
        .split_whitespace()
        .map(|w| {
            w.strip_prefix('[')
                .and_then(|x| x.strip_suffix(']'))
                .and_then(&value)
                .unwrap_or_else(|| w.to_string())
        })
        .collect::<Vec<_>>()
        .join(" ")
}
