use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use super::generate::{ActChoice, Responder};
use super::text::lexicalize;
use super::train::encode_table;
use super::{Checkpoint, PipelineError};
use crate::act_space::{ControlFilter, DialogueAct, DialogueActTriple, DEFAULT_ENUMERATION_LIMIT};
use crate::dialog_data::{
    build_lexicon, delexicalize, domain_noun, world_act_types, world_schema, Lexicon, World, DOMAINS, INFORMABLE,
};
use crate::latent_policy::DbBucket;

type Result<T> = std::result::Result<T, PipelineError>;

pub const PROMPT: &str = "user> ";

/// Interactive session state: oracle belief from the lexicon, history,
/// persistent control filter and an optional pinned act for the next turn.
pub struct ChatSession<'a> {
    responder: Responder<'a>,
    world: World,
    lexicon: Lexicon,
    domain: String,
    belief: BTreeMap<String, String>,
    history: Vec<(String, String)>,
    required: BTreeSet<DialogueActTriple>,
    forbidden: BTreeSet<DialogueActTriple>,
    pinned: Option<DialogueAct>,
}

impl<'a> ChatSession<'a> {
    /// The act table holds the checkpoint's acts plus every schema act of the world.
    pub fn new(ckpt: &'a Checkpoint, required: &[DialogueAct], forbidden: &[DialogueAct]) -> Result<Self> {
        let schema = world_schema(&DOMAINS, world_act_types())?;
        let mut acts: Vec<DialogueAct> = ckpt.table.acts().to_vec();
        let known: BTreeSet<DialogueAct> = acts.iter().cloned().collect();
        acts.extend(schema.enumerate(DEFAULT_ENUMERATION_LIMIT)?.into_iter().filter(|a| !known.contains(a)));
        let table = encode_table(&ckpt.model, &ckpt.store, &ckpt.vocab, &acts)?;
        let world = ckpt.world();
        let lexicon = build_lexicon(&world, []);
        let domain = ckpt
            .table
            .acts()
            .first()
            .and_then(|a| a.domains().into_iter().next().map(str::to_string))
            .unwrap_or_else(|| DOMAINS[0].to_string());
        let required: BTreeSet<_> = required.iter().flat_map(|a| a.triples().cloned()).collect();
        let forbidden: BTreeSet<_> = forbidden.iter().flat_map(|a| a.triples().cloned()).collect();
        ControlFilter::new(required.clone(), forbidden.clone())?;
        Ok(ChatSession {
            responder: Responder::new(ckpt, table),
            world,
            lexicon,
            domain,
            belief: BTreeMap::new(),
            history: Vec::new(),
            required,
            forbidden,
            pinned: None,
        })
    }

    /// Output lines for one input line; `None` ends the session.
    pub fn handle(&mut self, line: &str) -> Result<Option<Vec<String>>> {
        let line = line.trim();
        if line.is_empty() {
            return Ok(Some(Vec::new()));
        }
        if let Some(cmd) = line.strip_prefix('/') {
            let (name, arg) = cmd.split_once(char::is_whitespace).unwrap_or((cmd, ""));
            let arg = arg.trim();
            let out = match name {
                "quit" => return Ok(None),
                "act" => match DialogueAct::parse(arg) {
                    Ok(a) => {
                        let msg = format!("pinned: {a}");
                        self.pinned = Some(a);
                        msg
                    }
                    Err(e) => format!("error: {e}"),
                },
                "require" | "forbid" => match DialogueAct::parse(arg) {
                    Ok(a) => {
                        let (mut req, mut forb) = (self.required.clone(), self.forbidden.clone());
                        let target = if name == "require" { &mut req } else { &mut forb };
                        target.extend(a.triples().cloned());
                        match ControlFilter::new(req.clone(), forb.clone()) {
                            Ok(f) => {
                                self.required = req;
                                self.forbidden = forb;
                                format!("filter: {f}")
                            }
                            Err(e) => format!("error: {e}"),
                        }
                    }
                    Err(e) => format!("error: {e}"),
                },
                "clear" => {
                    self.required.clear();
                    self.forbidden.clear();
                    self.pinned = None;
                    "filter cleared".to_string()
                }
                _ => format!("error: unknown command /{name}; try /act, /require, /forbid, /clear or /quit"),
            };
            return Ok(Some(vec![out]));
        }
        self.turn(line).map(Some)
    }

    fn turn(&mut self, text: &str) -> Result<Vec<String>> {
        let lower = text.to_lowercase();
        let words: Vec<&str> = lower.split(|c: char| !c.is_alphanumeric()).collect();
        for d in DOMAINS {
            if words.contains(&domain_noun(d)?) && d != self.domain {
                self.domain = d.to_string();
                self.belief.clear();
            }
        }
        let (user, spans) = delexicalize(&lower, &self.lexicon);
        for s in spans.into_iter().filter(|s| INFORMABLE.contains(&s.slot.as_str())) {
            self.belief.insert(s.slot, s.value);
        }
        let matches = self.world.db_query(&self.domain, &self.belief)?;
        let db = DbBucket::from_count(matches.len());
        let ctx = self.responder.context(&self.history, &user, db);
        let filter = ControlFilter::new(self.required.clone(), self.forbidden.clone())?;
        let pinned = self.pinned.take();
        let choice = match &pinned {
            Some(a) => ActChoice::Fixed(a),
            None => ActChoice::Predicted { domain: Some(&self.domain), filter: &filter },
        };
        let g = self.responder.respond(&ctx, db, choice)?;
        let top = matches.first();
        let shown = lexicalize(&g.text, |slot| top.and_then(|e| e.get(slot)).map(str::to_string));
        let mut out = vec![format!("db: {}", matches.len())];
        out.push(match &g.act {
            Some(a) if g.fell_back => format!("act: {a} (filter unsatisfiable, unfiltered)"),
            Some(a) => format!("act: {a}"),
            None => "act: (none)".to_string(),
        });
        out.push(format!("system: {shown}"));
        self.history.push((user, g.text));
        Ok(out)
    }
}

/// Reads lines from `input` until `/quit` or end of input, writing the
/// prompt and every reply to `output`.
pub fn run_chat<R: BufRead, W: Write>(session: &mut ChatSession<'_>, input: R, mut output: W) -> Result<()> {
    let mut lines = input.lines();
    loop {
        write!(output, "{PROMPT}")?;
        output.flush()?;
        let Some(line) = lines.next() else {
            writeln!(output)?;
            return Ok(());
        };
        match session.handle(&line?)? {
            None => return Ok(()),
            Some(reply) => {
                for r in reply {
                    writeln!(output, "{r}")?;
                }
            }
        }
    }
}
