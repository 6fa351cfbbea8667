use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::delex::placeholders;
use super::{DataError, World};
use crate::act_space::{DialogueAct, DialogueActTriple};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Goal {
    pub domain: String,
    pub constraints: BTreeMap<String, String>,
    pub requests: Vec<String>,
}

/// One user utterance and the system response to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub user: String,
    pub response: String,
    pub belief: BTreeMap<String, String>,
    pub db_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub act: Option<DialogueAct>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub goal: Goal,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    pub fn domain(&self) -> &str {
        &self.goal.domain
    }

    pub fn is_labeled(&self) -> bool {
        self.turns.iter().any(|t| t.act.is_some())
    }

    pub fn strip_labels(&mut self) {
        self.turns.iter_mut().for_each(|t| t.act = None);
    }
}

/// Settings a corpus is generated from. Together with the seed they
/// determine every byte of the output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub seed: u64,
    pub domains: Vec<String>,
    pub dialogues: usize,
    pub unlabeled_frac: f64,
    pub holdout: Option<String>,
    pub holdout_dialogues: usize,
    pub entities_per_domain: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            domains: vec!["restaurant".into(), "hotel".into(), "attraction".into()],
            dialogues: 300,
            unlabeled_frac: 0.4,
            holdout: Some("shop".into()),
            holdout_dialogues: 100,
            entities_per_domain: 25,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Holdout,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    split: Split,
    config: GenConfig,
}

const FORMAT: &str = "latact-corpus";
const VERSION: u32 = 1;

/// Dialogues plus the configuration that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub config: GenConfig,
    pub split: Split,
    pub dialogues: Vec<Dialogue>,
}

impl Corpus {
    /// The world the dialogues were generated against.
    pub fn world(&self) -> World {
        World::generate(self.config.seed, self.config.entities_per_domain)
    }

    pub fn domains(&self) -> Vec<&str> {
        let mut d: Vec<&str> = self.dialogues.iter().map(Dialogue::domain).collect();
        d.sort();
        d.dedup();
        d
    }

    pub fn turns(&self) -> impl Iterator<Item = &Turn> {
        self.dialogues.iter().flat_map(|d| d.turns.iter())
    }

    pub fn act_labels(&self) -> impl Iterator<Item = Option<&DialogueAct>> {
        self.turns().map(|t| t.act.as_ref())
    }

    pub fn with_dialogues(&self, dialogues: Vec<Dialogue>) -> Corpus {
        Corpus {
            config: self.config.clone(),
            split: self.split,
            dialogues,
        }
    }

    /// Header line then one dialogue per line.
    pub fn to_jsonl(&self) -> String {
        let header = Header {
            format: FORMAT.into(),
            version: VERSION,
            split: self.split,
            config: self.config.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for d in &self.dialogues {
            out.push_str(&serde_json::to_string(d).expect("dialogue serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_reader(r: impl BufRead) -> Result<Corpus, DataError> {
        let mut lines = r.lines().enumerate();
        let (_, first) = lines.next().ok_or_else(|| DataError::Format("empty corpus file".into()))?;
        let header: Header =
            serde_json::from_str(&first?).map_err(|e| DataError::Format(format!("line 1: {e}")))?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(DataError::Format(format!(
                "unsupported corpus format {} v{}",
                header.format, header.version
            )));
        }
        let mut dialogues = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let d: Dialogue =
                serde_json::from_str(&line).map_err(|e| DataError::Format(format!("line {}: {e}", i + 1)))?;
            dialogues.push(d);
        }
        Ok(Corpus {
            config: header.config,
            split: header.split,
            dialogues,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(self.to_jsonl().as_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Corpus, DataError> {
        Corpus::from_reader(BufReader::new(std::fs::File::open(path)?))
    }
}

/// Where the holdout split of a corpus written to `path` goes.
pub fn holdout_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("corpus");
    path.with_file_name(format!("{stem}.holdout.jsonl"))
}

/// A violated corpus invariant.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub dialogue: String,
    pub turn: usize,
    pub message: String,
}

/// Checks placeholder licensing, belief consistency and DB counts.
pub fn validate_corpus(corpus: &Corpus, world: &World) -> Vec<Violation> {
    let mut out = Vec::new();
    for d in &corpus.dialogues {
        let mut push = |turn: usize, message: String| {
            out.push(Violation {
                dialogue: d.id.clone(),
                turn,
                message,
            })
        };
        if d.turns.is_empty() {
            push(0, "no turns".into());
        }
        let mut prev: BTreeMap<String, String> = BTreeMap::new();
        for (i, t) in d.turns.iter().enumerate() {
            if let Some(act) = &t.act {
                let licensed = act.informed_slots();
                for p in placeholders(&t.response) {
                    if !licensed.contains(p) {
                        push(i, format!("placeholder [{p}] not licensed by {act}"));
                    }
                }
                if act.triples().any(|x: &DialogueActTriple| x.domain != d.goal.domain) {
                    push(i, format!("act {act} leaves domain {}", d.goal.domain));
                }
            }
            for (k, v) in &t.belief {
                if d.goal.constraints.get(k) != Some(v) {
                    push(i, format!("belief {k}={v} not in goal"));
                }
            }
            if !prev.iter().all(|(k, v)| t.belief.get(k) == Some(v)) {
                push(i, "belief lost a constraint".into());
            }
            match world.db_query(&d.goal.domain, &t.belief) {
                Ok(m) if m.len() == t.db_count => {}
                Ok(m) => push(i, format!("db_count {} but query gives {}", t.db_count, m.len())),
                Err(e) => push(i, e.to_string()),
            }
            prev = t.belief.clone();
        }
    }
    out
}
