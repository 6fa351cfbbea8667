use std::collections::{BTreeSet, HashSet};
use std::fmt;

use super::{ActError, DialogueAct, DialogueActTriple};

/// Index and squared Euclidean distance of the row nearest to `query`.
/// Ties go to the lowest index.
pub fn nearest<'a>(query: &[f32], rows: impl IntoIterator<Item = &'a [f32]>) -> Result<(usize, f64), ActError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, row) in rows.into_iter().enumerate() {
        if row.len() != query.len() {
            return Err(ActError::Dimension {
                expected: row.len(),
                got: query.len(),
            });
        }
        let d: f64 = row
            .iter()
            .zip(query)
            .map(|(&a, &b)| {
                let x = a as f64 - b as f64;
                x * x
            })
            .sum();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.ok_or(ActError::EmptyTable)
}

/// Required and forbidden triples.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ControlFilter {
    required: BTreeSet<DialogueActTriple>,
    forbidden: BTreeSet<DialogueActTriple>,
}

impl ControlFilter {
    pub fn new(
        required: impl IntoIterator<Item = DialogueActTriple>,
        forbidden: impl IntoIterator<Item = DialogueActTriple>,
    ) -> Result<Self, ActError> {
        let f = ControlFilter {
            required: required.into_iter().collect(),
            forbidden: forbidden.into_iter().collect(),
        };
        if let Some(t) = f.required.intersection(&f.forbidden).next() {
            return Err(ActError::Unsatisfiable(format!("{t} is both required and forbidden")));
        }
        Ok(f)
    }

    pub fn is_empty(&self) -> bool {
        self.required.is_empty() && self.forbidden.is_empty()
    }

    pub fn required(&self) -> &BTreeSet<DialogueActTriple> {
        &self.required
    }

    pub fn forbidden(&self) -> &BTreeSet<DialogueActTriple> {
        &self.forbidden
    }

    pub fn admits(&self, act: &DialogueAct) -> bool {
        self.required.iter().all(|t| act.contains(t)) && !self.forbidden.iter().any(|t| act.contains(t))
    }
}

impl fmt::Display for ControlFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |s: &BTreeSet<DialogueActTriple>| s.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" ");
        write!(f, "require [{}] forbid [{}]", list(&self.required), list(&self.forbidden))
    }
}

/// Result of a table lookup.
#[derive(Clone, Debug, PartialEq)]
pub struct Quantized<'a> {
    pub index: usize,
    pub act: &'a DialogueAct,
    pub embedding: &'a [f32],
    pub distance: f64,
}

/// Ordered (act, unit embedding) rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ActTable {
    acts: Vec<DialogueAct>,
    embeddings: Vec<Vec<f32>>,
}

const NORM_TOLERANCE: f64 = 1e-6;

impl ActTable {
    /// Encodes each distinct act once, keeping first-occurrence order.
    pub fn build<F>(acts: &[DialogueAct], mut encode: F) -> Result<Self, ActError>
    where
        F: FnMut(&DialogueAct) -> Result<Vec<f32>, ActError>,
    {
        if acts.is_empty() {
            return Err(ActError::EmptyTable);
        }
        let mut seen = HashSet::new();
        let mut rows = Vec::with_capacity(acts.len());
        for a in acts {
            if seen.insert(a) {
                rows.push((a.clone(), encode(a)?));
            } else {
                log::warn!("duplicate act {a} dropped from table");
            }
        }
        ActTable::from_rows(rows)
    }

    pub fn from_rows(rows: Vec<(DialogueAct, Vec<f32>)>) -> Result<Self, ActError> {
        let dim = rows.first().map(|(_, e)| e.len()).ok_or(ActError::EmptyTable)?;
        let mut seen = HashSet::new();
        for (a, e) in &rows {
            if !seen.insert(a) {
                return Err(ActError::Table(format!("duplicate act {a}")));
            }
            if e.len() != dim {
                return Err(ActError::Dimension { expected: dim, got: e.len() });
            }
            let norm = e.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(ActError::Table(format!("embedding of {a} has norm {norm}")));
            }
        }
        let (acts, embeddings) = rows.into_iter().unzip();
        Ok(ActTable { acts, embeddings })
    }

    pub fn len(&self) -> usize {
        self.acts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.acts.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings[0].len()
    }

    pub fn acts(&self) -> &[DialogueAct] {
        &self.acts
    }

    pub fn embedding(&self, i: usize) -> &[f32] {
        &self.embeddings[i]
    }

    pub fn position(&self, act: &DialogueAct) -> Option<usize> {
        self.acts.iter().position(|a| a == act)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DialogueAct, &[f32])> {
        self.acts.iter().zip(self.embeddings.iter().map(Vec::as_slice))
    }

    pub fn quantize(&self, z_hat: &[f32]) -> Result<Quantized<'_>, ActError> {
        let (index, distance) = nearest(z_hat, self.embeddings.iter().map(Vec::as_slice))?;
        Ok(Quantized {
            index,
            act: &self.acts[index],
            embedding: &self.embeddings[index],
            distance,
        })
    }

    /// Rows whose act satisfies `keep`, in their original order.
    pub fn select(&self, keep: impl Fn(&DialogueAct) -> bool) -> Result<ActTable, ActError> {
        let (acts, embeddings): (Vec<_>, Vec<_>) = self
            .iter()
            .filter(|(a, _)| keep(a))
            .map(|(a, e)| (a.clone(), e.to_vec()))
            .unzip();
        if acts.is_empty() {
            return Err(ActError::Unsatisfiable("no act passes the selection".into()));
        }
        Ok(ActTable { acts, embeddings })
    }

    /// Rows admitted by `filter`, in their original order.
    pub fn filter(&self, filter: &ControlFilter) -> Result<ActTable, ActError> {
        self.select(|a| filter.admits(a))
            .map_err(|_| ActError::Unsatisfiable(format!("no act satisfies {filter}")))
    }

    /// One line per row: act, tab, embedding values to 9 significant digits.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (a, e) in self.iter() {
            let vals: Vec<String> = e.iter().map(|x| format!("{x:.8e}")).collect();
            out.push_str(&format!("{a}\t{}\n", vals.join(" ")));
        }
        out
    }

    pub fn from_dump(text: &str) -> Result<Self, ActError> {
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |m: String| ActError::Table(format!("line {}: {m}", n + 1));
            let (act, vals) = line.split_once('\t').ok_or_else(|| bad("missing tab".into()))?;
            let act = DialogueAct::parse(act).map_err(|e| bad(e.to_string()))?;
            let emb = vals
                .split_whitespace()
                .map(|v| v.parse::<f32>().map_err(|e| bad(format!("{v:?}: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push((act, emb));
        }
        ActTable::from_rows(rows)
    }
}
