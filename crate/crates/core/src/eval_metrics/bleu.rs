use std::collections::HashMap;

use super::EvalError;

/// Smoothing value substituted for an n-gram order with no matches.
pub const BLEU_EPSILON: f64 = 1e-9;

fn ngrams<'a, 'b>(tokens: &'b [&'a str], n: usize) -> HashMap<&'b [&'a str], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU-4 in percent with one reference per hypothesis.
///
/// Clipped n-gram matches and totals are summed over the corpus before
/// taking precisions. An order with zero matches contributes `ε / total`.
pub fn eval_bleu<S: AsRef<str>>(hypotheses: &[S], references: &[S]) -> Result<f64, EvalError> {
    if hypotheses.len() != references.len() {
        return Err(EvalError::Length {
            hypotheses: hypotheses.len(),
            references: references.len(),
        });
    }
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (h, r) in hypotheses.iter().zip(references) {
        let h: Vec<&str> = h.as_ref().split_whitespace().collect();
        let r: Vec<&str> = r.as_ref().split_whitespace().collect();
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=4 {
            let hc = ngrams(&h, n);
            let rc = ngrams(&r, n);
            totals[n - 1] += h.len().saturating_sub(n - 1);
            matches[n - 1] += hc.iter().map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0))).sum::<usize>();
        }
    }
    if hyp_len == 0 {
        return Ok(0.0);
    }
    let log_p: f64 = (0..4)
        .map(|i| {
            let num = if matches[i] == 0 { BLEU_EPSILON } else { matches[i] as f64 };
            (num / totals[i].max(1) as f64).ln()
        })
        .sum::<f64>()
        / 4.0;
    let bp = if hyp_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok((100.0 * bp * log_p.exp()).clamp(0.0, 100.0))
}
