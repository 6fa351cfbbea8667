use std::collections::HashMap;

/// A replaced value: word range `[start, end)` of the input, its slot and text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub slot: String,
    pub value: String,
}

/// Value → slot table for longest-match delexicalization.
#[derive(Clone, Debug, Default)]
pub struct Lexicon {
    entries: HashMap<Vec<String>, String>,
    longest: usize,
}

impl Lexicon {
    pub fn new() -> Self {
        Lexicon::default()
    }

    /// The first slot registered for a value keeps it.
    pub fn insert(&mut self, value: &str, slot: &str) {
        let words: Vec<String> = value.split_whitespace().map(str::to_lowercase).collect();
        if words.is_empty() {
            return;
        }
        self.longest = self.longest.max(words.len());
        self.entries.entry(words).or_insert_with(|| slot.to_string());
    }

    pub fn from_entries<'a>(entries: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut lex = Lexicon::new();
        for (v, s) in entries {
            lex.insert(v, s);
        }
        lex
    }

    pub fn slot_of(&self, words: &[String]) -> Option<&str> {
        self.entries.get(words).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_words(&self) -> usize {
        self.longest
    }
}

/// Replaces lexicon values with `[slot]`, scanning left to right and taking
/// the longest value that starts at each position. Text is lowercased and
/// re-joined with single spaces.
pub fn delexicalize(text: &str, lexicon: &Lexicon) -> (String, Vec<Span>) {
    let words: Vec<String> = text.split_whitespace().map(str::to_lowercase).collect();
    let mut out: Vec<String> = Vec::with_capacity(words.len());
    let mut spans = Vec::new();
    let mut i = 0;
    while i < words.len() {
        let max = lexicon.max_words().min(words.len() - i);
        let hit = (1..=max)
            .rev()
            .find_map(|n| lexicon.slot_of(&words[i..i + n]).map(|s| (n, s.to_string())));
        match hit {
            Some((n, slot)) => {
                out.push(format!("[{slot}]"));
                spans.push(Span {
                    start: i,
                    end: i + n,
                    slot,
                    value: words[i..i + n].join(" "),
                });
                i += n;
            }
            None => {
                out.push(words[i].clone());
                i += 1;
            }
        }
    }
    (out.join(" "), spans)
}

/// Placeholder slot names (`[slot]` tokens) in a delexicalized text.
pub fn placeholders(text: &str) -> Vec<&str> {
    text.split_whitespace()
        .filter_map(|w| w.strip_prefix('[').and_then(|x| x.strip_suffix(']')))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_value() {
        let lex = Lexicon::from_entries([("cheap", "pricerange")]);
        let (d, spans) = delexicalize("i want cheap food", &lex);
        assert_eq!(d, "i want [pricerange] food");
        assert_eq!(spans[0].value, "cheap");
    }

    #[test]
    fn longer_value_wins() {
        let lex = Lexicon::from_entries([("north", "area"), ("north indian", "type")]);
        assert_eq!(delexicalize("north indian in the north", &lex).0, "[type] in the [area]");
    }

    #[test]
    fn no_hits_is_identity() {
        let lex = Lexicon::from_entries([("cheap", "pricerange")]);
        assert_eq!(delexicalize("hello there", &lex).0, "hello there");
    }

    #[test]
    fn placeholders_are_listed() {
        assert_eq!(placeholders("[name] is in the [area] ."), vec!["name", "area"]);
    }
}
