//! Text helpers shared by the parser, the annotator and the rule engine.

/// Collapses every whitespace run to a single space and trims both ends.
pub fn normalize_ws(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Splits on anything that is not alphanumeric or `_`.
pub fn words(s: &str) -> impl Iterator<Item = &str> {
    s.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
}

/// A list of literal phrases matched on whole-word boundaries.
///
/// Each phrase is tokenized with [`words`], so `"system-reminder"` matches
/// `system reminder` and `system_reminder` does not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhraseSet {
    phrases: Vec<Vec<String>>,
    case_insensitive: bool,
}

impl PhraseSet {
    pub fn new<I, S>(phrases: I, case_insensitive: bool) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let phrases = phrases
            .into_iter()
            .map(|p| {
                words(p.as_ref())
                    .map(|w| fold(w, case_insensitive))
                    .collect::<Vec<_>>()
            })
            .filter(|p| !p.is_empty())
            .collect();
        Self {
            phrases,
            case_insensitive,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    pub fn case_insensitive(&self) -> bool {
        self.case_insensitive
    }

    /// Number of phrase occurrences in `text`.
    pub fn count_matches(&self, text: &str) -> usize {
        if self.phrases.is_empty() {
            return 0;
        }
        let tokens: Vec<String> = words(text)
            .map(|w| fold(w, self.case_insensitive))
            .collect();
        self.phrases
            .iter()
            .map(|phrase| {
                tokens
                    .windows(phrase.len())
                    .filter(|window| window == &phrase.as_slice())
                    .count()
            })
            .sum()
    }

    pub fn matches(&self, text: &str) -> bool {
        self.count_matches(text) > 0
    }

    /// True when `word` is one of the words appearing in any phrase.
    pub fn contains_word(&self, word: &str) -> bool {
        let folded = fold(word, self.case_insensitive);
        self.phrases.iter().flatten().any(|w| *w == folded)
    }
}

fn fold(w: &str, case_insensitive: bool) -> String {
    if case_insensitive {
        w.to_lowercase()
    } else {
        w.to_string()
    }
}

/// The priority markers that turn a paragraph or list item into a directive.
pub const DEFAULT_MARKERS: &[&str] = &[
    "NEVER",
    "ALWAYS",
    "MUST",
    "MUST NOT",
    "IMPORTANT",
    "VERY IMPORTANT",
    "DO NOT",
    "ONLY",
];

/// Case-sensitive, whole-word priority marker lexicon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkerLexicon(PhraseSet);

impl MarkerLexicon {
    pub fn new<I, S>(markers: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self(PhraseSet::new(markers, false))
    }

    pub fn contains_marker(&self, text: &str) -> bool {
        self.0.matches(text)
    }

    pub fn is_marker_word(&self, word: &str) -> bool {
        self.0.contains_word(word)
    }
}

impl Default for MarkerLexicon {
    fn default() -> Self {
        Self::new(DEFAULT_MARKERS.iter().copied())
    }
}

/// Pulls the structured payload out of a model response: the last fenced
/// block if there is one, otherwise the whole trimmed text.
pub fn extract_fenced_block(raw: &str) -> &str {
    let mut last: Option<&str> = None;
    let mut rest = raw;
    let mut offset = 0;
    while let Some(open) = rest.find("```") {
        let after_ticks = open + 3;
        let Some(eol) = rest[after_ticks..].find('\n') else {
            break;
        };
        let body_start = after_ticks + eol + 1;
        let Some(close) = rest[body_start..].find("```") else {
            break;
        };
        let body_end = body_start + close;
        last = Some(&raw[offset + body_start..offset + body_end]);
        let consumed = body_end + 3;
        offset += consumed;
        rest = &rest[consumed..];
    }
    last.unwrap_or(raw).trim()
}
