//! Tokenization with byte offsets and PII scrubbing.
//!
//! Tokens are whitespace-separated words, single punctuation characters and
//! numbers. A number is a run of ASCII digits with at most one internal `.`
//! or `,` followed by more digits, so `38.5` stays one token while `120/80`
//! becomes three.

use std::collections::HashSet;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Identifies the tokenization rules. Stored in every corpus and model file;
/// spans recorded under one version are meaningless under another.
pub const TOKENIZER_VERSION: &str = "icdlab-ws-punct-num/1";

/// Replacement text for scrubbed identifiers.
pub const PII_PLACEHOLDER: &str = "⟨PII⟩";

const MIN_PII_DIGITS: usize = 7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub index: usize,
    pub text: String,
    /// Byte offset of the first character (inclusive).
    pub char_start: usize,
    /// Byte offset past the last character (exclusive).
    pub char_end: usize,
}

impl Token {
    pub fn is_number(&self) -> bool {
        self.text.starts_with(|c: char| c.is_ascii_digit())
    }

    /// Numeric value of a number token, accepting `,` as decimal separator.
    pub fn numeric_value(&self) -> Option<f64> {
        if !self.is_number() {
            return None;
        }
        self.text.replace(',', ".").parse().ok()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Class {
    Space,
    Digit,
    Word,
    Punct,
}

fn classify(c: char) -> Class {
    if c.is_whitespace() {
        Class::Space
    } else if c.is_ascii_digit() {
        Class::Digit
    } else if c.is_alphanumeric() {
        Class::Word
    } else {
        Class::Punct
    }
}

pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let byte_at = |i: usize| chars.get(i).map_or(text.len(), |&(b, _)| b);
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let start = i;
        match classify(chars[i].1) {
            Class::Space => {
                i += 1;
                continue;
            }
            Class::Punct => i += 1,
            Class::Digit => {
                while i < chars.len() && chars[i].1.is_ascii_digit() {
                    i += 1;
                }
                let separator = chars.get(i).is_some_and(|&(_, c)| c == '.' || c == ',');
                let digit_follows = chars.get(i + 1).is_some_and(|&(_, c)| c.is_ascii_digit());
                if separator && digit_follows {
                    i += 1;
                    while i < chars.len() && chars[i].1.is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            Class::Word => {
                while i < chars.len() && matches!(classify(chars[i].1), Class::Word | Class::Digit) {
                    i += 1;
                }
            }
        }
        let (char_start, char_end) = (byte_at(start), byte_at(i));
        tokens.push(Token { index: tokens.len(), text: text[char_start..char_end].to_string(), char_start, char_end });
    }
    tokens
}

/// Case-insensitive set of names to scrub.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NameLexicon {
    names: HashSet<String>,
}

impl NameLexicon {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let names = names.into_iter().map(|n| n.as_ref().trim().to_lowercase()).filter(|n| !n.is_empty()).collect();
        Self { names }
    }

    /// Reads one name per line; blank lines are skipped.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let lines = reader.lines().collect::<std::io::Result<Vec<_>>>()?;
        Ok(Self::new(lines))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.names.contains(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Replaces runs of seven or more digits and lexicon names with
/// [`PII_PLACEHOLDER`]. Idempotent.
pub fn scrub_pii(text: &str, lexicon: &NameLexicon) -> String {
    let digits_scrubbed = scrub_digit_runs(text);
    let tokens = tokenize(&digits_scrubbed);
    let mut out = String::with_capacity(digits_scrubbed.len());
    let mut cursor = 0;
    for (i, token) in tokens.iter().enumerate() {
        if !lexicon.contains(&token.text) || inside_placeholder(&tokens, i) {
            continue;
        }
        out.push_str(&digits_scrubbed[cursor..token.char_start]);
        out.push_str(PII_PLACEHOLDER);
        cursor = token.char_end;
    }
    out.push_str(&digits_scrubbed[cursor..]);
    out
}

fn inside_placeholder(tokens: &[Token], i: usize) -> bool {
    i > 0
        && tokens[i].text == "PII"
        && tokens[i - 1].text == "⟨"
        && tokens.get(i + 1).is_some_and(|t| t.text == "⟩")
        && tokens[i - 1].char_end == tokens[i].char_start
        && tokens[i].char_end == tokens[i + 1].char_start
}

fn scrub_digit_runs(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut run = String::new();
    let flush = |run: &mut String, out: &mut String| {
        if run.len() >= MIN_PII_DIGITS {
            out.push_str(PII_PLACEHOLDER);
        } else {
            out.push_str(run);
        }
        run.clear();
    };
    for c in text.chars() {
        if c.is_ascii_digit() {
            run.push(c);
        } else {
            flush(&mut run, &mut out);
            out.push(c);
        }
    }
    flush(&mut run, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn texts(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(|t| t.text.as_str()).collect()
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  \n\t").is_empty());
    }

    #[test]
    fn punctuation_is_split_off() {
        let tokens = tokenize("not coughing.");
        assert_eq!(texts(&tokens), ["not", "coughing", "."]);
        let offsets: Vec<_> = tokens.iter().map(|t| (t.char_start, t.char_end)).collect();
        assert_eq!(offsets, [(0, 3), (4, 12), (12, 13)]);
    }

    #[test]
    fn numbers() {
        assert_eq!(texts(&tokenize("bp 120/80")), ["bp", "120", "/", "80"]);
        assert_eq!(texts(&tokenize("temp 38.5.")), ["temp", "38.5", "."]);
        assert_eq!(texts(&tokenize("1,5 mg")), ["1,5", "mg"]);
        assert_eq!(texts(&tokenize("1.2.3")), ["1.2", ".", "3"]);
        assert_eq!(texts(&tokenize("7.")), ["7", "."]);
        assert_eq!(tokenize("38,5")[0].numeric_value(), Some(38.5));
        assert_eq!(tokenize("b12")[0].numeric_value(), None);
    }

    #[test]
    fn non_ascii_offsets_are_bytes() {
        let text = "hiti ⟨PII⟩ é";
        for t in tokenize(text) {
            assert_eq!(&text[t.char_start..t.char_end], t.text);
        }
    }

    #[test]
    fn scrubs_phone_numbers_and_names() {
        let lex = NameLexicon::new(["Anna", "jon"]);
        assert_eq!(scrub_pii("call 5551234", &lex), "call ⟨PII⟩");
        assert_eq!(scrub_pii("no cough", &lex), "no cough");
        assert_eq!(scrub_pii("555123 ok", &lex), "555123 ok");
        assert_eq!(scrub_pii("seen with anna and Jon.", &lex), "seen with ⟨PII⟩ and ⟨PII⟩.");
    }

    #[test]
    fn placeholder_survives_a_lexicon_containing_pii() {
        let lex = NameLexicon::new(["pii"]);
        let once = scrub_pii("pii 12345678", &lex);
        assert_eq!(once, "⟨PII⟩ ⟨PII⟩");
        assert_eq!(scrub_pii(&once, &lex), once);
    }

    #[test]
    fn lexicon_from_lines() {
        let lex = NameLexicon::from_reader("Anna\n\n  Gudrun \n".as_bytes()).unwrap();
        assert_eq!(lex.len(), 2);
        assert!(lex.contains("GUDRUN"));
    }

    fn arbitrary_text() -> impl Strategy<Value = String> {
        proptest::collection::vec(
            prop_oneof![
                "[a-zA-Z]{1,6}",
                "[0-9]{1,10}",
                "[0-9]{1,3}[.,][0-9]{1,2}",
                "[ \t\n]{1,2}",
                "[.,;:/()\\-⟨⟩]",
                "[éþæö]{1,2}",
            ],
            0..24,
        )
        .prop_map(|parts| parts.concat())
    }

    proptest! {
        #[test]
        fn offsets_round_trip(text in arbitrary_text()) {
            let tokens = tokenize(&text);
            let mut prev_end = 0;
            for (i, t) in tokens.iter().enumerate() {
                prop_assert_eq!(t.index, i);
                prop_assert!(t.char_start >= prev_end);
                prop_assert!(t.char_start < t.char_end);
                prop_assert_eq!(&text[t.char_start..t.char_end], t.text.as_str());
                prop_assert!(text[prev_end..t.char_start].chars().all(char::is_whitespace));
                prev_end = t.char_end;
            }
            prop_assert!(text[prev_end..].chars().all(char::is_whitespace));
            prop_assert_eq!(tokenize(&text), tokens);
        }

        #[test]
        fn scrubbing_is_idempotent(text in arbitrary_text()) {
            let lex = NameLexicon::new(["ab", "PII", "x"]);
            let once = scrub_pii(&text, &lex);
            prop_assert_eq!(scrub_pii(&once, &lex), once.clone());
            let digits = |s: &str| s.chars().filter(char::is_ascii_digit).count();
            prop_assert!(digits(&once) <= digits(&text));
        }
    }
}
