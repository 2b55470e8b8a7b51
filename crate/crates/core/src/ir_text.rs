//! Language-agnostic IR text utilities.
//!
//! Everything here works on raw text and never requires the input to parse
//! as mini-IR, so it is equally usable on generated (possibly broken) IR and
//! on the printed output of an external optimizer.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

const PUNCT: &[char] = &[',', '(', ')', '{', '}', '=', ':'];

/// A tokenized IR text.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenSeq {
    tokens: Vec<String>,
}

impl TokenSeq {
    pub fn new(tokens: Vec<String>) -> Self {
        debug_assert!(tokens.iter().all(|t| !t.is_empty() && !t.contains(char::is_whitespace)));
        Self { tokens }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens joined by single spaces.
    pub fn join(&self) -> String {
        self.tokens.join(" ")
    }
}

fn is_comment_line(trimmed: &str) -> bool {
    trimmed.starts_with(';') || trimmed.starts_with('#')
}

fn is_sigil(c: char) -> bool {
    c == '%' || c == '@'
}

fn is_name_char(c: char) -> bool {
    !c.is_whitespace() && !PUNCT.contains(&c) && !is_sigil(c)
}

/// Splits IR text into tokens.
///
/// Whitespace separates tokens, the characters `, ( ) { } = :` always form
/// their own token, and `%name` / `@name` stay atomic. Whole-line comments
/// (first non-blank character `;` or `#`) are dropped.
pub fn tokenize(ir_text: &str) -> TokenSeq {
    let mut tokens = Vec::new();
    for line in ir_text.lines() {
        if is_comment_line(line.trim_start()) {
            continue;
        }
        for chunk in line.split_whitespace() {
            let chars: Vec<char> = chunk.chars().collect();
            let mut word = String::new();
            let mut i = 0;
            while i < chars.len() {
                let c = chars[i];
                if PUNCT.contains(&c) {
                    if !word.is_empty() {
                        tokens.push(std::mem::take(&mut word));
                    }
                    tokens.push(c.to_string());
                    i += 1;
                } else if is_sigil(c) {
                    if !word.is_empty() {
                        tokens.push(std::mem::take(&mut word));
                    }
                    let mut sigil = c.to_string();
                    i += 1;
                    while i < chars.len() && is_name_char(chars[i]) {
                        sigil.push(chars[i]);
                        i += 1;
                    }
                    tokens.push(sigil);
                } else {
                    word.push(c);
                    i += 1;
                }
            }
            if !word.is_empty() {
                tokens.push(word);
            }
        }
    }
    TokenSeq { tokens }
}

fn strip_trailing_comment(line: &str) -> &str {
    match line.find(';') {
        Some(idx) => &line[..idx],
        None => line,
    }
}

fn is_label(line: &str) -> bool {
    match line.strip_suffix(':') {
        Some(name) => {
            !name.is_empty()
                && name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-' | '$' | '"'))
        }
        None => false,
    }
}

fn is_structural(line: &str) -> bool {
    const PREFIXES: &[&str] = &[
        "func ",
        "func(",
        "define ",
        "declare ",
        "source_filename",
        "target ",
        "attributes ",
        "!",
        "@",
    ];
    line == "{"
        || line == "}"
        || PREFIXES.iter().any(|p| line.starts_with(p))
        || (line.starts_with('%') && line.contains(" = type "))
}

/// Counts instruction lines in IR text without parsing it.
///
/// A line counts unless it is blank, a comment, a block label, a function
/// header, a lone brace, or an LLVM module-level declaration. Trailing `;`
/// comments are ignored. For valid mini-IR this agrees with the parsed
/// instruction count (terminators included).
pub fn count_instructions_text(ir_text: &str) -> usize {
    ir_text
        .lines()
        .filter(|raw| {
            let t = raw.trim();
            if t.is_empty() || is_comment_line(t) {
                return false;
            }
            let t = strip_trailing_comment(t).trim();
            !(t.is_empty() || is_label(t) || is_structural(t))
        })
        .count()
}

/// Corpus-of-one BLEU with per-order precisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    pub score: f64,
    /// Modified n-gram precision for orders `1..=precisions.len()`.
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Unsmoothed BLEU of `candidate` against a single `reference`.
///
/// The effective order is `min(max_order, |candidate|)`. Any vanishing
/// precision makes the score zero. `max_order` of zero is treated as one.
pub fn bleu(candidate: &TokenSeq, reference: &TokenSeq, max_order: usize) -> BleuScore {
    let cand = candidate.tokens();
    let refr = reference.tokens();
    if cand.is_empty() {
        let score = if refr.is_empty() { 1.0 } else { 0.0 };
        return BleuScore {
            score,
            precisions: Vec::new(),
            brevity_penalty: 1.0,
        };
    }

    let order = max_order.max(1).min(cand.len());
    let precisions: Vec<f64> = (1..=order)
        .map(|n| {
            let cand_counts = ngram_counts(cand, n);
            let ref_counts = if refr.len() >= n {
                ngram_counts(refr, n)
            } else {
                HashMap::new()
            };
            let clipped: usize = cand_counts
                .iter()
                .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
                .sum();
            clipped as f64 / (cand.len() - n + 1) as f64
        })
        .collect();

    let brevity_penalty = if cand.len() < refr.len() {
        (1.0 - refr.len() as f64 / cand.len() as f64).exp()
    } else {
        1.0
    };

    let score = if precisions.contains(&0.0) {
        0.0
    } else {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / order as f64;
        (brevity_penalty * log_mean.exp()).clamp(0.0, 1.0)
    };

    BleuScore {
        score,
        precisions,
        brevity_penalty,
    }
}

/// BLEU-4 between two raw IR texts.
pub fn bleu_text(candidate: &str, reference: &str) -> BleuScore {
    bleu(&tokenize(candidate), &tokenize(reference), 4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(s: &str) -> TokenSeq {
        TokenSeq::new(s.split_whitespace().map(str::to_string).collect())
    }

    #[test]
    fn tokenize_empty() {
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn tokenize_instruction() {
        let t = tokenize("%a = add i32 %b, 1");
        assert_eq!(t.tokens(), ["%a", "=", "add", "i32", "%b", ",", "1"]);
    }

    #[test]
    fn tokenize_drops_comment_lines_and_splits_labels() {
        let t = tokenize("; header\n# other\nentry:\n  br %c, a, b");
        assert_eq!(t.tokens(), ["entry", ":", "br", "%c", ",", "a", ",", "b"]);
    }

    #[test]
    fn bare_sigil_is_its_own_token() {
        assert_eq!(tokenize("x % y").tokens(), ["x", "%", "y"]);
        assert_eq!(tokenize("f(%a)").tokens(), ["f", "(", "%a", ")"]);
    }

    #[test]
    fn count_on_small_texts() {
        assert_eq!(count_instructions_text(""), 0);
        assert_eq!(count_instructions_text("entry:\n  ret i32 0"), 1);
        let llvm = "; ModuleID = 'x'\nsource_filename = \"x.c\"\n\ndefine i32 @f(i32 %0) {\n  %2 = add i32 %0, 1 ; inc\n  ret i32 %2\n}\n\n3:                                                ; preds = %1\nattributes #0 = { nounwind }\n";
        assert_eq!(count_instructions_text(llvm), 2);
    }

    #[test]
    fn bleu_identity() {
        let s = seq("a b c d e f g h i j");
        let b = bleu(&s, &s, 4);
        assert_eq!(b.score, 1.0);
        assert_eq!(b.brevity_penalty, 1.0);
        assert!(b.precisions.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn bleu_disjoint_is_zero() {
        assert_eq!(bleu(&seq("a b c"), &seq("x y z"), 4).score, 0.0);
    }

    #[test]
    fn bleu_empty_conventions() {
        let empty = TokenSeq::default();
        assert_eq!(bleu(&empty, &empty, 4).score, 1.0);
        assert_eq!(bleu(&empty, &seq("a"), 4).score, 0.0);
        assert_eq!(bleu(&seq("a"), &empty, 4).score, 0.0);
    }

    #[test]
    fn bleu_short_candidate_uses_lower_order() {
        let b = bleu(&seq("a b"), &seq("a b"), 4);
        assert_eq!(b.precisions.len(), 2);
        assert_eq!(b.score, 1.0);
    }

    #[test]
    fn bleu_brevity_penalty() {
        // candidate is a strict prefix: all precisions 1, BP = exp(1 - 6/3)
        let b = bleu(&seq("a b c"), &seq("a b c d e f"), 4);
        assert!((b.brevity_penalty - (-1.0f64).exp()).abs() < 1e-15);
        assert!((b.score - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn bleu_clips_repeated_ngrams() {
        let b = bleu(&seq("the the the the"), &seq("the cat"), 1);
        assert_eq!(b.precisions, vec![0.25]);
    }

    proptest! {
        #[test]
        fn tokenize_round_trip(text in "[a-z%@,(){}=:; \n0-9#.-]{0,80}") {
            let once = tokenize(&text);
            let twice = tokenize(&once.join());
            prop_assert_eq!(once.tokens(), twice.tokens());
            prop_assert!(once.tokens().iter().all(|t| !t.is_empty() && !t.contains(char::is_whitespace)));
        }

        #[test]
        fn bleu_bounded(a in "[a-d ]{0,30}", b in "[a-d ]{0,30}") {
            let s = bleu(&tokenize(&a), &tokenize(&b), 4);
            prop_assert!((0.0..=1.0).contains(&s.score));
            prop_assert!(s.brevity_penalty > 0.0 && s.brevity_penalty <= 1.0);
            prop_assert!(s.precisions.iter().all(|p| (0.0..=1.0).contains(p)));
        }

        #[test]
        fn bleu_ignores_prepended_comments(a in "[a-d ]{1,30}", b in "[a-d ]{1,30}") {
            let plain = bleu_text(&a, &b);
            let commented = bleu_text(&format!("; note\n{a}"), &format!("# x\n;y\n{b}"));
            prop_assert_eq!(plain, commented);
        }
    }
}
