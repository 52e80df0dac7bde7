use crate::data::{words, Vocabulary};

/// Fixed English stopword list used by mention extraction.
pub const STOPWORDS: [&str; 50] = [
    "a", "an", "the", "and", "or", "but", "if", "then", "thing", "of", "to", "in", "on", "at",
    "by", "for", "with", "from", "as", "is", "are", "was", "were", "be", "things", "likely", "it",
    "its", "this", "that", "these", "those", "i", "you", "he", "she", "we", "they", "what",
    "which", "who", "very", "where", "when", "why", "how", "do", "does", "not", "no",
];

fn is_stopword(w: &str) -> bool {
    STOPWORDS.contains(&w)
}

fn is_word(w: &str) -> bool {
    w.chars().all(char::is_alphanumeric) && !w.is_empty()
}

/// Candidate mentions of a question: non-stopword word tokens and bigrams of
/// adjacent non-stopword tokens, deduplicated, in question order. With a
/// vocabulary, only candidates whose words are all known are kept.
pub fn extract_mentions(question: &str, vocab: Option<&Vocabulary>) -> Vec<String> {
    let toks = words(question);
    let content = |w: &str| is_word(w) && !is_stopword(w) && vocab.is_none_or(|v| v.contains(w));
    let mut out: Vec<String> = Vec::new();
    let mut push = |m: String| {
        if !out.contains(&m) {
            out.push(m);
        }
    };
    for (i, w) in toks.iter().enumerate() {
        if !content(w) {
            continue;
        }
        push(w.clone());
        if let Some(next) = toks.get(i + 1) {
            if content(next) {
                push(format!("{w} {next}"));
            }
        }
    }
    out
}
