//! Small text utilities shared by the rewrite heuristics and the mock
//! provider: whitespace tokenization and a fixed English stopword list.

/// Whitespace tokenization; the word-count basis for all modules.
pub fn tokenize(s: &str) -> impl Iterator<Item = &str> {
    s.split_whitespace()
}

/// Fixed stopword list. Checked case-insensitively after stripping edge
/// punctuation.
pub const STOPWORDS: &[&str] = &[
    "a", "an", "the", "is", "are", "was", "were", "be", "been", "being", "am", "do", "does", "did",
    "of", "in", "on", "at", "to", "from", "with", "by", "for", "and", "or", "but", "not", "no",
    "it", "its", "this", "that", "these", "those", "there", "here", "he", "she", "they", "them",
    "his", "her", "their", "i", "you", "we", "me", "my", "your", "our", "us", "as", "up", "down",
    "out", "over", "under", "off", "so", "than", "then", "some", "any", "what", "which", "who",
    "whom", "how", "when", "where", "why", "while", "around", "about", "into", "onto", "again",
    "very", "can", "could", "will", "would", "shall", "should", "may", "might", "must", "have",
    "has", "had",
];

pub fn is_stopword(token: &str) -> bool {
    let t = strip_edge_punct(token).to_lowercase();
    STOPWORDS.contains(&t.as_str())
}

/// Trims non-alphanumeric characters from both ends of a token.
pub fn strip_edge_punct(token: &str) -> &str {
    token.trim_matches(|c: char| !c.is_alphanumeric())
}
