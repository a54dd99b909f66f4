//! Small text utilities shared by the generators, operators and reference models.

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '-'
}

/// Byte offsets of whole-word, ASCII-case-insensitive occurrences of `word`.
pub fn find_word(text: &str, word: &str) -> Vec<usize> {
    if word.is_empty() {
        return Vec::new();
    }
    let hay = text.to_ascii_lowercase();
    let needle = word.to_ascii_lowercase();
    hay.match_indices(&needle)
        .map(|(at, _)| at)
        .filter(|&at| {
            let before_ok = hay[..at].chars().next_back().is_none_or(|c| !is_word_char(c));
            let after_ok = hay[at + needle.len()..].chars().next().is_none_or(|c| !is_word_char(c));
            before_ok && after_ok
        })
        .collect()
}

/// Byte offset of the single whole-word occurrence of `word`, or a description of why not.
pub fn find_unique_word(text: &str, word: &str) -> Result<usize, String> {
    match find_word(text, word).as_slice() {
        [at] => Ok(*at),
        [] => Err(format!("`{word}` does not occur in `{text}`")),
        many => Err(format!("`{word}` occurs {} times in `{text}`", many.len())),
    }
}

/// Indefinite article by the vowel-initial-letter rule.
pub fn indefinite_article(word: &str) -> &'static str {
    match word.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

pub fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Lowercased whitespace tokens with leading/trailing punctuation stripped.
pub fn tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Position of the first occurrence of the token sequence `needle` in `tokens`.
pub fn token_position(tokens: &[String], needle: &[String]) -> Option<usize> {
    if needle.is_empty() || needle.len() > tokens.len() {
        return None;
    }
    tokens.windows(needle.len()).position(|w| w == needle)
}

/// Collapses internal whitespace and lowercases, for answer matching.
pub fn normalize_answer(answer: &str) -> String {
    answer.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whole_words_only() {
        let text = "The witness witnessed the Witness.";
        assert_eq!(find_word(text, "witness"), vec![4, 26]);
        assert!(find_word("cross-examined", "examined").is_empty());
        assert_eq!(find_unique_word("The doctor left.", "doctor"), Ok(4));
        assert!(find_unique_word("The nurse left.", "doctor").is_err());
    }

    #[test]
    fn article_rule() {
        assert_eq!(indefinite_article("arrogant"), "an");
        assert_eq!(indefinite_article("good"), "a");
        assert_eq!(indefinite_article("Honest"), "a");
    }

    #[test]
    fn tokenization_strips_punctuation() {
        assert_eq!(
            tokens("The doctor, who left, said \"hi\"."),
            vec!["the", "doctor", "who", "left", "said", "hi"]
        );
        assert_eq!(normalize_answer("  The   Technician "), "the technician");
    }
}
