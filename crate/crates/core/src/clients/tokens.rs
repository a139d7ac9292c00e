use super::TokenCounter;

/// Counts whitespace-separated tokens.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl TokenCounter for WhitespaceTokenizer {
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }

    fn truncate(&self, text: &str, max_tokens: usize) -> String {
        text.split_whitespace().take(max_tokens).collect::<Vec<_>>().join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_truncates_by_words() {
        let t = WhitespaceTokenizer;
        assert_eq!(t.count("  a b\n c "), 3);
        assert_eq!(t.truncate("a b c d", 2), "a b");
        assert_eq!(t.truncate("a b", 5), "a b");
    }
}
