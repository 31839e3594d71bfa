use std::collections::HashSet;

use super::porter;

/// The bundled English stoplist, one word per line.
pub const DEFAULT_STOPLIST: &str = include_str!("../../assets/stoplist.txt");

/// Tokenizer settings. Processing order is fixed: lowercase, stopword
/// removal, stemming.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub remove_stopwords: bool,
    pub stem: bool,
    pub stoplist: HashSet<String>,
}

impl TokenizerConfig {
    /// Default pipeline: lowercase + bundled stoplist + Porter stemming.
    pub fn standard() -> Self {
        TokenizerConfig {
            lowercase: true,
            remove_stopwords: true,
            stem: true,
            stoplist: default_stoplist(),
        }
    }

    /// Lowercasing only; keeps stopwords, no stemming.
    pub fn plain() -> Self {
        TokenizerConfig {
            lowercase: true,
            remove_stopwords: false,
            stem: false,
            stoplist: HashSet::new(),
        }
    }
}

pub fn default_stoplist() -> HashSet<String> {
    DEFAULT_STOPLIST
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

/// Split `text` into maximal alphanumeric runs and apply the configured
/// normalization. Total function: empty input yields an empty vector.
pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.split(|c: char| !c.is_alphanumeric()) {
        if raw.is_empty() {
            continue;
        }
        let token = if config.lowercase {
            raw.to_lowercase()
        } else {
            raw.to_string()
        };
        if config.remove_stopwords && config.stoplist.contains(&token) {
            continue;
        }
        let token = if config.stem {
            porter::stem(&token)
        } else {
            token
        };
        out.push(token);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_input() {
        assert_eq!(tokenize("", &TokenizerConfig::standard()), Vec::<String>::new());
    }

    #[test]
    fn stopwords_removed() {
        let mut config = TokenizerConfig::standard();
        config.stem = false;
        assert_eq!(tokenize("The Cat ran", &config), vec!["cat", "ran"]);
    }

    #[test]
    fn stemming_applied() {
        let config = TokenizerConfig {
            lowercase: true,
            remove_stopwords: false,
            stem: true,
            stoplist: HashSet::new(),
        };
        assert_eq!(tokenize("running runner", &config), vec!["run", "runner"]);
    }

    #[test]
    fn splits_on_non_alphanumeric() {
        let config = TokenizerConfig::plain();
        assert_eq!(
            tokenize("foo-bar_baz 42, x!", &config),
            vec!["foo", "bar", "baz", "42", "x"]
        );
    }

    proptest! {
        // Re-tokenizing the joined output with normalization off is a fixpoint.
        #[test]
        fn idempotent_at_token_level(text in "[a-zA-Z0-9 àéèöüñ,.;:!?'_-]{0,80}") {
            let config = TokenizerConfig::standard();
            let tokens = tokenize(&text, &config);
            let rejoined = tokens.join(" ");
            let second = tokenize(&rejoined, &TokenizerConfig::plain());
            prop_assert_eq!(tokens, second);
        }

        // With everything but lowercasing off, tokens are exactly the
        // alphanumeric runs of the lowercased input.
        #[test]
        fn plain_tokens_are_alnum_runs(text in "[a-zA-Z0-9 àéèöüñ,.;:!?'_-]{0,80}") {
            let tokens = tokenize(&text, &TokenizerConfig::plain());
            let expected: Vec<String> = text
                .to_lowercase()
                .split(|c: char| !c.is_alphanumeric())
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect();
            prop_assert_eq!(tokens, expected);
        }
    }
}
