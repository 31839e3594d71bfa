//! Porter stemming, the original 1980 rule set.
//!
//! Operates on lowercase ASCII words. Tokens containing non-alphabetic
//! characters (digits, non-ASCII) pass through unchanged, as do words of
//! length <= 2.

struct PorterState {
    word: Vec<u8>,
}

impl PorterState {
    fn is_consonant(&self, i: usize) -> bool {
        match self.word[i] {
            b'a' | b'e' | b'i' | b'o' | b'u' => false,
            b'y' => i == 0 || !self.is_consonant(i - 1),
            _ => true,
        }
    }

    /// Measure m of word[0..=end]: the number of VC sequences.
    fn measure(&self, end: usize) -> usize {
        let mut m = 0;
        let mut i = 0;
        // skip initial consonants
        while i <= end && self.is_consonant(i) {
            i += 1;
        }
        loop {
            if i > end {
                return m;
            }
            // in a vowel run
            while i <= end && !self.is_consonant(i) {
                i += 1;
            }
            if i > end {
                return m;
            }
            m += 1;
            while i <= end && self.is_consonant(i) {
                i += 1;
            }
        }
    }

    fn has_vowel(&self, end: usize) -> bool {
        (0..=end).any(|i| !self.is_consonant(i))
    }

    fn ends_double_consonant(&self) -> bool {
        let n = self.word.len();
        n >= 2 && self.word[n - 1] == self.word[n - 2] && self.is_consonant(n - 1)
    }

    /// *o condition: stem ends cvc where the final c is not w, x or y.
    fn ends_cvc(&self, end: usize) -> bool {
        if end < 2 {
            return false;
        }
        self.is_consonant(end)
            && !self.is_consonant(end - 1)
            && self.is_consonant(end - 2)
            && !matches!(self.word[end], b'w' | b'x' | b'y')
    }

    fn ends_with(&self, suffix: &[u8]) -> bool {
        self.word.len() >= suffix.len() && self.word.ends_with(suffix)
    }

    fn step_1a(&mut self) {
        if self.ends_with(b"sses") {
            self.word.truncate(self.word.len() - 2);
        } else if self.ends_with(b"ies") {
            self.word.truncate(self.word.len() - 2);
        } else if self.ends_with(b"ss") {
            // unchanged
        } else if self.ends_with(b"s") {
            self.word.truncate(self.word.len() - 1);
        }
    }

    fn step_1b(&mut self) {
        if self.ends_with(b"eed") {
            let stem_len = self.word.len() - 3;
            if stem_len > 0 && self.measure(stem_len - 1) > 0 {
                self.word.truncate(self.word.len() - 1);
            }
            return;
        }
        let removed = if self.ends_with(b"ed") {
            let stem_len = self.word.len() - 2;
            if stem_len > 0 && self.has_vowel(stem_len - 1) {
                self.word.truncate(stem_len);
                true
            } else {
                false
            }
        } else if self.ends_with(b"ing") {
            let stem_len = self.word.len() - 3;
            if stem_len > 0 && self.has_vowel(stem_len - 1) {
                self.word.truncate(stem_len);
                true
            } else {
                false
            }
        } else {
            false
        };
        if removed {
            if self.ends_with(b"at") || self.ends_with(b"bl") || self.ends_with(b"iz") {
                self.word.push(b'e');
            } else if self.ends_double_consonant()
                && !matches!(self.word[self.word.len() - 1], b'l' | b's' | b'z')
            {
                self.word.truncate(self.word.len() - 1);
            } else if !self.word.is_empty()
                && self.measure(self.word.len() - 1) == 1
                && self.ends_cvc(self.word.len() - 1)
            {
                self.word.push(b'e');
            }
        }
    }

    fn step_1c(&mut self) {
        if self.ends_with(b"y") {
            let stem_len = self.word.len() - 1;
            if stem_len > 0 && self.has_vowel(stem_len - 1) {
                self.word[stem_len] = b'i';
            }
        }
    }

    fn apply_rules(&mut self, rules: &[(&[u8], &[u8])], min_m: usize) {
        for &(suffix, replacement) in rules {
            if self.ends_with(suffix) {
                let stem_len = self.word.len() - suffix.len();
                if stem_len > 0 && self.measure(stem_len - 1) >= min_m {
                    self.word.truncate(stem_len);
                    self.word.extend_from_slice(replacement);
                }
                return; // longest-match rule list: first match wins
            }
        }
    }

    fn step_2(&mut self) {
        const RULES: &[(&[u8], &[u8])] = &[
            (b"ational", b"ate"),
            (b"tional", b"tion"),
            (b"enci", b"ence"),
            (b"anci", b"ance"),
            (b"izer", b"ize"),
            (b"abli", b"able"),
            (b"alli", b"al"),
            (b"entli", b"ent"),
            (b"eli", b"e"),
            (b"ousli", b"ous"),
            (b"ization", b"ize"),
            (b"ation", b"ate"),
            (b"ator", b"ate"),
            (b"alism", b"al"),
            (b"iveness", b"ive"),
            (b"fulness", b"ful"),
            (b"ousness", b"ous"),
            (b"aliti", b"al"),
            (b"iviti", b"ive"),
            (b"biliti", b"ble"),
        ];
        self.apply_rules(RULES, 1);
    }

    fn step_3(&mut self) {
        const RULES: &[(&[u8], &[u8])] = &[
            (b"icate", b"ic"),
            (b"ative", b""),
            (b"alize", b"al"),
            (b"iciti", b"ic"),
            (b"ical", b"ic"),
            (b"ful", b""),
            (b"ness", b""),
        ];
        self.apply_rules(RULES, 1);
    }

    fn step_4(&mut self) {
        const SUFFIXES: &[&[u8]] = &[
            b"al", b"ance", b"ence", b"er", b"ic", b"able", b"ible", b"ant", b"ement", b"ment",
            b"ent", b"ion", b"ou", b"ism", b"ate", b"iti", b"ous", b"ive", b"ize",
        ];
        for &suffix in SUFFIXES {
            if self.ends_with(suffix) {
                let stem_len = self.word.len() - suffix.len();
                if stem_len == 0 || self.measure(stem_len - 1) < 2 {
                    return;
                }
                // ION only deletes after s or t
                if suffix == b"ion" && !matches!(self.word[stem_len - 1], b's' | b't') {
                    return;
                }
                self.word.truncate(stem_len);
                return;
            }
        }
    }

    fn step_5a(&mut self) {
        if self.ends_with(b"e") {
            let stem_len = self.word.len() - 1;
            if stem_len == 0 {
                return;
            }
            let m = self.measure(stem_len - 1);
            if m > 1 || (m == 1 && !self.ends_cvc(stem_len - 1)) {
                self.word.truncate(stem_len);
            }
        }
    }

    fn step_5b(&mut self) {
        let n = self.word.len();
        if n >= 2
            && self.word[n - 1] == b'l'
            && self.ends_double_consonant()
            && self.measure(n - 1) > 1
        {
            self.word.truncate(n - 1);
        }
    }
}

/// Stem a single lowercase token.
pub fn stem(token: &str) -> String {
    if token.len() <= 2 || !token.bytes().all(|b| b.is_ascii_lowercase()) {
        return token.to_string();
    }
    let mut state = PorterState {
        word: token.as_bytes().to_vec(),
    };
    state.step_1a();
    state.step_1b();
    state.step_1c();
    state.step_2();
    state.step_3();
    state.step_4();
    state.step_5a();
    state.step_5b();
    String::from_utf8(state.word).expect("stemmer output is ascii")
}
