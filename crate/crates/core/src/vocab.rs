use std::collections::{BTreeMap, HashMap};

use crate::corpus::Post;

pub const UNK: &str = "<unk>";
pub const MASK: &str = "[MASK]";
pub const UNK_INDEX: usize = 0;
pub const MASK_INDEX: usize = 1;

/// Word vocabulary. Index 0 is the unknown word and index 1 the mask token;
/// the rest are ordered by descending frequency, then lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_words(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocab { words, index }
    }

    pub fn build<'a>(posts: impl IntoIterator<Item = &'a Post>, min_count: usize) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for post in posts {
            for tok in &post.tokens {
                *counts.entry(tok.surface.as_str()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(w, c)| c >= min_count.max(1) && w != UNK && w != MASK)
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let mut words = vec![UNK.to_string(), MASK.to_string()];
        words.extend(ranked.into_iter().map(|(w, _)| w.to_string()));
        Vocab::from_words(words)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn lookup(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK_INDEX)
    }

    pub fn encode(&self, post: &Post) -> Vec<usize> {
        post.tokens.iter().map(|t| self.lookup(&t.surface)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Domain;
    use crate::textproc::tokenize;

    #[test]
    fn ordering_and_reserved_entries() {
        let post = Post::from_tokens("p", Domain::News, tokenize("b a b c a b"));
        let v = Vocab::build([&post], 1);
        assert_eq!(v.words(), &["<unk>", "[MASK]", "b", "a", "c"]);
        assert_eq!(v.lookup("zzz"), UNK_INDEX);
        assert_eq!(v.lookup(MASK), MASK_INDEX);
        assert_eq!(v.encode(&post), vec![2, 3, 2, 4, 3, 2]);
    }
}
