use crate::hash::fnv1a64;

pub const EMBED_DIM: usize = 256;

/// Unit-norm bag-of-words vector, or all zeros for text with no tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn zero() -> Self {
        Self(vec![0.0; EMBED_DIM])
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }

    /// Dot product; equals cosine similarity for unit vectors and is 0
    /// against a zero vector.
    pub fn cosine(&self, other: &Embedding) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Embedding;
}

/// Feature-hashing embedder: FNV-1a of each lowercase token, modulo the
/// dimension.
#[derive(Debug, Clone, Copy, Default)]
pub struct HashEmbedder;

impl Embedder for HashEmbedder {
    fn embed(&self, text: &str) -> Embedding {
        embed(text)
    }
}

pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

pub fn embed(text: &str) -> Embedding {
    let mut v = vec![0.0; EMBED_DIM];
    for tok in tokenize(text) {
        v[(fnv1a64(tok.as_bytes()) % EMBED_DIM as u64) as usize] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    Embedding(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    /// Cosine from raw token counts, without normalizing first.
    fn oracle_cosine(a: &str, b: &str) -> f64 {
        let counts = |s: &str| {
            let mut m: HashMap<u64, f64> = HashMap::new();
            for t in s.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
                let h = fnv1a64(t.to_lowercase().as_bytes()) % 256;
                *m.entry(h).or_default() += 1.0;
            }
            m
        };
        let (ca, cb) = (counts(a), counts(b));
        let dot: f64 = ca.iter().map(|(k, v)| v * cb.get(k).copied().unwrap_or(0.0)).sum();
        let na = ca.values().map(|v| v * v).sum::<f64>().sqrt();
        let nb = cb.values().map(|v| v * v).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }

    #[test]
    fn empty_text_is_zero() {
        assert!(embed("").is_zero());
        assert!(embed(" ,.;  ").is_zero());
    }

    #[test]
    fn repeated_token_normalizes_away() {
        assert_eq!(embed("tap tap"), embed("tap"));
        assert_eq!(embed("Tap"), embed("tap"));
    }

    #[test]
    fn single_token_lands_in_its_bucket() {
        let e = embed("send");
        let bucket = (fnv1a64(b"send") % 256) as usize;
        assert_eq!(e.0[bucket], 1.0);
        assert_eq!(e.0.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn related_phrase_scores_higher() {
        let q = "send message button";
        let near = embed(q).cosine(&embed("button to send a message"));
        let far = embed(q).cosine(&embed("volume slider"));
        assert!((near - oracle_cosine(q, "button to send a message")).abs() < 1e-12);
        assert!((far - oracle_cosine(q, "volume slider")).abs() < 1e-12);
        assert!(near > far);
    }

    proptest! {
        #[test]
        fn norm_is_one_or_zero(s in "\\PC{0,80}") {
            let e = embed(&s);
            prop_assert_eq!(e.0.len(), EMBED_DIM);
            prop_assert!(e.is_zero() || (e.norm() - 1.0).abs() < 1e-6);
        }

        #[test]
        fn cosine_matches_oracle(a in "[a-zA-Z ]{0,40}", b in "[a-zA-Z ]{0,40}") {
            prop_assert!((embed(&a).cosine(&embed(&b)) - oracle_cosine(&a, &b)).abs() < 1e-9);
        }
    }
}
