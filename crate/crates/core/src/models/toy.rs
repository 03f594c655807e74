//! Word-level trigram model with add-one smoothing over a bundled caption
//! corpus. Each topic section of the corpus plays the role of an image: the
//! conditioning bytes name the topic whose counts drive generation.

use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;

use super::{Backend, Conditioning, ModelError};
use crate::distribution::{
    validate_distribution, NextTokenDistribution, Support, TokenId, Vocabulary,
};

pub const CORPUS: &str = include_str!("../../data/toy_corpus.txt");
pub const EOS_TOKEN: &str = "<eos>";
/// Add-one (Laplace) smoothing.
pub const ALPHA: f64 = 1.0;

const BOS: u32 = u32::MAX;

/// Topic name and its sentences, in corpus order.
pub fn parse_corpus(text: &str) -> Vec<(String, Vec<Vec<String>>)> {
    let mut topics: Vec<(String, Vec<Vec<String>>)> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if let Some(name) = line.strip_prefix("# topic:") {
            topics.push((name.trim().to_owned(), Vec::new()));
        } else if !line.is_empty() && !line.starts_with('#') {
            if let Some((_, sentences)) = topics.last_mut() {
                sentences.push(line.split_whitespace().map(str::to_owned).collect());
            }
        }
    }
    topics
}

#[derive(Debug, Default)]
struct TrigramCounts {
    /// (w_{i-2}, w_{i-1}) -> [(w_i, count)]
    follow: HashMap<(u32, u32), Vec<(u32, u32)>>,
}

impl TrigramCounts {
    fn add_sentence(&mut self, ids: &[u32], eos: u32) {
        let mut prev = (BOS, BOS);
        for &w in ids.iter().chain(std::iter::once(&eos)) {
            let next = self.follow.entry(prev).or_default();
            match next.iter_mut().find(|(t, _)| *t == w) {
                Some((_, c)) => *c += 1,
                None => next.push((w, 1)),
            }
            prev = (prev.1, w);
        }
    }
}

#[derive(Debug)]
pub struct ToyModel {
    vocab: Vocabulary,
    topic_names: Vec<String>,
    topics: Vec<TrigramCounts>,
    all: TrigramCounts,
}

impl ToyModel {
    pub fn train(text: &str) -> Self {
        let parsed = parse_corpus(text);
        let words: BTreeSet<&str> = parsed
            .iter()
            .flat_map(|(_, s)| s.iter().flatten().map(String::as_str))
            .collect();
        let tokens: Vec<String> = std::iter::once(EOS_TOKEN)
            .chain(words.into_iter().filter(|w| *w != EOS_TOKEN))
            .map(str::to_owned)
            .collect();
        let vocab = Vocabulary::new(tokens, Some(TokenId(0))).expect("corpus vocabulary");
        let index: HashMap<&str, u32> = vocab
            .tokens()
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i as u32))
            .collect();

        let mut topic_names = Vec::new();
        let mut topics = Vec::new();
        let mut all = TrigramCounts::default();
        for (name, sentences) in &parsed {
            let mut counts = TrigramCounts::default();
            for s in sentences {
                let ids: Vec<u32> = s.iter().map(|w| index[w.as_str()]).collect();
                counts.add_sentence(&ids, 0);
                all.add_sentence(&ids, 0);
            }
            topic_names.push(name.clone());
            topics.push(counts);
        }
        Self {
            vocab,
            topic_names,
            topics,
            all,
        }
    }

    /// Model trained once on the bundled corpus.
    pub fn bundled() -> &'static ToyModel {
        static MODEL: OnceLock<ToyModel> = OnceLock::new();
        MODEL.get_or_init(|| ToyModel::train(CORPUS))
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn topics(&self) -> &[String] {
        &self.topic_names
    }

    fn counts_for(&self, topic: Option<usize>) -> &TrigramCounts {
        topic.map_or(&self.all, |t| &self.topics[t])
    }

    /// Topic index named by the conditioning; empty conditioning selects the
    /// whole corpus.
    pub fn resolve_topic(&self, conditioning: &Conditioning) -> Result<Option<usize>, ModelError> {
        if conditioning.as_bytes().is_empty() {
            return Ok(None);
        }
        let name = String::from_utf8_lossy(conditioning.as_bytes());
        self.topic_names
            .iter()
            .position(|t| *t == name.trim())
            .map(Some)
            .ok_or_else(|| {
                ModelError::BackendUnavailable(format!(
                    "unknown toy topic {name:?}; expected one of {:?}",
                    self.topic_names
                ))
            })
    }

    /// Smoothed trigram probabilities `(c(u,v,w) + 1) / (c(u,v) + |V|)` for
    /// every vocabulary token, before validation or quantization.
    pub fn raw_probabilities(
        &self,
        topic: Option<usize>,
        context: &[TokenId],
    ) -> Vec<(TokenId, f64)> {
        let n = context.len();
        let u = if n >= 2 { context[n - 2].0 } else { BOS };
        let v = if n >= 1 { context[n - 1].0 } else { BOS };
        let v_size = self.vocab.len();
        let mut counts = vec![0u32; v_size];
        let mut total = 0u32;
        if let Some(next) = self.counts_for(topic).follow.get(&(u, v)) {
            for &(w, c) in next {
                counts[w as usize] = c;
                total += c;
            }
        }
        let denom = total as f64 + ALPHA * v_size as f64;
        counts
            .iter()
            .enumerate()
            .map(|(w, &c)| (TokenId(w as u32), (c as f64 + ALPHA) / denom))
            .collect()
    }
}

/// Session-side handle on the shared trained model.
pub struct ToyBackend {
    model: &'static ToyModel,
    topic: Option<usize>,
}

impl ToyBackend {
    pub fn open(conditioning: &Conditioning) -> Result<Self, ModelError> {
        let model = ToyModel::bundled();
        let topic = model.resolve_topic(conditioning)?;
        Ok(Self { model, topic })
    }
}

impl Backend for ToyBackend {
    fn vocabulary(&self) -> &Vocabulary {
        &self.model.vocab
    }

    fn next_distribution(
        &mut self,
        context: &[TokenId],
    ) -> Result<NextTokenDistribution, ModelError> {
        let raw = self.model.raw_probabilities(self.topic, context);
        Ok(validate_distribution(
            &raw,
            self.model.vocab.len(),
            Support::Dense,
        )?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_shape() {
        let parsed = parse_corpus(CORPUS);
        let sentences: usize = parsed.iter().map(|(_, s)| s.len()).sum();
        assert_eq!(parsed.len(), 4);
        assert!((450..=550).contains(&sentences), "{sentences} sentences");
        let model = ToyModel::bundled();
        assert_eq!(model.vocabulary().eos_id(), Some(TokenId(0)));
        assert_eq!(model.vocabulary().token(TokenId(0)), Some(EOS_TOKEN));
    }

    #[test]
    fn smoothing_covers_vocabulary() {
        let model = ToyModel::bundled();
        let a = model.vocabulary().id_of("a").unwrap();
        for ctx in [vec![], vec![a], vec![a, TokenId(5)]] {
            let raw = model.raw_probabilities(Some(0), &ctx);
            let sum: f64 = raw.iter().map(|e| e.1).sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(raw.iter().all(|e| e.1 > 0.0));
        }
    }

    #[test]
    fn unknown_topic() {
        assert!(matches!(
            ToyBackend::open(&Conditioning::from_text("volcanoes")),
            Err(ModelError::BackendUnavailable(_))
        ));
        assert!(ToyBackend::open(&Conditioning::from_text("animals")).is_ok());
        assert!(ToyBackend::open(&Conditioning::empty()).is_ok());
    }
}
