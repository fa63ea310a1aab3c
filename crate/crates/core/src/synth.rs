//! Deterministic synthetic corpora: a topic-mixture benchmark and the
//! separable alpha/beta toy with its four-class extension.

use std::collections::BTreeSet;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, LabelSet, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub classes: Vec<String>,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Distinct topic words per class, drawn with Zipf weights.
    pub topic_words: usize,
    /// Shared background words, drawn with Zipf weights.
    pub background_words: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Probability that a token is a topic word of the document's class.
    pub topic_rate: f64,
    /// Probability that a token is a topic word of another class.
    pub confusion_rate: f64,
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: ["business", "politics", "science", "sports"]
                .map(String::from)
                .to_vec(),
            train_per_class: 250,
            test_per_class: 100,
            topic_words: 800,
            background_words: 300,
            min_len: 10,
            max_len: 20,
            topic_rate: 0.35,
            confusion_rate: 0.1,
            zipf_exponent: 1.0,
            seed: 7,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::Argument(
                "synthetic corpus needs at least two classes".into(),
            ));
        }
        if self.classes.iter().collect::<BTreeSet<_>>().len() != self.classes.len() {
            return Err(Error::Argument(
                "synthetic class names must be distinct".into(),
            ));
        }
        if self.train_per_class == 0 || self.topic_words == 0 || self.background_words == 0 {
            return Err(Error::Argument(
                "synthetic corpus sizes must be positive".into(),
            ));
        }
        if self.min_len < 3 || self.min_len > self.max_len {
            return Err(Error::Argument(format!(
                "document length range {}..={} is invalid (minimum 3)",
                self.min_len, self.max_len
            )));
        }
        let rates = [self.topic_rate, self.confusion_rate];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r))
            || self.topic_rate + self.confusion_rate > 1.0
        {
            return Err(Error::Argument(
                "topic and confusion rates must lie in [0, 1] and sum to at most 1".into(),
            ));
        }
        Ok(())
    }
}

const ONSETS: [&str; 16] = [
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st",
];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

/// `count` distinct pronounceable words not already in `taken`.
fn make_words(rng: &mut ChaCha8Rng, count: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    let mut words = Vec::with_capacity(count);
    while words.len() < count {
        let syllables = rng.gen_range(2..=3);
        let w: String = (0..syllables)
            .map(|_| {
                format!(
                    "{}{}",
                    ONSETS.choose(rng).unwrap(),
                    VOWELS.choose(rng).unwrap()
                )
            })
            .collect();
        if taken.insert(w.clone()) {
            words.push(w);
        }
    }
    words
}

fn zipf(n: usize, exponent: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|r| (r as f64).powf(-exponent))).expect("positive weights")
}

/// Generates the topic-mixture benchmark. Documents are ordered train first,
/// classes interleaved, with ids `train-00000`, `test-00000`, ...
pub fn generate(config: &SynthConfig) -> Result<Corpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut taken = BTreeSet::new();
    let background = make_words(&mut rng, config.background_words, &mut taken);
    let topics: Vec<Vec<String>> = config
        .classes
        .iter()
        .map(|_| make_words(&mut rng, config.topic_words, &mut taken))
        .collect();
    let topic_dist = zipf(config.topic_words, config.zipf_exponent);
    let background_dist = zipf(config.background_words, config.zipf_exponent);
    let k = config.classes.len();

    let mut docs = Vec::new();
    for (split, per_class) in [
        (Split::Train, config.train_per_class),
        (Split::Test, config.test_per_class),
    ] {
        for i in 0..per_class * k {
            let class = i % k;
            let len = rng.gen_range(config.min_len..=config.max_len);
            let words: Vec<&str> = (0..len)
                .map(|_| {
                    let u: f64 = rng.gen();
                    if u < config.topic_rate {
                        topics[class][topic_dist.sample(&mut rng)].as_str()
                    } else if u < config.topic_rate + config.confusion_rate {
                        let other = (class + rng.gen_range(1..k)) % k;
                        topics[other][topic_dist.sample(&mut rng)].as_str()
                    } else {
                        background[background_dist.sample(&mut rng)].as_str()
                    }
                })
                .collect();
            docs.push(Document {
                id: format!("{split}-{i:05}"),
                raw_text: words.join(" "),
                refined_text: None,
                split,
                label: Some(config.classes[class].clone()),
            });
        }
    }
    let mut names = config.classes.clone();
    names.sort();
    Corpus::new(docs, LabelSet::new(names)?)
}

/// Separable toy: each class has its own word (`alpha`, `beta`, `gamma`,
/// `delta`) and documents repeat it three to five times. `classes` is 2 or 4.
pub fn separable_toy(classes: usize) -> Result<Corpus> {
    const WORDS: [&str; 4] = ["alpha", "beta", "gamma", "delta"];
    if classes != 2 && classes != 4 {
        return Err(Error::Argument(format!(
            "toy corpus has 2 or 4 classes, not {classes}"
        )));
    }
    let mut docs = Vec::new();
    for (split, per_class) in [(Split::Train, 4usize), (Split::Test, 2)] {
        for i in 0..per_class * classes {
            let word = WORDS[i % classes];
            let reps = 3 + i / classes % 3;
            docs.push(Document {
                id: format!("{split}-{i:02}"),
                raw_text: vec![word; reps].join(" "),
                refined_text: None,
                split,
                label: Some(word.to_string()),
            });
        }
    }
    let mut names: Vec<String> = WORDS[..classes].iter().map(|w| w.to_string()).collect();
    names.sort();
    Corpus::new(docs, LabelSet::new(names)?)
}
