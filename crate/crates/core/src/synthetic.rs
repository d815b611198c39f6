//! A planted-keyword corpus where every target is a known function of which
//! keywords a question contains. Useful for checking that training learns.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Category, Corpus, QuestionRecord, TargetVector, TARGET_COUNT};
use crate::tokenizer::Vocabulary;

/// Planted keywords. Every question contains exactly one.
pub const KEYWORDS: [&str; 16] = [
    "amber", "basalt", "cobalt", "dune", "ember", "fjord", "garnet", "harbor", "indigo", "juniper",
    "kestrel", "lagoon", "marble", "nectar", "onyx", "prairie",
];

const FILLER: [&str; 40] = [
    "how", "do", "i", "the", "a", "to", "make", "it", "work", "with", "my", "when", "is", "this", "that", "what",
    "why", "should", "can", "you", "use", "file", "server", "code", "error", "value", "list", "page", "time", "way",
    "best", "new", "set", "run", "get", "into", "from", "about", "there", "any",
];

/// Target values for a question containing keyword `k`: column `j` takes level
/// `(k * STRIDE[j] + j) mod 16`, scaled to [0, 1]. Every stride is odd, so each
/// column is a permutation of the 16 levels.
pub fn planted_targets(k: usize) -> [f64; TARGET_COUNT] {
    const STRIDE: [usize; 4] = [1, 3, 5, 7];
    let n = KEYWORDS.len();
    std::array::from_fn(|j| ((k * STRIDE[j % 4] + j) % n) as f64 / (n - 1) as f64)
}

fn sentence(rng: &mut ChaCha8Rng, keyword: Option<&str>, words: usize) -> String {
    let mut tokens: Vec<&str> = (0..words).map(|_| *FILLER.choose(rng).unwrap()).collect();
    if let Some(k) = keyword {
        let at = rng.gen_range(0..=tokens.len());
        tokens.insert(at, k);
    }
    tokens.join(" ")
}

/// `n` rows, each holding one uniformly drawn keyword in either the title or the body.
pub fn keyword_rows(n: usize, seed: u64) -> Vec<(QuestionRecord, TargetVector)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let k = rng.gen_range(0..KEYWORDS.len());
            let in_title = rng.gen_bool(0.3);
            let title_len = rng.gen_range(2..6);
            let body_len = rng.gen_range(4..12);
            let title = sentence(&mut rng, in_title.then_some(KEYWORDS[k]), title_len);
            let body = sentence(&mut rng, (!in_title).then_some(KEYWORDS[k]), body_len);
            let category = *Category::ALL.choose(&mut rng).unwrap();
            let record = QuestionRecord {
                qa_id: i.to_string(),
                title: format!("{title}?"),
                body: format!("{body}."),
                category,
                host: format!("{}.example.com", category.as_str().to_lowercase()),
            };
            let targets = TargetVector::new(planted_targets(k)).expect("levels lie in [0, 1]");
            (record, targets)
        })
        .collect()
}

/// [`keyword_rows`] as a corpus. Panics if `n` is zero.
pub fn keyword_corpus(n: usize, seed: u64) -> Corpus {
    Corpus::from_rows(keyword_rows(n, seed), "synthetic").expect("generated rows are non-empty with unique ids")
}

/// A vocabulary covering every word the synthetic corpus uses.
pub fn keyword_vocab() -> Vocabulary {
    let text = KEYWORDS.iter().chain(FILLER.iter()).copied().collect::<Vec<_>>().join(" ") + " ? .";
    Vocabulary::build_from_texts([text.as_str()], 1)
}
