//! Lexicon sentiment: polarity in [-1, 1] and subjectivity in [0, 1].

use qscore::sentiment::{score_text, SentimentLexicon};

fn main() {
    let lexicon = SentimentLexicon::default_lexicon();
    println!("default lexicon: {} words", lexicon.len());
    for text in [
        "This is a great and very useful answer, thanks!",
        "The build is broken and the error message is terrible.",
        "How do I convert a string to an integer?",
    ] {
        let s = score_text(text, &lexicon);
        println!("{:+.3} {:.3} ({} terms)  {text}", s.polarity, s.subjectivity, s.matched_terms);
    }
}
