//! Grouped splits: rows whose bodies are the same after whitespace and case
//! normalization always land on the same side.

use qscore::corpus::{make_split, Category, Corpus, QuestionRecord, SplitPlan, TargetVector};

fn main() -> anyhow::Result<()> {
    let bodies = [
        "How do I exit vim?",
        "how do i   exit VIM?",
        "Why is the sky blue?",
        "What is a monad?",
        "What  is a monad?",
        "What is a monad?",
        "Is coffee a vegetable?",
        "How to center a div?",
        "Best way to learn Rust?",
        "Why does my build fail?",
    ];
    let rows = bodies
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let rec = QuestionRecord {
                qa_id: i.to_string(),
                title: format!("q{i}"),
                body: b.to_string(),
                category: Category::Culture,
                host: "example.com".into(),
            };
            (rec, TargetVector::new([0.5; 20]).unwrap())
        })
        .collect();
    let corpus = Corpus::from_rows(rows, "inline")?;

    for (f, fold) in make_split(&corpus, &SplitPlan::group_kfold(3, 7))?.iter().enumerate() {
        println!("fold {f}: validation {:?}", fold.validation);
    }
    let holdout = &make_split(&corpus, &SplitPlan::holdout(0.3, 7))?[0];
    println!("holdout 0.3: train {:?}, validation {:?}", holdout.train, holdout.validation);
    Ok(())
}
