//! WordPiece encoding of a (title, body) pair.

use qscore::tokenizer::{detokenize, encode_pair, Vocabulary};

fn main() {
    let vocab = Vocabulary::from_tokens([
        "[PAD]", "[UNK]", "[CLS]", "[SEP]", "how", "do", "i", "un", "##pack", "##ing", "a", "tar", "file", "?", ".",
        "it", "says", "error",
    ])
    .unwrap();
    let title = "How do I unpack a tar file?";
    let body = "Unpacking it says: error.";
    let x = encode_pair(title, body, &vocab, 20);
    println!("{:<8} {:>4} {:>4} {:>4}", "token", "id", "seg", "mask");
    for (i, &id) in x.token_ids.iter().enumerate() {
        let tok = vocab.token(id).unwrap_or("?");
        println!("{tok:<8} {id:>4} {:>4} {:>4}", x.segment_ids[i], x.attention_mask[i]);
    }
    println!("words: {}", detokenize(&x.token_ids, &vocab).join(" "));

    // Truncation removes from the longer segment first.
    let short = encode_pair(title, body, &vocab, 10);
    println!("\nmax_len 10: {}", detokenize(&short.token_ids, &vocab).join(" "));
}
