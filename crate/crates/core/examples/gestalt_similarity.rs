//! Compare step pairs with the gestalt similarity used for matching.
//!
//! cargo run --example gestalt_similarity -- "first text" "second text"

use cotprune::{gestalt_similarity, DEFAULT_TAU};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let pairs: Vec<(String, String)> = match args.as_slice() {
        [a, b] => vec![(a.clone(), b.clone())],
        _ => vec![
            (
                "Loop over each digit and add it.".into(),
                "Loop over digits, add each.".into(),
            ),
            (
                "Check the base case n == 0.".into(),
                "Return early when n is zero.".into(),
            ),
            ("tide".into(), "diet".into()),
            ("diet".into(), "tide".into()),
        ],
    };
    for (origin, coarse) in pairs {
        let s = gestalt_similarity(&origin, &coarse);
        let verdict = if s >= DEFAULT_TAU {
            "match"
        } else {
            "no match"
        };
        println!("{s:.3} {verdict:8} {origin:?} vs {coarse:?}");
    }
}
