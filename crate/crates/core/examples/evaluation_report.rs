// Micro and macro F1, frequency buckets and best-rank statistics.
//
// ```bash
// cargo run --example evaluation_report
// ```

use labelset_rerank::eval::{avg_best_rank, label_frequencies};
use labelset_rerank::{bucketed_f1, micro_macro_f1, LabelSet, Result};

fn set(labels: &[usize]) -> LabelSet {
    LabelSet::from_indices(labels.iter().copied())
}

pub fn run_example() -> Result<()> {
    let gold = vec![set(&[0, 1, 2]), set(&[0, 3]), set(&[]), set(&[1, 4, 5])];
    let pred = vec![set(&[0, 1, 3]), set(&[0, 3]), set(&[2]), set(&[1, 4])];

    let report = micro_macro_f1(&pred, &gold, 6)?;
    print!("{}", report.to_table());

    let train = vec![set(&[0, 1]), set(&[0]), set(&[0, 2]), set(&[1, 3]), set(&[0, 4]), set(&[5])];
    let buckets = bucketed_f1(&pred, &gold, &label_frequencies(&train, 6), 3)?;
    println!("\nby training frequency:");
    for b in &buckets {
        println!(
            "  frequency {}..={}  labels {:?}  micro F1 {:.3}",
            b.min_frequency, b.max_frequency, b.labels, b.micro_f1
        );
    }

    // Rank of the first gold-matching candidate in each ranked list.
    let ranked = vec![
        vec![set(&[0, 1, 3]), set(&[0, 1, 2])],
        vec![set(&[0, 3])],
        vec![set(&[2]), set(&[]), set(&[3])],
        vec![set(&[1, 4]), set(&[1])],
    ];
    println!("\naverage best rank: {:.2}", avg_best_rank(&ranked, &gold)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
