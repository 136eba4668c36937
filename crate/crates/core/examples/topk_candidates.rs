// The most probable label sets under independent marginals.
//
// ```bash
// cargo run --example topk_candidates
// ```

use labelset_rerank::candgen::flip_costs;
use labelset_rerank::{enumerate_topk, LabelSpace, MarginalPrediction, Result};

pub fn run_example() -> Result<()> {
    let space = LabelSpace::new(["I10", "E11.9", "N18.3", "I50.9", "J44.9"])?;
    let marginals = MarginalPrediction::new("patient-17", vec![0.92, 0.61, 0.48, 0.35, 0.03])?;

    println!("flip costs (nats):");
    for (code, cost) in space.codes().iter().zip(flip_costs(&marginals)) {
        println!("  {code:<6} {cost:.3}");
    }

    let list = enumerate_topk(&marginals, 8)?;
    println!("\ntop {} sets for {}:", list.len(), list.instance_id);
    for (rank, c) in list.candidates.iter().enumerate() {
        println!(
            "  {:>2}  p={:.4}  {{{}}}",
            rank + 1,
            c.base_logprob.exp(),
            space.format_set(&c.set)
        );
    }
    assert_eq!(list.candidates[0].set, marginals.map_set());

    // Asking for more than 2^|Y| sets returns all of them.
    let all = enumerate_topk(&marginals, 1000)?;
    let mass: f64 = all.candidates.iter().map(|c| c.base_logprob.exp()).sum();
    println!("\nall {} sets carry probability {mass:.12}", all.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
