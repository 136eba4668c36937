// Which predictions reranking changes, and whether each change helps.
//
// ```bash
// cargo run --example diff_predictions
// ```

use labelset_rerank::data::{block_mixture, gen_synthetic, SyntheticSpec};
use labelset_rerank::eval::instance_f1;
use labelset_rerank::rerank::diff_prediction;
use labelset_rerank::{enumerate_topk, rescore, Result, TableScorer};

pub fn run_example() -> Result<()> {
    let spec = SyntheticSpec {
        num_labels: 7,
        components: block_mixture(7, 2, 0.85, 0.05, 6)?,
        noise: 1.2,
        seed: 6,
        train: 0,
        val: 0,
        test: 200,
        exact_joint: true,
    };
    let data = gen_synthetic(&spec)?;
    let joint = TableScorer::from_probabilities(7, data.joint.as_deref().expect("exact joint requested"))?;

    let (mut changed, mut better, mut worse) = (0, 0, 0);
    for inst in &data.test {
        let list = enumerate_topk(&inst.marginals, 30)?;
        let base = &list.candidates[0].set;
        let reranked = rescore(&list, &joint, 1.0, 0.0)?;
        let top = reranked.top().expect("non-empty list");
        if top == base {
            continue;
        }
        changed += 1;
        let (added, removed) = diff_prediction(base, top);
        let delta = instance_f1(top, &inst.gold) - instance_f1(base, &inst.gold);
        if delta > 0.0 {
            better += 1;
        } else if delta < 0.0 {
            worse += 1;
        }
        if changed <= 5 {
            println!(
                "{}: +{{{}}} -{{{}}}  instance F1 {:+.2}",
                inst.marginals.instance_id,
                data.space.format_set(&added),
                data.space.format_set(&removed),
                delta
            );
        }
    }
    println!("{changed} of {} changed: {better} better, {worse} worse", data.test.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
