// Train a MADE label-set density and use it to rerank candidates.
//
// ```bash
// cargo run --release --example made_reranker
// ```

use labelset_rerank::config::TrainConfig;
use labelset_rerank::data::{block_mixture, gen_synthetic, SyntheticData, SyntheticSpec};
use labelset_rerank::{enumerate_topk, rescore, train_made, MadeConfig, Result};

pub fn run_example() -> Result<()> {
    let spec = SyntheticSpec {
        num_labels: 8,
        components: block_mixture(8, 2, 0.85, 0.05, 1)?,
        noise: 1.0,
        seed: 1,
        train: 3000,
        val: 0,
        test: 5,
        exact_joint: false,
    };
    let data = gen_synthetic(&spec)?;

    let config = MadeConfig {
        hidden: 64,
        n_orderings: 4,
        seed: 1,
        train: TrainConfig {
            epochs: 5,
            step_size: 1e-3,
            ..TrainConfig::default()
        },
    };
    let (made, report) = train_made(&data.space, &SyntheticData::gold(&data.train), config)?;
    println!("training loss per epoch: {:.3?}", report.epoch_losses);

    for inst in &data.test {
        let list = enumerate_topk(&inst.marginals, 20)?;
        let reranked = rescore(&list, &made, 1.0, 0.5)?;
        println!(
            "{}: gold {{{}}}  base {{{}}}  reranked {{{}}}",
            inst.marginals.instance_id,
            data.space.format_set(&inst.gold),
            data.space.format_set(&list.candidates[0].set),
            data.space.format_set(reranked.top().expect("non-empty list")),
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
