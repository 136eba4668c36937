// Pseudo-log-likelihood scores from a small order-free Transformer.
//
// ```bash
// cargo run --release --example masksa_reranker
// ```

use labelset_rerank::config::TrainConfig;
use labelset_rerank::data::{block_mixture, gen_synthetic, SyntheticData, SyntheticSpec};
use labelset_rerank::{train_masksa, LabelSet, MaskSaConfig, Result};

pub fn run_example() -> Result<()> {
    let spec = SyntheticSpec {
        num_labels: 6,
        components: block_mixture(6, 2, 0.9, 0.05, 2)?,
        noise: 0.0,
        seed: 2,
        train: 1500,
        val: 0,
        test: 0,
        exact_joint: false,
    };
    let data = gen_synthetic(&spec)?;
    let config = MaskSaConfig {
        seed: 2,
        train: TrainConfig {
            epochs: 3,
            step_size: 1e-3,
            ..TrainConfig::default()
        },
        ..MaskSaConfig::small(16, 1, 2)
    };
    let (model, report) = train_masksa(&data.space, &SyntheticData::gold(&data.train), config)?;
    println!("cloze loss per epoch: {:.3?}", report.epoch_losses);

    // Members of one block score higher than a set straddling two blocks.
    for c in &spec.components {
        let block = LabelSet::from_indices((0..6).filter(|&i| c.probs[i] > 0.5));
        println!("block {{{}}}: pll {:.3}", data.space.format_set(&block), model.pll(&block)?);
    }
    let mixed = LabelSet::from_indices([0, 5]);
    println!("mixed {{{}}}: pll {:.3}", data.space.format_set(&mixed), model.pll(&mixed)?);

    // The score does not depend on the order members are given in.
    let a = model.pll_of_members(&[0, 2, 4])?;
    let b = model.pll_of_members(&[4, 0, 2])?;
    println!("pll [0,2,4] = {a:.12}, [4,0,2] = {b:.12}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
