// Synthetic data, a reranker, a validation grid search and a test score,
// compared with reranking by the true joint distribution.
//
// ```bash
// cargo run --release --example synthetic_pipeline
// ```

use labelset_rerank::config::{TrainConfig, DEFAULT_ALPHA_GRID, DEFAULT_BETA_GRID};
use labelset_rerank::data::{block_mixture, gen_synthetic, Instance, SyntheticData, SyntheticSpec};
use labelset_rerank::rerank::{grid_search_with_raw, raw_scores, top1_predictions, Objective};
use labelset_rerank::{enumerate_topk, micro_macro_f1, train_made, CandidateList, MadeConfig, Result, SetScorer, TableScorer};

const K: usize = 20;

fn lists(split: &[Instance]) -> Result<Vec<CandidateList>> {
    split.iter().map(|i| enumerate_topk(&i.marginals, K)).collect()
}

fn evaluate(name: &str, scorer: &dyn SetScorer, data: &SyntheticData) -> Result<()> {
    let n = data.space.len();
    let (val, test) = (lists(&data.val)?, lists(&data.test)?);
    let (val_gold, test_gold) = (SyntheticData::gold(&data.val), SyntheticData::gold(&data.test));
    let grid = grid_search_with_raw(
        &val,
        &raw_scores(&val, scorer)?,
        &val_gold,
        n,
        &DEFAULT_ALPHA_GRID,
        &DEFAULT_BETA_GRID,
        Objective::Micro,
    )?;
    let raw = raw_scores(&test, scorer)?;
    let f1 = |a, b| micro_macro_f1(&top1_predictions(&test, &raw, a, b), &test_gold, n).map(|r| r.micro_f1);
    println!(
        "{name:<7} alpha={:<4} beta={:<4} test micro F1 {:.4} -> {:.4}",
        grid.chosen.alpha,
        grid.chosen.beta,
        f1(0.0, 0.0)?,
        f1(grid.chosen.alpha, grid.chosen.beta)?
    );
    Ok(())
}

pub fn run_example() -> Result<()> {
    let spec = SyntheticSpec {
        num_labels: 8,
        components: block_mixture(8, 3, 0.8, 0.08, 9)?,
        noise: 1.0,
        seed: 9,
        train: 4000,
        val: 500,
        test: 500,
        exact_joint: true,
    };
    let data = gen_synthetic(&spec)?;
    let config = MadeConfig {
        hidden: 64,
        n_orderings: 4,
        seed: 9,
        train: TrainConfig {
            epochs: 8,
            step_size: 1e-3,
            ..TrainConfig::default()
        },
    };
    let made = train_made(&data.space, &SyntheticData::gold(&data.train), config)?.0;
    let oracle = TableScorer::from_probabilities(8, data.joint.as_deref().expect("exact joint requested"))?;

    evaluate("MADE", &made, &data)?;
    evaluate("oracle", &oracle, &data)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
