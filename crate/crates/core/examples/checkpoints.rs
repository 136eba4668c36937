// Save and reload trained rerankers.
//
// ```bash
// cargo run --example checkpoints
// ```

use labelset_rerank::config::TrainConfig;
use labelset_rerank::data::{file_digest, load_checkpoint, save_made, save_masksa, Checkpoint};
use labelset_rerank::{train_made, train_masksa, LabelSet, LabelSpace, MadeConfig, MaskSaConfig, Result};

pub fn run_example() -> Result<()> {
    let space = LabelSpace::new(["A01", "B02", "C03", "D04"])?;
    let corpus: Vec<LabelSet> = (0..200u64).map(|i| LabelSet::from_bitmask(i % 5 + 3 * (i % 2), 4)).collect();
    let train = TrainConfig {
        epochs: 2,
        step_size: 1e-3,
        ..TrainConfig::default()
    };
    let made = train_made(&space, &corpus, MadeConfig { hidden: 16, n_orderings: 2, seed: 4, train })?.0;
    let msa = train_masksa(&space, &corpus, MaskSaConfig { seed: 4, train, ..MaskSaConfig::small(8, 1, 2) })?.0;

    let dir = tempfile::tempdir().expect("temporary directory");
    let (made_path, msa_path) = (dir.path().join("made.ckpt"), dir.path().join("masksa.ckpt"));
    save_made(&made, &made_path)?;
    save_masksa(&msa, &msa_path)?;
    println!("made.ckpt   sha256 {}", file_digest(&made_path)?);
    println!("masksa.ckpt sha256 {}", file_digest(&msa_path)?);

    let y = LabelSet::from_indices([0, 2]);
    match load_checkpoint(&made_path, &space)? {
        Checkpoint::Made(m) => assert_eq!(m.log_joint(&y)?.to_bits(), made.log_joint(&y)?.to_bits()),
        other => panic!("unexpected kind {}", other.kind()),
    }
    match load_checkpoint(&msa_path, &space)? {
        Checkpoint::MaskSa(m) => assert_eq!(m.pll(&y)?.to_bits(), msa.pll(&y)?.to_bits()),
        other => panic!("unexpected kind {}", other.kind()),
    }
    println!("reloaded models score identically");

    // A checkpoint only loads against the vocabulary it was trained with.
    let reordered = LabelSpace::new(["B02", "A01", "C03", "D04"])?;
    match load_checkpoint(&made_path, &reordered) {
        Err(e) => println!("other vocabulary: {e}"),
        Ok(_) => panic!("vocabulary mismatch not detected"),
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
