//! Files in and out: text formats, model checkpoints and the synthetic generator.

pub mod checkpoint;
pub mod formats;
pub mod synthetic;

pub use checkpoint::{load_checkpoint, save_checkpoint, save_made, save_masksa, Checkpoint};
pub use formats::{
    file_digest, read_candidates, read_gold, read_joint_table, read_marginals, read_vocab, write_candidates,
    write_gold, write_joint_table, write_marginals, write_reranked, write_vocab, P_DEFAULT,
};
pub use synthetic::{block_mixture, exact_joint, gen_synthetic, Component, Instance, SyntheticData, SyntheticSpec};
