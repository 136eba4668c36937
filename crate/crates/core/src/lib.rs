//! Label-set reranking for multi-label prediction.
//!
//! A base predictor supplies independent per-label probabilities. Stage one
//! enumerates the `k` most probable label sets under those marginals
//! ([`candgen`]); stage two rescores each candidate with
//! `log P_base(y) + alpha * R(y)`, where `R` comes from a reranker that has
//! learned which labels go together ([`made`], [`masksa`], [`rerank`]).

pub mod candgen;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod labels;
pub mod made;
pub mod masksa;
pub mod nn;
pub mod rerank;

pub use candgen::{enumerate_topk, CandidateList};
pub use config::{MadeConfig, MaskSaConfig, RerankConfig, TrainConfig};
pub use error::{Error, Result};
pub use eval::{avg_best_rank, bucketed_f1, micro_macro_f1, sweep_k, EvalReport};
pub use labels::{Candidate, LabelSet, LabelSpace, MarginalPrediction};
pub use made::{train_made, MadeModel};
pub use masksa::{train_masksa, MaskSaModel};
pub use rerank::{grid_search, rescore, SetScorer, TableScorer};
