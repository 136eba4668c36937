//! Every example runs to completion.

macro_rules! example {
    ($name:ident) => {
        mod $name {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", stringify!($name), ".rs"));
        }

        #[test]
        fn $name() {
            $name::run_example().expect(concat!(stringify!($name), " should run"));
        }
    };
}

example!(topk_candidates);
example!(made_reranker);
example!(masksa_reranker);
example!(synthetic_pipeline);
example!(evaluation_report);
example!(checkpoints);
example!(diff_predictions);
