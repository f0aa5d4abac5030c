//! Factorization-machine ranker: scoring, pairwise SGD training (BPR, WARP),
//! hyperparameter search and Top-N recommendation.

mod fm;
mod recommend;
mod search;
mod train;

pub use fm::{
    checkpoint_to_string, parse_checkpoint, read_checkpoint, write_checkpoint, Checkpoint,
    FmParams, UserContext,
};
pub use recommend::{
    read_topn, recommend_excluding, recommend_topn, top_n, topn_to_string, write_topn,
    Recommendation, TopNList,
};
pub use search::{
    default_grid, grid_search, lattice, validation_map, Evaluation, SearchOutcome, EPOCHS,
    FACTORS, LEARNING_RATES,
};
pub use train::{
    bpr_triple_gradient, bpr_triple_loss, harmonic_table, train, train_bpr, train_bprmf,
    train_warp, warp_rank_estimate, Loss, PairGradient, TrainConfig, Trainer, INIT_SCALE,
    WARP_MARGIN,
};
