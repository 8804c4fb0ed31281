//! Membership experiments: the single-draw games, the batch campaign used for
//! empirical advantage estimates, and the DP advantage bounds.

mod bounds;
mod campaign;
mod games;
pub mod report;
pub mod stats;

pub use bounds::{bound_erlingsson, bound_new, bound_yeom, tradeoff_feasible};
pub use campaign::{
    batch_mm_campaign, CampaignResult, CampaignSpec, RepetitionRecord, Scenario, SummaryRow,
    TraceRow, TraceSet,
};
pub use games::{
    exp_alt, exp_iid, exp_mm, exp_strong, play_games, summarize_games, AverageThresholdGuess,
    GameAttack, GameKind, GameRecord, GameSummary, GameView, MlpTrainer, OptimalThresholdGuess,
    StrongView, Trainer, STRONG_ATTACK_NAME,
};
