//! Per-stage random streams derived from one master seed.
//!
//! Each stage hashes `(master, stage)` into its own ChaCha stream, so changing
//! how much randomness one stage consumes never shifts another stage's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StageRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Topology,
    LinkMetrics,
    Sampling,
    Init,
    Batching,
    Augmentation,
    Nmf,
}

impl Stage {
    fn tag(self) -> u64 {
        match self {
            Stage::Topology => 0x746f_706f,
            Stage::LinkMetrics => 0x6c69_6e6b,
            Stage::Sampling => 0x7361_6d70,
            Stage::Init => 0x696e_6974,
            Stage::Batching => 0x6261_7463,
            Stage::Augmentation => 0x6175_676d,
            Stage::Nmf => 0x6e6d_6673,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed for `stage` derived from `master`.
pub fn stage_seed(master: u64, stage: Stage) -> u64 {
    splitmix64(splitmix64(master) ^ stage.tag())
}

pub fn stage_rng(master: u64, stage: Stage) -> StageRng {
    StageRng::seed_from_u64(stage_seed(master, stage))
}
