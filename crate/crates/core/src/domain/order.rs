//! Per-session step ordering.
//!
//! Randomized tasks derive a seed from the session token with 64-bit FNV-1a,
//! feed it to a splitmix64 stream and run a Fisher–Yates shuffle from the last
//! index down, reducing each draw modulo `i + 1`. The chain is fixed so an
//! order can be reproduced anywhere from the stored seed.

use serde::{Deserialize, Serialize};

use super::task::{DomainError, OrderingMode, StepId, TaskDefinition, TaskStatus};

const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET_BASIS, |hash, &b| {
        (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
}

pub fn shuffle_in_place<T>(items: &mut [T], seed: u64) {
    let mut rng = SplitMix64::new(seed);
    for i in (1..items.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOrder {
    pub permutation: Vec<StepId>,
    pub seed: u64,
}

impl StepOrder {
    /// Rebuilds the order a session saw from its stored seed.
    pub fn replay(task: &TaskDefinition, seed: u64) -> Self {
        let mut permutation: Vec<StepId> = task.steps.iter().map(|s| s.step_id.clone()).collect();
        if task.ordering_mode == OrderingMode::Randomized {
            shuffle_in_place(&mut permutation, seed);
        }
        Self { permutation, seed }
    }
}

pub fn instantiate_step_order(task: &TaskDefinition, session_token: &str) -> Result<StepOrder, DomainError> {
    if task.status != TaskStatus::Published {
        return Err(DomainError::TaskNotPublished);
    }
    let seed = match task.ordering_mode {
        OrderingMode::Fixed => 0,
        OrderingMode::Randomized => fnv1a_64(session_token.as_bytes()),
    };
    Ok(StepOrder::replay(task, seed))
}
