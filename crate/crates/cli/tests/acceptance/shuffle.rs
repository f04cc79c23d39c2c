use chrono::DateTime;
use turkey_core::domain::{instantiate_step_order, OrderingMode, StepDefinition, StepKind, TaskStatus};
use turkey_core::TaskDefinition;

use crate::support::{ensure, Rng};
use crate::Check;

const BIJECTION_PAIRS: usize = 10_000;
const CHI_TOKENS: usize = 24_000;
/// Chi-square critical value for 23 degrees of freedom at alpha = 0.001.
const CHI_CRITICAL: f64 = 49.73;

fn task(rng: &mut Rng, steps: usize) -> TaskDefinition {
    TaskDefinition {
        task_id: format!("t{}", rng.next()).into(),
        name: "shuffle".into(),
        description: String::new(),
        steps: (1..=steps)
            .map(|i| StepDefinition {
                step_id: format!("s{i}").into(),
                kind: StepKind::TextResponse,
                prompt: "?".into(),
                options: vec![],
                required: true,
            })
            .collect(),
        ordering_mode: OrderingMode::Randomized,
        auditors: Default::default(),
        status: TaskStatus::Published,
        created_at: DateTime::from_timestamp_millis(0).unwrap_or_default(),
    }
}

/// Tokens shaped like the server's: 32 lowercase hex digits.
fn token(rng: &mut Rng) -> String {
    format!("{:016x}{:016x}", rng.next(), rng.next())
}

pub fn run() -> Check {
    let mut rng = Rng::new(0x5eed_0004);
    for i in 0..BIJECTION_PAIRS {
        let steps = rng.range(1, 13) as usize;
        let t = task(&mut rng, steps);
        let order = instantiate_step_order(&t, &token(&mut rng)).map_err(|e| e.to_string())?;
        let mut got = order.permutation.clone();
        got.sort();
        let mut want: Vec<_> = t.steps.iter().map(|s| s.step_id.clone()).collect();
        want.sort();
        ensure!(
            got == want,
            "pair {i}: {:?} is not a permutation of the steps",
            order.permutation
        );
    }

    let four = task(&mut rng, 4);
    let mut bins = std::collections::HashMap::new();
    let mut seen = std::collections::HashSet::new();
    while seen.len() < CHI_TOKENS {
        let tok = token(&mut rng);
        if !seen.insert(tok.clone()) {
            continue;
        }
        let order = instantiate_step_order(&four, &tok).map_err(|e| e.to_string())?;
        *bins.entry(order.permutation).or_insert(0u64) += 1;
    }
    ensure!(bins.len() == 24, "only {} of 24 permutations occurred", bins.len());
    let expected = CHI_TOKENS as f64 / 24.0;
    let chi: f64 = bins.values().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    ensure!(chi < CHI_CRITICAL, "chi-square {chi:.2} >= {CHI_CRITICAL}");
    Ok(format!(
        "{BIJECTION_PAIRS} bijections; chi-square {chi:.2} < {CHI_CRITICAL} over {CHI_TOKENS} tokens"
    ))
}
