//! Synthetic worker behavior.
//!
//! Each profile turns a deterministic random stream into a time-ordered event
//! list and answer set. Parameters are chosen to separate the profiles
//! cleanly, not to look realistic:
//!
//! | profile  | total time  | gaps between actions | mouse                      | focus                    |
//! |----------|-------------|----------------------|----------------------------|--------------------------|
//! | diligent | 30-120 s    | 200-2000 ms          | bursts sampled at 20-60 Hz | rare short blurs         |
//! | sloppy   | 20-90 s     | 2-8 s                | short bursts of 2-5 points | 35-60 % of the time away |
//! | bot      | 0.3-0.9 s   | uniform              | none                       | none                     |

use std::fmt;
use std::str::FromStr;

use serde_json::{json, Value};
use turkey_core::domain::{fnv1a_64, SplitMix64};
use turkey_core::{AuditEvent, FocusState, ScalarType, StepDefinition, StepKind, StepPluginDescriptor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Profile {
    Diligent,
    Sloppy,
    Bot,
}

impl Profile {
    pub const ALL: [Profile; 3] = [Profile::Diligent, Profile::Sloppy, Profile::Bot];

    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Diligent => "diligent",
            Profile::Sloppy => "sloppy",
            Profile::Bot => "bot",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Profile::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown profile {s:?}; expected diligent, sloppy or bot"))
    }
}

/// Small helper over splitmix64 with inclusive ranges.
pub struct Rng(SplitMix64);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(SplitMix64::new(seed))
    }

    pub fn for_worker(profile: Profile, seed: u64, index: usize) -> Self {
        Rng::new(fnv1a_64(format!("{profile}:{seed}:{index}").as_bytes()))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `lo..=hi`.
    pub fn range(&mut self, lo: u64, hi: u64) -> u64 {
        lo + self.next_u64() % (hi - lo + 1)
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.unit() < p
    }
}

/// What one synthetic worker does.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerScript {
    /// Ascending by `t_ms`.
    pub events: Vec<AuditEvent>,
    pub end_ms: u64,
    /// `(step_id, value)` in step id order.
    pub answers: Vec<(String, Value)>,
}

const VIEWPORT: (u32, u32) = (1280, 800);

struct Cursor {
    x: u32,
    y: u32,
}

impl Cursor {
    fn step(&mut self, rng: &mut Rng, reach: u64) {
        let jitter = |v: u32, max: u32, rng: &mut Rng| {
            let d = rng.range(0, 2 * reach) as i64 - reach as i64;
            (v as i64 + d).clamp(0, max as i64 - 1) as u32
        };
        self.x = jitter(self.x, VIEWPORT.0, rng);
        self.y = jitter(self.y, VIEWPORT.1, rng);
    }
}

/// Generates the events and answers for one worker, keeping only events of
/// the `enabled` auditor kinds.
pub fn script(
    profile: Profile,
    rng: &mut Rng,
    steps: &[StepDefinition],
    plugins: &[StepPluginDescriptor],
    enabled: &[String],
) -> WorkerScript {
    let (mut events, end_ms) = match profile {
        Profile::Diligent => diligent(rng),
        Profile::Sloppy => sloppy(rng),
        Profile::Bot => bot(rng),
    };
    events.retain(|e| enabled.contains(&e.kind));
    let answers = answers(profile, rng, steps, plugins);
    WorkerScript {
        events,
        end_ms,
        answers,
    }
}

fn mouse_burst(rng: &mut Rng, cursor: &mut Cursor, t: &mut u64, events: &mut Vec<AuditEvent>, samples: u64, hz: u64) {
    let interval = 1000 / hz;
    for _ in 0..samples {
        cursor.step(rng, 40);
        events.push(AuditEvent::mouse(*t, cursor.x, cursor.y));
        *t += interval;
    }
}

fn diligent(rng: &mut Rng) -> (Vec<AuditEvent>, u64) {
    let total = rng.range(30_000, 120_000);
    let mut cursor = Cursor {
        x: VIEWPORT.0 / 2,
        y: VIEWPORT.1 / 2,
    };
    let mut events = Vec::new();
    let mut t = rng.range(200, 2000);
    let mut first = true;
    // The longest action (a blur) spans 5 s, so every event lands before `total`.
    while t + 5000 < total {
        let roll = rng.unit();
        if first || roll < 0.5 {
            let hz = rng.range(20, 60);
            let samples = rng.range(5, 30);
            mouse_burst(rng, &mut cursor, &mut t, &mut events, samples, hz);
            first = false;
        } else if roll < 0.75 {
            let target = format!("label.option-{}", rng.range(0, 3));
            events.push(AuditEvent::click(t, cursor.x, cursor.y, &target));
        } else if roll < 0.93 {
            for _ in 0..rng.range(3, 12) {
                events.push(AuditEvent::keypress(t));
                t += rng.range(80, 250);
            }
        } else if roll < 0.95 {
            events.push(AuditEvent::resize(
                t,
                rng.range(900, 1600) as u32,
                rng.range(600, 1000) as u32,
            ));
        } else {
            events.push(AuditEvent::focus(t, FocusState::Blur));
            t += rng.range(1000, 5000);
            events.push(AuditEvent::focus(t, FocusState::Focus));
        }
        t += rng.range(200, 2000);
    }
    (events, total)
}

fn sloppy(rng: &mut Rng) -> (Vec<AuditEvent>, u64) {
    let total = rng.range(20_000, 90_000);
    let away_fraction = 0.35 + 0.25 * rng.unit();
    let intervals = rng.range(1, 3);
    let slot = total / intervals;
    let away = (total as f64 * away_fraction) as u64 / intervals;
    let blurs: Vec<(u64, u64)> = (0..intervals)
        .map(|i| {
            let start = i * slot + rng.range(1, slot - away - 1);
            (start, start + away)
        })
        .collect();

    let mut cursor = Cursor { x: 100, y: 100 };
    let mut events = Vec::new();
    let mut t = rng.range(500, 3000);
    while t + 1000 < total {
        if rng.chance(0.5) {
            let samples = rng.range(2, 5);
            mouse_burst(rng, &mut cursor, &mut t, &mut events, samples, 20);
        } else if rng.chance(0.7) {
            events.push(AuditEvent::click(t, cursor.x, cursor.y, "label.option-0"));
        } else {
            events.push(AuditEvent::keypress(t));
        }
        t += rng.range(2000, 8000);
    }
    // The worker is away during blurs, so nothing else happens then.
    events.retain(|e| !blurs.iter().any(|&(a, b)| e.t_ms >= a && e.t_ms <= b));
    for (a, b) in blurs {
        events.push(AuditEvent::focus(a, FocusState::Blur));
        events.push(AuditEvent::focus(b, FocusState::Focus));
    }
    events.sort_by_key(|e| e.t_ms);
    (events, total)
}

fn bot(rng: &mut Rng) -> (Vec<AuditEvent>, u64) {
    let total = rng.range(300, 900);
    let n = rng.range(5, 15);
    let gap = total / (n + 1);
    let events = (1..=n)
        .map(|k| {
            if k % 2 == 0 {
                AuditEvent::keypress(k * gap)
            } else {
                AuditEvent::click(k * gap, 10, 10, "input[type=submit]")
            }
        })
        .collect();
    (events, total)
}

fn answers(
    profile: Profile,
    rng: &mut Rng,
    steps: &[StepDefinition],
    plugins: &[StepPluginDescriptor],
) -> Vec<(String, Value)> {
    let mut sorted: Vec<&StepDefinition> = steps.iter().collect();
    sorted.sort_by(|a, b| a.step_id.as_str().cmp(b.step_id.as_str()));
    let mut out = Vec::new();
    for step in sorted {
        if !step.required && profile == Profile::Sloppy {
            continue;
        }
        let n = step.options.len() as u64;
        let value = match &step.kind {
            StepKind::MultipleChoice => json!(rng.range(0, n - 1)),
            StepKind::MultipleAnswer => {
                let mut picked: Vec<u64> = (0..n).filter(|_| rng.chance(0.5)).collect();
                if picked.is_empty() {
                    picked.push(rng.range(0, n - 1));
                }
                json!(picked)
            }
            StepKind::TextResponse => json!(match profile {
                Profile::Diligent => "Compared both <options> & chose the \"clearer\" one; naïve readers agree.",
                Profile::Sloppy => "ok",
                Profile::Bot => "good",
            }),
            StepKind::Custom(kind) => {
                let Some(plugin) = plugins.iter().find(|p| &p.kind == kind) else {
                    continue;
                };
                let mut obj = serde_json::Map::new();
                for field in &plugin.answer_schema {
                    let v = match field.ty {
                        ScalarType::Integer => json!(rng.range(0, 100)),
                        ScalarType::Float => json!(rng.unit()),
                        ScalarType::String => json!("n/a"),
                    };
                    obj.insert(field.name.clone(), v);
                }
                Value::Object(obj)
            }
        };
        out.push((step.step_id.as_str().to_owned(), value));
    }
    out
}
