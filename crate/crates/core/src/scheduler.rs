//! State selection, seed selection, region splitting and energy.
//!
//! The scoring and energy constants are heuristics. All of them can be
//! overridden through [`SchedulerConfig`].

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feedback::StateId;
use crate::message::{Seed, SeedPerf};
use crate::state_model::{StateModel, VertexStats};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("state model has no vertices")]
    EmptyModel,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("seed has not been executed yet")]
    NoStateSeq,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    /// Weight of the rarity term. Vertex hits grow with every execution, so
    /// at 1 the term vanishes after a few hundred runs and states that were
    /// never selected can no longer compete with ones that have gains.
    pub alpha: f64,
    pub beta: f64,
    pub energy_base: f64,
    pub energy_min: u32,
    pub energy_max: u32,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            alpha: 10_000.0,
            beta: 1.0,
            energy_base: 32.0,
            energy_min: 8,
            energy_max: 512,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateScore {
    pub state: StateId,
    pub score: f64,
}

/// Favors rarely visited states and states whose past selections paid off.
pub fn state_score(v: &VertexStats, cfg: &SchedulerConfig) -> f64 {
    cfg.alpha / (1.0 + v.hits as f64)
        + cfg.beta * v.coverage_gains as f64 / (1.0 + v.times_selected as f64)
}

pub fn state_scores(model: &StateModel, cfg: &SchedulerConfig) -> Vec<StateScore> {
    model
        .vertices()
        .map(|(s, v)| StateScore {
            state: s.clone(),
            score: state_score(v, cfg),
        })
        .collect()
}

/// Samples a state with probability proportional to its score.
pub fn choose_state<R: Rng>(
    model: &StateModel,
    cfg: &SchedulerConfig,
    rng: &mut R,
) -> Result<StateId, ScheduleError> {
    let scores = state_scores(model, cfg);
    if scores.is_empty() {
        return Err(ScheduleError::EmptyModel);
    }
    let total: f64 = scores.iter().map(|s| s.score).sum();
    if total.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        let i = rng.gen_range(0..scores.len());
        return Ok(scores[i].state.clone());
    }
    let mut target = rng.gen::<f64>() * total;
    let mut last_positive = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.score <= 0.0 {
            continue;
        }
        last_positive = i;
        if target < s.score {
            return Ok(s.state.clone());
        }
        target -= s.score;
    }
    // rounding left a sliver past the end
    Ok(scores[last_positive].state.clone())
}

/// Index of a seed that visited `s`, uniformly; any seed when none did.
pub fn choose_sequence<R: Rng>(
    corpus: &[Seed],
    s: &StateId,
    rng: &mut R,
) -> Result<usize, ScheduleError> {
    if corpus.is_empty() {
        return Err(ScheduleError::EmptyCorpus);
    }
    let eligible: Vec<usize> = corpus
        .iter()
        .enumerate()
        .filter(|(_, seed)| seed.state_seq.contains(s))
        .map(|(i, _)| i)
        .collect();
    if eligible.is_empty() {
        Ok(rng.gen_range(0..corpus.len()))
    } else {
        Ok(eligible[rng.gen_range(0..eligible.len())])
    }
}

/// Message index ranges `<M1, M2, M3>` partitioning a seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Regions {
    pub prefix: Range<usize>,
    pub target: Range<usize>,
    pub suffix: Range<usize>,
}

impl Regions {
    /// The whole sequence as the mutation target.
    pub fn whole(n: usize) -> Self {
        Regions {
            prefix: 0..0,
            target: 0..n,
            suffix: n..n,
        }
    }
}

/// Splits around the first visit of `s`.
///
/// `M1` is the prefix up to and including the first message after which the
/// target is in `s`. `M2` starts with the next message (the first one handled
/// in `s`) and extends while the target stays in `s`. `M3` is the rest. When
/// `s` was never visited, `M2` is the first message.
pub fn split_regions(seed: &Seed, s: &StateId) -> Result<Regions, ScheduleError> {
    let n = seed.messages.len();
    if n == 0 {
        return Ok(Regions::whole(0));
    }
    if seed.state_seq.is_empty() {
        return Err(ScheduleError::NoStateSeq);
    }
    let seq = &seed.state_seq[..seed.state_seq.len().min(n)];
    let Some(i) = seq.iter().position(|x| x == s) else {
        return Ok(Regions {
            prefix: 0..0,
            target: 0..1,
            suffix: 1..n,
        });
    };
    if i + 1 >= n {
        return Ok(Regions {
            prefix: 0..n - 1,
            target: n - 1..n,
            suffix: n..n,
        });
    }
    // message i+1 is always in M2, even when it already leaves `s`
    let mut j = i + 2;
    if seq.get(i + 1) == Some(s) {
        while j < seq.len() && seq[j] == *s {
            j += 1;
        }
    }
    let j = j.min(n);
    Ok(Regions {
        prefix: 0..i + 1,
        target: i + 1..j,
        suffix: j..n,
    })
}

/// Number of stack mutations to derive from a seed in one round.
pub fn assign_energy(perf: &SeedPerf, cfg: &SchedulerConfig) -> u32 {
    let e =
        cfg.energy_base * (1.0 + perf.coverage_gains as f64) / (1.0 + perf.times_selected as f64);
    (e.floor().max(0.0) as u64).clamp(cfg.energy_min as u64, cfg.energy_max as u64) as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::Message;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn s(v: i64) -> StateId {
        StateId::single(v)
    }

    fn seed(msgs: &[&str], states: &[i64]) -> Seed {
        let mut sd = Seed::new(msgs.iter().map(|m| Message::from(*m)).collect());
        sd.state_seq = states.iter().map(|&v| s(v)).collect();
        sd
    }

    #[test]
    fn single_state_model() {
        let mut m = StateModel::new(s(0));
        m.update(&[s(0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            assert_eq!(
                choose_state(&m, &SchedulerConfig::default(), &mut rng).unwrap(),
                s(0)
            );
        }
    }

    #[test]
    fn empty_model_errors() {
        let m = StateModel::new(s(0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            choose_state(&m, &SchedulerConfig::default(), &mut rng),
            Err(ScheduleError::EmptyModel)
        );
    }

    #[test]
    fn choose_state_is_deterministic() {
        let mut m = StateModel::new(s(0));
        m.update(&[s(1), s(2), s(2)]);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| choose_state(&m, &SchedulerConfig::default(), &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn choose_state_skips_zero_scores() {
        let mut m = StateModel::new(s(0));
        m.update(&[s(1)]);
        m.vertex_mut(&s(1)).unwrap().coverage_gains = 3;
        let cfg = SchedulerConfig {
            alpha: 0.0,
            ..SchedulerConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            assert_eq!(choose_state(&m, &cfg, &mut rng).unwrap(), s(1));
        }
    }

    #[test]
    fn rarer_state_frequency() {
        let mut m = StateModel::new(s(0));
        m.update(&[s(1)]);
        m.vertex_mut(&s(0)).unwrap().hits = 0;
        m.vertex_mut(&s(1)).unwrap().hits = 99;
        let cfg = SchedulerConfig {
            alpha: 1.0,
            beta: 1.0,
            ..SchedulerConfig::default()
        };
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rare = (0..n)
            .filter(|_| choose_state(&m, &cfg, &mut rng).unwrap() == s(0))
            .count() as f64;
        let p = 100.0 / 101.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((rare - n as f64 * p).abs() <= 3.0 * sigma, "{rare}");
    }

    #[test]
    fn choose_sequence_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(
            choose_sequence(&[], &s(0), &mut rng),
            Err(ScheduleError::EmptyCorpus)
        );
        let corpus = vec![seed(&["a"], &[1]), seed(&["b"], &[2]), seed(&["c"], &[1])];
        for _ in 0..20 {
            assert_eq!(choose_sequence(&corpus, &s(2), &mut rng).unwrap(), 1);
        }
        for _ in 0..20 {
            assert!(choose_sequence(&corpus, &s(9), &mut rng).unwrap() < 3);
        }
    }

    #[test]
    fn split_example() {
        let sd = seed(&["a", "b", "c", "d"], &[0, 1, 1, 2]);
        assert_eq!(
            split_regions(&sd, &s(1)).unwrap(),
            Regions {
                prefix: 0..2,
                target: 2..3,
                suffix: 3..4
            }
        );
    }

    #[test]
    fn split_absent_state() {
        let sd = seed(&["a", "b", "c"], &[0, 1, 2]);
        assert_eq!(
            split_regions(&sd, &s(7)).unwrap(),
            Regions {
                prefix: 0..0,
                target: 0..1,
                suffix: 1..3
            }
        );
    }

    #[test]
    fn split_single_message() {
        let sd = seed(&["a"], &[4]);
        assert_eq!(split_regions(&sd, &s(4)).unwrap(), Regions::whole(1));
        assert_eq!(split_regions(&sd, &s(0)).unwrap(), Regions::whole(1));
    }

    #[test]
    fn split_state_left_immediately() {
        // USER -> AWP, PASS -> LI: the message handled in AWP is PASS
        let sd = seed(&["USER", "PASS", "LIST", "QUIT"], &[1, 2, 2, 3]);
        assert_eq!(
            split_regions(&sd, &s(1)).unwrap(),
            Regions {
                prefix: 0..1,
                target: 1..2,
                suffix: 2..4
            }
        );
        assert_eq!(
            split_regions(&sd, &s(2)).unwrap(),
            Regions {
                prefix: 0..2,
                target: 2..3,
                suffix: 3..4
            }
        );
    }

    #[test]
    fn split_requires_execution() {
        let sd = Seed::from_strs(&["a"]);
        assert_eq!(split_regions(&sd, &s(0)), Err(ScheduleError::NoStateSeq));
    }

    #[test]
    fn energy_examples() {
        let cfg = SchedulerConfig::default();
        let perf = |g, sel| SeedPerf {
            coverage_gains: g,
            times_selected: sel,
            det_done: false,
        };
        assert_eq!(assign_energy(&perf(0, 0), &cfg), 32);
        assert_eq!(assign_energy(&perf(15, 0), &cfg), 512);
        assert_eq!(assign_energy(&perf(0, 63), &cfg), 8);
        assert_eq!(assign_energy(&perf(1, 2), &cfg), 21);
    }
}
