//! Mini-batch construction over classified proposals.
//!
//! Weight-based strategies split the batch mass into a positive share and
//! a set of negative groups. Each proposal receives `group_mass / |group|`,
//! so a group is drawn with probability equal to its mass regardless of
//! how many proposals it holds. With the default positive ratio of 0.25:
//!
//! | strategy       | POS  | negative groups                         |
//! |----------------|------|-----------------------------------------|
//! | `rs`           | 0.25 | all negatives 0.75                      |
//! | `bnps`         | 0.25 | NEG1..NEG5 at 0.15 each                 |
//! | `bnps-2cls`    | 0.25 | NEG1+2 0.375, NEG3+4+5 0.375            |
//! | `bnps-3cls`    | 0.25 | NEG1 0.25, NEG2 0.25, NEG3+4+5 0.25     |
//! | `bnps-3cls-hn` | 0.25 | NEG1 0.15, NEG2 0.15, NEG3+4+5 0.45     |
//!
//! An empty negative group hands its mass to the remaining negative
//! groups in proportion to their own.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::proposal::ProposalClass;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplingError {
    #[error("scene has no positive proposals")]
    NoPositives,
    #[error("no proposals to sample from")]
    Empty,
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error("loss of proposal {0} is not finite")]
    NonFiniteLoss(usize),
    #[error("unknown strategy '{0}'")]
    UnknownStrategy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Rs,
    Bnps,
    #[serde(rename = "bnps-2cls")]
    Bnps2Cls,
    #[serde(rename = "bnps-3cls")]
    Bnps3Cls,
    #[serde(rename = "bnps-3cls-hn")]
    Bnps3ClsHn,
    Ohem,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Rs,
        Strategy::Bnps,
        Strategy::Bnps2Cls,
        Strategy::Bnps3Cls,
        Strategy::Bnps3ClsHn,
        Strategy::Ohem,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Rs => "rs",
            Strategy::Bnps => "bnps",
            Strategy::Bnps2Cls => "bnps-2cls",
            Strategy::Bnps3Cls => "bnps-3cls",
            Strategy::Bnps3ClsHn => "bnps-3cls-hn",
            Strategy::Ohem => "ohem",
        }
    }

    /// Negative groups with their share of the negative mass. OHEM falls
    /// back to the random-sampling split when weights are needed.
    pub fn negative_groups(self) -> Vec<(&'static str, Vec<ProposalClass>, f64)> {
        use ProposalClass::*;
        match self {
            Strategy::Rs | Strategy::Ohem => {
                vec![("NEG", vec![Neg1, Neg2, Neg3, Neg4, Neg5], 1.0)]
            }
            Strategy::Bnps => [Neg1, Neg2, Neg3, Neg4, Neg5]
                .into_iter()
                .map(|c| (c.name(), vec![c], 0.2))
                .collect(),
            Strategy::Bnps2Cls => vec![
                ("NEG1-2", vec![Neg1, Neg2], 0.5),
                ("NEG3-5", vec![Neg3, Neg4, Neg5], 0.5),
            ],
            Strategy::Bnps3Cls => vec![
                ("NEG1", vec![Neg1], 1.0 / 3.0),
                ("NEG2", vec![Neg2], 1.0 / 3.0),
                ("NEG3-5", vec![Neg3, Neg4, Neg5], 1.0 / 3.0),
            ],
            Strategy::Bnps3ClsHn => vec![
                ("NEG1", vec![Neg1], 0.2),
                ("NEG2", vec![Neg2], 0.2),
                ("NEG3-5", vec![Neg3, Neg4, Neg5], 0.6),
            ],
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = SamplingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == norm)
            .ok_or_else(|| SamplingError::UnknownStrategy(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub strategy: Strategy,
    pub batch_size: usize,
    pub positive_ratio: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Bnps,
            batch_size: 64,
            positive_ratio: 0.25,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplingError> {
        if self.batch_size == 0 {
            return Err(SamplingError::Config("batch_size must be at least 1".into()));
        }
        if !(self.positive_ratio > 0.0 && self.positive_ratio < 1.0) {
            return Err(SamplingError::Config(format!(
                "positive_ratio {} outside (0, 1)",
                self.positive_ratio
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplingGroup {
    pub name: &'static str,
    pub classes: Vec<ProposalClass>,
    /// probability mass after redistribution over non-empty groups
    pub mass: f64,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProposalWeight {
    pub index: usize,
    pub weight: f64,
    /// position in [`ProposalWeights::groups`]
    pub group: usize,
}

/// Per-proposal weights plus the groups they were derived from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProposalWeights {
    pub groups: Vec<SamplingGroup>,
    pub weights: Vec<ProposalWeight>,
}

impl ProposalWeights {
    pub fn total(&self) -> f64 {
        self.weights.iter().map(|w| w.weight).sum()
    }
}

/// Weights for every proposal. Errors when the scene has no positives.
pub fn assign_weights(
    classes: &[ProposalClass],
    strategy: Strategy,
    positive_ratio: f64,
) -> Result<ProposalWeights, SamplingError> {
    if !(positive_ratio > 0.0 && positive_ratio < 1.0) {
        return Err(SamplingError::Config(format!(
            "positive_ratio {positive_ratio} outside (0, 1)"
        )));
    }
    let members_of = |set: &[ProposalClass]| -> Vec<usize> {
        classes
            .iter()
            .enumerate()
            .filter(|(_, c)| set.contains(c))
            .map(|(i, _)| i)
            .collect()
    };
    let positives = members_of(&[ProposalClass::Pos]);
    if positives.is_empty() {
        return Err(SamplingError::NoPositives);
    }

    let negatives: Vec<_> = strategy
        .negative_groups()
        .into_iter()
        .map(|(name, set, share)| (name, members_of(&set), set, share))
        .filter(|(_, members, _, _)| !members.is_empty())
        .collect();
    let share_total: f64 = negatives.iter().map(|n| n.3).sum();
    let negative_mass = if negatives.is_empty() { 0.0 } else { 1.0 - positive_ratio };

    let mut groups = vec![SamplingGroup {
        name: "POS",
        classes: vec![ProposalClass::Pos],
        mass: 1.0 - negative_mass,
        members: positives,
    }];
    for (name, members, set, share) in negatives {
        groups.push(SamplingGroup {
            name,
            classes: set,
            mass: negative_mass * share / share_total,
            members,
        });
    }

    let mut weights: Vec<ProposalWeight> = groups
        .iter()
        .enumerate()
        .flat_map(|(g, group)| {
            let w = group.mass / group.members.len() as f64;
            group.members.iter().map(move |&index| ProposalWeight {
                index,
                weight: w,
                group: g,
            })
        })
        .collect();
    weights.sort_by_key(|w| w.index);
    Ok(ProposalWeights { groups, weights })
}

/// Draws `config.batch_size` proposal indices in proportion to their
/// weights by inverse-CDF lookup. A group whose membership is at least its
/// expected quota (`mass * batch_size`) is drawn without replacement inside
/// the batch until it runs out of members; smaller groups are drawn with
/// replacement.
pub fn sample_batch(weights: &ProposalWeights, config: &SamplerConfig) -> Result<Vec<usize>, SamplingError> {
    config.validate()?;
    if weights.weights.is_empty() {
        return Err(SamplingError::Empty);
    }
    let mut cumulative = Vec::with_capacity(weights.weights.len());
    let mut acc = 0.0;
    for w in &weights.weights {
        acc += w.weight;
        cumulative.push(acc);
    }
    let without_replacement: Vec<bool> = weights
        .groups
        .iter()
        .map(|g| g.members.len() as f64 >= g.mass * config.batch_size as f64)
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut taken: BTreeSet<usize> = BTreeSet::new();
    let mut batch = Vec::with_capacity(config.batch_size);
    for _ in 0..config.batch_size {
        let u = rng.random::<f64>() * acc;
        let pos = cumulative
            .partition_point(|&c| c <= u)
            .min(cumulative.len() - 1);
        let w = weights.weights[pos];
        let mut index = w.index;
        if without_replacement[w.group] && taken.contains(&index) {
            let free: Vec<usize> = weights.groups[w.group]
                .members
                .iter()
                .copied()
                .filter(|m| !taken.contains(m))
                .collect();
            // an exhausted group falls back to replacement
            if !free.is_empty() {
                index = free[rng.random_range(0..free.len())];
            }
        }
        taken.insert(index);
        batch.push(index);
    }
    Ok(batch)
}

/// Online hard example mining: keep positives up to the positive quota
/// (`round(batch_size * positive_ratio)`, a random subset when there are
/// more), then fill the rest with the highest-loss negatives. Ties between
/// equal losses go to the lower index. Positives come first in the output,
/// then negatives by decreasing loss.
pub fn ohem_select(
    is_positive: &[bool],
    losses: &[f64],
    batch_size: usize,
    positive_ratio: f64,
    seed: u64,
) -> Result<Vec<usize>, SamplingError> {
    assert_eq!(is_positive.len(), losses.len());
    if let Some(i) = losses.iter().position(|l| !l.is_finite()) {
        return Err(SamplingError::NonFiniteLoss(i));
    }
    let positives: Vec<usize> = (0..losses.len()).filter(|&i| is_positive[i]).collect();
    let mut negatives: Vec<usize> = (0..losses.len()).filter(|&i| !is_positive[i]).collect();

    let quota = ((batch_size as f64) * positive_ratio).round() as usize;
    let mut chosen: Vec<usize> = if positives.len() <= quota {
        positives
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pick: Vec<usize> = sample_indices(&mut rng, positives.len(), quota)
            .into_iter()
            .map(|k| positives[k])
            .collect();
        pick.sort_unstable();
        pick
    };
    negatives.sort_by(|&a, &b| losses[b].total_cmp(&losses[a]));
    let room = batch_size.saturating_sub(chosen.len());
    chosen.extend(negatives.into_iter().take(room));
    Ok(chosen)
}

/// Class frequencies of `draws` proposals sampled in consecutive batches
/// with seeds `seed, seed + 1, ...`.
pub fn empirical_frequencies(
    weights: &ProposalWeights,
    classes: &[ProposalClass],
    config: &SamplerConfig,
    draws: usize,
) -> Result<[usize; 6], SamplingError> {
    let mut counts = [0usize; 6];
    let mut remaining = draws;
    let mut cfg = *config;
    while remaining > 0 {
        let batch = sample_batch(weights, &cfg)?;
        for &i in batch.iter().take(remaining) {
            counts[classes[i].index()] += 1;
        }
        remaining = remaining.saturating_sub(batch.len());
        cfg.seed = cfg.seed.wrapping_add(1);
    }
    Ok(counts)
}
