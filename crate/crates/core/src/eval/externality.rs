//! Who gains and who loses recommendations when the target enters the
//! training data.

use serde::{Deserialize, Serialize};

use super::bootstrap::Summary;
use crate::corpus::SongId;
use crate::recommender::Recommendation;
use crate::seed;
use crate::strategy::{AnchorKind, ManipulationLog};

pub const N_BINS: usize = 50;

/// How many of the recommendation lists contain each song.
pub fn recommendation_counts(recs: &[Recommendation], n_songs: usize) -> Vec<u64> {
    let mut counts = vec![0u64; n_songs];
    for r in recs {
        for s in &r.songs {
            counts[s.index()] += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyBin {
    pub bin: usize,
    /// Edges on the log10 training-count axis.
    pub log10_low: f64,
    pub log10_high: f64,
    pub n_songs: usize,
    pub delta: Option<Summary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SongGroup {
    DirectAnchors,
    IndirectAnchors,
    Target,
    Others,
}

impl SongGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            SongGroup::DirectAnchors => "direct_anchors",
            SongGroup::IndirectAnchors => "indirect_anchors",
            SongGroup::Target => "target",
            SongGroup::Others => "others",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: SongGroup,
    pub n_songs: usize,
    pub total_delta: i64,
    pub delta: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalityReport {
    /// Songs counted in the clean training data (target excluded).
    pub train_counts: Vec<u64>,
    pub clean_counts: Vec<u64>,
    pub manipulated_counts: Vec<u64>,
    pub delta: Vec<i64>,
    pub total_delta: i64,
    pub bins: Vec<FrequencyBin>,
    pub groups: Vec<GroupSummary>,
}

/// `ΔR(s)` between recommendation lists for the same seeds, binned by
/// log10 training frequency and grouped by anchor role. Songs never seen
/// in training have no place on the log axis and appear only in groups.
pub fn externality_delta(
    clean: &[Recommendation],
    manipulated: &[Recommendation],
    train_counts: &[u64],
    log: Option<&ManipulationLog>,
    target: SongId,
    rng_seed: u64,
) -> ExternalityReport {
    let n_songs = train_counts.len();
    let clean_counts = recommendation_counts(clean, n_songs);
    let manipulated_counts = recommendation_counts(manipulated, n_songs);
    let delta: Vec<i64> = clean_counts
        .iter()
        .zip(&manipulated_counts)
        .map(|(&c, &m)| m as i64 - c as i64)
        .collect();
    let total_delta = delta.iter().sum();

    let logs: Vec<(usize, f64)> = train_counts
        .iter()
        .enumerate()
        .filter(|&(i, &c)| c > 0 && i != target.index())
        .map(|(i, &c)| (i, (c as f64).log10()))
        .collect();
    let lo = logs.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    let hi = logs.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if logs.is_empty() {
        (0.0, 1.0)
    } else if hi > lo {
        (lo, hi)
    } else {
        (lo, lo + 1.0)
    };
    let width = (hi - lo) / N_BINS as f64;
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); N_BINS];
    for &(i, l) in &logs {
        let b = (((l - lo) / width) as usize).min(N_BINS - 1);
        members[b].push(delta[i] as f64);
    }
    let bins = members
        .iter()
        .enumerate()
        .map(|(b, vals)| FrequencyBin {
            bin: b,
            log10_low: lo + b as f64 * width,
            log10_high: lo + (b + 1) as f64 * width,
            n_songs: vals.len(),
            delta: Summary::of(vals, seed::derive(rng_seed, &[b as u64])),
        })
        .collect();

    let mut group_of = vec![SongGroup::Others; n_songs];
    if let Some(log) = log {
        for (s, (kind, _)) in log.anchor_counts() {
            if let Some(g) = group_of.get_mut(s.index()) {
                *g = match kind {
                    AnchorKind::Direct => SongGroup::DirectAnchors,
                    AnchorKind::Indirect => SongGroup::IndirectAnchors,
                    AnchorKind::None => SongGroup::Others,
                };
            }
        }
    }
    if let Some(g) = group_of.get_mut(target.index()) {
        *g = SongGroup::Target;
    }
    let groups = [
        SongGroup::DirectAnchors,
        SongGroup::IndirectAnchors,
        SongGroup::Target,
        SongGroup::Others,
    ]
    .into_iter()
    .enumerate()
    .map(|(gi, group)| {
        let vals: Vec<i64> = (0..n_songs)
            .filter(|&i| group_of[i] == group)
            .map(|i| delta[i])
            .collect();
        let fv: Vec<f64> = vals.iter().map(|&v| v as f64).collect();
        GroupSummary {
            group,
            n_songs: vals.len(),
            total_delta: vals.iter().sum(),
            delta: Summary::of(&fv, seed::derive(rng_seed, &[1000 + gi as u64])),
        }
    })
    .collect();

    ExternalityReport {
        train_counts: train_counts.to_vec(),
        clean_counts,
        manipulated_counts,
        delta,
        total_delta,
        bins,
        groups,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(v: &[u32]) -> Recommendation {
        Recommendation {
            songs: v.iter().map(|&i| SongId(i)).collect(),
            scores: vec![0.0; v.len()],
        }
    }

    #[test]
    fn identical_lists_have_no_delta() {
        let recs = vec![rec(&[0, 1]), rec(&[2, 1])];
        let r = externality_delta(&recs, &recs, &[3, 5, 1, 0], None, SongId(3), 0);
        assert!(r.delta.iter().all(|&d| d == 0));
        assert_eq!(r.bins.len(), N_BINS);
    }

    #[test]
    fn fixed_k_is_zero_sum() {
        let clean = vec![rec(&[0, 1]), rec(&[2, 1])];
        let manip = vec![rec(&[3, 1]), rec(&[2, 3])];
        let r = externality_delta(&clean, &manip, &[3, 5, 1, 0], None, SongId(3), 0);
        assert_eq!(r.total_delta, 0);
        assert_eq!(r.delta, vec![-1, -1, 0, 2]);
        let target = r.groups.iter().find(|g| g.group == SongGroup::Target).unwrap();
        assert_eq!(target.total_delta, 2);
    }

    #[test]
    fn bins_cover_every_counted_song() {
        let train: Vec<u64> = (0..200).map(|i| (i * 7 % 50) as u64).collect();
        let r = externality_delta(&[], &[], &train, None, SongId(199), 0);
        let binned: usize = r.bins.iter().map(|b| b.n_songs).sum();
        let expected = train.iter().enumerate().filter(|&(i, &c)| c > 0 && i != 199).count();
        assert_eq!(binned, expected);
    }
}
