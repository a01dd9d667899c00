//! Authenticity-constrained playlist manipulation.
//!
//! Every strategy inserts the target song exactly once into each collective
//! playlist, so a manipulated playlist is always within edit distance one of
//! its original. Insertion indices address the gaps `0..=L` of a playlist of
//! length `L`: inserting before the track at position `k` uses index `k`,
//! after it `k + 1`.

mod baseline;
mod coordinated;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Playlist, SongId};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::stats::FrequencyEstimate;

pub use baseline::apply_baseline;
pub use coordinated::{apply_dirlof, apply_hybrid, apply_inclust};

/// Where a coordinated strategy gets its song-frequency statistics from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum FrequencySource {
    /// Exact counts over the clean training data.
    #[default]
    Full,
    /// Collective playlists plus a `beta` fraction of the other training playlists.
    Partial { beta: f64 },
    /// External stream counts (`song_id,stream_count` CSV).
    Proxy { path: std::path::PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StrategyKind {
    /// No manipulation; control runs.
    None,
    Random,
    AtTheEnd,
    InsertAt {
        index: usize,
    },
    RandomRange {
        from: usize,
        to: usize,
    },
    #[serde(rename = "inclust")]
    InClust {
        #[serde(default)]
        max_anchors: Option<usize>,
    },
    #[serde(rename = "dirlof")]
    DirLoF {
        #[serde(default)]
        frequency: FrequencySource,
    },
    /// InClust while the top pooled count is at least `lambda`, DirLoF for
    /// the rest. `u64::MAX` never takes the InClust branch.
    Hybrid {
        lambda: u64,
        #[serde(default)]
        frequency: FrequencySource,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    /// Label used in reports; defaults to [`StrategyKind::label`].
    #[serde(default)]
    pub name: Option<String>,
    #[serde(flatten)]
    pub kind: StrategyKind,
}

impl StrategyKind {
    pub fn label(&self) -> String {
        match self {
            StrategyKind::None => "none".into(),
            StrategyKind::Random => "random".into(),
            StrategyKind::AtTheEnd => "at_the_end".into(),
            StrategyKind::InsertAt { index } => format!("insert@{index}"),
            StrategyKind::RandomRange { from, to } => format!("random@{from}-{to}"),
            StrategyKind::InClust { max_anchors: None } => "inclust".into(),
            StrategyKind::InClust {
                max_anchors: Some(m),
            } => format!("inclust_max{m}"),
            StrategyKind::DirLoF { frequency } => format!("dirlof{}", source_suffix(frequency)),
            StrategyKind::Hybrid { lambda, frequency } => {
                format!("hybrid{lambda}{}", source_suffix(frequency))
            }
        }
    }

    pub fn frequency_source(&self) -> Option<&FrequencySource> {
        match self {
            StrategyKind::DirLoF { frequency } | StrategyKind::Hybrid { frequency, .. } => {
                Some(frequency)
            }
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StrategyKind::RandomRange { from, to } if from > to => Err(Error::Config(format!(
                "random range needs from <= to, got {from} > {to}"
            ))),
            StrategyKind::Hybrid { lambda: 0, .. } => {
                Err(Error::Config("hybrid lambda must be >= 1".into()))
            }
            StrategyKind::InClust {
                max_anchors: Some(0),
            } => Err(Error::Config("max_anchors must be >= 1".into())),
            _ => match self.frequency_source() {
                Some(FrequencySource::Partial { beta }) if !(0.0..=1.0).contains(beta) => {
                    Err(Error::Config(format!("beta must be in [0,1], got {beta}")))
                }
                _ => Ok(()),
            },
        }
    }
}

/// Parses report labels such as `random`, `insert@3`, `random@1-5`,
/// `inclust`, `dirlof_partial0.1` or `hybrid10`. Proxy sources need a path
/// and are only available through configuration files.
impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown strategy `{s}`"));
        let num = |t: &str| t.parse::<usize>().map_err(|_| bad());
        let (head, frequency) = match s.split_once("_partial") {
            Some((h, b)) => (h, FrequencySource::Partial {
                beta: b.parse().map_err(|_| bad())?,
            }),
            None => (s, FrequencySource::Full),
        };
        let kind = match head {
            "none" => StrategyKind::None,
            "random" => StrategyKind::Random,
            "at_the_end" => StrategyKind::AtTheEnd,
            "inclust" => StrategyKind::InClust { max_anchors: None },
            "dirlof" => StrategyKind::DirLoF { frequency },
            "hybridinf" => StrategyKind::Hybrid {
                lambda: u64::MAX,
                frequency,
            },
            _ => {
                if let Some(i) = head.strip_prefix("insert@") {
                    StrategyKind::InsertAt { index: num(i)? }
                } else if let Some(r) = head.strip_prefix("random@") {
                    let (a, b) = r.split_once('-').ok_or_else(bad)?;
                    StrategyKind::RandomRange {
                        from: num(a)?,
                        to: num(b)?,
                    }
                } else if let Some(m) = head.strip_prefix("inclust_max") {
                    StrategyKind::InClust {
                        max_anchors: Some(num(m)?),
                    }
                } else if let Some(l) = head.strip_prefix("hybrid") {
                    StrategyKind::Hybrid {
                        lambda: l.parse().map_err(|_| bad())?,
                        frequency,
                    }
                } else {
                    return Err(bad());
                }
            }
        };
        if head != "dirlof" && !head.starts_with("hybrid") && s.contains("_partial") {
            return Err(bad());
        }
        kind.validate()?;
        Ok(kind)
    }
}

fn source_suffix(source: &FrequencySource) -> String {
    match source {
        FrequencySource::Full => String::new(),
        FrequencySource::Partial { beta } => format!("_partial{beta}"),
        FrequencySource::Proxy { .. } => "_proxy".into(),
    }
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        Self { name: None, kind }
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorKind {
    /// Low-frequency song; the target goes right after it.
    Direct,
    /// High-frequency song; the target goes right before it.
    Indirect,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub playlist_id: u64,
    pub index: usize,
    pub anchor: Option<SongId>,
    pub kind: AnchorKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    TargetPresent,
    NoKnownFrequency,
    AnchorLimit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub playlist_id: u64,
    pub reason: SkipReason,
}

/// One InClust selection round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorRound {
    pub anchor: SongId,
    /// Count of the anchor in the still-unmodified pool when it was chosen.
    pub pool_count: u64,
    pub playlists: usize,
}

/// Every collective playlist appears exactly once, either in `placements`
/// or in `skipped`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManipulationLog {
    pub strategy: StrategyConfig,
    pub target: SongId,
    pub placements: Vec<Placement>,
    pub skipped: Vec<Skipped>,
    #[serde(default)]
    pub rounds: Vec<AnchorRound>,
}

impl ManipulationLog {
    pub(crate) fn new(strategy: StrategyConfig, target: SongId) -> Self {
        Self {
            strategy,
            target,
            placements: Vec::new(),
            skipped: Vec::new(),
            rounds: Vec::new(),
        }
    }

    /// How often each anchor was targeted, with its kind.
    pub fn anchor_counts(&self) -> BTreeMap<SongId, (AnchorKind, usize)> {
        let mut out = BTreeMap::new();
        for p in &self.placements {
            if let Some(a) = p.anchor {
                out.entry(a).or_insert((p.kind, 0)).1 += 1;
            }
        }
        out
    }

    pub fn anchors_of_kind(&self, kind: AnchorKind) -> Vec<SongId> {
        self.anchor_counts()
            .into_iter()
            .filter(|(_, (k, _))| *k == kind)
            .map(|(s, _)| s)
            .collect()
    }

    pub fn n_collective(&self) -> usize {
        self.placements.len() + self.skipped.len()
    }
}

/// Manipulated playlists (input order, unmodified ones included) and the log.
#[derive(Debug, Clone, PartialEq)]
pub struct Manipulation {
    pub playlists: Vec<Playlist>,
    pub log: ManipulationLog,
}

/// Inputs a strategy may need besides the playlists.
#[derive(Debug, Clone, Copy)]
pub struct StrategyContext<'a> {
    pub estimate: Option<&'a FrequencyEstimate>,
    pub n_songs: usize,
    pub rng_seed: u64,
    pub exec: Execution,
}

/// Applies any strategy to the collective's playlists.
pub fn apply(
    config: &StrategyConfig,
    playlists: &[Playlist],
    target: SongId,
    ctx: StrategyContext<'_>,
) -> Result<Manipulation> {
    config.kind.validate()?;
    let need_estimate = || {
        ctx.estimate.ok_or_else(|| {
            Error::Config(format!("strategy {} needs a frequency estimate", config.label()))
        })
    };
    let mut m = match &config.kind {
        StrategyKind::None => Manipulation {
            playlists: playlists.to_vec(),
            log: ManipulationLog::new(config.clone(), target),
        },
        StrategyKind::Random
        | StrategyKind::AtTheEnd
        | StrategyKind::InsertAt { .. }
        | StrategyKind::RandomRange { .. } => {
            apply_baseline(playlists, &config.kind, target, ctx.rng_seed)?
        }
        StrategyKind::InClust { max_anchors } => {
            apply_inclust(playlists, target, *max_anchors, ctx.n_songs)
        }
        StrategyKind::DirLoF { .. } => apply_dirlof(playlists, target, need_estimate()?, ctx.exec),
        StrategyKind::Hybrid { lambda, .. } => {
            apply_hybrid(playlists, target, need_estimate()?, *lambda, ctx.n_songs)
        }
    };
    m.log.strategy = config.clone();
    Ok(m)
}

pub(crate) fn inserted(p: &Playlist, index: usize, target: SongId) -> Playlist {
    let mut tracks = Vec::with_capacity(p.len() + 1);
    tracks.extend_from_slice(&p.tracks[..index]);
    tracks.push(target);
    tracks.extend_from_slice(&p.tracks[index..]);
    Playlist::new(p.id, tracks)
}

/// Edit distance with unit insert/delete/substitute costs.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn check_authentic<T: PartialEq>(original: &[T], modified: &[T]) -> bool {
    // lengths differing by more than one already imply distance > 1
    original.len().abs_diff(modified.len()) <= 1 && levenshtein(original, modified) <= 1
}
