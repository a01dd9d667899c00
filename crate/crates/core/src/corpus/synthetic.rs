//! Desk-scale synthetic playlist corpora.
//!
//! Song popularity follows a Zipf law over a random permutation of the song
//! ids. Each song owns a short table of preferred successors; the next track
//! of a playlist is drawn from the previous track's successor table with
//! probability `coherence` and from the global popularity law otherwise.
//! Songs already in the playlist are rejected and redrawn.

use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Catalog, Corpus, Playlist, SongId};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthDistribution {
    pub min: usize,
    pub max: usize,
    /// Mean of the untruncated shifted geometric law; the realised mean is
    /// slightly lower when `max` truncates it.
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_songs: usize,
    pub n_artists: usize,
    pub n_playlists: usize,
    pub length: LengthDistribution,
    pub zipf_exponent: f64,
    pub coherence: f64,
    pub successors_per_song: usize,
    pub seed: u64,
}

fn default_successors() -> usize {
    8
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_songs: 2_000,
            n_artists: 400,
            n_playlists: 20_000,
            length: LengthDistribution {
                min: 5,
                max: 40,
                mean: 12.0,
            },
            zipf_exponent: 1.1,
            coherence: 0.6,
            successors_per_song: default_successors(),
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.n_songs == 0 || self.n_artists == 0 || self.n_playlists == 0 {
            return err("n_songs, n_artists and n_playlists must be positive".into());
        }
        if !(self.zipf_exponent > 0.0) {
            return err(format!("zipf_exponent must be > 0, got {}", self.zipf_exponent));
        }
        if !(0.0..=1.0).contains(&self.coherence) {
            return err(format!("coherence must be in [0,1], got {}", self.coherence));
        }
        let l = &self.length;
        if l.min == 0 || l.min > l.max {
            return err(format!("invalid playlist length range [{}, {}]", l.min, l.max));
        }
        if !(l.mean >= l.min as f64) {
            return err(format!("mean length {} below minimum {}", l.mean, l.min));
        }
        if l.max > self.n_songs {
            return err(format!(
                "playlist length {} exceeds n_songs {}",
                l.max, self.n_songs
            ));
        }
        Ok(())
    }
}

pub fn song_name(i: usize) -> String {
    format!("song:{i:07}")
}

pub fn artist_name(i: usize) -> String {
    format!("artist:{i:06}")
}

fn zipf_weights(n: usize, exponent: f64) -> Vec<f64> {
    (1..=n).map(|r| (r as f64).powf(-exponent)).collect()
}

fn draw_length<R: Rng>(rng: &mut R, l: &LengthDistribution) -> usize {
    let extra_mean = l.mean - l.min as f64;
    if extra_mean <= 0.0 || l.min == l.max {
        return l.min;
    }
    let p = 1.0 / (extra_mean + 1.0);
    loop {
        let u: f64 = rng.random();
        let k = ((1.0 - u).ln() / (1.0 - p).ln()).floor() as usize;
        let len = l.min + k;
        if len <= l.max {
            return len;
        }
    }
}

struct Successors {
    songs: Vec<SongId>,
    dist: WeightedIndex<f64>,
}

const MAX_REDRAWS: usize = 64;

/// Generates a corpus; identical configs yield identical corpora.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Corpus> {
    config.validate()?;
    let mut rng = seed::rng(config.seed);
    let n = config.n_songs;

    // rank -> song id
    let mut by_rank: Vec<SongId> = (0..n as u32).map(SongId).collect();
    by_rank.shuffle(&mut rng);
    let popularity = WeightedIndex::new(zipf_weights(n, config.zipf_exponent))
        .map_err(|e| Error::Config(e.to_string()))?;

    let artist_dist = WeightedIndex::new(zipf_weights(config.n_artists, 1.0))
        .map_err(|e| Error::Config(e.to_string()))?;
    let artists: Vec<usize> = (0..n).map(|_| artist_dist.sample(&mut rng)).collect();
    let pairs: Vec<(String, String)> = (0..n)
        .map(|i| (song_name(i), artist_name(artists[i])))
        .collect();
    let catalog = Catalog::from_pairs(pairs.iter().map(|(s, a)| (s.as_str(), a.as_str())));

    let n_succ = config.successors_per_song.min(n.saturating_sub(1));
    let succ_weights = zipf_weights(n_succ.max(1), 1.0);
    let successors: Vec<Option<Successors>> = (0..n)
        .map(|i| {
            if n_succ == 0 {
                return None;
            }
            let mut songs = Vec::with_capacity(n_succ);
            let mut attempts = 0;
            while songs.len() < n_succ {
                attempts += 1;
                let s = if attempts <= 50 * n_succ {
                    by_rank[popularity.sample(&mut rng)]
                } else {
                    SongId(rng.random_range(0..n as u32))
                };
                if s.index() != i && !songs.contains(&s) {
                    songs.push(s);
                }
            }
            Some(Successors {
                songs,
                dist: WeightedIndex::new(&succ_weights[..n_succ]).expect("positive weights"),
            })
        })
        .collect();

    let mut playlists = Vec::with_capacity(config.n_playlists);
    let mut used = vec![false; n];
    for pid in 0..config.n_playlists {
        let len = draw_length(&mut rng, &config.length);
        let mut tracks: Vec<SongId> = Vec::with_capacity(len);
        while tracks.len() < len {
            let mut chosen = None;
            for _ in 0..MAX_REDRAWS {
                let from_successors = match tracks.last() {
                    Some(prev) if config.coherence > 0.0 => {
                        rng.random::<f64>() < config.coherence
                            && successors[prev.index()].is_some()
                    }
                    _ => false,
                };
                let candidate = if from_successors {
                    let table = successors[tracks.last().unwrap().index()].as_ref().unwrap();
                    table.songs[table.dist.sample(&mut rng)]
                } else {
                    by_rank[popularity.sample(&mut rng)]
                };
                if !used[candidate.index()] {
                    chosen = Some(candidate);
                    break;
                }
            }
            let song = chosen.unwrap_or_else(|| {
                let free: Vec<SongId> = (0..n as u32)
                    .map(SongId)
                    .filter(|s| !used[s.index()])
                    .collect();
                free[rng.random_range(0..free.len())]
            });
            used[song.index()] = true;
            tracks.push(song);
        }
        for s in &tracks {
            used[s.index()] = false;
        }
        playlists.push(Playlist::new(pid as u64, tracks));
    }
    Ok(Corpus::new(Arc::new(catalog), playlists))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            n_songs: 300,
            n_artists: 40,
            n_playlists: 500,
            length: LengthDistribution {
                min: 2,
                max: 30,
                mean: 8.0,
            },
            seed,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_synthetic(&small(3)).unwrap();
        let b = generate_synthetic(&small(3)).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&small(4)).unwrap();
        assert_ne!(a.playlists, c.playlists);
    }

    #[test]
    fn no_duplicates_and_lengths_in_range() {
        let c = generate_synthetic(&small(1)).unwrap();
        for p in &c.playlists {
            assert!((2..=30).contains(&p.len()));
            let mut t = p.tracks.clone();
            t.sort();
            t.dedup();
            assert_eq!(t.len(), p.len());
        }
    }

    #[test]
    fn full_length_playlists_are_permutations() {
        let cfg = SyntheticConfig {
            n_songs: 5,
            n_artists: 2,
            n_playlists: 50,
            length: LengthDistribution {
                min: 5,
                max: 5,
                mean: 5.0,
            },
            ..SyntheticConfig::default()
        };
        let c = generate_synthetic(&cfg).unwrap();
        for p in &c.playlists {
            let mut t = p.tracks.clone();
            t.sort();
            assert_eq!(t, (0..5).map(SongId).collect::<Vec<_>>());
        }
    }

    #[test]
    fn rejects_length_above_catalog() {
        let mut cfg = small(0);
        cfg.length.max = 301;
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn names_sort_like_ids() {
        let c = generate_synthetic(&small(0)).unwrap();
        assert_eq!(c.catalog.len(), 300);
        assert_eq!(c.catalog.song(&song_name(17)), Some(SongId(17)));
    }
}
