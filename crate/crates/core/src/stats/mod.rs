//! Song-frequency statistics under full, partial and proxy information, and
//! inequality measures over recommendation counts.

mod inequality;

use std::collections::HashSet;
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::corpus::{Catalog, Playlist, SongId};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::seed;

pub use inequality::{gini, lorenz, InequalityReport};

/// Exact occurrence counts indexed by `SongId`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SongFrequencyTable {
    counts: Vec<u64>,
    total: u64,
}

impl SongFrequencyTable {
    pub fn zeros(n_songs: usize) -> Self {
        Self {
            counts: vec![0; n_songs],
            total: 0,
        }
    }

    pub fn count(&self, song: SongId) -> u64 {
        self.counts.get(song.index()).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n_songs(&self) -> usize {
        self.counts.len()
    }

    /// Songs with a non-zero count, with their counts.
    pub fn present(&self) -> impl Iterator<Item = (SongId, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (SongId(i as u32), c))
    }

    pub fn relative(&self, song: SongId) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count(song) as f64 / self.total as f64
        }
    }

    fn add(&mut self, playlist: &Playlist) {
        for &s in &playlist.tracks {
            self.counts[s.index()] += 1;
        }
        self.total += playlist.len() as u64;
    }

    fn merge(&mut self, other: &SongFrequencyTable) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
    }

    /// Songs ordered by ascending count, ties by ascending id.
    pub fn ascending(&self) -> Vec<SongId> {
        let mut songs: Vec<SongId> = (0..self.counts.len() as u32).map(SongId).collect();
        songs.sort_by_key(|s| (self.counts[s.index()], *s));
        songs
    }
}

/// Counts song occurrences over `playlists`, sized for a vocabulary of
/// `n_songs` ids.
pub fn count_frequencies(playlists: &[Playlist], n_songs: usize) -> SongFrequencyTable {
    count_frequencies_with(playlists, n_songs, Execution::default())
}

pub fn count_frequencies_with(
    playlists: &[Playlist],
    n_songs: usize,
    exec: Execution,
) -> SongFrequencyTable {
    let shards = par::shard_ranges(playlists.len());
    let partials = par::map(exec, &shards, |range| {
        let mut t = SongFrequencyTable::zeros(n_songs);
        for p in &playlists[range.clone()] {
            t.add(p);
        }
        t
    });
    let mut table = SongFrequencyTable::zeros(n_songs);
    for t in &partials {
        table.merge(t);
    }
    table
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Provenance {
    Full,
    Partial { beta: f64 },
    Proxy,
}

/// Estimated relative training-set frequency per song. `None` marks songs
/// whose frequency is unknown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEstimate {
    pub values: Vec<Option<f64>>,
    pub provenance: Provenance,
}

impl FrequencyEstimate {
    pub fn full(table: &SongFrequencyTable) -> Self {
        Self {
            values: (0..table.n_songs() as u32)
                .map(|i| Some(table.relative(SongId(i))))
                .collect(),
            provenance: Provenance::Full,
        }
    }

    pub fn get(&self, song: SongId) -> Option<f64> {
        self.values.get(song.index()).copied().flatten()
    }

    pub fn n_known(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// Grows the table to `n_songs`, marking new songs unknown.
    pub fn resized(mut self, n_songs: usize) -> Self {
        self.values.resize(n_songs, None);
        self
    }
}

/// Frequencies pooled from the collective's own playlists plus a uniformly
/// sampled `beta` fraction of `extra` (playlists outside the collective).
/// Songs never seen get estimate 0.
pub fn estimate_partial(
    collective: &[Playlist],
    extra: &[Playlist],
    beta: f64,
    n_songs: usize,
    rng_seed: u64,
) -> Result<FrequencyEstimate> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Config(format!("beta must be in [0,1], got {beta}")));
    }
    let k = crate::corpus::collective_size(beta, extra.len());
    let picked = index::sample(&mut seed::rng(rng_seed), extra.len(), k).into_vec();
    let mut pool: Vec<Playlist> = collective.to_vec();
    let mut picked = picked;
    picked.sort_unstable();
    pool.extend(picked.into_iter().map(|i| extra[i].clone()));
    let table = count_frequencies(&pool, n_songs);
    Ok(FrequencyEstimate {
        values: (0..n_songs as u32)
            .map(|i| Some(table.relative(SongId(i))))
            .collect(),
        provenance: Provenance::Partial { beta },
    })
}

#[derive(Debug, Deserialize)]
struct ProxyRow {
    song_id: String,
    stream_count: f64,
}

/// Reads a `song_id,stream_count` CSV. Counts are normalised by their sum;
/// songs absent from the file (or from the catalog) stay unknown.
pub fn estimate_proxy(path: impl AsRef<Path>, catalog: &Catalog) -> Result<FrequencyEstimate> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers()?.clone();
    for col in ["song_id", "stream_count"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Schema {
                path: path.to_owned(),
                field: col.into(),
                message: "missing CSV column".into(),
            });
        }
    }
    let mut raw: Vec<Option<f64>> = vec![None; catalog.len()];
    let mut unmatched = 0usize;
    for (line, row) in reader.deserialize::<ProxyRow>().enumerate() {
        let row = row?;
        if !(row.stream_count >= 0.0) || !row.stream_count.is_finite() {
            return Err(Error::Schema {
                path: path.to_owned(),
                field: "stream_count".into(),
                message: format!(
                    "invalid count {} for {} on row {}",
                    row.stream_count,
                    row.song_id,
                    line + 2
                ),
            });
        }
        match catalog.song(&row.song_id) {
            Some(s) => raw[s.index()] = Some(row.stream_count),
            None => unmatched += 1,
        }
    }
    if unmatched > 0 {
        log::debug!("{unmatched} proxy rows name songs outside the catalog");
    }
    let total: f64 = raw.iter().flatten().sum();
    let values = raw
        .into_iter()
        .map(|v| v.map(|c| if total > 0.0 { c / total } else { 0.0 }))
        .collect();
    Ok(FrequencyEstimate {
        values,
        provenance: Provenance::Proxy,
    })
}

/// Writes a proxy-counts CSV (`song_id,stream_count`).
pub fn write_proxy(
    path: impl AsRef<Path>,
    catalog: &Catalog,
    counts: impl IntoIterator<Item = (SongId, f64)>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["song_id", "stream_count"])?;
    for (s, c) in counts {
        w.write_record([catalog.song_name(s), &c.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorEstimate {
    pub song: SongId,
    pub estimated: f64,
    pub true_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateComparison {
    pub pairs: Vec<AnchorEstimate>,
    /// Mean of `ln(estimated / true)` over pairs where both are positive.
    pub mean_log_ratio: f64,
}

/// Estimated vs. true relative frequency for each targeted anchor. Anchors
/// unknown to the estimate report 0; anchors absent from the truth report 0.
pub fn compare_estimates(
    estimate: &FrequencyEstimate,
    truth: &SongFrequencyTable,
    anchors: &[SongId],
) -> EstimateComparison {
    let pairs: Vec<AnchorEstimate> = anchors
        .iter()
        .map(|&song| AnchorEstimate {
            song,
            estimated: estimate.get(song).unwrap_or(0.0),
            true_prob: truth.relative(song),
        })
        .collect();
    let logs: Vec<f64> = pairs
        .iter()
        .filter(|p| p.estimated > 0.0 && p.true_prob > 0.0)
        .map(|p| (p.estimated / p.true_prob).ln())
        .collect();
    let mean_log_ratio = if logs.is_empty() {
        0.0
    } else {
        logs.iter().sum::<f64>() / logs.len() as f64
    };
    EstimateComparison {
        pairs,
        mean_log_ratio,
    }
}

/// Distinct songs in a set of playlists.
pub fn vocabulary(playlists: &[Playlist]) -> HashSet<SongId> {
    playlists.iter().flat_map(|p| p.tracks.iter().copied()).collect()
}
