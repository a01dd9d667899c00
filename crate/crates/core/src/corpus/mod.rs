//! Songs, playlists and corpora.
//!
//! Songs and artists are interned into dense integer ids. Corpora loaded from
//! disk intern names in ascending lexicographic order, so ascending [`SongId`]
//! coincides with ascending song name; ids added later (the target song) are
//! appended at the end.

mod io;
mod split;
mod synthetic;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use io::{load_canonical, load_mpd_slice, load_mpd_slices, save_canonical, MpdLoad};
pub use split::{
    collective_size, make_seed_splits, sample_collective, split, SeedSplit, SeedSplits, Split,
    MAX_SEED_LEN,
};
pub use synthetic::{generate_synthetic, LengthDistribution, SyntheticConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SongId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ArtistId(pub u32);

impl SongId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for SongId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Corpus-wide song and artist tables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    song_names: Vec<String>,
    song_artist: Vec<ArtistId>,
    artist_names: Vec<String>,
    song_index: HashMap<String, SongId>,
    artist_index: HashMap<String, ArtistId>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a catalog from `(song, artist)` name pairs, interning both in
    /// ascending name order. Later duplicates of a song name are ignored.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut map = std::collections::BTreeMap::new();
        for (song, artist) in pairs {
            map.entry(song).or_insert(artist);
        }
        let mut artists: Vec<&str> = map.values().copied().collect();
        artists.sort_unstable();
        artists.dedup();
        let mut catalog = Catalog::new();
        for a in artists {
            catalog.intern_artist(a);
        }
        for (song, artist) in map {
            catalog.add_song(song, artist);
        }
        catalog
    }

    fn intern_artist(&mut self, name: &str) -> ArtistId {
        if let Some(&id) = self.artist_index.get(name) {
            return id;
        }
        let id = ArtistId(self.artist_names.len() as u32);
        self.artist_names.push(name.to_owned());
        self.artist_index.insert(name.to_owned(), id);
        id
    }

    /// Adds a song, returning the existing id if the name is already known.
    pub fn add_song(&mut self, name: &str, artist: &str) -> SongId {
        if let Some(&id) = self.song_index.get(name) {
            return id;
        }
        let artist = self.intern_artist(artist);
        let id = SongId(self.song_names.len() as u32);
        self.song_names.push(name.to_owned());
        self.song_artist.push(artist);
        self.song_index.insert(name.to_owned(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.song_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.song_names.is_empty()
    }

    pub fn n_artists(&self) -> usize {
        self.artist_names.len()
    }

    pub fn song(&self, name: &str) -> Option<SongId> {
        self.song_index.get(name).copied()
    }

    pub fn song_name(&self, id: SongId) -> &str {
        &self.song_names[id.index()]
    }

    pub fn artist_of(&self, id: SongId) -> ArtistId {
        self.song_artist[id.index()]
    }

    pub fn artist_name(&self, id: ArtistId) -> &str {
        &self.artist_names[id.0 as usize]
    }

    /// Song → artist table indexed by `SongId`.
    pub fn artists(&self) -> &[ArtistId] {
        &self.song_artist
    }

    pub fn songs(&self) -> impl Iterator<Item = SongId> + '_ {
        (0..self.song_names.len() as u32).map(SongId)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Playlist {
    pub id: u64,
    pub tracks: Vec<SongId>,
}

impl Playlist {
    pub fn new(id: u64, tracks: Vec<SongId>) -> Self {
        Self { id, tracks }
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn contains(&self, song: SongId) -> bool {
        self.tracks.contains(&song)
    }

    pub fn position(&self, song: SongId) -> Option<usize> {
        self.tracks.iter().position(|&s| s == song)
    }
}

/// A set of playlists sharing one catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub catalog: Arc<Catalog>,
    pub playlists: Vec<Playlist>,
}

impl Corpus {
    pub fn new(catalog: Arc<Catalog>, playlists: Vec<Playlist>) -> Self {
        Self { catalog, playlists }
    }

    /// Number of playlists.
    pub fn n(&self) -> usize {
        self.playlists.len()
    }

    pub fn total_tracks(&self) -> usize {
        self.playlists.iter().map(Playlist::len).sum()
    }

    pub fn mean_length(&self) -> f64 {
        if self.playlists.is_empty() {
            return 0.0;
        }
        self.total_tracks() as f64 / self.n() as f64
    }

    /// Same playlists, different catalog (e.g. one extended with a target).
    pub fn with_catalog(&self, catalog: Arc<Catalog>) -> Self {
        Self {
            catalog,
            playlists: self.playlists.clone(),
        }
    }

    pub fn subset(&self, playlists: Vec<Playlist>) -> Self {
        Self {
            catalog: Arc::clone(&self.catalog),
            playlists,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_pairs_sorts_names() {
        let c = Catalog::from_pairs([("b", "y"), ("a", "x"), ("c", "x")]);
        assert_eq!(c.song("a"), Some(SongId(0)));
        assert_eq!(c.song("c"), Some(SongId(2)));
        assert_eq!(c.artist_name(c.artist_of(SongId(1))), "y");
        assert_eq!(c.artist_of(SongId(0)), c.artist_of(SongId(2)));
    }

    #[test]
    fn add_song_appends() {
        let mut c = Catalog::from_pairs([("a", "x")]);
        let t = c.add_song("zz-target", "new-artist");
        assert_eq!(t, SongId(1));
        assert_eq!(c.add_song("zz-target", "other"), t);
        assert_eq!(c.n_artists(), 2);
    }
}
