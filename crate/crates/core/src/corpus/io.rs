//! Reading MPD-style JSON slices and the canonical NDJSON corpus format.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Catalog, Corpus, Playlist};
use crate::error::{Error, Result};

pub const PLAYLISTS_FILE: &str = "playlists.jsonl";
pub const SONGS_FILE: &str = "songs.json";

/// Result of loading MPD slices.
#[derive(Debug, Clone)]
pub struct MpdLoad {
    pub corpus: Corpus,
    /// Tracks dropped because their `track_uri` already occurred earlier in
    /// the same playlist.
    pub duplicates_dropped: usize,
}

struct RawPlaylist {
    pid: u64,
    tracks: Vec<(u64, String, String)>,
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

fn parse_json(path: &Path, text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_owned(),
        offset: byte_offset(text, e.line(), e.column()),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn schema(path: &Path, field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_owned(),
        field: field.into(),
        message: message.into(),
    }
}

fn field<'a>(path: &Path, obj: &'a Value, name: &str, at: &str) -> Result<&'a Value> {
    obj.get(name)
        .ok_or_else(|| schema(path, name, format!("missing required field at {at}")))
}

fn as_u64(path: &Path, v: &Value, name: &str, at: &str) -> Result<u64> {
    v.as_u64()
        .ok_or_else(|| schema(path, name, format!("expected non-negative integer at {at}")))
}

fn as_str<'a>(path: &Path, v: &'a Value, name: &str, at: &str) -> Result<&'a str> {
    v.as_str()
        .ok_or_else(|| schema(path, name, format!("expected string at {at}")))
}

fn parse_mpd(path: &Path, root: &Value) -> Result<Vec<RawPlaylist>> {
    let playlists = field(path, root, "playlists", "root")?
        .as_array()
        .ok_or_else(|| schema(path, "playlists", "expected array"))?;
    let mut out = Vec::with_capacity(playlists.len());
    for (pi, p) in playlists.iter().enumerate() {
        let at = format!("playlists[{pi}]");
        let pid = as_u64(path, field(path, p, "pid", &at)?, "pid", &at)?;
        let tracks = field(path, p, "tracks", &at)?
            .as_array()
            .ok_or_else(|| schema(path, "tracks", format!("expected array at {at}")))?;
        let mut raw = Vec::with_capacity(tracks.len());
        for (ti, t) in tracks.iter().enumerate() {
            let at = format!("playlists[{pi}].tracks[{ti}]");
            let uri = as_str(path, field(path, t, "track_uri", &at)?, "track_uri", &at)?;
            let artist = as_str(path, field(path, t, "artist_uri", &at)?, "artist_uri", &at)?;
            let pos = as_u64(path, field(path, t, "pos", &at)?, "pos", &at)?;
            raw.push((pos, uri.to_owned(), artist.to_owned()));
        }
        // stable: equal positions keep file order
        raw.sort_by_key(|t| t.0);
        out.push(RawPlaylist { pid, tracks: raw });
    }
    Ok(out)
}

/// Loads one MPD-format slice file.
pub fn load_mpd_slice(path: impl AsRef<Path>) -> Result<MpdLoad> {
    load_mpd_slices(&[path.as_ref().to_owned()])
}

/// Loads and merges several MPD slice files into one corpus.
pub fn load_mpd_slices(paths: &[PathBuf]) -> Result<MpdLoad> {
    let mut raws = Vec::new();
    for path in paths {
        let text = read_to_string(path)?;
        let root = parse_json(path, &text)?;
        raws.extend(parse_mpd(path, &root)?);
    }
    let catalog = Catalog::from_pairs(
        raws.iter()
            .flat_map(|p| p.tracks.iter().map(|(_, s, a)| (s.as_str(), a.as_str()))),
    );
    let mut duplicates_dropped = 0;
    let playlists = raws
        .iter()
        .map(|raw| {
            let mut seen = HashSet::new();
            let mut tracks = Vec::with_capacity(raw.tracks.len());
            for (_, uri, _) in &raw.tracks {
                let id = catalog.song(uri).expect("interned above");
                if seen.insert(id) {
                    tracks.push(id);
                } else {
                    duplicates_dropped += 1;
                }
            }
            Playlist::new(raw.pid, tracks)
        })
        .collect();
    if duplicates_dropped > 0 {
        log::info!("dropped {duplicates_dropped} duplicate tracks during ingestion");
    }
    Ok(MpdLoad {
        corpus: Corpus::new(Arc::new(catalog), playlists),
        duplicates_dropped,
    })
}

#[derive(Serialize, Deserialize)]
struct CanonicalLine<'a> {
    id: u64,
    #[serde(borrow)]
    tracks: Vec<std::borrow::Cow<'a, str>>,
}

/// Writes `playlists.jsonl` and `songs.json` into `dir`.
pub fn save_canonical(corpus: &Corpus, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let catalog = &corpus.catalog;

    let playlists_path = dir.join(PLAYLISTS_FILE);
    let file = fs::File::create(&playlists_path).map_err(|e| Error::io(&playlists_path, e))?;
    let mut w = BufWriter::new(file);
    for p in &corpus.playlists {
        let line = CanonicalLine {
            id: p.id,
            tracks: p
                .tracks
                .iter()
                .map(|&s| catalog.song_name(s).into())
                .collect(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n").map_err(|e| Error::io(&playlists_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&playlists_path, e))?;

    let songs_path = dir.join(SONGS_FILE);
    let map: BTreeMap<&str, &str> = catalog
        .songs()
        .map(|s| (catalog.song_name(s), catalog.artist_name(catalog.artist_of(s))))
        .collect();
    let text = serde_json::to_string_pretty(&map)?;
    fs::write(&songs_path, text + "\n").map_err(|e| Error::io(&songs_path, e))?;
    Ok(())
}

/// Reads a corpus written by [`save_canonical`].
pub fn load_canonical(dir: impl AsRef<Path>) -> Result<Corpus> {
    let dir = dir.as_ref();
    let songs_path = dir.join(SONGS_FILE);
    let songs_text = read_to_string(&songs_path)?;
    let songs = parse_json(&songs_path, &songs_text)?;
    let songs = songs
        .as_object()
        .ok_or_else(|| schema(&songs_path, "songs", "expected object mapping song to artist"))?;
    let mut pairs = Vec::with_capacity(songs.len());
    for (song, artist) in songs {
        let artist = as_str(&songs_path, artist, "artist", song)?;
        pairs.push((song.as_str(), artist));
    }
    let catalog = Catalog::from_pairs(pairs);

    let playlists_path = dir.join(PLAYLISTS_FILE);
    let text = read_to_string(&playlists_path)?;
    let mut playlists = Vec::new();
    let mut offset = 0;
    for (lineno, line) in text.split_inclusive('\n').enumerate() {
        let start = offset;
        offset += line.len();
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let parsed: CanonicalLine = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
            path: playlists_path.clone(),
            offset: start + e.column().saturating_sub(1),
            line: lineno + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        let tracks = parsed
            .tracks
            .iter()
            .map(|name| {
                catalog.song(name).ok_or_else(|| {
                    schema(
                        &playlists_path,
                        "tracks",
                        format!("song {name:?} on line {} missing from {SONGS_FILE}", lineno + 1),
                    )
                })
            })
            .collect::<Result<Vec<_>>>()?;
        playlists.push(Playlist::new(parsed.id, tracks));
    }
    Ok(Corpus::new(Arc::new(catalog), playlists))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn track(uri: &str, artist: &str, pos: u32) -> String {
        format!(r#"{{"track_uri":"{uri}","artist_uri":"{artist}","pos":{pos}}}"#)
    }

    #[test]
    fn loads_and_orders_by_pos() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            r#"{{"info":{{}},"playlists":[{{"pid":0,"name":"x","tracks":[{},{},{}]}},{{"pid":1,"tracks":[{},{},{},{},{}]}}]}}"#,
            track("t:c", "a:1", 2),
            track("t:a", "a:1", 0),
            track("t:b", "a:2", 1),
            track("t:a", "a:1", 0),
            track("t:b", "a:2", 1),
            track("t:c", "a:1", 2),
            track("t:d", "a:3", 3),
            track("t:e", "a:3", 4),
        );
        let p = write(dir.path(), "slice.json", &text);
        let load = load_mpd_slice(&p).unwrap();
        let c = &load.corpus;
        assert_eq!(c.n(), 2);
        assert_eq!(c.playlists.iter().map(Playlist::len).collect::<Vec<_>>(), [3, 5]);
        let names: Vec<&str> = c.playlists[0]
            .tracks
            .iter()
            .map(|&s| c.catalog.song_name(s))
            .collect();
        assert_eq!(names, ["t:a", "t:b", "t:c"]);
        assert_eq!(load.duplicates_dropped, 0);
    }

    #[test]
    fn duplicate_uri_kept_once() {
        let dir = tempfile::tempdir().unwrap();
        let tracks: Vec<String> = (0..8)
            .map(|i| {
                let uri = if i == 7 { "t:2".to_string() } else { format!("t:{i}") };
                track(&uri, "a", i)
            })
            .collect();
        let text = format!(r#"{{"playlists":[{{"pid":9,"tracks":[{}]}}]}}"#, tracks.join(","));
        let p = write(dir.path(), "dup.json", &text);
        let load = load_mpd_slice(&p).unwrap();
        assert_eq!(load.corpus.playlists[0].len(), 7);
        assert_eq!(load.duplicates_dropped, 1);
    }

    #[test]
    fn malformed_json_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "bad.json", "{\"playlists\": [\n  {\"pid\": 0,, }\n]}");
        match load_mpd_slice(&p) {
            Err(Error::Parse { offset, line, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(offset, 28);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_field_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "nopos.json",
            r#"{"playlists":[{"pid":0,"tracks":[{"track_uri":"t","artist_uri":"a"}]}]}"#,
        );
        match load_mpd_slice(&p) {
            Err(Error::Schema { field, .. }) => assert_eq!(field, "pos"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn canonical_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let catalog = Catalog::from_pairs([("s1", "a1"), ("s2", "a1"), ("s3", "a2")]);
        let corpus = Corpus::new(
            Arc::new(catalog),
            vec![
                Playlist::new(4, vec![super::super::SongId(2), super::super::SongId(0)]),
                Playlist::new(7, vec![super::super::SongId(1)]),
            ],
        );
        save_canonical(&corpus, dir.path()).unwrap();
        let back = load_canonical(dir.path()).unwrap();
        assert_eq!(back, corpus);
    }
}
