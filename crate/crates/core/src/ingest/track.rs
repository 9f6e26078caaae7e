use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Source recordings are sampled at 25 Hz.
pub const SOURCE_FRAME_RATE: f64 = 25.0;

pub const REQUIRED_COLUMNS: [&str; 5] = ["recordingId", "trackId", "frame", "xCenter", "yCenter"];

/// One vehicle's state in one frame, as stored in a recording.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub recording_id: u32,
    pub track_id: u32,
    pub frame: i64,
    pub x: f64,
    pub y: f64,
}

/// A gap-free, frame-ordered trajectory of one vehicle.
///
/// `positions[k]` is the position at frame `first_frame + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub recording_id: u32,
    pub track_id: u32,
    pub first_frame: i64,
    pub positions: Vec<[f64; 2]>,
}

impl Track {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Last frame index (inclusive).
    pub fn last_frame(&self) -> i64 {
        self.first_frame + self.positions.len() as i64 - 1
    }

    pub fn position_at(&self, frame: i64) -> Option<[f64; 2]> {
        let k = frame.checked_sub(self.first_frame)?;
        usize::try_from(k).ok().and_then(|k| self.positions.get(k).copied())
    }

    pub fn records(&self) -> impl Iterator<Item = TrackRecord> + '_ {
        self.positions.iter().enumerate().map(move |(k, p)| TrackRecord {
            recording_id: self.recording_id,
            track_id: self.track_id,
            frame: self.first_frame + k as i64,
            x: p[0],
            y: p[1],
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MalformedTrack {
    pub track_id: u32,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadedTracks {
    /// Valid tracks, ordered by track id.
    pub tracks: Vec<Track>,
    pub rejected: Vec<MalformedTrack>,
}

struct Pending {
    first_frame: i64,
    last_frame: i64,
    positions: Vec<[f64; 2]>,
    problem: Option<String>,
}

/// Reads a rounD-style `tracks.csv`.
///
/// Only rows of `recording_id` are kept when it is given. Rows of one track
/// must appear with strictly increasing frames; a decrease or repeat is a
/// file error. A track with a frame gap or a non-finite position is returned
/// in [`LoadedTracks::rejected`] instead of failing the whole file.
pub fn load_tracks(path: &Path, recording_id: Option<u32>) -> Result<LoadedTracks> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(std::io::BufReader::new(file));
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let mut cols = [0usize; 5];
    for (slot, name) in cols.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })?;
    }
    let [c_rec, c_track, c_frame, c_x, c_y] = cols;

    let mut pending: BTreeMap<u32, Pending> = BTreeMap::new();
    let mut record = csv::StringRecord::new();
    let mut row = 0usize;
    let mut file_recording: Option<u32> = None;
    while reader
        .read_record(&mut record)
        .map_err(|e| Error::csv(path, e))?
    {
        row += 1;
        let field = |c: usize| record.get(c).unwrap_or("");
        let malformed = |reason: String| Error::MalformedRow {
            path: path.to_path_buf(),
            row,
            reason,
        };
        let rec: u32 = field(c_rec)
            .parse()
            .map_err(|_| malformed(format!("bad recordingId `{}`", field(c_rec))))?;
        if recording_id.is_some_and(|r| r != rec) {
            continue;
        }
        file_recording.get_or_insert(rec);
        let track_id: u32 = field(c_track)
            .parse()
            .map_err(|_| malformed(format!("bad trackId `{}`", field(c_track))))?;
        let frame: i64 = field(c_frame)
            .parse()
            .map_err(|_| malformed(format!("bad frame `{}`", field(c_frame))))?;
        let x: f64 = field(c_x)
            .parse()
            .map_err(|_| malformed(format!("bad xCenter `{}`", field(c_x))))?;
        let y: f64 = field(c_y)
            .parse()
            .map_err(|_| malformed(format!("bad yCenter `{}`", field(c_y))))?;

        let entry = pending.entry(track_id).or_insert_with(|| Pending {
            first_frame: frame,
            last_frame: frame - 1,
            positions: Vec::new(),
            problem: None,
        });
        if frame <= entry.last_frame {
            return Err(Error::NonMonotoneFrames {
                path: path.to_path_buf(),
                track_id,
                previous: entry.last_frame,
                next: frame,
            });
        }
        if frame != entry.last_frame + 1 && entry.problem.is_none() {
            entry.problem = Some(format!(
                "frame gap {} -> {}",
                entry.last_frame, frame
            ));
        }
        if !(x.is_finite() && y.is_finite()) && entry.problem.is_none() {
            entry.problem = Some(format!("non-finite position at frame {frame}"));
        }
        entry.last_frame = frame;
        entry.positions.push([x, y]);
    }

    let recording = recording_id.or(file_recording).unwrap_or(0);
    let mut out = LoadedTracks::default();
    for (track_id, p) in pending {
        match p.problem {
            Some(reason) => {
                log::warn!("{}: rejecting track {track_id}: {reason}", path.display());
                out.rejected.push(MalformedTrack { track_id, reason });
            }
            None => out.tracks.push(Track {
                recording_id: recording,
                track_id,
                first_frame: p.first_frame,
                positions: p.positions,
            }),
        }
    }
    Ok(out)
}

/// Writes tracks in the same five-column schema [`load_tracks`] reads.
pub fn write_tracks(path: &Path, tracks: &[Track]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(REQUIRED_COLUMNS)
        .map_err(|e| Error::csv(path, e))?;
    for t in tracks {
        for r in t.records() {
            w.write_record(&[
                r.recording_id.to_string(),
                r.track_id.to_string(),
                r.frame.to_string(),
                r.x.to_string(),
                r.y.to_string(),
            ])
            .map_err(|e| Error::csv(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn missing_column_is_an_error() {
        let f = write("recordingId,trackId,frame,xCenter\n0,1,0,1.0\n");
        match load_tracks(f.path(), None) {
            Err(Error::MissingColumn { column, .. }) => assert_eq!(column, "yCenter"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_file_is_an_error() {
        assert!(matches!(
            load_tracks(Path::new("/nonexistent/tracks.csv"), None),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn extra_columns_are_ignored() {
        let f = write(
            "recordingId,trackId,frame,trackLifetime,xCenter,yCenter,heading\n\
             2,5,10,0,1.5,2.5,90\n2,5,11,1,1.6,2.6,90\n",
        );
        let loaded = load_tracks(f.path(), Some(2)).unwrap();
        assert_eq!(loaded.tracks.len(), 1);
        let t = &loaded.tracks[0];
        assert_eq!((t.recording_id, t.track_id, t.first_frame), (2, 5, 10));
        assert_eq!(t.positions, vec![[1.5, 2.5], [1.6, 2.6]]);
    }

    #[test]
    fn frame_gap_rejects_only_that_track() {
        let f = write(
            "recordingId,trackId,frame,xCenter,yCenter\n\
             0,1,10,0,0\n0,1,12,0,0\n0,2,10,0,0\n0,2,11,0,0\n",
        );
        let loaded = load_tracks(f.path(), None).unwrap();
        assert_eq!(loaded.tracks.len(), 1);
        assert_eq!(loaded.tracks[0].track_id, 2);
        assert_eq!(loaded.rejected.len(), 1);
        assert_eq!(loaded.rejected[0].track_id, 1);
        assert!(loaded.rejected[0].reason.contains("10 -> 12"));
    }

    #[test]
    fn decreasing_frames_fail_the_file() {
        let f = write("recordingId,trackId,frame,xCenter,yCenter\n0,1,10,0,0\n0,1,9,0,0\n");
        assert!(matches!(
            load_tracks(f.path(), None),
            Err(Error::NonMonotoneFrames { track_id: 1, .. })
        ));
    }

    #[test]
    fn recording_filter_skips_other_rows() {
        let f = write("recordingId,trackId,frame,xCenter,yCenter\n0,1,0,0,0\n1,1,0,5,5\n");
        let loaded = load_tracks(f.path(), Some(1)).unwrap();
        assert_eq!(loaded.tracks[0].positions, vec![[5.0, 5.0]]);
    }

    #[test]
    fn lengths_pass_through() {
        let tracks: Vec<Track> = [300usize, 500]
            .iter()
            .enumerate()
            .map(|(i, &n)| Track {
                recording_id: 0,
                track_id: i as u32,
                first_frame: 7,
                positions: (0..n).map(|k| [k as f64, 0.0]).collect(),
            })
            .collect();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_tracks(f.path(), &tracks).unwrap();
        let loaded = load_tracks(f.path(), None).unwrap();
        let lens: Vec<usize> = loaded.tracks.iter().map(Track::len).collect();
        assert_eq!(lens, vec![300, 500]);
    }
}
