//! Problem-file ingestion.
//!
//! Two formats are read:
//!
//! * the native line-oriented format, e.g.
//!
//!   ```text
//!   # two cameras, one track
//!   camera P1
//!   1 0 0 0
//!   0 1 0 0
//!   0 0 1 1
//!   camera P2
//!   ...
//!   track 7
//!   P1 0.0 0.0
//!   P2 0.1 -0.2
//!   ```
//!
//! * VGG-style multi-view data: one 3x4 camera matrix per file plus a measurement
//!   matrix whose rows hold `2m` coordinates, with a sentinel (normally `-1`) marking
//!   views where the point is not visible.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use nalgebra::Matrix3x4;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::{CameraMatrix, ImageObservation, TriangulationProblem};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("camera {index} is invalid: {source}")]
    InvalidCamera {
        index: usize,
        #[source]
        source: crate::Error,
    },

    #[error("point file line {line} has {columns} coordinates but {cameras} cameras need {}", 2 * cameras)]
    DimensionMismatch {
        line: usize,
        columns: usize,
        cameras: usize,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DatasetError {
    fn parse(line: usize, column: usize, message: impl Into<String>) -> Self {
        DatasetError::Parse {
            line,
            column,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackObservation {
    pub camera: usize,
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: String,
    pub observations: Vec<TrackObservation>,
}

impl Track {
    pub fn views(&self) -> usize {
        self.observations.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub cameras: Vec<CameraMatrix>,
    pub tracks: Vec<Track>,
    /// Tracks dropped at ingestion because fewer than two views survived.
    pub skipped_tracks: usize,
}

impl Dataset {
    pub fn tracks_in_file(&self) -> usize {
        self.tracks.len() + self.skipped_tracks
    }

    /// The single-point problem for one track.
    pub fn problem(&self, track: &Track) -> crate::Result<TriangulationProblem> {
        let cameras = track
            .observations
            .iter()
            .map(|o| self.cameras[o.camera].clone())
            .collect::<Vec<_>>();
        let observations = track
            .observations
            .iter()
            .zip(&cameras)
            .map(|(o, c)| ImageObservation::new(o.u, o.v, c.shared_label()))
            .collect();
        TriangulationProblem::new(cameras, observations)
    }
}

/// Whitespace-separated tokens of a line, with 1-based columns.
fn tokens(line: &str) -> impl Iterator<Item = (usize, &str)> {
    line.split_whitespace().map(move |tok| {
        let offset = tok.as_ptr() as usize - line.as_ptr() as usize;
        (line[..offset].chars().count() + 1, tok)
    })
}

fn number(line: usize, column: usize, tok: &str) -> Result<f64, DatasetError> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(DatasetError::parse(line, column, format!("expected a finite number, found {tok:?}"))),
    }
}

/// Strips `#` comments and a trailing `\r`.
fn content(raw: &str) -> &str {
    let line = raw.strip_suffix('\r').unwrap_or(raw);
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

pub fn parse_native_problem(text: &str) -> Result<Dataset, DatasetError> {
    struct PendingCamera {
        label: String,
        header_line: usize,
        rows: Vec<[f64; 4]>,
    }

    let mut cameras: Vec<CameraMatrix> = Vec::new();
    let mut labels: HashMap<String, usize> = HashMap::new();
    let mut tracks: Vec<(usize, Track)> = Vec::new();
    let mut pending: Option<PendingCamera> = None;
    let mut last_line = 0;

    let finish_camera = |cam: PendingCamera,
                         cameras: &mut Vec<CameraMatrix>,
                         labels: &mut HashMap<String, usize>,
                         line: usize|
     -> Result<(), DatasetError> {
        if cam.rows.len() != 3 {
            return Err(DatasetError::parse(
                line,
                1,
                format!("camera {:?} needs 3 rows, got {}", cam.label, cam.rows.len()),
            ));
        }
        let index = cameras.len();
        let m = Matrix3x4::from_fn(|r, c| cam.rows[r][c]);
        let camera =
            CameraMatrix::new(cam.label.as_str(), m).map_err(|source| DatasetError::InvalidCamera { index, source })?;
        if labels.insert(cam.label.clone(), index).is_some() {
            return Err(DatasetError::parse(cam.header_line, 8, format!("duplicate camera label {:?}", cam.label)));
        }
        cameras.push(camera);
        Ok(())
    };

    for (i, raw) in text.split('\n').enumerate() {
        let line_no = i + 1;
        last_line = line_no;
        let line = content(raw);
        let toks: Vec<_> = tokens(line).collect();
        let Some(&(col, head)) = toks.first() else {
            continue;
        };

        if let Some(cam) = pending.as_mut() {
            if cam.rows.len() < 3 {
                if toks.len() != 4 {
                    return Err(DatasetError::parse(
                        line_no,
                        col,
                        format!("camera row needs 4 numbers, got {}", toks.len()),
                    ));
                }
                let mut row = [0.0; 4];
                for (slot, &(c, t)) in row.iter_mut().zip(&toks) {
                    *slot = number(line_no, c, t)?;
                }
                cam.rows.push(row);
                if cam.rows.len() == 3 {
                    let cam = pending.take().expect("pending camera");
                    finish_camera(cam, &mut cameras, &mut labels, line_no)?;
                }
                continue;
            }
        }

        match head {
            "camera" => {
                let [_, (_, label)] = toks[..] else {
                    return Err(DatasetError::parse(line_no, col, "expected `camera <label>`"));
                };
                pending = Some(PendingCamera {
                    label: label.to_string(),
                    header_line: line_no,
                    rows: Vec::with_capacity(3),
                });
            }
            "track" => {
                let [_, (_, id)] = toks[..] else {
                    return Err(DatasetError::parse(line_no, col, "expected `track <id>`"));
                };
                tracks.push((
                    line_no,
                    Track {
                        id: id.to_string(),
                        observations: Vec::new(),
                    },
                ));
            }
            label => {
                let Some((_, track)) = tracks.last_mut() else {
                    return Err(DatasetError::parse(line_no, col, format!("unexpected {label:?}")));
                };
                let Some(&camera) = labels.get(label) else {
                    return Err(DatasetError::parse(line_no, col, format!("unknown camera {label:?}")));
                };
                let [_, (cu, u), (cv, v)] = toks[..] else {
                    return Err(DatasetError::parse(line_no, col, "expected `<camera> <u> <v>`"));
                };
                track.observations.push(TrackObservation {
                    camera,
                    u: number(line_no, cu, u)?,
                    v: number(line_no, cv, v)?,
                });
            }
        }
    }

    if let Some(cam) = pending {
        return Err(DatasetError::parse(
            last_line,
            1,
            format!("camera {:?} needs 3 rows, got {}", cam.label, cam.rows.len()),
        ));
    }
    if tracks.is_empty() {
        return Err(DatasetError::parse(last_line.max(1), 1, "no tracks"));
    }
    for (line, track) in &tracks {
        if track.observations.len() < 2 {
            return Err(DatasetError::parse(*line, 1, "track requires ≥ 2 views"));
        }
    }
    Ok(Dataset {
        cameras,
        tracks: tracks.into_iter().map(|(_, t)| t).collect(),
        skipped_tracks: 0,
    })
}

pub fn load_native_problem(path: &Path) -> Result<Dataset, DatasetError> {
    parse_native_problem(&read(path)?)
}

/// Sentinel marking a missing view in VGG measurement matrices.
pub const VGG_MISSING: f64 = -1.0;

/// Parses one camera file holding 12 numbers (a 3x4 matrix in row order).
pub fn parse_vgg_camera(index: usize, label: &str, text: &str) -> Result<CameraMatrix, DatasetError> {
    let mut values = Vec::with_capacity(12);
    for (i, raw) in text.split('\n').enumerate() {
        for (col, tok) in tokens(content(raw)) {
            if values.len() == 12 {
                return Err(DatasetError::parse(i + 1, col, "camera file holds more than 12 numbers"));
            }
            values.push(number(i + 1, col, tok)?);
        }
    }
    if values.len() != 12 {
        return Err(DatasetError::parse(1, 1, format!("camera file holds {} numbers, expected 12", values.len())));
    }
    CameraMatrix::new(label, Matrix3x4::from_row_slice(&values))
        .map_err(|source| DatasetError::InvalidCamera { index, source })
}

/// Builds a dataset from already-parsed cameras and the measurement matrix text.
/// A view is missing when either coordinate equals `sentinel` exactly.
pub fn parse_vgg_points(cameras: Vec<CameraMatrix>, points: &str, sentinel: f64) -> Result<Dataset, DatasetError> {
    let m = cameras.len();
    let mut tracks = Vec::new();
    let mut skipped = 0;
    for (i, raw) in points.split('\n').enumerate() {
        let line_no = i + 1;
        let toks: Vec<_> = tokens(content(raw)).collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 2 * m {
            return Err(DatasetError::DimensionMismatch {
                line: line_no,
                columns: toks.len(),
                cameras: m,
            });
        }
        let mut observations = Vec::new();
        for (camera, pair) in toks.chunks_exact(2).enumerate() {
            let u = number(line_no, pair[0].0, pair[0].1)?;
            let v = number(line_no, pair[1].0, pair[1].1)?;
            if u == sentinel || v == sentinel {
                continue;
            }
            observations.push(TrackObservation { camera, u, v });
        }
        let id = (tracks.len() + skipped).to_string();
        if observations.len() < 2 {
            skipped += 1;
            continue;
        }
        tracks.push(Track { id, observations });
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} tracks with fewer than two views");
    }
    Ok(Dataset {
        cameras,
        tracks,
        skipped_tracks: skipped,
    })
}

/// Reads VGG camera files (in the given order) and a measurement matrix.
pub fn parse_vgg_dataset(camera_files: &[PathBuf], point_file: &Path, sentinel: f64) -> Result<Dataset, DatasetError> {
    let cameras = camera_files
        .iter()
        .enumerate()
        .map(|(index, path)| {
            let label = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| index.to_string());
            parse_vgg_camera(index, &label, &read(path)?)
        })
        .collect::<Result<Vec<_>, _>>()?;
    parse_vgg_points(cameras, &read(point_file)?, sentinel)
}

fn read(path: &Path) -> Result<String, DatasetError> {
    std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}
