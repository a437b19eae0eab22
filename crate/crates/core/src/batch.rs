//! Dataset-scale triangulation with per-view-count aggregation.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Track};
use crate::derivatives::build_caches;
use crate::solver::{solve, Method, SolveStatus, SolverConfig};
use crate::verification::{optimality_verdict, solvability_check};

/// Outcome for one track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub id: String,
    pub views: usize,
    pub solution: Option<[f64; 3]>,
    #[serde(with = "extended_float::option")]
    pub cost: Option<f64>,
    /// `None` when no problem could be built for the track.
    pub status: Option<SolveStatus>,
    pub iterations: usize,
    #[serde(with = "extended_float::option")]
    pub kantorovich_distance: Option<f64>,
    #[serde(with = "extended_float::option")]
    pub rho_squared: Option<f64>,
    #[serde(with = "extended_float::option")]
    pub gamma_squared: Option<f64>,
    /// Cost at the symmedian starting point.
    #[serde(with = "extended_float::option")]
    pub initial_cost: Option<f64>,
    pub numerically_optimal: bool,
    /// Wall-clock solve time; excludes parsing and the post-solve diagnostics.
    pub seconds: f64,
    pub error: Option<String>,
}

impl TrackRecord {
    pub fn failed(&self) -> bool {
        self.status != Some(SolveStatus::Converged)
    }
}

/// One row of the per-view-count table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewCountRow {
    pub n: usize,
    pub points: usize,
    /// Average compute time per point, seconds.
    pub act: f64,
    /// Sum of final costs over points with a finite cost.
    pub reprojection_error: f64,
    pub optimal: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub points: usize,
    /// Total solve time, seconds.
    pub seconds: f64,
    pub act: f64,
    pub reprojection_error: f64,
    pub optimal: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub method: Method,
    pub per_n: Vec<ViewCountRow>,
    pub totals: Totals,
    pub tracks_in_file: usize,
    pub tracks_processed: usize,
    pub tracks_skipped: usize,
    pub tracks: Vec<TrackRecord>,
}

impl BatchReport {
    pub fn failures(&self) -> usize {
        self.totals.failures
    }

    /// Rebuilds the aggregate rows from the detail records.
    pub fn from_records(method: Method, tracks: Vec<TrackRecord>, tracks_skipped: usize) -> Self {
        let mut groups: BTreeMap<usize, (usize, f64, f64, usize, usize)> = BTreeMap::new();
        for t in &tracks {
            let e = groups.entry(t.views).or_default();
            e.0 += 1;
            e.1 += t.seconds;
            if let Some(c) = t.cost.filter(|c| c.is_finite()) {
                e.2 += c;
            }
            e.3 += t.numerically_optimal as usize;
            e.4 += t.failed() as usize;
        }
        let per_n: Vec<ViewCountRow> = groups
            .into_iter()
            .map(|(n, (points, secs, re, optimal, failures))| ViewCountRow {
                n,
                points,
                act: secs / points as f64,
                reprojection_error: re,
                optimal,
                failures,
            })
            .collect();
        let points: usize = per_n.iter().map(|r| r.points).sum();
        let seconds: f64 = tracks.iter().map(|t| t.seconds).sum();
        let totals = Totals {
            points,
            seconds,
            act: if points == 0 { 0.0 } else { seconds / points as f64 },
            reprojection_error: per_n.iter().map(|r| r.reprojection_error).sum(),
            optimal: per_n.iter().map(|r| r.optimal).sum(),
            failures: per_n.iter().map(|r| r.failures).sum(),
        };
        BatchReport {
            method,
            per_n,
            totals,
            tracks_in_file: tracks.len() + tracks_skipped,
            tracks_processed: tracks.len(),
            tracks_skipped,
            tracks,
        }
    }
}

pub fn solve_track(dataset: &Dataset, track: &Track, config: &SolverConfig) -> TrackRecord {
    let mut record = TrackRecord {
        id: track.id.clone(),
        views: track.views(),
        solution: None,
        cost: None,
        status: None,
        iterations: 0,
        kantorovich_distance: None,
        rho_squared: None,
        gamma_squared: None,
        initial_cost: None,
        numerically_optimal: false,
        seconds: 0.0,
        error: None,
    };
    let problem = match dataset.problem(track) {
        Ok(p) => p,
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };

    let start = Instant::now();
    let report = solve(&problem, config);
    record.seconds = start.elapsed().as_secs_f64();

    record.status = Some(report.status);
    record.iterations = report.iterations;
    record.initial_cost = Some(report.initial_cost).filter(|c| c.is_finite());
    if report.cost.is_finite() {
        let x = report.solution;
        record.solution = Some([x.x, x.y, x.z]);
        record.cost = Some(report.cost);
        record.kantorovich_distance = Some(report.kantorovich_distance);
        match solvability_check(&problem, &build_caches(&problem), &x) {
            Ok(s) => {
                record.rho_squared = Some(s.rho_squared);
                record.gamma_squared = Some(s.gamma_squared);
            }
            Err(e) => record.error = Some(e.to_string()),
        }
        record.numerically_optimal = !report.initializer_fallback
            && optimality_verdict(report.kantorovich_distance, report.cost, report.initial_cost);
    }
    record
}

/// Solves every track of `dataset`. With `jobs > 1` tracks are spread over a thread
/// pool; records come back in track order either way.
pub fn run_batch(dataset: &Dataset, config: &SolverConfig, jobs: usize) -> BatchReport {
    let tracks = if jobs > 1 {
        match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            Ok(pool) => pool.install(|| {
                dataset
                    .tracks
                    .par_iter()
                    .map(|t| solve_track(dataset, t, config))
                    .collect()
            }),
            Err(e) => {
                log::warn!("could not start {jobs} worker threads ({e}); running single-threaded");
                dataset.tracks.iter().map(|t| solve_track(dataset, t, config)).collect()
            }
        }
    } else {
        dataset.tracks.iter().map(|t| solve_track(dataset, t, config)).collect()
    };
    BatchReport::from_records(config.method, tracks, dataset.skipped_tracks)
}

/// Serde helpers writing non-finite floats as the strings `"inf"`, `"-inf"` and
/// `"nan"`, so JSON output stays lossless.
pub mod extended_float {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(D::Error::custom(format!("not a number: {other:?}"))),
            },
        }
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(v) => super::serialize(v, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            #[derive(Deserialize)]
            struct Wrapper(#[serde(with = "super")] f64);
            Ok(Option::<Wrapper>::deserialize(d)?.map(|w| w.0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::TrackObservation;
    use crate::synthetic;

    fn synthetic_dataset() -> Dataset {
        let cameras = synthetic::cameras();
        let track = |id: &str, pixels: &[(usize, f64, f64)]| Track {
            id: id.into(),
            observations: pixels
                .iter()
                .map(|&(camera, u, v)| TrackObservation { camera, u, v })
                .collect(),
        };
        Dataset {
            cameras,
            tracks: vec![
                track("sa2", &[(0, 0.0, 0.0), (1, 0.0, 0.0)]),
                track("con", &[(0, 0.9, -0.9), (1, 0.6, 2.0), (2, 2.0, 1.3)]),
                track("sa4", &[(0, 0.0, 0.0), (1, 0.0, 0.0), (2, 0.0, 0.0), (3, 0.0, 0.0)]),
                track("sa3", &[(0, 0.0, 0.0), (1, 0.0, 0.0), (2, 0.0, 0.0)]),
            ],
            skipped_tracks: 1,
        }
    }

    #[test]
    fn rows_group_by_view_count() {
        let report = run_batch(&synthetic_dataset(), &SolverConfig::default(), 1);
        let ns: Vec<_> = report.per_n.iter().map(|r| (r.n, r.points)).collect();
        assert_eq!(ns, vec![(2, 1), (3, 2), (4, 1)]);
        assert_eq!(report.tracks_in_file, 5);
        assert_eq!(report.tracks_processed + report.tracks_skipped, report.tracks_in_file);
        let expected = 0.055555555555556 + 1.223123745015136 + 0.209906166263248 + 0.105211035962142;
        assert!((report.totals.reprojection_error - expected).abs() < 1e-12);
        assert_eq!(report.totals.failures, 0);
        assert!(report.tracks.iter().all(|t| t.numerically_optimal));
    }

    #[test]
    fn empty_dataset() {
        let dataset = Dataset {
            cameras: synthetic::cameras(),
            tracks: vec![],
            skipped_tracks: 0,
        };
        let report = run_batch(&dataset, &SolverConfig::default(), 1);
        assert!(report.per_n.is_empty());
        assert_eq!(report.totals.points, 0);
        assert_eq!(report.totals.act, 0.0);
    }

    #[test]
    fn non_finite_floats_survive_json() {
        #[derive(Serialize, Deserialize, PartialEq, Debug)]
        struct S(#[serde(with = "extended_float::option")] Option<f64>);
        for v in [Some(f64::INFINITY), Some(-0.5), None] {
            let text = serde_json::to_string(&S(v)).unwrap();
            assert_eq!(serde_json::from_str::<S>(&text).unwrap(), S(v));
        }
        let text = serde_json::to_string(&S(Some(f64::NAN))).unwrap();
        assert!(serde_json::from_str::<S>(&text).unwrap().0.unwrap().is_nan());
    }
}
