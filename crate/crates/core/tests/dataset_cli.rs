mod common;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;

use triangulation::batch::{run_batch, BatchReport, TrackRecord};
use triangulation::dataset::{parse_native_problem, parse_vgg_dataset, Dataset, Track, TrackObservation, VGG_MISSING};
use triangulation::report::{emit_report, ReportFormat, CSV_HEADER};
use triangulation::synthetic;
use triangulation::{Method, SolveStatus, SolverConfig};

use common::{observe, random_cameras, random_point, rng};

const FOUR_CAMERAS: &str = include_str!("../data/four_cameras.txt");

fn data_file() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/four_cameras.txt")
}

fn triangulate(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_triangulate"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// A random dataset with `tracks` points seen by a random subset of `cameras` views.
fn random_dataset(seed: u64, cameras: usize, tracks: usize, noise: f64) -> Dataset {
    use rand::seq::index::sample;
    use rand::Rng;
    let mut r = rng(seed);
    let cams = random_cameras(&mut r, cameras);
    let tracks = (0..tracks)
        .map(|t| {
            let n = r.gen_range(2..=cameras);
            let mut idx = sample(&mut r, cameras, n).into_vec();
            idx.sort_unstable();
            let chosen: Vec<_> = idx.iter().map(|&i| cams[i].clone()).collect();
            let point = random_point(&mut r);
            let pixels = observe(&mut r, &chosen, &point, noise);
            Track {
                id: format!("t{t}"),
                observations: idx
                    .iter()
                    .zip(pixels)
                    .map(|(&camera, (u, v))| TrackObservation { camera, u, v })
                    .collect(),
            }
        })
        .collect();
    Dataset {
        cameras: cams,
        tracks,
        skipped_tracks: 0,
    }
}

fn without_timing(mut r: BatchReport) -> BatchReport {
    for t in &mut r.tracks {
        t.seconds = 0.0;
    }
    for row in &mut r.per_n {
        row.act = 0.0;
    }
    r.totals.seconds = 0.0;
    r.totals.act = 0.0;
    r
}

#[test]
fn bundled_file_transcribes_the_four_cameras() {
    let d = parse_native_problem(FOUR_CAMERAS).unwrap();
    let reference = synthetic::cameras();
    assert_eq!(d.cameras.len(), 4);
    for (a, b) in d.cameras.iter().zip(&reference) {
        assert_eq!(a.label(), b.label());
        assert_eq!(a.matrix(), b.matrix());
    }
    let ids: Vec<_> = d.tracks.iter().map(|t| t.id.as_str()).collect();
    assert_eq!(ids, ["SA2", "SA3", "SA4", "con"]);
    assert_eq!(d.problem(&d.tracks[3]).unwrap(), synthetic::con());
}

#[test]
fn bundled_file_solves_to_the_listed_costs() {
    let d = parse_native_problem(FOUR_CAMERAS).unwrap();
    let report = run_batch(&d, &SolverConfig::default(), 1);
    let costs: Vec<f64> = report.tracks.iter().map(|t| t.cost.unwrap()).collect();
    for (cost, r) in costs.iter().zip(&synthetic::REFERENCES) {
        assert!((cost - r.cost).abs() <= 1e-12, "{}", r.name);
    }
    assert_eq!(report.failures(), 0);
    assert_eq!(report.totals.optimal, 4);
}

#[test]
fn aggregation_partitions_the_tracks() {
    let d = random_dataset(1, 6, 300, 0.01);
    let report = run_batch(&d, &SolverConfig::default(), 1);
    assert_eq!(report.per_n.iter().map(|r| r.points).sum::<usize>(), report.tracks_processed);
    assert_eq!(report.totals.points, 300);
    assert_eq!(report.tracks_in_file, report.tracks_processed + report.tracks_skipped);
    let sum: f64 = report.per_n.iter().map(|r| r.reprojection_error).sum();
    let direct: f64 = report.tracks.iter().filter_map(|t| t.cost).sum();
    assert!((sum - report.totals.reprojection_error).abs() <= 1e-12 * direct.max(1.0));
    for row in &report.per_n {
        let in_row: Vec<&TrackRecord> = report.tracks.iter().filter(|t| t.views == row.n).collect();
        assert_eq!(in_row.len(), row.points);
        assert_eq!(in_row.iter().filter(|t| t.numerically_optimal).count(), row.optimal);
    }
    assert_eq!(report.per_n.iter().map(|r| r.optimal).sum::<usize>(), report.totals.optimal);
}

#[test]
fn noise_free_single_track() {
    let d = random_dataset(2, 4, 1, 0.0);
    let report = run_batch(&d, &SolverConfig::default(), 1);
    assert_eq!(report.per_n.len(), 1);
    assert!(report.tracks[0].cost.unwrap() <= 1e-16);
}

#[test]
fn parallel_batches_are_bit_identical() {
    let d = random_dataset(3, 8, 500, 0.02);
    for method in Method::ALL {
        let config = SolverConfig::with_method(method);
        let one = without_timing(run_batch(&d, &config, 1));
        let four = without_timing(run_batch(&d, &config, 4));
        let again = without_timing(run_batch(&d, &config, 1));
        assert_eq!(one, four, "{method}");
        assert_eq!(one, again, "{method}");
    }
}

#[test]
fn json_round_trip_keeps_every_non_timing_field() {
    let mut d = random_dataset(4, 5, 50, 0.02);
    // A degenerate track keeps the missing and non-finite fields in play.
    d.tracks.push(Track {
        id: "parallel".into(),
        observations: vec![
            TrackObservation { camera: 0, u: 0.1, v: 0.1 },
            TrackObservation { camera: 0, u: 0.1, v: 0.1 },
        ],
    });
    let report = run_batch(&d, &SolverConfig::default(), 2);
    let text = emit_report(&report, ReportFormat::Json);
    let back: BatchReport = serde_json::from_str(&text).unwrap();
    assert_eq!(without_timing(back), without_timing(report));
}

#[test]
fn csv_has_one_row_per_track() {
    let d = random_dataset(5, 4, 20, 0.01);
    let report = run_batch(&d, &SolverConfig::default(), 1);
    let text = emit_report(&report, ReportFormat::Csv);
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), CSV_HEADER);
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 20);
    for (row, t) in rows.iter().zip(&report.tracks) {
        assert_eq!(&row[0], t.id);
        let x: f64 = row[2].parse().unwrap();
        assert_eq!(x, t.solution.unwrap()[0]);
        let cost: f64 = row[5].parse().unwrap();
        assert_eq!(cost, t.cost.unwrap());
    }
}

#[test]
fn empty_batch_prints_headers_only() {
    let d = Dataset {
        cameras: synthetic::cameras(),
        tracks: vec![],
        skipped_tracks: 0,
    };
    let report = run_batch(&d, &SolverConfig::default(), 1);
    assert_eq!(emit_report(&report, ReportFormat::Table).lines().count(), 2);
    assert_eq!(emit_report(&report, ReportFormat::Csv).lines().count(), 1);
}

/// Writes VGG-style camera files and a point matrix; row `i` lists `(u, v)` per
/// camera, with the sentinel for missing views.
fn write_vgg(dir: &Path, d: &Dataset) -> PathBuf {
    for (i, c) in d.cameras.iter().enumerate() {
        let mut text = String::new();
        for r in 0..3 {
            let row: Vec<String> = (0..4).map(|j| format!("{:e}", c.matrix()[(r, j)])).collect();
            writeln!(text, "{}", row.join(" ")).unwrap();
        }
        std::fs::write(dir.join(format!("view{i:02}.P")), text).unwrap();
    }
    let mut points = String::new();
    for t in &d.tracks {
        let mut cols = vec![format!("{VGG_MISSING}"); 2 * d.cameras.len()];
        for o in &t.observations {
            cols[2 * o.camera] = format!("{:e}", o.u);
            cols[2 * o.camera + 1] = format!("{:e}", o.v);
        }
        writeln!(points, "{}", cols.join(" ")).unwrap();
    }
    // One track with a single surviving view and one with none.
    let mut single = vec![format!("{VGG_MISSING}"); 2 * d.cameras.len()];
    single[0] = "0.1".into();
    single[1] = "0.2".into();
    writeln!(points, "{}", single.join(" ")).unwrap();
    writeln!(points, "{}", vec![format!("{VGG_MISSING}"); 2 * d.cameras.len()].join(" ")).unwrap();
    let path = dir.join("points.txt");
    std::fs::write(&path, points).unwrap();
    path
}

#[test]
fn vgg_files_round_trip_through_the_parser() {
    let d = random_dataset(6, 5, 40, 0.01);
    let dir = tempfile::tempdir().unwrap();
    let points = write_vgg(dir.path(), &d);
    let mut files: Vec<PathBuf> = (0..5).map(|i| dir.path().join(format!("view{i:02}.P"))).collect();
    files.sort();
    let parsed = parse_vgg_dataset(&files, &points, VGG_MISSING).unwrap();
    assert_eq!(parsed.tracks.len(), 40);
    assert_eq!(parsed.skipped_tracks, 2);
    assert_eq!(parsed.tracks_in_file(), 42);
    for (a, b) in parsed.tracks.iter().zip(&d.tracks) {
        assert_eq!(a.observations, b.observations);
    }
    let report = run_batch(&parsed, &SolverConfig::default(), 1);
    assert_eq!(report.tracks_skipped, 2);
    assert_eq!(report.tracks_in_file, 42);
}

#[test]
fn cli_examples_and_solve_succeed() {
    let out = triangulate(&["examples"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("0.055555555555556"));
    assert!(text.contains("1.223123745015136"));

    let file = data_file();
    let out = triangulate(&["solve", "--problem", file.to_str().unwrap(), "--report", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let report: BatchReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report.tracks_processed, 4);

    let out = triangulate(&["check-derivatives", "--problem", file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn cli_batch_over_a_camera_glob() {
    let d = random_dataset(7, 4, 25, 0.01);
    let dir = tempfile::tempdir().unwrap();
    let points = write_vgg(dir.path(), &d);
    let pattern = dir.path().join("view*.P");
    let out_file = dir.path().join("report.csv");
    let out = triangulate(&[
        "batch",
        "--cameras",
        pattern.to_str().unwrap(),
        "--points",
        points.to_str().unwrap(),
        "--jobs",
        "3",
        "--report",
        "csv",
        "--out",
        out_file.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&out_file).unwrap();
    assert_eq!(text.lines().count(), 26);

    let out = triangulate(&["batch", "--cameras", pattern.to_str().unwrap(), "--points", points.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("27 tracks in file, 25 processed, 2 skipped"), "{table}");
}

#[test]
fn cli_reports_track_failures_with_exit_code_one() {
    // Two identical views: the rays coincide and the geometry is degenerate.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("parallel.txt");
    std::fs::write(
        &path,
        "camera A\n1 0 0 0\n0 1 0 0\n0 0 1 1\ncamera B\n2 0 0 0\n0 2 0 0\n0 0 2 2\n\ntrack bad\nA 0.1 0.2\nB 0.1 0.2\n",
    )
    .unwrap();
    let out = triangulate(&["solve", "--problem", path.to_str().unwrap(), "--report", "csv"]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains(SolveStatus::DegenerateGeometry.name()), "{text}");
}

#[test]
fn cli_rejects_bad_input_with_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.txt");
    assert_eq!(triangulate(&["solve", "--problem", missing.to_str().unwrap()]).status.code(), Some(2));

    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "camera A\n1 0 0 0\n0 1 0 0\n0 0 1 1\ntrack t\nA 0 0\n").unwrap();
    let out = triangulate(&["solve", "--problem", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));

    let file = data_file();
    assert_eq!(
        triangulate(&["solve", "--problem", file.to_str().unwrap(), "--method", "simplex"]).status.code(),
        Some(2)
    );
    assert_eq!(
        triangulate(&["batch", "--cameras", dir.path().join("none*.P").to_str().unwrap(), "--points", "x"])
            .status
            .code(),
        Some(2)
    );
}
