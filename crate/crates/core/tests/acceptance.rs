//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness: `cargo test -p nucvox --test acceptance`.
//!
//! Criteria 6-8 use the reference synthetic scene, `SynthesisSpec::default()`:
//! 64 beams x 2048 azimuths, seed 7, ranges 1-50 m log-uniform (ground-plane
//! density ~ 1/r^2), range-proportional dropout up to 20 %, alternating
//! class 1 / class 2 annuli with edges 2.3, 4.7, 7.1, 9.6, 13.3, 17.9, 24.2,
//! 31.7 and 41.3 m.

mod common;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nucvox::analysis::{coefficient_of_variation, SEMANTICKITTI_NONEMPTY_REFERENCE};
use nucvox::io::{
    decode_labels_bytes, generate_synthetic, grid_to_binary, read_labeled_scan, read_labels, read_scan, SynthesisSpec,
};
use nucvox::{
    build_boundaries, cell_volume, density_profile, encoding_error, multiscale_boundaries, multiscale_interval,
    nonempty_counts, radial_index, receptive_length, voxelize, DistanceBands, Error, GridConfig, OutOfRangePolicy,
    PartitionScheme, RadialBoundaries, Voxelizer,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{brute_encoding_error, scan_bin};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn api() -> PartitionScheme {
    PartitionScheme::Api { a0: 0.05, d: 0.0062 }
}

fn config(scheme: PartitionScheme, n_r: usize) -> GridConfig {
    GridConfig::default().with_scheme(scheme).with_radial_bins(n_r)
}

fn reference_scene() -> nucvox::PointCloud {
    generate_synthetic(&SynthesisSpec::default()).expect("reference scene")
}

fn c1_api_coverage() -> Outcome {
    let start = Instant::now();
    let b = RadialBoundaries::new(&api(), 120, 50.0).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let outer = b.edges()[120];
    check(
        (outer - 50.268).abs() <= 1e-9 && elapsed < Duration::from_millis(1),
        format!("b[120] = {outer:.12}, built in {elapsed:?}"),
    )
}

fn c2_uniform_volume_law() -> Outcome {
    let cfg = config(PartitionScheme::Uniform, 480);
    let b = build_boundaries(&cfg).map_err(|e| e.to_string())?;
    let v0 = cell_volume(&b, 0, 0, 0, &cfg).unwrap();
    let worst = (0..480)
        .map(|i| {
            let ratio = cell_volume(&b, i, 0, 0, &cfg).unwrap() / v0;
            let want = (2 * i + 1) as f64;
            (ratio - want).abs() / want
        })
        .fold(0.0, f64::max);
    check(worst <= 1e-12, format!("max relative deviation {worst:.2e}"))
}

fn c3_api_cubic_asymptote() -> Outcome {
    let cfg = config(api(), 240);
    let b = build_boundaries(&cfg).map_err(|e| e.to_string())?;
    let ratio = |i: usize| cell_volume(&b, 2 * i, 0, 0, &cfg).unwrap() / cell_volume(&b, i, 0, 0, &cfg).unwrap();
    let gaps: Vec<f64> = [20, 40, 80].iter().map(|&i| (ratio(i) - 8.0).abs()).collect();
    let rel80 = gaps[2] / 8.0;
    check(
        rel80 <= 0.15 && gaps[0] > gaps[1] && gaps[1] > gaps[2] && ratio(20) < ratio(40) && ratio(40) < ratio(80),
        format!(
            "V(2i)/V(i) at 20/40/80 = {:.4}/{:.4}/{:.4}, rel gap at 80 = {rel80:.4}",
            ratio(20),
            ratio(40),
            ratio(80)
        ),
    )
}

fn c4_merge_identity() -> Outcome {
    let scheme = api();
    let base = RadialBoundaries::new(&scheme, 120, 50.0).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for s in 1..=3u32 {
        for i in 0..(120 >> s) {
            let whole = multiscale_interval(&scheme, s, i).unwrap();
            let parts = multiscale_interval(&scheme, s - 1, 2 * i).unwrap()
                + multiscale_interval(&scheme, s - 1, 2 * i + 1).unwrap();
            worst = worst.max((whole - parts).abs() / whole);
        }
        let coarse = multiscale_boundaries(&scheme, 120, s).unwrap();
        let every: Vec<f64> = base.edges().iter().step_by(1 << s).copied().collect();
        if coarse.edges() != every.as_slice() {
            return Err(format!("scale {s} boundaries differ from every 2^{s}-th base boundary"));
        }
    }
    check(worst <= 1e-12, format!("max relative merge error {worst:.2e}; boundaries nest exactly"))
}

fn c5_index_oracle() -> Outcome {
    let start = Instant::now();
    let b = RadialBoundaries::new(&api(), 120, 50.0).map_err(|e| e.to_string())?;
    let edges = b.edges();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut radii: Vec<f64> = (0..100_000).map(|_| rng.gen_range(0.0..b.outer())).collect();
    radii.extend_from_slice(&edges[..120]);
    for &r in &radii {
        let fast = radial_index(&b, r, OutOfRangePolicy::Drop);
        let slow = scan_bin(edges, r);
        if fast != slow {
            return Err(format!("r = {r}: closed form {fast:?}, scan {slow:?}"));
        }
        let i = fast.ok_or(format!("r = {r} not located"))?;
        if !(edges[i] <= r && r < edges[i + 1]) {
            return Err(format!("r = {r} not inside bin {i}"));
        }
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(1), format!("{} radii agree, {elapsed:?}", radii.len()))
}

fn c6_encoding_error_direction() -> Outcome {
    let cloud = reference_scene();
    let bands = DistanceBands::default();
    let mut near = Vec::new();
    for scheme in [api(), PartitionScheme::Uniform] {
        let cfg = config(scheme, 120);
        let edges = build_boundaries(&cfg).unwrap().edges().to_vec();
        let (wrong, total) = brute_encoding_error(&cloud, &cfg, &edges, 0.0, 10.0);
        let lib = encoding_error(&cloud, &cfg, &bands, false).map_err(|e| e.to_string())?;
        if lib.bands[0].misencoded != wrong || lib.bands[0].points != total {
            return Err(format!(
                "{}: library {}/{} vs brute force {wrong}/{total}",
                cfg.scheme.name(),
                lib.bands[0].misencoded,
                lib.bands[0].points
            ));
        }
        near.push(wrong as f64 / total as f64);
    }
    check(near[0] < near[1], format!("0-10 m error api-120 {:.5} vs uniform-120 {:.5}", near[0], near[1]))
}

fn c7_balance_direction() -> Outcome {
    let cloud = reference_scene();
    let bands = DistanceBands::default();
    let mut cvs = Vec::new();
    for scheme in [api(), PartitionScheme::Uniform] {
        let grid = voxelize(&cloud, &config(scheme, 120)).map_err(|e| e.to_string())?;
        let means: Vec<f64> = density_profile(&grid, &bands).into_iter().collect::<Option<_>>().ok_or("empty band")?;
        cvs.push(coefficient_of_variation(&means).unwrap());
    }
    check(cvs[0] < cvs[1], format!("CV of band means api-120 {:.4} vs uniform-120 {:.4}", cvs[0], cvs[1]))
}

fn kitti_pairs(dir: &Path) -> Vec<(PathBuf, Option<PathBuf>)> {
    let velodyne = if dir.join("velodyne").is_dir() { dir.join("velodyne") } else { dir.to_path_buf() };
    let mut scans: Vec<PathBuf> = std::fs::read_dir(&velodyne)
        .map(|it| it.filter_map(|e| e.ok().map(|e| e.path())).collect())
        .unwrap_or_default();
    scans.retain(|p| p.extension().is_some_and(|e| e == "bin"));
    scans.sort();
    scans
        .into_iter()
        .map(|scan| {
            let label = dir.join("labels").join(scan.with_extension("label").file_name().unwrap());
            (scan, label.exists().then_some(label))
        })
        .collect()
}

fn c8_count_ordering() -> Outcome {
    let cloud = reference_scene();
    let bands = DistanceBands::default();
    let total = |scheme, n_r| voxelize(&cloud, &config(scheme, n_r)).map(|g| nonempty_counts(&g, &bands).total);
    let u120 = total(PartitionScheme::Uniform, 120).map_err(|e| e.to_string())?;
    let a120 = total(api(), 120).map_err(|e| e.to_string())?;
    let u480 = total(PartitionScheme::Uniform, 480).map_err(|e| e.to_string())?;
    let mut detail = format!("uniform-120 {u120} <= api-120 {a120} < uniform-480 {u480}");
    let mut ok = u120 <= a120 && a120 < u480;

    // Optional: SemanticKITTI sequence directory (velodyne/*.bin).
    match std::env::var_os("NUCVOX_SEMANTICKITTI_SEQ") {
        Some(dir) => {
            let pairs = kitti_pairs(Path::new(&dir));
            if pairs.is_empty() {
                return Err(format!("{detail}; no scans under {dir:?}"));
            }
            for (label, reference) in SEMANTICKITTI_NONEMPTY_REFERENCE.iter().map(|(l, _, t)| (*l, *t)) {
                let (scheme, n_r) = match label {
                    "api-120" => (api(), 120),
                    "uniform-120" => (PartitionScheme::Uniform, 120),
                    _ => (PartitionScheme::Uniform, 480),
                };
                let voxelizer = Voxelizer::new(config(scheme, n_r)).map_err(|e| e.to_string())?;
                let mut sum = 0usize;
                for (scan, _) in &pairs {
                    let cloud = read_scan(scan).map_err(|e| e.to_string())?.cloud;
                    sum += nonempty_counts(&voxelizer.voxelize(&cloud).unwrap(), &bands).total;
                }
                let mean = sum as f64 / pairs.len() as f64;
                let rel = (mean - reference).abs() / reference;
                ok &= rel <= 0.15;
                detail.push_str(&format!("; {label} mean {mean:.1} vs {reference} ({:.1}%)", 100.0 * rel));
            }
        }
        None => detail.push_str("; SemanticKITTI part skipped (NUCVOX_SEMANTICKITTI_SEQ unset)"),
    }
    check(ok, detail)
}

fn c9_receptive_profile() -> Outcome {
    let uniform = RadialBoundaries::new(&PartitionScheme::Uniform, 120, 50.0).unwrap();
    for i in 1..119 {
        let l = receptive_length(&uniform, i).unwrap();
        if (l - 1.25).abs() > 1e-12 {
            return Err(format!("uniform bin {i}: {l}"));
        }
    }
    let b = RadialBoundaries::new(&api(), 120, 50.0).unwrap();
    let lengths: Vec<f64> = (1..119).map(|i| receptive_length(&b, i).unwrap()).collect();
    if !lengths.windows(2).all(|w| w[1] > w[0]) {
        return Err("api receptive length not strictly increasing".into());
    }
    let bin45 = b.bin(45.0).unwrap();
    let api45 = receptive_length(&b, bin45).unwrap();
    let uni45 = receptive_length(&uniform, uniform.bin(45.0).unwrap()).unwrap();
    check(api45 > uni45, format!("at 45 m: api {api45:.4} m (bin {bin45}) vs uniform {uni45:.4} m"))
}

fn c10_determinism_and_throughput() -> Outcome {
    let spec = SynthesisSpec { azimuth_samples: 15_625, dropout: 0.0, ..SynthesisSpec::default() };
    let cloud = generate_synthetic(&spec).map_err(|e| e.to_string())?;
    if cloud.len() != 1_000_000 {
        return Err(format!("expected 10^6 points, got {}", cloud.len()));
    }
    let mut outputs = Vec::new();
    let mut slowest = Duration::ZERO;
    for threads in [1, 2, 8] {
        let voxelizer = Voxelizer::new(GridConfig::default()).unwrap().with_threads(Some(threads));
        let start = Instant::now();
        let grid = voxelizer.voxelize(&cloud).map_err(|e| e.to_string())?;
        slowest = slowest.max(start.elapsed());
        outputs.push(grid_to_binary(&grid).unwrap());
    }
    let identical = outputs.windows(2).all(|w| w[0] == w[1]);
    check(
        identical && slowest < Duration::from_secs(2),
        format!("1/2/8 workers identical: {identical}; slowest run {slowest:?}"),
    )
}

fn c11_file_formats() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let values = [1.5f32, -2.25, 0.125, 0.75, -30.0, 12.5, -1.75, 0.0];
    let scan_path = dir.path().join("000000.bin");
    std::fs::write(&scan_path, values.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>()).unwrap();
    let label_path = dir.path().join("000000.label");
    std::fs::write(
        &label_path,
        [0x0003_0001u32, 0x0000_0028].iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>(),
    )
    .unwrap();
    let scan = read_labeled_scan(&scan_path, Some(&label_path)).map_err(|e| e.to_string())?;
    if scan.cloud.features() != values || scan.cloud.labels() != Some(&[1u16, 40][..]) {
        return Err("fixture values differ after reading".into());
    }
    let labels = read_labels(&label_path, 2).unwrap();
    if (labels[0].semantic, labels[0].instance) != (1, 3) {
        return Err("label bit layout".into());
    }
    let bad_scan = dir.path().join("bad.bin");
    std::fs::write(&bad_scan, [0u8; 17]).unwrap();
    let bad_label = decode_labels_bytes(Path::new("bad.label"), &[0u8; 10], 2);
    let rejected = matches!(read_scan(&bad_scan), Err(Error::Malformed { .. }))
        && bad_label.is_err()
        && matches!(read_labels(&label_path, 3), Err(Error::LabelCount { expected: 3, found: 2 }));
    check(rejected, "fixtures exact; 17-byte scan, 10-byte and short label files rejected".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("1 api boundary coverage", c1_api_coverage),
        ("2 uniform volume law", c2_uniform_volume_law),
        ("3 api cubic volume asymptote", c3_api_cubic_asymptote),
        ("4 multi-scale merge identity", c4_merge_identity),
        ("5 radial index oracle", c5_index_oracle),
        ("6 near-band encoding error direction", c6_encoding_error_direction),
        ("7 point balance direction", c7_balance_direction),
        ("8 non-empty count ordering", c8_count_ordering),
        ("9 receptive length profile", c9_receptive_profile),
        ("10 determinism and throughput", c10_determinism_and_throughput),
        ("11 file format exactness", c11_file_formats),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS [{name}] {detail}"),
            Err(detail) => {
                println!("FAIL [{name}] {detail}");
                failed += 1;
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
