//! Command-line front end for `nucvox`.
//!
//! [`run`] parses an argument vector, executes one subcommand and returns the
//! process exit code. Failures print a single `error[<kind>]: <message>` line
//! on stderr.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use nucvox::analysis::{
    analyze, compare_schemes, reports_to_csv, scheme_label, AnalysisOptions, AnalysisReport, ComparisonReport,
    SEMANTICKITTI_NONEMPTY_REFERENCE,
};
use nucvox::io::{
    generate_synthetic, grid_to_json, load_config, read_labeled_scan, save_grid, write_labels, write_scan,
    RadialProfile, SynthesisSpec,
};
use nucvox::{build_boundaries, DistanceBands, GridConfig, OutOfRangePolicy, PartitionScheme, PointCloud, Voxelizer};
use serde::Serialize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISSING_INPUT: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;
pub const EXIT_MALFORMED: i32 = 5;

pub const SEQUENCE_SCHEMA: &str = "nucvox.sequence/1";

const EXIT_HELP: &str = "\
Exit codes:
  0  success
  1  output could not be written
  2  usage error: unknown flag, missing argument or unparsable value
  3  missing input: a scan, label, config or directory path does not exist
  4  configuration failed validation
  5  malformed input data: scan or label file size, rejected values

Errors are printed to stderr as one line: error[<kind>]: <message>
where kind is one of failure, usage, missing-input, config, malformed.";

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    fn new(code: i32, kind: &'static str, message: impl Into<String>) -> Self {
        CliError { code, kind, message: message.into() }
    }

    fn usage(message: impl Into<String>) -> Self {
        CliError::new(EXIT_USAGE, "usage", message)
    }

    fn config(message: impl Into<String>) -> Self {
        CliError::new(EXIT_CONFIG, "config", message)
    }

    fn missing(path: &Path) -> Self {
        CliError::new(EXIT_MISSING_INPUT, "missing-input", format!("no such file or directory: {}", path.display()))
    }

    /// The one-line rendering written to stderr.
    pub fn line(&self) -> String {
        let message = self.message.split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error[{}]: {}", self.kind, message)
    }
}

impl From<nucvox::Error> for CliError {
    fn from(e: nucvox::Error) -> Self {
        use nucvox::Error as E;
        match &e {
            E::Config(_) | E::UnsupportedScheme(_) => CliError::config(e.to_string()),
            E::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                CliError::new(EXIT_MISSING_INPUT, "missing-input", e.to_string())
            }
            E::Io { .. } => CliError::new(EXIT_FAILURE, "failure", e.to_string()),
            _ => CliError::new(EXIT_MALFORMED, "malformed", e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "nucvox",
    version,
    about = "Cylindrical voxelization of LiDAR scans with non-uniform radial partitions",
    after_help = EXIT_HELP
)]
struct Cli {
    /// Worker threads for voxelization and analysis (default: all cores).
    #[arg(long, global = true, env = "NUC_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a sparse voxel grid from a scan and write it as JSON, or as
    /// binary when the output ends in `.nucvox`.
    Voxelize {
        /// Scan file (KITTI `.bin`: x, y, z, intensity as little-endian f32).
        input: PathBuf,
        /// Label file; defaults to a matching `.label` next to the scan or in
        /// `../labels/`, when present.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Analyze one scan, or every `.bin` scan of a directory (a sequence),
    /// reporting per-band encoding error, occupancy and receptive length.
    Analyze {
        /// Scan file or directory of scans (a `velodyne/` subdirectory is
        /// used when present).
        input: PathBuf,
        /// Label file, or label directory for a sequence.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Leave label 0 (unlabeled) points out of the analysis.
        #[arg(long)]
        exclude_ignore: bool,
        /// Add published SemanticKITTI non-empty voxel counts next to the
        /// measured means.
        #[arg(long)]
        reference: bool,
        #[command(flatten)]
        report: ReportArgs,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Analyze one cloud under several partition schemes.
    Compare {
        /// Scan file; a synthetic scene generated from --seed when omitted.
        input: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Comma-separated schemes, each optionally suffixed with a radial
        /// bin count, e.g. `uniform:480`.
        #[arg(long, value_delimiter = ',', default_value = "uniform,api,gpi,piecewise")]
        schemes: Vec<String>,
        /// Seed of the synthetic scene used without an input scan.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        exclude_ignore: bool,
        #[command(flatten)]
        report: ReportArgs,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Write a labeled synthetic scan (`.bin` plus `.label`).
    GenSynthetic {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Scan output path.
        #[arg(long)]
        out: PathBuf,
        /// Label output path; defaults to the scan path with a `.label`
        /// extension.
        #[arg(long)]
        labels_out: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        beams: usize,
        #[arg(long, default_value_t = 2048)]
        azimuth: usize,
        #[arg(long, default_value_t = 1.0)]
        min_range: f64,
        #[arg(long, default_value_t = 50.0)]
        max_range: f64,
        /// Drop probability at max range; falls off linearly towards the
        /// sensor.
        #[arg(long, default_value_t = 0.2)]
        dropout: f64,
        #[arg(long, value_enum, default_value_t = Profile::InverseSquare)]
        profile: Profile,
    },
    /// Print the radial boundary sequence of a configuration.
    Boundaries {
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        grid: GridArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeKind {
    Uniform,
    Api,
    Gpi,
    Piecewise,
    IncreasingD,
}

impl SchemeKind {
    fn name(self) -> &'static str {
        match self {
            SchemeKind::Uniform => "uniform",
            SchemeKind::Api => "api",
            SchemeKind::Gpi => "gpi",
            SchemeKind::Piecewise => "piecewise",
            SchemeKind::IncreasingD => "increasing-d",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Oor {
    Clamp,
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Profile {
    InverseSquare,
    UniformArea,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Distance band edges in metres.
    #[arg(long, value_delimiter = ',', default_value = "0,10,20,30,40,50")]
    bands: Vec<f64>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Grid flags. Each one overrides the matching value of `--config`.
#[derive(Debug, Default, Args)]
struct GridArgs {
    /// TOML grid configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Radial partition scheme [default: api].
    #[arg(long, value_enum)]
    scheme: Option<SchemeKind>,
    /// First radial interval, metres (api, gpi, increasing-d) [default: 0.05].
    #[arg(long, allow_negative_numbers = true)]
    a0: Option<f64>,
    /// Common difference, metres (api, increasing-d) [default: 0.0062].
    #[arg(long, allow_negative_numbers = true)]
    d: Option<f64>,
    /// Common ratio (gpi) [default: 1.0541].
    #[arg(long, allow_negative_numbers = true)]
    ratio: Option<f64>,
    /// Growth of the common difference (increasing-d) [default: 0.000025].
    #[arg(long, allow_negative_numbers = true)]
    d_prime: Option<f64>,
    /// Region edges in metres (piecewise) [default: 0,15,30,50].
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    region_bounds: Option<Vec<f64>>,
    /// Bins per region, or a ratio dividing --nr (piecewise) [default: 8,3,1].
    #[arg(long, value_delimiter = ',')]
    region_counts: Option<Vec<usize>>,
    /// Radial bins [default: 120].
    #[arg(long)]
    nr: Option<usize>,
    /// Angular bins over [-pi, pi) [default: 360].
    #[arg(long)]
    nphi: Option<usize>,
    /// Height bins [default: 32].
    #[arg(long)]
    nz: Option<usize>,
    /// Radial extent of the uniform scheme, metres [default: 50].
    #[arg(long)]
    rmax: Option<f64>,
    /// Lower height bound, metres [default: -4; a tool convention, not a
    /// dataset constant].
    #[arg(long, allow_negative_numbers = true)]
    zmin: Option<f64>,
    /// Upper height bound, metres [default: 2; a tool convention, not a
    /// dataset constant].
    #[arg(long, allow_negative_numbers = true)]
    zmax: Option<f64>,
    /// Scale levels of the multi-scale pyramid (api only above 1) [default: 1].
    #[arg(long)]
    scales: Option<u32>,
    /// Points outside the grid bounds are clamped to the border cell or
    /// dropped [default: clamp].
    #[arg(long, value_enum)]
    oor: Option<Oor>,
}

impl GridArgs {
    /// Config file (or defaults) with inline flags applied, validated.
    fn resolve(&self) -> CliResult<GridConfig> {
        let mut config = match &self.config {
            Some(path) if !path.exists() => return Err(CliError::missing(path)),
            Some(path) => load_config(path)?,
            None => GridConfig::default(),
        };
        if let Some(kind) = self.scheme {
            if kind.name() != config.scheme.name() {
                config.scheme = PartitionScheme::default_for(kind.name()).expect("known scheme");
            }
        }
        self.apply_scheme_flags(&mut config.scheme)?;
        let dims = [(&mut config.n_r, self.nr), (&mut config.n_phi, self.nphi), (&mut config.n_z, self.nz)];
        for (slot, value) in dims {
            if let Some(v) = value {
                *slot = v;
            }
        }
        let bounds = [(&mut config.r_max, self.rmax), (&mut config.z_min, self.zmin), (&mut config.z_max, self.zmax)];
        for (slot, value) in bounds {
            if let Some(v) = value {
                *slot = v;
            }
        }
        if let Some(s) = self.scales {
            config.scales = s;
        }
        if let Some(oor) = self.oor {
            config.out_of_range = match oor {
                Oor::Clamp => OutOfRangePolicy::Clamp,
                Oor::Drop => OutOfRangePolicy::Drop,
            };
        }
        config.validate()?;
        Ok(config)
    }

    fn apply_scheme_flags(&self, scheme: &mut PartitionScheme) -> CliResult<()> {
        let name = scheme.name();
        let mut used = Vec::new();
        match scheme {
            PartitionScheme::Uniform => {}
            PartitionScheme::Api { a0, d } => {
                set(a0, self.a0, "a0", &mut used);
                set(d, self.d, "d", &mut used);
            }
            PartitionScheme::Gpi { a0, ratio } => {
                set(a0, self.a0, "a0", &mut used);
                set(ratio, self.ratio, "ratio", &mut used);
            }
            PartitionScheme::Piecewise { region_bounds, region_counts } => {
                set(region_bounds, self.region_bounds.clone(), "region-bounds", &mut used);
                set(region_counts, self.region_counts.clone(), "region-counts", &mut used);
            }
            PartitionScheme::IncreasingD { a0, d, d_prime } => {
                set(a0, self.a0, "a0", &mut used);
                set(d, self.d, "d", &mut used);
                set(d_prime, self.d_prime, "d-prime", &mut used);
            }
        }
        let given = [
            ("a0", self.a0.is_some()),
            ("d", self.d.is_some()),
            ("ratio", self.ratio.is_some()),
            ("d-prime", self.d_prime.is_some()),
            ("region-bounds", self.region_bounds.is_some()),
            ("region-counts", self.region_counts.is_some()),
        ];
        match given.iter().find(|(flag, on)| *on && !used.contains(flag)) {
            Some((flag, _)) => Err(CliError::config(format!("--{flag} does not apply to the {name} scheme"))),
            None => Ok(()),
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>, flag: &'static str, used: &mut Vec<&'static str>) {
    used.push(flag);
    if let Some(v) = value {
        *slot = v;
    }
}

/// Runs the command line `argv` (program name first) and returns the exit
/// code. Normal output goes to `stdout` unless redirected with `--out`.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let command = Cli::command().mut_subcommands(|sub| sub.after_help(EXIT_HELP));
    let matches = match command.try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => return report_parse_error(e, stdout, stderr),
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => return report_parse_error(e, stdout, stderr),
    };
    match execute(cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "{}", e.line());
            e.code
        }
    }
}

fn report_parse_error(e: clap::Error, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    use clap::error::ErrorKind;
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
            let _ = write!(stdout, "{}", e.render());
            EXIT_OK
        }
        ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            let _ = write!(stderr, "{}", e.render());
            EXIT_USAGE
        }
        _ => {
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            let _ = writeln!(stderr, "{}", CliError::usage(first.trim_start_matches("error: ")).line());
            EXIT_USAGE
        }
    }
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> CliResult<()> {
    let threads = cli.threads;
    if threads == Some(0) {
        return Err(CliError::usage("--threads must be >= 1"));
    }
    match cli.command {
        Command::Voxelize { input, labels, out, grid } => {
            let config = grid.resolve()?;
            let cloud = load_cloud(&input, labels.as_deref())?;
            let grid = Voxelizer::new(config)?.with_threads(threads).voxelize(&cloud)?;
            match out {
                Some(path) => save_grid(&path, &grid).map_err(CliError::from),
                None => emit(None, stdout, &(grid_to_json(&grid)? + "\n")),
            }
        }
        Command::Analyze { input, labels, exclude_ignore, reference, report, grid } => {
            let config = grid.resolve()?;
            let bands = DistanceBands::new(report.bands.clone())?;
            let options = AnalysisOptions { exclude_ignore, threads, ..AnalysisOptions::default() };
            run_analyze(&input, labels.as_deref(), reference, &config, &bands, &options, &report, stdout)
        }
        Command::Compare { input, labels, schemes, seed, exclude_ignore, report, grid } => {
            let base = grid.resolve()?;
            let configs = schemes.iter().map(|s| scheme_config(&base, s)).collect::<CliResult<Vec<_>>>()?;
            let cloud = match &input {
                Some(path) => load_cloud(path, labels.as_deref())?,
                None if labels.is_some() => return Err(CliError::usage("--labels needs an input scan")),
                None => generate_synthetic(&SynthesisSpec::default().with_seed(seed))?,
            };
            let bands = DistanceBands::new(report.bands.clone())?;
            let options = AnalysisOptions { exclude_ignore, threads, ..AnalysisOptions::default() };
            let comparison = compare_schemes(&cloud, &configs, &bands, &options)?;
            let text = match report.format {
                Format::Json => to_json(&comparison)?,
                Format::Csv => comparison_csv(&comparison)?,
            };
            emit(report.out.as_deref(), stdout, &text)
        }
        Command::GenSynthetic { seed, out, labels_out, beams, azimuth, min_range, max_range, dropout, profile } => {
            let spec = SynthesisSpec {
                beam_count: beams,
                azimuth_samples: azimuth,
                min_range,
                max_range,
                dropout,
                profile: match profile {
                    Profile::InverseSquare => RadialProfile::InverseSquare,
                    Profile::UniformArea => RadialProfile::UniformArea,
                },
                seed,
                ..SynthesisSpec::default()
            };
            let cloud = generate_synthetic(&spec)?;
            let labels_out = labels_out.unwrap_or_else(|| out.with_extension("label"));
            write_scan(&out, &cloud)?;
            write_labels(&labels_out, cloud.labels().expect("synthetic clouds are labeled"))?;
            let summary = SyntheticSummary { scan: &out, labels: &labels_out, points: cloud.len(), spec: &spec };
            emit(None, stdout, &to_json(&summary)?)
        }
        Command::Boundaries { format, out, grid } => {
            let config = grid.resolve()?;
            let boundaries = build_boundaries(&config)?;
            let text = match format {
                Format::Json => to_json(&BoundaryListing { config: &config, boundaries: boundaries.edges() })?,
                Format::Csv => {
                    let mut text = config_comment(None, &config)?;
                    text.push_str("index,boundary\n");
                    for (i, b) in boundaries.edges().iter().enumerate() {
                        text.push_str(&format!("{i},{b}\n"));
                    }
                    text
                }
            };
            emit(out.as_deref(), stdout, &text)
        }
    }
}

#[derive(Serialize)]
struct BoundaryListing<'a> {
    config: &'a GridConfig,
    boundaries: &'a [f64],
}

#[derive(Serialize)]
struct SyntheticSummary<'a> {
    scan: &'a Path,
    labels: &'a Path,
    points: usize,
    spec: &'a SynthesisSpec,
}

/// `kind` or `kind:n_r`, on top of the resolved base config. The base
/// scheme's parameters are kept when its kind is named.
fn scheme_config(base: &GridConfig, entry: &str) -> CliResult<GridConfig> {
    let (kind, bins) = match entry.split_once(':') {
        Some((kind, n)) => {
            let n = n
                .parse::<usize>()
                .map_err(|_| CliError::usage(format!("bad radial bin count in scheme entry '{entry}'")))?;
            (kind.trim(), Some(n))
        }
        None => (entry.trim(), None),
    };
    let scheme = if kind == base.scheme.name() {
        base.scheme.clone()
    } else {
        PartitionScheme::default_for(kind).ok_or_else(|| {
            CliError::usage(format!("unknown scheme '{kind}' (expected uniform, api, gpi, piecewise or increasing-d)"))
        })?
    };
    let mut config = base.clone().with_scheme(scheme);
    if let Some(n) = bins {
        config = config.with_radial_bins(n);
    }
    config.validate()?;
    Ok(config)
}

fn load_cloud(scan: &Path, labels: Option<&Path>) -> CliResult<PointCloud> {
    if !scan.is_file() {
        return Err(CliError::missing(scan));
    }
    let labels = match labels {
        Some(path) if !path.is_file() => return Err(CliError::missing(path)),
        Some(path) => Some(path.to_path_buf()),
        None => find_labels(scan),
    };
    Ok(read_labeled_scan(scan, labels.as_deref())?.cloud)
}

/// `name.label` beside the scan, else in the sibling `labels/` directory of
/// the KITTI layout (`seq/velodyne/name.bin`, `seq/labels/name.label`).
fn find_labels(scan: &Path) -> Option<PathBuf> {
    let beside = scan.with_extension("label");
    if beside.is_file() {
        return Some(beside);
    }
    let name = Path::new(scan.file_name()?).with_extension("label");
    let sibling = scan.parent()?.parent()?.join("labels").join(name);
    sibling.is_file().then_some(sibling)
}

fn scan_paths(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let velodyne = dir.join("velodyne");
    let dir = if velodyne.is_dir() { velodyne } else { dir.to_path_buf() };
    let entries =
        fs::read_dir(&dir).map_err(|e| CliError::new(EXIT_FAILURE, "failure", format!("{}: {e}", dir.display())))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::new(EXIT_FAILURE, "failure", format!("{}: {e}", dir.display())))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "bin") {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(CliError::new(EXIT_MISSING_INPUT, "missing-input", format!("no .bin scans in {}", dir.display())));
    }
    paths.sort();
    Ok(paths)
}

#[derive(Debug, Serialize)]
struct SequenceReport {
    schema: &'static str,
    scheme: String,
    config: GridConfig,
    scans: Vec<ScanReport>,
    mean: MeanReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference: Option<Reference>,
}

#[derive(Debug, Serialize)]
struct ScanReport {
    scan: String,
    report: AnalysisReport,
}

/// Means over scans; encoding error pools every scan's points.
#[derive(Debug, Serialize)]
struct MeanReport {
    scans: usize,
    bands: Vec<MeanBand>,
    overall: MeanBand,
}

#[derive(Debug, Serialize)]
struct MeanBand {
    lo: Option<f64>,
    hi: Option<f64>,
    points: f64,
    encoding_error: Option<f64>,
    nonempty_voxels: f64,
    mean_points_per_nonempty_cell: Option<f64>,
}

/// Published SemanticKITTI counts for the matching scheme label.
#[derive(Debug, Serialize)]
struct Reference {
    dataset: &'static str,
    scheme: &'static str,
    nonempty_voxels: Vec<f64>,
    total: f64,
}

struct Tally {
    points: usize,
    misencoded: Option<usize>,
    nonempty: usize,
    voxel_points: usize,
}

fn mean_band(lo: Option<f64>, hi: Option<f64>, tallies: &[Tally]) -> MeanBand {
    let n = tallies.len() as f64;
    let points: usize = tallies.iter().map(|t| t.points).sum();
    let misencoded: Option<usize> = tallies.iter().map(|t| t.misencoded).sum();
    let nonempty: usize = tallies.iter().map(|t| t.nonempty).sum();
    let voxel_points: usize = tallies.iter().map(|t| t.voxel_points).sum();
    MeanBand {
        lo,
        hi,
        points: points as f64 / n,
        encoding_error: misencoded.filter(|_| points > 0).map(|m| m as f64 / points as f64),
        nonempty_voxels: nonempty as f64 / n,
        mean_points_per_nonempty_cell: (nonempty > 0).then(|| voxel_points as f64 / nonempty as f64),
    }
}

fn mean_report(scans: &[ScanReport], bands: &DistanceBands) -> MeanReport {
    let per_band = (0..bands.len())
        .map(|b| {
            let tallies: Vec<Tally> = scans
                .iter()
                .map(|s| {
                    let band = &s.report.bands[b];
                    Tally {
                        points: band.points,
                        misencoded: band.misencoded,
                        nonempty: band.nonempty_voxels,
                        voxel_points: band.voxel_points,
                    }
                })
                .collect();
            mean_band(Some(bands.edges()[b]), Some(bands.edges()[b + 1]), &tallies)
        })
        .collect();
    let overall: Vec<Tally> = scans
        .iter()
        .map(|s| Tally {
            points: s.report.overall.points,
            misencoded: s.report.overall.misencoded,
            nonempty: s.report.overall.nonempty_voxels,
            voxel_points: s.report.overall.voxel_points,
        })
        .collect();
    MeanReport { scans: scans.len(), bands: per_band, overall: mean_band(None, None, &overall) }
}

fn reference_for(config: &GridConfig, bands: &DistanceBands) -> Option<Reference> {
    if bands.edges() != DistanceBands::default().edges() {
        return None;
    }
    if config.scheme.name() == "api" && config.scheme != PartitionScheme::DEFAULT_API {
        return None;
    }
    let label = scheme_label(config);
    SEMANTICKITTI_NONEMPTY_REFERENCE.iter().find(|(name, _, _)| *name == label).map(|(name, per_band, total)| {
        Reference {
            dataset: "SemanticKITTI sequence 08",
            scheme: name,
            nonempty_voxels: per_band.to_vec(),
            total: *total,
        }
    })
}

#[allow(clippy::too_many_arguments)]
fn run_analyze(
    input: &Path,
    labels: Option<&Path>,
    reference: bool,
    config: &GridConfig,
    bands: &DistanceBands,
    options: &AnalysisOptions,
    report: &ReportArgs,
    stdout: &mut dyn Write,
) -> CliResult<()> {
    if !input.exists() {
        return Err(CliError::missing(input));
    }
    if input.is_file() && !reference {
        let cloud = load_cloud(input, labels)?;
        let result = analyze(&cloud, config, bands, options)?;
        let text = match report.format {
            Format::Json => to_json(&result)?,
            Format::Csv => {
                let mut text = config_comment(None, config)?;
                text.push_str(&reports_to_csv([&result])?);
                text
            }
        };
        return emit(report.out.as_deref(), stdout, &text);
    }

    let scans = if input.is_dir() { scan_paths(input)? } else { vec![input.to_path_buf()] };
    if let Some(dir) = labels.filter(|_| input.is_dir()) {
        if !dir.is_dir() {
            return Err(CliError::missing(dir));
        }
    }
    let mut reports = Vec::with_capacity(scans.len());
    for scan in &scans {
        let label_path = match labels {
            Some(dir) if input.is_dir() => {
                let path = dir.join(Path::new(scan.file_name().expect("scan file name")).with_extension("label"));
                Some(path).filter(|p| p.is_file())
            }
            other => other.map(Path::to_path_buf),
        };
        let cloud = load_cloud(scan, label_path.as_deref())?;
        reports.push(ScanReport {
            scan: scan.file_name().expect("scan file name").to_string_lossy().into_owned(),
            report: analyze(&cloud, config, bands, options)?,
        });
    }
    let sequence = SequenceReport {
        schema: SEQUENCE_SCHEMA,
        scheme: scheme_label(config),
        config: config.clone(),
        mean: mean_report(&reports, bands),
        scans: reports,
        reference: if reference { reference_for(config, bands) } else { None },
    };
    let text = match report.format {
        Format::Json => to_json(&sequence)?,
        Format::Csv => sequence_csv(&sequence)?,
    };
    emit(report.out.as_deref(), stdout, &text)
}

#[derive(Serialize)]
struct SequenceRow<'a> {
    scan: &'a str,
    scheme: &'a str,
    band_lo: Option<f64>,
    band_hi: Option<f64>,
    points: Option<f64>,
    encoding_error: Option<f64>,
    nonempty_voxels: f64,
    mean_points_per_nonempty_cell: Option<f64>,
}

fn sequence_csv(sequence: &SequenceReport) -> CliResult<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut row = |r: SequenceRow| writer.serialize(r).map_err(nucvox::Error::from);
    for scan in &sequence.scans {
        let bands = scan.report.bands.iter().map(|b| {
            let metrics = (b.points, b.encoding_error, b.nonempty_voxels, b.mean_points_per_nonempty_cell);
            (Some(b.lo), Some(b.hi), metrics)
        });
        let o = &scan.report.overall;
        let overall = (None, None, (o.points, o.encoding_error, o.nonempty_voxels, o.mean_points_per_nonempty_cell));
        for (lo, hi, (points, error, nonempty, mean)) in bands.chain([overall]) {
            row(SequenceRow {
                scan: &scan.scan,
                scheme: &sequence.scheme,
                band_lo: lo,
                band_hi: hi,
                points: Some(points as f64),
                encoding_error: error,
                nonempty_voxels: nonempty as f64,
                mean_points_per_nonempty_cell: mean,
            })?;
        }
    }
    for band in sequence.mean.bands.iter().chain([&sequence.mean.overall]) {
        row(SequenceRow {
            scan: "mean",
            scheme: &sequence.scheme,
            band_lo: band.lo,
            band_hi: band.hi,
            points: Some(band.points),
            encoding_error: band.encoding_error,
            nonempty_voxels: band.nonempty_voxels,
            mean_points_per_nonempty_cell: band.mean_points_per_nonempty_cell,
        })?;
    }
    if let Some(reference) = &sequence.reference {
        let edges = DistanceBands::default();
        let bands = edges.edges().windows(2).zip(&reference.nonempty_voxels).map(|(w, &n)| (Some(w[0]), Some(w[1]), n));
        for (lo, hi, nonempty) in bands.chain([(None, None, reference.total)]) {
            row(SequenceRow {
                scan: "reference",
                scheme: reference.scheme,
                band_lo: lo,
                band_hi: hi,
                points: None,
                encoding_error: None,
                nonempty_voxels: nonempty,
                mean_points_per_nonempty_cell: None,
            })?;
        }
    }
    let bytes = writer.into_inner().map_err(|e| CliError::new(EXIT_FAILURE, "failure", e.to_string()))?;
    let mut text = config_comment(None, &sequence.config)?;
    text.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
    Ok(text)
}

fn comparison_csv(comparison: &ComparisonReport) -> CliResult<String> {
    let mut text = String::new();
    for report in &comparison.reports {
        text.push_str(&config_comment(Some(&report.scheme), &report.config)?);
    }
    text.push_str(&comparison.to_csv()?);
    Ok(text)
}

/// `# config: {...}` header line echoing a resolved config in CSV output.
fn config_comment(label: Option<&str>, config: &GridConfig) -> CliResult<String> {
    let json = serde_json::to_string(config).map_err(nucvox::Error::from)?;
    Ok(match label {
        Some(label) => format!("# config {label}: {json}\n"),
        None => format!("# config: {json}\n"),
    })
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut text = serde_json::to_string_pretty(value).map_err(nucvox::Error::from)?;
    text.push('\n');
    Ok(text)
}

fn emit(out: Option<&Path>, stdout: &mut dyn Write, text: &str) -> CliResult<()> {
    let result = match out {
        Some(path) => fs::write(path, text).map_err(|e| format!("{}: {e}", path.display())),
        None => stdout.write_all(text.as_bytes()).map_err(|e| format!("stdout: {e}")),
    };
    result.map_err(|message| CliError::new(EXIT_FAILURE, "failure", message))
}
