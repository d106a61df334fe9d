//! `sfs`: render synthetic scenes, find singular points, build and solve the
//! configuration graph, resolve it with anchors and reconstruct surfaces.
//!
//! Every stage writes plain files into `--out`, so later stages can be rerun
//! on their own.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sfs_core::anchors::{anchors_to_json, load_anchors, BCAnchor, Resolution};
use sfs_core::graph::Configuration;
use sfs_core::io::{read_height_csv, read_pgm, read_text, round_sig, write_height_csv, write_json, write_pgm};
use sfs_core::maxcut::{enumerate_candidates, SolverReport};
use sfs_core::pipeline::{self, metrics, Analysis, Params};
use sfs_core::reconstruct::{export_obj, ReconstructionResult};
use sfs_core::scenes::Scene;
use sfs_core::singular::points_to_json;
use sfs_core::{render_lambertian, quantize_8bit, HeightField, IrradianceImage, SfsError, SurfaceKind};

#[derive(Parser)]
#[command(name = "sfs", version, about = "Shape from shading through singular-point graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic scene: truth.csv, image.pgm and anchors.json.
    Render(RenderArgs),
    /// Detect singular points: points.json.
    Detect(StageArgs),
    /// Build the configuration graph: points.json and graph.dot.
    Graph(StageArgs),
    /// Solve for configurations, and resolve them when anchors are given:
    /// points.json, graph.dot, report.json and resolution.json.
    Solve(SolveArgs),
    /// Reconstruct a surface: surface.csv, surface.obj and metrics.json.
    Reconstruct(ReconstructArgs),
    /// Render a scene and run every stage on it with its standard anchors.
    Roundtrip(RoundtripArgs),
}

#[derive(Args)]
struct SceneArgs {
    /// Scene name; run `sfs render --scene help` for the list.
    #[arg(long)]
    scene: Option<String>,
    /// Height-field CSV to render instead of a named scene.
    #[arg(long, conflicts_with = "scene")]
    surface: Option<PathBuf>,
    /// Vertical scale of a named scene.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    scene: SceneArgs,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct Tolerances {
    /// Brightness margin below e_max that counts as singular.
    #[arg(long, default_value_t = sfs_core::eikonal::DEFAULT_EPS_SING)]
    eps_sing: f64,
    /// Brightness margin below which slowness is treated as zero.
    #[arg(long, default_value_t = sfs_core::eikonal::DEFAULT_EPS_FLAT)]
    eps_flat: f64,
    /// Minimum pixel distance between singular points.
    #[arg(long, default_value_t = sfs_core::singular::DEFAULT_MIN_SEP)]
    min_sep: f64,
    /// Cycle residual allowed in a feasible configuration [default: 10% of the mean edge weight].
    #[arg(long)]
    cycle_tol: Option<f64>,
    /// Anchor misfit allowed per class [default: 25% of the class's mean edge weight].
    #[arg(long)]
    accept_tol: Option<f64>,
}

impl Tolerances {
    fn params(&self) -> Params {
        Params {
            eps_sing: self.eps_sing,
            eps_flat: self.eps_flat,
            min_sep: self.min_sep,
            cycle_tol: self.cycle_tol,
            accept_tol: self.accept_tol,
        }
    }
}

#[derive(Args)]
struct StageArgs {
    /// 8-bit PGM (P2 or P5).
    #[arg(long)]
    image: PathBuf,
    #[command(flatten)]
    tol: Tolerances,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    stage: StageArgs,
    /// JSON list of `{"row", "col", "depth"}` records.
    #[arg(long)]
    anchors: Option<PathBuf>,
    /// Record the solver's wall time in report.json.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct ReconstructArgs {
    #[command(flatten)]
    stage: StageArgs,
    /// Solver report from `solve` [default: <out>/report.json].
    #[arg(long)]
    report: Option<PathBuf>,
    /// Resolve the configuration with these anchors instead of picking a candidate.
    #[arg(long, conflicts_with = "candidate")]
    anchors: Option<PathBuf>,
    /// Candidate index; bit k set flips ambiguity class k of the report.
    #[arg(long, default_value_t = 0)]
    candidate: usize,
    /// True height-field CSV, to add depth errors to metrics.json.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct RoundtripArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    tol: Tolerances,
    /// Reconstruct this candidate instead of resolving with the scene's anchors.
    #[arg(long)]
    candidate: Option<usize>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

/// Process exit status for each failure class.
fn exit_code(err: &SfsError) -> u8 {
    match err {
        SfsError::NoSingularPoint
        | SfsError::DegenerateImage { .. }
        | SfsError::Unreachable { .. }
        | SfsError::DescentStall { .. }
        | SfsError::NoMaximumSource => 3,
        SfsError::InfeasibleConfiguration { .. } | SfsError::InconsistentAnchors(_) => 4,
        SfsError::UnresolvedAmbiguity(_) => 5,
        _ => 2,
    }
}

type Result<T> = sfs_core::Result<T>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Render(a) => cmd_render(&a),
        Command::Detect(a) => cmd_detect(&a),
        Command::Graph(a) => cmd_graph(&a),
        Command::Solve(a) => cmd_solve(&a),
        Command::Reconstruct(a) => cmd_reconstruct(&a),
        Command::Roundtrip(a) => cmd_roundtrip(&a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn out_dir(dir: &Path) -> Result<&Path> {
    fs::create_dir_all(dir).map_err(|e| SfsError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| SfsError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

struct Rendered {
    truth: HeightField,
    image: IrradianceImage,
    anchors: Vec<BCAnchor>,
}

fn render_scene(args: &SceneArgs) -> Result<Rendered> {
    let (truth, anchors) = match (&args.scene, &args.surface) {
        (Some(name), None) => {
            let kind: SurfaceKind = name.parse()?;
            let scene = Scene::standard(kind).ok_or_else(|| {
                SfsError::InvalidInput("use --surface <file.csv> for csv surfaces".into())
            })?;
            let truth = scene.truth(args.scale)?;
            let anchors = scene.anchors(&truth);
            (truth, anchors)
        }
        (None, Some(path)) => (read_height_csv(path)?, Vec::new()),
        _ => {
            return Err(SfsError::InvalidInput(format!(
                "give --scene <name> or --surface <file.csv>; scenes: {}",
                SurfaceKind::names()
            )))
        }
    };
    // The image goes through an 8-bit file, so work on what the file holds.
    let image = quantize_8bit(&render_lambertian(&truth, 1.0)?)?;
    Ok(Rendered { truth, image, anchors })
}

fn write_rendered(r: &Rendered, dir: &Path) -> Result<()> {
    write_height_csv(&r.truth, dir.join("truth.csv"))?;
    write_pgm(&r.image, dir.join("image.pgm"))?;
    if !r.anchors.is_empty() {
        write_text(&dir.join("anchors.json"), &anchors_to_json(&r.anchors))?;
    }
    Ok(())
}

fn cmd_render(a: &RenderArgs) -> Result<()> {
    let rendered = render_scene(&a.scene)?;
    let dir = out_dir(&a.out)?;
    write_rendered(&rendered, dir)?;
    println!(
        "rendered {}x{} image, depth range {}",
        rendered.image.grid.width,
        rendered.image.grid.height,
        round_sig(rendered.truth.depth_range(), 6)
    );
    Ok(())
}

fn cmd_detect(a: &StageArgs) -> Result<()> {
    let img = read_pgm(&a.image)?;
    let regions = pipeline::detect(&img, &a.tol.params())?;
    let dir = out_dir(&a.out)?;
    write_text(&dir.join("points.json"), &points_to_json(&regions.points))?;
    println!("{} singular points", regions.points.len());
    Ok(())
}

fn cmd_graph(a: &StageArgs) -> Result<()> {
    let img = read_pgm(&a.image)?;
    let (regions, g) = pipeline::graph(&img, &a.tol.params())?;
    let dir = out_dir(&a.out)?;
    write_text(&dir.join("points.json"), &points_to_json(&regions.points))?;
    write_text(&dir.join("graph.dot"), &g.to_dot(None))?;
    println!("{} vertices, {} edges", g.n_vertices(), g.n_edges());
    Ok(())
}

#[derive(Serialize)]
struct ResolutionRecord {
    signs: Vec<i8>,
    choices: Vec<ChoiceRecord>,
    depths: Vec<Option<f64>>,
}

#[derive(Serialize)]
struct ChoiceRecord {
    class: usize,
    choice: usize,
    misfit: [f64; 2],
    references: usize,
}

fn resolution_record(r: &Resolution) -> ResolutionRecord {
    ResolutionRecord {
        signs: r.configuration.signs.clone(),
        choices: r
            .choices
            .iter()
            .map(|c| ChoiceRecord {
                class: c.class,
                choice: c.choice,
                misfit: c.misfit.map(|m| round_sig(m, 6)),
                references: c.references,
            })
            .collect(),
        depths: r.z.iter().map(|z| z.map(|v| round_sig(v, 6))).collect(),
    }
}

fn write_analysis(a: &Analysis, dir: &Path, timing: bool) -> Result<()> {
    write_text(&dir.join("points.json"), &points_to_json(&a.regions.points))?;
    write_text(&dir.join("graph.dot"), &a.graph.to_dot(Some(&a.report.chosen)))?;
    let mut report = a.report.clone();
    if !timing {
        report.wall_time_s = None;
    }
    write_text(&dir.join("report.json"), &report.to_json())
}

fn analyze_timed(img: &IrradianceImage, params: &Params) -> Result<Analysis> {
    let start = Instant::now();
    let mut a = pipeline::analyze(img, params)?;
    a.report.wall_time_s = Some(round_sig(start.elapsed().as_secs_f64(), 6));
    Ok(a)
}

fn cmd_solve(a: &SolveArgs) -> Result<()> {
    let img = read_pgm(&a.stage.image)?;
    let params = a.stage.tol.params();
    let anchors = a.anchors.as_ref().map(|p| load_anchors(p, &img.grid)).transpose()?;
    let analysis = analyze_timed(&img, &params)?;
    let dir = out_dir(&a.stage.out)?;
    write_analysis(&analysis, dir, a.timing)?;
    println!(
        "{} vertices, {} edges, {} ambiguity classes, objective {}",
        analysis.graph.n_vertices(),
        analysis.graph.n_edges(),
        analysis.report.classes.len(),
        round_sig(analysis.report.objective, 6)
    );
    if let Some(anchors) = anchors {
        let anchored = pipeline::resolve(&analysis, &anchors, &img, &params)?;
        write_json(&resolution_record(&anchored.resolution), dir.join("resolution.json"))?;
        write_text(&dir.join("graph.dot"), &anchored.graph.to_dot(None))?;
        println!("resolved {} classes with {} anchors", anchored.resolution.choices.len(), anchors.len());
    }
    Ok(())
}

fn write_surface(
    rec: &ReconstructionResult,
    img: &IrradianceImage,
    truth: Option<&HeightField>,
    dir: &Path,
) -> Result<()> {
    write_height_csv(&rec.surface, dir.join("surface.csv"))?;
    export_obj(&rec.surface, dir.join("surface.obj"))?;
    let m = metrics(rec, img, truth)?;
    write_json(&m, dir.join("metrics.json"))?;
    let mut line = format!("render residual {}", m.render_residual);
    if let Some(r) = m.relative_rmse {
        line.push_str(&format!(", depth rmse {} of range", r));
    }
    println!("{line}");
    Ok(())
}

fn candidate(report: &SolverReport, k: usize) -> Result<Configuration> {
    let all = enumerate_candidates(report, k.saturating_add(1));
    all.into_iter().nth(k).ok_or_else(|| {
        SfsError::InvalidInput(format!(
            "candidate {k} out of range: {} classes give {} candidates",
            report.classes.len(),
            1u64 << report.classes.len().min(63)
        ))
    })
}

fn cmd_reconstruct(a: &ReconstructArgs) -> Result<()> {
    let img = read_pgm(&a.stage.image)?;
    let params = a.stage.tol.params();
    let report_path = a.report.clone().unwrap_or_else(|| a.stage.out.join("report.json"));
    let report = SolverReport::from_json(&read_text(&report_path)?)?;
    let truth = a.truth.as_ref().map(read_height_csv).transpose()?;
    let anchors = a.anchors.as_ref().map(|p| load_anchors(p, &img.grid)).transpose()?;

    let (regions, graph) = pipeline::graph(&img, &params)?;
    if !report.matches_graph(&graph) {
        return Err(SfsError::InvalidInput(format!(
            "{} does not belong to this image and these tolerances",
            report_path.display()
        )));
    }
    let rec = match anchors {
        Some(anchors) => {
            let decomposition = sfs_core::graph::decompose(&graph);
            let analysis = Analysis {
                regions,
                graph,
                decomposition,
                report,
            };
            let anchored = pipeline::resolve(&analysis, &anchors, &img, &params)?;
            pipeline::reconstruct_anchored(&img, &anchored, &params)?
        }
        None => pipeline::reconstruct_relative(&img, &graph, &candidate(&report, a.candidate)?, &params)?,
    };
    let dir = out_dir(&a.stage.out)?;
    write_surface(&rec, &img, truth.as_ref(), dir)
}

fn cmd_roundtrip(a: &RoundtripArgs) -> Result<()> {
    let rendered = render_scene(&a.scene)?;
    let dir = out_dir(&a.out)?;
    write_rendered(&rendered, dir)?;
    let params = a.tol.params();
    let img = &rendered.image;
    let analysis = pipeline::analyze(img, &params)?;
    write_analysis(&analysis, dir, false)?;
    println!(
        "{} singular points, {} edges, {} ambiguity classes",
        analysis.regions.points.len(),
        analysis.graph.n_edges(),
        analysis.report.classes.len()
    );
    let rec = match a.candidate {
        Some(k) => pipeline::reconstruct_relative(img, &analysis.graph, &candidate(&analysis.report, k)?, &params)?,
        None if rendered.anchors.is_empty() => {
            return Err(SfsError::InvalidInput(
                "surfaces from CSV have no standard anchors; pass --candidate".into(),
            ))
        }
        None => {
            let anchored = pipeline::resolve(&analysis, &rendered.anchors, img, &params)?;
            write_json(&resolution_record(&anchored.resolution), dir.join("resolution.json"))?;
            pipeline::reconstruct_anchored(img, &anchored, &params)?
        }
    };
    write_surface(&rec, img, Some(&rendered.truth), dir)
}
