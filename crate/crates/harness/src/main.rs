use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pose_forge::fitting::FitParams;
use pose_forge::fragments::{FragmentAtlas, DEFAULT_FRAGMENT_COUNT};
use pose_forge::metrics::{discover_symmetries, ScoringProtocol, SymmetryParams};
use pose_forge::rasterizer::render_distance_map;
use pose_forge_harness::depth::save_distance;
use pose_forge_harness::error::{HarnessError, Result};
use pose_forge_harness::eval::{evaluate, load_dataset};
use pose_forge_harness::fit::{fit_all, load_inputs, load_models, FitOptions};
use pose_forge_harness::ply::load_model;
use pose_forge_harness::results::{load_results, save_results};
use pose_forge_harness::scene::{load_cameras, pose_from_rows};
use pose_forge_harness::symmetry_io::{save_symmetries, ObjectSymmetries};
use pose_forge_harness::toy::write_toy_dataset;

#[derive(Parser)]
#[command(name = "pose-forge", version, about = "6D pose fitting and BOP-style evaluation")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "POSE_FORGE_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit poses to prediction maps and write a results CSV.
    Fit(FitArgs),
    /// Score a results CSV against a dataset.
    Eval(EvalArgs),
    /// Discover the symmetries of a model.
    Sym(SymArgs),
    /// Render a model's distance map as a 16-bit PNG.
    Render(RenderArgs),
    /// Sample fragment centers on a model.
    Fps(FpsArgs),
    /// Write the bundled toy dataset.
    Toy {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct FitArgs {
    /// Directory with obj_XXXXXX.ply models.
    #[arg(long)]
    models: PathBuf,
    /// scene_camera.json of the images the maps belong to.
    #[arg(long)]
    camera: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Prediction map files.
    #[arg(required = true)]
    maps: Vec<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_instances: Option<usize>,
    /// Record per-image wall-clock time instead of 0.
    #[arg(long)]
    timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Protocol {
    Bop,
    Siso2017,
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset root with models/ and test/.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    results: PathBuf,
    #[arg(long, value_enum, default_value_t = Protocol::Bop)]
    protocol: Protocol,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SymArgs {
    #[arg(long)]
    model: PathBuf,
    /// Object id used as the annotation key.
    #[arg(long, default_value_t = 1)]
    obj_id: u32,
    /// Hausdorff tolerance in mm (default: max(15, 0.1 * diameter)).
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    model: PathBuf,
    /// scene_camera.json.
    #[arg(long)]
    camera: PathBuf,
    #[arg(long, default_value_t = 0)]
    im_id: u32,
    /// Rotation, 9 row-major values.
    #[arg(long, num_args = 9, allow_negative_numbers = true, required = true)]
    rotation: Vec<f64>,
    /// Translation in mm.
    #[arg(long, num_args = 3, allow_negative_numbers = true, required = true)]
    translation: Vec<f64>,
    /// Millimeters per stored unit.
    #[arg(long, default_value_t = 0.1)]
    scale: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FpsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = DEFAULT_FRAGMENT_COUNT)]
    n: usize,
    /// Write the atlas as JSON here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(a) => {
            let models = load_models(&a.models)?;
            let cameras = load_cameras(&a.camera, None)?;
            let inputs = load_inputs(&a.maps, &cameras)?;
            let options = FitOptions {
                params: FitParams { seed: a.seed, max_instances: a.max_instances, ..FitParams::default() },
                timing: a.timing,
                ..FitOptions::default()
            };
            let records = fit_all(&inputs, &models, &options)?;
            save_results(&a.out, &records)?;
            eprintln!("{} estimates from {} map files", records.len(), inputs.len());
        }
        Command::Eval(a) => {
            let dataset = load_dataset(&a.dataset)?;
            let results = load_results(&a.results)?;
            let protocol = match a.protocol {
                Protocol::Bop => ScoringProtocol::bop(),
                Protocol::Siso2017 => ScoringProtocol::siso2017(),
            };
            let report = evaluate(&dataset, &results, &protocol)?;
            print!("{}", report.table());
            if let Some(path) = a.json {
                std::fs::write(&path, report.json()).map_err(|e| HarnessError::io(path, e))?;
            }
        }
        Command::Sym(a) => {
            let mesh = load_model(&a.model)?;
            let params = SymmetryParams { epsilon: a.epsilon, ..SymmetryParams::default() };
            let set = discover_symmetries(&mesh, &params)?;
            save_symmetries(&a.out, &[(a.obj_id, ObjectSymmetries::from_set(&set))].into())?;
            println!("{} transforms", set.len());
        }
        Command::Render(a) => {
            let mesh = load_model(&a.model)?;
            let cameras = load_cameras(&a.camera, None)?;
            let &(cam, _) = cameras
                .get(&a.im_id)
                .ok_or_else(|| HarnessError::missing(a.camera.display().to_string(), format!("image {}", a.im_id)))?;
            let pose = pose_from_rows("--rotation", &a.rotation, &a.translation)?;
            if !(a.scale > 0.0) {
                return Err(HarnessError::Validation("--scale must be positive".into()));
            }
            let map = render_distance_map(&mesh, &pose, &cam);
            save_distance(&a.out, &map, a.scale)?;
            println!("{} pixels covered", map.covered_count());
        }
        Command::Fps(a) => {
            let mesh = load_model(&a.model)?;
            let atlas = FragmentAtlas::build(&mesh, a.n)?;
            let mut sizes = vec![0usize; atlas.fragment_count()];
            for &f in &atlas.vertex_assignment {
                sizes[f] += 1;
            }
            let fragments: Vec<_> = (0..atlas.fragment_count())
                .map(|f| {
                    let c = atlas.centers[f];
                    serde_json::json!({ "center": [c.x, c.y, c.z], "normalizer": atlas.normalizers[f], "vertices": sizes[f] })
                })
                .collect();
            let mut text = serde_json::to_string_pretty(&serde_json::json!({ "fragments": fragments }))
                .unwrap_or_default();
            text.push('\n');
            match a.out {
                Some(path) => std::fs::write(&path, text).map_err(|e| HarnessError::io(path, e))?,
                None => print!("{text}"),
            }
        }
        Command::Toy { out } => write_toy_dataset(&out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        pool = pool.num_threads(j);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
