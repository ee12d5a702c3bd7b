use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use topocolor::color_network::ColorNetwork;
use topocolor::pipeline::{
    cmd_build_network, cmd_evaluate, cmd_recognize, cmd_train, cross_validate, describe_cloud, read_scene, write_scene,
    DataSource, Models, PipelineConfig,
};
use topocolor::pointcloud::read_ply;
use topocolor::synth::{generate_training_set, row_scene, write_dataset};
use topocolor::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser)]
#[command(name = "topocolor", version, about = "Shape-and-color object recognition on colored point clouds")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration (TOML); defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the training seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Color network file, overriding the configured path.
    #[arg(long, global = true)]
    network: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Color network operations.
    Network {
        #[command(subcommand)]
        action: NetworkAction,
    },
    /// Synthetic data generation.
    Synth {
        #[command(subcommand)]
        action: SynthAction,
    },
    /// Descriptor operations.
    Descriptor {
        #[command(subcommand)]
        action: DescriptorAction,
    },
    /// Trains the TOPS and TOPS2 classifiers.
    Train {
        /// Dataset directory; the configured synthetic suite when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recognizes every segmented object of a scene.
    Recognize {
        /// Directory with depth.png, rgb.png and segmentation.png.
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scores trained models on a labeled dataset, or cross-validates.
    Evaluate {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Required unless --folds is given.
        #[arg(long)]
        models: Option<PathBuf>,
        /// Retrain on k stratified folds instead of scoring fixed models.
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum NetworkAction {
    Build {
        /// Output file; the configured network path when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SynthAction {
    Generate {
        #[arg(long)]
        out: PathBuf,
        /// Render a scene of all shapes with this occluded fraction of the last one instead of a training set.
        #[arg(long)]
        scene: Option<f64>,
    },
}

#[derive(Subcommand)]
enum DescriptorAction {
    Compute {
        /// Input PLY cloud, in meters.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let Some(mut inner) = e.chain().find_map(|c| c.downcast_ref::<Error>()) else {
        return EXIT_DATA;
    };
    while let Error::Sample { source, .. } = inner {
        inner = source;
    }
    match inner {
        Error::InvalidArgument(_) => EXIT_USAGE,
        Error::DimensionMismatch { .. } | Error::NegativeWeight { .. } => EXIT_INTERNAL,
        _ => EXIT_DATA,
    }
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    if let Some(n) = &common.network {
        cfg.network_path = n.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_network(cfg: &PipelineConfig) -> Result<ColorNetwork> {
    ColorNetwork::read(&cfg.network_path)
        .with_context(|| format!("reading color network {} (build it with `topocolor network build`)", cfg.network_path.display()))
}

fn data_source(data: Option<PathBuf>) -> DataSource {
    data.map_or(DataSource::Synth, DataSource::Directory)
}

fn write_config(cfg: &PipelineConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    cfg.save(&dir.join("config.toml"))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    if cli.common.jobs > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cli.common.jobs).build_global().context("starting the thread pool")?;
    }
    match cli.command {
        Command::Network { action: NetworkAction::Build { out } } => {
            let out = out.unwrap_or_else(|| cfg.network_path.clone());
            let net = cmd_build_network(&cfg, &out)?;
            println!("color network: {} nodes, {} edges -> {}", net.n_c(), net.edges.len(), out.display());
        }
        Command::Synth { action: SynthAction::Generate { out, scene } } => match scene {
            Some(occlusion) => {
                let s = row_scene(&cfg.synth.shapes, occlusion, &cfg.camera)?;
                write_scene(&s, &out)?;
                write_config(&cfg, &out)?;
                println!("scene with {} objects -> {}", s.segmentation.instances().len(), out.display());
            }
            None => {
                let s = &cfg.synth;
                let clouds = generate_training_set(&s.shapes, &s.grid, &s.render)?;
                write_dataset(&out, &s.shapes, &s.grid, &s.render, &clouds)?;
                write_config(&cfg, &out)?;
                println!("{} clouds of {} shapes -> {}", clouds.len(), s.shapes.len(), out.display());
            }
        },
        Command::Descriptor { action: DescriptorAction::Compute { input, out } } => {
            let net = read_network(&cfg)?;
            let cloud = read_ply(&input).with_context(|| format!("reading {}", input.display()))?;
            let (tops, tops2) = describe_cloud(&cloud, &[], &net, &cfg)?;
            std::fs::create_dir_all(&out)?;
            tops.write_file(&out.join("tops.desc"))?;
            tops2.write_file(&out.join("tops2.desc"))?;
            std::fs::write(out.join("tops.txt"), tops.to_text())?;
            std::fs::write(out.join("tops2.txt"), tops2.to_text())?;
            write_config(&cfg, &out)?;
            println!("TOPS {} values, TOPS2 {} values, {} slices -> {}", tops.len(), tops2.len(), tops.slices, out.display());
        }
        Command::Train { data, out } => {
            read_network(&cfg)?;
            let report = cmd_train(&cfg, &data_source(data), &out)?;
            println!(
                "{} clouds, {} samples; train accuracy TOPS {:.4}, TOPS2 {:.4} -> {}",
                report.clouds,
                report.samples,
                report.tops.train_accuracy,
                report.tops2.train_accuracy,
                out.display()
            );
        }
        Command::Recognize { scene, models, out } => {
            let net = read_network(&cfg)?;
            let models = Models::load(&models).with_context(|| format!("loading models from {}", models.display()))?;
            let s = read_scene(&scene).with_context(|| format!("reading scene {}", scene.display()))?;
            let jobs = if cli.common.jobs == 0 { rayon::current_num_threads() } else { cli.common.jobs };
            let report = cmd_recognize(&s, &models, &net, &cfg, jobs)?;
            report.write(&out)?;
            write_config(&cfg, &out)?;
            print!("{}", report.to_csv());
        }
        Command::Evaluate { data, models, folds, out } => {
            if folds.is_none() && models.is_none() {
                return Err(Error::InvalidArgument("evaluate needs --models or --folds".into()).into());
            }
            let net = read_network(&cfg)?;
            let source = data_source(data);
            let report = match folds {
                Some(k) => cross_validate(&source, &net, &cfg, k)?,
                None => {
                    let m = models.expect("checked above");
                    let models = Models::load(&m).with_context(|| format!("loading models from {}", m.display()))?;
                    cmd_evaluate(&source, &models, &net, &cfg)?
                }
            };
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("evaluation.toml"), report.to_text())?;
            write_config(&cfg, &out)?;
            print!("{}", report.to_text());
        }
    }
    Ok(())
}
