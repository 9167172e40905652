use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use latent_steer::attributes::AttributeSet;
use latent_steer::eval::{
    eval_consistency, eval_diversity, initial_latents, lock_stability, run_ablation, steer_batch, EvalBatch,
};
use latent_steer::export::{dataset_from_csv, dataset_to_csv, latents_to_csv, DatasetMeta, LatentRow};
use latent_steer::linalg::{cosine_similarity, fit_axes, max_abs_deviation_from_identity, FeatureAxes};
use latent_steer::manifest::{sha256_hex, write_atomic, RunManifest};
use latent_steer::pipeline::{demo_world_spec, embed_descriptions, parse_descriptions, DEMO_DESCRIPTIONS};
use latent_steer::rng;
use latent_steer::steering::{AblationGroup, NormalizationMode, TextEmbedding};
use latent_steer::text::{classify_text, embedding_from_map, embedding_to_map, AttributeEntry, AttributeLexicon};
use latent_steer::ttfx::{world_from_ttfx, world_to_ttfx, AxesArtifact, TtfxFile};
use latent_steer::world::{make_world, sample_dataset, true_axis, SyntheticWorld, WorldSpec, DEFAULT_KAPPA};
use latent_steer::{Error, ErrorClass};

/// Fit disentangled attribute axes in a latent space and steer latents
/// toward text-described attributes.
#[derive(Parser, Debug)]
#[command(author, version)]
struct Cli {
    /// Directory used for artifact paths that are not given explicitly.
    #[arg(long, global = true, env = "LATENT_STEER_DIR", default_value = ".")]
    dir: PathBuf,

    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic world with known attribute directions.
    WorldGen(WorldGenArgs),
    /// Sample a labelled dataset from a world.
    Sample(SampleArgs),
    /// Fit raw and orthonormal attribute axes.
    Fit(FitArgs),
    /// Classify a description into attribute targets (JSON on stdout).
    Classify(ClassifyArgs),
    /// Steer a batch of seeded latents toward a description.
    Steer(SteerArgs),
    /// Run groups A-E over a set of descriptions.
    Ablate(AblateArgs),
}

#[derive(Args, Debug)]
struct WorldGenArgs {
    /// The shipped demo world (d_z 8 over Male, Smiling, Young).
    #[arg(long, conflicts_with_all = ["dz", "nattr", "rho", "kappa", "sigma", "seed", "attrs"])]
    demo: bool,
    #[arg(long, default_value_t = 512)]
    dz: usize,
    #[arg(long, default_value_t = 40)]
    nattr: usize,
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: f64,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Comma-separated CelebA attribute names (default: the first `nattr`).
    #[arg(long, value_delimiter = ',')]
    attrs: Option<Vec<String>>,
    /// Output world file [default: <dir>/world.ttfx].
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    /// World file [default: <dir>/world.ttfx].
    #[arg(long)]
    world: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV [default: <dir>/dataset.csv]; a `.manifest.json` sidecar is written next to it.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// World file [default: <dir>/world.ttfx].
    #[arg(long)]
    world: Option<PathBuf>,
    /// Fit from an existing dataset CSV instead of sampling.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1e-3)]
    ridge: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output axes file [default: <dir>/axes.ttfx].
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[arg(long)]
    text: String,
    /// Lexicon TOML file (default: the bundled lexicon).
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SteerArgs {
    /// Axes file [default: <dir>/axes.ttfx].
    #[arg(long)]
    axes: Option<PathBuf>,
    /// World file used as the attribute oracle [default: <dir>/world.ttfx].
    #[arg(long)]
    world: Option<PathBuf>,
    #[arg(long, required_unless_present = "target_json", conflicts_with = "target_json")]
    text: Option<String>,
    /// JSON file mapping attribute names to {value, specified}.
    #[arg(long)]
    target_json: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = latent_steer::steering::DEFAULT_STEP_SIZE)]
    step: f64,
    #[arg(long, default_value = "A")]
    group: AblationGroup,
    /// Override the group's normalization mode.
    #[arg(long)]
    normalization: Option<NormalizationMode>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Continue (leaving latents unchanged) when the text specifies nothing.
    #[arg(long)]
    allow_empty: bool,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Output directory [default: <dir>/steer].
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AblateArgs {
    /// Axes file [default: <dir>/axes.ttfx].
    #[arg(long)]
    axes: Option<PathBuf>,
    /// World file [default: <dir>/world.ttfx].
    #[arg(long)]
    world: Option<PathBuf>,
    /// One description per line (default: the bundled demo descriptions).
    #[arg(long)]
    descriptions: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    n_per: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Output directory [default: <dir>/ablate].
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 validation, 3 I/O, 4 numerical, 5 nothing specified.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e.class() {
                ErrorClass::Validation => 2,
                ErrorClass::Io => 3,
                ErrorClass::Numerical => 4,
                ErrorClass::EmptySpecification => 5,
            };
        }
        if cause.is::<std::io::Error>() {
            return 3;
        }
        if cause.is::<serde_json::Error>() {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    let dir = cli.dir;
    let path_or = |p: Option<PathBuf>, name: &str| p.unwrap_or_else(|| dir.join(name));
    match cli.command {
        Command::WorldGen(a) => {
            let out = path_or(a.output.clone(), "world.ttfx");
            world_gen(a, &out)
        }
        Command::Sample(a) => {
            let world = path_or(a.world.clone(), "world.ttfx");
            let out = path_or(a.output.clone(), "dataset.csv");
            sample(a, &world, &out)
        }
        Command::Fit(a) => {
            let world = path_or(a.world.clone(), "world.ttfx");
            let out = path_or(a.output.clone(), "axes.ttfx");
            fit(a, &world, &out)
        }
        Command::Classify(a) => classify(a),
        Command::Steer(a) => {
            let axes = path_or(a.axes.clone(), "axes.ttfx");
            let world = path_or(a.world.clone(), "world.ttfx");
            let out = path_or(a.output.clone(), "steer");
            steer(a, &axes, &world, &out)
        }
        Command::Ablate(a) => {
            let axes = path_or(a.axes.clone(), "axes.ttfx");
            let world = path_or(a.world.clone(), "world.ttfx");
            let out = path_or(a.output.clone(), "ablate");
            ablate(a, &axes, &world, &out)
        }
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_ttfx(mut file: TtfxFile, mut manifest: RunManifest, path: &Path) -> Result<String> {
    let hash = file.payload_hash()?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    manifest.outputs.insert(name, hash.clone());
    file.set_manifest(&manifest);
    ensure_parent(path)?;
    file.write(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(hash)
}

fn read_world(path: &Path) -> Result<(SyntheticWorld, String)> {
    let file = TtfxFile::read(path).with_context(|| format!("reading world {}", path.display()))?;
    let world = world_from_ttfx(&file).with_context(|| format!("loading world {}", path.display()))?;
    Ok((world, file.payload_hash()?))
}

fn read_axes(path: &Path) -> Result<(AxesArtifact, String)> {
    let file = TtfxFile::read(path).with_context(|| format!("reading axes {}", path.display()))?;
    let axes = AxesArtifact::from_ttfx(&file).with_context(|| format!("loading axes {}", path.display()))?;
    Ok((axes, file.payload_hash()?))
}

fn load_lexicon(path: Option<&Path>) -> Result<AttributeLexicon> {
    match path {
        Some(p) => AttributeLexicon::load(p).with_context(|| format!("loading lexicon {}", p.display())),
        None => Ok(AttributeLexicon::default_lexicon()),
    }
}

fn check_compatible(world: &SyntheticWorld, axes: &AxesArtifact) -> Result<()> {
    if axes.attributes != *world.attributes() || axes.axes.latent_dim() != world.spec().d_z {
        return Err(Error::InvalidConfig(format!(
            "axes ({} x [{}]) do not belong to this world ({} x [{}])",
            axes.axes.latent_dim(),
            axes.attributes.names().join(", "),
            world.spec().d_z,
            world.attributes().names().join(", ")
        ))
        .into());
    }
    Ok(())
}

fn world_gen(a: WorldGenArgs, out: &Path) -> Result<()> {
    let spec = if a.demo {
        demo_world_spec()
    } else {
        let mut spec = WorldSpec::new(a.dz, a.nattr, a.rho, a.seed)?;
        spec.kappa = a.kappa;
        spec.sigma = a.sigma;
        if let Some(names) = &a.attrs {
            spec = spec.with_attributes(AttributeSet::from_names(names)?);
        }
        spec
    };
    let world = make_world(spec.clone())?;
    let manifest = RunManifest::new("world-gen", serde_json::to_value(&spec)?, Some(spec.seed));
    let hash = write_ttfx(world_to_ttfx(&world), manifest, out)?;
    println!(
        "world: d_z={} n_attr={} rho={} kappa={} sigma={} seed={} attributes=[{}]",
        spec.d_z,
        spec.n_attr,
        spec.rho,
        spec.kappa,
        spec.sigma,
        spec.seed,
        spec.attributes.names().join(", ")
    );
    println!("wrote {} (payload sha256 {hash})", out.display());
    Ok(())
}

fn sample(a: SampleArgs, world_path: &Path, out: &Path) -> Result<()> {
    let (world, world_hash) = read_world(world_path)?;
    let data = sample_dataset(&world, a.n, a.seed)?;
    let csv = dataset_to_csv(&data)?;
    let meta = DatasetMeta {
        samples: a.n,
        seed: a.seed,
        rng: rng::ALGORITHM.to_string(),
        world: world.spec().clone(),
    };
    let mut manifest = RunManifest::new("sample", serde_json::to_value(&meta)?, Some(a.seed));
    manifest.inputs.insert(file_name(world_path), world_hash);
    manifest.outputs.insert(file_name(out), sha256_hex(csv.as_bytes()));
    ensure_parent(out)?;
    write_file(out, csv.as_bytes())?;
    let sidecar = sidecar_path(out);
    write_file(&sidecar, manifest.to_json_pretty().as_bytes())?;
    println!(
        "wrote {} samples to {} (manifest {})",
        a.n,
        out.display(),
        sidecar.display()
    );
    Ok(())
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn sidecar_path(p: &Path) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn fit(a: FitArgs, world_path: &Path, out: &Path) -> Result<()> {
    let (world, world_hash) = read_world(world_path)?;
    let mut inputs = BTreeMap::from([(file_name(world_path), world_hash)]);
    let (data, method_seed) = match &a.data {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            inputs.insert(file_name(p), sha256_hex(text.as_bytes()));
            (dataset_from_csv(&text)?, None)
        }
        None => (sample_dataset(&world, a.n, a.seed)?, Some(a.seed)),
    };
    let mut raw = fit_axes(&data, a.ridge)?;
    raw.meta.seed = method_seed;
    if raw.latent_dim() != world.spec().d_z || raw.attr_count() != world.spec().n_attr {
        return Err(Error::DimensionMismatch {
            expected: world.spec().d_z,
            got: raw.latent_dim(),
        }
        .into());
    }
    let axes = FeatureAxes::from_raw(raw)?;
    let deviation = max_abs_deviation_from_identity(&axes.basis.matrix().transpose_mul(axes.basis.matrix())?);

    let config = json!({ "samples": data.len(), "ridge": a.ridge, "seed": method_seed, "data": a.data });
    let mut manifest = RunManifest::new("fit", config, method_seed);
    manifest.inputs = inputs;
    let artifact = AxesArtifact {
        axes,
        attributes: world.attributes().clone(),
    };
    let hash = write_ttfx(artifact.to_ttfx(), manifest, out)?;

    println!(
        "fitted {} axes from {} samples (ridge {})",
        world.spec().n_attr,
        data.len(),
        a.ridge
    );
    println!("max |W^T W - I| = {deviation:.3e}");
    println!("recovery |cos(w_k, a_k)|:");
    for (k, name) in world.attributes().names().iter().enumerate() {
        let c = cosine_similarity(artifact.axes.basis.axis(k), true_axis(&world, k)?)?;
        println!("  {name:<20} {:.6}", c.abs());
    }
    println!("wrote {} (payload sha256 {hash})", out.display());
    Ok(())
}

fn classify(a: ClassifyArgs) -> Result<()> {
    let lexicon = load_lexicon(a.lexicon.as_deref())?;
    let c = classify_text(&a.text, &lexicon);
    for w in &c.warnings {
        warn!("{w}");
    }
    let names: Vec<String> = AttributeSet::celeba().names().to_vec();
    let map = embedding_to_map(&c.embedding, &names);
    println!("{}", serde_json::to_string_pretty(&map)?);
    Ok(())
}

#[derive(Serialize)]
struct AttributeSummary {
    name: String,
    target: Option<f64>,
    initial_mean: f64,
    steered_mean: f64,
}

fn attribute_summary(batch: &EvalBatch, names: &AttributeSet) -> Vec<AttributeSummary> {
    let n = batch.samples.len().max(1) as f64;
    names
        .names()
        .iter()
        .enumerate()
        .map(|(k, name)| AttributeSummary {
            name: name.clone(),
            target: batch.target.mask()[k].then(|| batch.target.values()[k]),
            initial_mean: batch.samples.iter().map(|s| s.initial_oracle.values()[k]).sum::<f64>() / n,
            steered_mean: batch.samples.iter().map(|s| s.oracle.values()[k]).sum::<f64>() / n,
        })
        .collect()
}

fn target_from_json(path: &Path) -> Result<TextEmbedding> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let map: BTreeMap<String, AttributeEntry> =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(embedding_from_map(&map)?)
}

fn steer(a: SteerArgs, axes_path: &Path, world_path: &Path, out: &Path) -> Result<()> {
    let (world, world_hash) = read_world(world_path)?;
    let (axes, axes_hash) = read_axes(axes_path)?;
    check_compatible(&world, &axes)?;
    if a.n == 0 {
        return Err(Error::InvalidConfig("--n must be at least 1".into()).into());
    }

    let (description, full) = match (&a.text, &a.target_json) {
        (Some(text), _) => {
            let c = classify_text(text, &load_lexicon(a.lexicon.as_deref())?);
            for w in &c.warnings {
                warn!("{w}");
            }
            (text.clone(), c.embedding)
        }
        (None, Some(p)) => (p.display().to_string(), target_from_json(p)?),
        (None, None) => unreachable!("clap requires --text or --target-json"),
    };
    let target = full.select(world.attributes())?;
    if target.specified_count() == 0 {
        if !a.allow_empty {
            return Err(anyhow::Error::new(Error::NoSpecifiedAttributes).context(format!(
                "`{description}` mentions none of [{}]",
                world.attributes().names().join(", ")
            )));
        }
        warn!("`{description}` specifies no attributes of this world; latents are left unchanged");
    }

    let mut config = a.group.config().with_step_size(a.step);
    if let Some(mode) = a.normalization {
        config.normalization_mode = mode;
    }
    config.validate()?;

    let initial = initial_latents(a.seed, 0, a.n, world.spec().d_z);
    let batch = steer_batch(&description, &target, initial, &axes.axes, &config, &world)?;

    let rows: Vec<LatentRow> = batch
        .samples
        .iter()
        .enumerate()
        .flat_map(|(i, s)| {
            [
                LatentRow {
                    sample: i,
                    stage: "initial".into(),
                    z: s.initial.clone(),
                },
                LatentRow {
                    sample: i,
                    stage: "steered".into(),
                    z: s.steered.clone(),
                },
            ]
        })
        .collect();
    let latents_csv = latents_to_csv(&rows)?;
    let traces: String = batch
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| s.trace.to_jsonl(Some(i), Some(world.attributes())))
        .collect();

    let positive_target = target.specified_indices().iter().any(|&i| target.values()[i] > 0.0);
    let consistency = if positive_target {
        serde_json::to_value(eval_consistency(&batch)?)?
    } else {
        json!("n/a")
    };
    let diversity = match eval_diversity(&batch) {
        Ok((mean, std)) => json!({ "mean": mean, "std": std }),
        Err(Error::TooFewSamples { .. }) => json!("n/a"),
        Err(e) => return Err(e.into()),
    };
    let summary = json!({
        "description": description,
        "group": a.group,
        "config": config,
        "n": a.n,
        "seed": a.seed,
        "attributes": attribute_summary(&batch, world.attributes()),
        "consistency": consistency,
        "diversity_proxy": diversity,
        "lock_drift": lock_stability(&batch.traces())?,
        "moves_mean": batch.samples.iter().map(|s| s.trace.entries.len() as f64).sum::<f64>() / a.n as f64,
    });
    let summary_json = serde_json::to_string_pretty(&summary)? + "\n";

    let files = [
        ("latents.csv", latents_csv.as_bytes()),
        ("traces.jsonl", traces.as_bytes()),
        ("summary.json", summary_json.as_bytes()),
    ];
    let flags = json!({
        "text": a.text, "target_json": a.target_json, "n": a.n, "group": a.group,
        "config": config, "seed": a.seed, "allow_empty": a.allow_empty, "lexicon": a.lexicon,
    });
    let mut manifest = RunManifest::new("steer", flags, Some(a.seed));
    manifest.inputs.insert(file_name(world_path), world_hash);
    manifest.inputs.insert(file_name(axes_path), axes_hash);
    write_dir(out, &files, manifest)?;

    for s in attribute_summary(&batch, world.attributes()) {
        let target = s.target.map_or("-".to_string(), |t| t.to_string());
        println!(
            "{:<20} target {:>3}  mean p {:.4} -> {:.4}",
            s.name, target, s.initial_mean, s.steered_mean
        );
    }
    info!("group {} config {:?}", a.group, config);
    println!("wrote {} steered latents to {}", a.n, out.display());
    Ok(())
}

/// Writes payload files into `dir`, then a manifest listing their hashes.
fn write_dir(dir: &Path, files: &[(&str, &[u8])], mut manifest: RunManifest) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, bytes) in files {
        write_file(&dir.join(name), bytes)?;
        manifest.outputs.insert(name.to_string(), sha256_hex(bytes));
    }
    write_file(
        &dir.join("manifest.json"),
        (manifest.to_json_pretty() + "\n").as_bytes(),
    )
}

fn ablate(a: AblateArgs, axes_path: &Path, world_path: &Path, out: &Path) -> Result<()> {
    if a.n_per < 2 {
        return Err(Error::InvalidConfig(format!(
            "--n-per must be at least 2 (diversity needs pairs), got {}",
            a.n_per
        ))
        .into());
    }
    let (world, world_hash) = read_world(world_path)?;
    let (axes, axes_hash) = read_axes(axes_path)?;
    check_compatible(&world, &axes)?;

    let source = match &a.descriptions {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => DEMO_DESCRIPTIONS.to_string(),
    };
    let lexicon = load_lexicon(a.lexicon.as_deref())?;
    let descriptions = embed_descriptions(&parse_descriptions(&source), &lexicon, world.attributes())?;
    for (d, t) in &descriptions {
        if t.specified_count() == 0 {
            return Err(anyhow::Error::new(Error::NoSpecifiedAttributes).context(format!("description `{d}`")));
        }
    }

    let report = run_ablation(&world, &axes.axes, &descriptions, a.n_per, a.seed)?;
    let table = report.to_table();
    let csv = report.to_csv();
    let json = serde_json::to_string_pretty(&report)? + "\n";

    let mut manifest = RunManifest::new(
        "ablate",
        json!({ "n_per": a.n_per, "seed": a.seed, "descriptions": a.descriptions, "lexicon": a.lexicon }),
        Some(a.seed),
    );
    manifest.inputs.insert(file_name(world_path), world_hash);
    manifest.inputs.insert(file_name(axes_path), axes_hash);
    manifest
        .inputs
        .insert("descriptions".into(), sha256_hex(source.as_bytes()));
    write_dir(
        out,
        &[
            ("ablation.csv", csv.as_bytes()),
            ("ablation.txt", table.as_bytes()),
            ("ablation.json", json.as_bytes()),
        ],
        manifest,
    )?;
    print!("{table}");
    println!("wrote report to {}", out.display());
    Ok(())
}
