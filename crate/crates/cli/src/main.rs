//! `arborloc`: reproducible experiments from world generation to plots.

mod keys;
mod manifest;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use arborloc::eval::{
    absolute_errors, pr_curve_f1max, relative_translation_error, runtime_report, write_error_summary,
    write_pr_curve, write_rte, write_runtime, ErrorMode, RetrievalJudgement, StageTimes, TRUE_POSITIVE_RADIUS,
};
use arborloc::io::{
    load_cloud, load_odometry, load_submaps, load_trajectory, read_cloud, save_cloud, save_odometry, save_submaps,
    save_trajectory, write_covariance_table, Stamped,
};
use arborloc::pipeline::{run, write_diagnostics, write_registrations, write_timing, OdometryStream, RunConfig};
use arborloc::plot::{pr_curve_svg, read_pr_curve, read_rte, rte_boxplot_svg};
use arborloc::reloc::{build_db, build_global_db, global_descriptor_of, retrieve_topk, DescriptorDb, Projection};
use arborloc::sim::{
    build_aerial_submaps, build_ground_submaps, generate_world, simulate_traverse, survey_world, FixtureSpec,
};
use clap::{Parser, Subcommand, ValueEnum};
use manifest::Manifest;

#[derive(Parser)]
#[command(name = "arborloc", version, about = "Cross-view localisation of ground lidar in aerial forest maps")]
#[command(after_long_help = keys::help_text())]
struct Cli {
    /// TOML configuration file; omitted keys keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set pipeline.max_failures=3`. Repeatable; wins over the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// 4 ha forest, ~300 m traverse.
    Standard,
    /// 1 ha forest, 60 s traverse.
    Small,
}

#[derive(Subcommand)]
enum Command {
    /// Write a world file: the seed and every simulation parameter.
    GenWorld {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "standard")]
        preset: Preset,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render scans, odometry, ground truth and the aerial survey.
    Simulate {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build ground and aerial submap sets from a simulation directory.
    Submaps {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        sim: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Describe aerial submaps into a descriptor database.
    BuildDb {
        #[arg(long)]
        aerial: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Store global descriptors only; keypoints are computed on demand.
        #[arg(long)]
        lazy: bool,
    },
    /// Descriptor database tools.
    Db {
        #[command(subcommand)]
        action: DbAction,
    },
    /// Run the localiser; writes trajectory, diagnostics and a manifest.
    Localize {
        #[arg(long, required_unless_present = "manifest")]
        ground: Option<PathBuf>,
        #[arg(long, required_unless_present = "manifest")]
        aerial: Option<PathBuf>,
        #[arg(long, required_unless_present = "manifest")]
        odometry: Option<PathBuf>,
        #[arg(long, required_unless_present = "manifest")]
        db: Option<PathBuf>,
        /// World file the inputs came from; its seeds go into the manifest.
        #[arg(long)]
        world: Option<PathBuf>,
        /// Re-run the inputs and config recorded in a manifest.
        #[arg(long, conflicts_with_all = ["ground", "aerial", "odometry", "db", "world"])]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a trajectory (and optionally retrieval) into metric CSVs.
    Evaluate {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// timing.csv from `localize`, for the runtime table.
        #[arg(long)]
        timing: Option<PathBuf>,
        /// Ground submaps for the retrieval precision-recall curve (with --db).
        #[arg(long, requires = "db")]
        ground: Option<PathBuf>,
        #[arg(long, requires = "ground")]
        db: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render metric CSVs as SVG.
    Plot {
        /// `label=path/to/rte.csv`, repeatable.
        #[arg(long)]
        rte: Vec<String>,
        /// `label=path/to/pr_curve.csv`, repeatable.
        #[arg(long)]
        pr: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Configuration tools.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Subcommand)]
enum DbAction {
    /// Print a summary of a descriptor database.
    Inspect { path: PathBuf },
}

#[derive(Subcommand)]
enum ConfigAction {
    /// Print the effective configuration with every default filled in.
    Dump,
}

/// Bad input or configuration: exit code 2.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<Invalid>() || cause.is::<toml::de::Error>() || cause.is::<serde_json::Error>() {
            return 2;
        }
        if let Some(err) = cause.downcast_ref::<arborloc::Error>() {
            use arborloc::Error as E;
            return match err {
                E::Config(_) | E::InvalidInput(_) | E::Dataset(_) | E::Format(_) => 2,
                E::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 2,
                _ => 3,
            };
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            return if io.kind() == std::io::ErrorKind::NotFound { 2 } else { 3 };
        }
    }
    3
}

/// Files and directories created by a command; removed unless committed.
#[derive(Default)]
struct Outputs {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    fn dir(&mut self, path: &Path) -> Result<()> {
        if !path.exists() {
            fs::create_dir_all(path).with_context(|| format!("cannot create {}", path.display()))?;
            self.dirs.push(path.to_path_buf());
        }
        Ok(())
    }

    fn file(&mut self, path: PathBuf) -> PathBuf {
        self.files.push(path.clone());
        path
    }

    fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in self.files.iter().rev() {
            let _ = fs::remove_file(f);
        }
        for d in self.dirs.iter().rev() {
            let _ = fs::remove_dir_all(d);
        }
    }
}

fn require(path: &Path, what: &str, hint: &str) -> Result<()> {
    if !path.is_file() {
        return Err(invalid(format!("{what} {} not found; {hint}", path.display())));
    }
    Ok(())
}

fn merge(base: &mut toml::Value, top: toml::Value) {
    match (base, top) {
        (toml::Value::Table(b), toml::Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(existing) if existing.is_table() && v.is_table() => merge(existing, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}

fn load_config(cli: &Cli, fixture: FixtureSpec) -> Result<RunConfig> {
    let base = RunConfig {
        fixture,
        ..Default::default()
    };
    let mut value = toml::Value::try_from(&base)?;
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let file: toml::Value = text
            .parse::<toml::Table>()
            .map(toml::Value::Table)
            .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        merge(&mut value, file);
    }
    for o in &cli.overrides {
        keys::apply_override(&mut value, o).map_err(|e| invalid(e.to_string()))?;
    }
    let text = toml::to_string(&value)?;
    RunConfig::from_toml(&text).map_err(|e| invalid(format!("configuration: {e}")))
}

fn load_world(path: &Path) -> Result<FixtureSpec> {
    require(path, "world file", "create one with `arborloc gen-world`")?;
    let text = fs::read_to_string(path)?;
    let spec: FixtureSpec = toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    spec.validate()?;
    Ok(spec)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(
        fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn gen_world(cli: &Cli, seed: Option<u64>, preset: Preset, out: &Path) -> Result<()> {
    let fixture = match preset {
        Preset::Standard => FixtureSpec::standard(),
        Preset::Small => FixtureSpec::small(),
    };
    let mut cfg = load_config(cli, fixture)?;
    if let Some(s) = seed {
        cfg.fixture.world_seed = s;
    }
    let spec = cfg.fixture;
    let world = generate_world(&spec.world, spec.world_seed)?;
    let mut outputs = Outputs::default();
    let path = outputs.file(out.to_path_buf());
    let mut w = create(&path)?;
    writeln!(
        w,
        "# arborloc world file: {:.2} ha, {} trees, {} shrubs\n",
        spec.world.area_ha(),
        world.trunks.len(),
        world.canopies.len() - world.trunks.len()
    )?;
    w.write_all(toml::to_string_pretty(&spec)?.as_bytes())?;
    w.flush()?;
    outputs.commit();
    log::info!("world written to {}", out.display());
    Ok(())
}

fn simulate(world_path: &Path, out: &Path) -> Result<()> {
    let spec = load_world(world_path)?;
    let world = generate_world(&spec.world, spec.world_seed)?;
    log::info!("simulating traverse");
    let trav = simulate_traverse(&world, &spec.waypoints, &spec.traverse, &spec.ground_sensor, &spec.odometry)?;
    log::info!("simulating aerial survey");
    let aerial = survey_world(&world, &spec.survey, &spec.aerial_sensor)?;
    let mut outputs = Outputs::default();
    outputs.dir(out)?;
    let scans = out.join("scans");
    outputs.dir(&scans)?;
    for (k, scan) in trav.scans.iter().enumerate() {
        save_cloud(&outputs.file(scans.join(format!("{k:05}.clc"))), scan)?;
    }
    let odom = OdometryStream {
        times: trav.times.clone(),
        increments: trav.increments,
    };
    save_odometry(&outputs.file(out.join("odometry.txt")), &odom)?;
    let truth: Vec<Stamped> = trav
        .times
        .iter()
        .zip(&trav.poses)
        .map(|(t, p)| Stamped { time: *t, pose: *p })
        .collect();
    save_trajectory(&outputs.file(out.join("truth.txt")), &truth)?;
    save_cloud(&outputs.file(out.join("aerial_map.clc")), &aerial)?;
    outputs.commit();
    log::info!("{} scans, {} aerial points written to {}", trav.scans.len(), aerial.len(), out.display());
    Ok(())
}

fn submaps(world_path: &Path, sim: &Path, out: &Path) -> Result<()> {
    let spec = load_world(world_path)?;
    let hint = "run `arborloc simulate` first";
    let odom_path = sim.join("odometry.txt");
    let truth_path = sim.join("truth.txt");
    let aerial_path = sim.join("aerial_map.clc");
    for (p, what) in [(&odom_path, "odometry"), (&truth_path, "ground truth"), (&aerial_path, "aerial map")] {
        require(p, what, hint)?;
    }
    let odom = load_odometry(&odom_path)?;
    let truth = load_trajectory(&truth_path)?;
    if truth.len() != odom.times.len()
        || truth.iter().zip(&odom.times).any(|(s, t)| (s.time - t).abs() > 1e-5)
    {
        return Err(invalid("ground truth and odometry timestamps disagree"));
    }
    let mut scans = Vec::with_capacity(truth.len());
    for k in 0..truth.len() {
        let p = sim.join("scans").join(format!("{k:05}.clc"));
        require(&p, "scan", hint)?;
        scans.push(read_cloud(&mut fs::read(&p)?.as_slice()).with_context(|| p.display().to_string())?);
    }
    let poses: Vec<_> = truth.iter().map(|s| s.pose).collect();
    let ground = build_ground_submaps(&scans, &odom.times, &poses, &spec.submaps)?;
    let aerial = build_aerial_submaps(&load_cloud(&aerial_path)?, &spec.submaps)?;
    let mut outputs = Outputs::default();
    outputs.dir(out)?;
    save_submaps(&outputs.file(out.join("ground.sms")), &ground)?;
    save_submaps(&outputs.file(out.join("aerial.sms")), &aerial)?;
    outputs.commit();
    log::info!("{} ground and {} aerial submaps written to {}", ground.len(), aerial.len(), out.display());
    Ok(())
}

fn build_database(cli: &Cli, aerial: &Path, out: &Path, lazy: bool) -> Result<()> {
    let cfg = load_config(cli, FixtureSpec::standard())?;
    require(aerial, "aerial submap set", "run `arborloc submaps` first")?;
    let submaps = load_submaps(aerial)?;
    let db = if lazy {
        build_global_db(&submaps, &cfg.reloc)?
    } else {
        build_db(&submaps, &cfg.reloc)?
    };
    let mut outputs = Outputs::default();
    let mut w = create(&outputs.file(out.to_path_buf()))?;
    db.write(&mut w)?;
    w.flush()?;
    outputs.commit();
    log::info!("{} entries written to {}", db.len(), out.display());
    Ok(())
}

fn load_db(path: &Path) -> Result<DescriptorDb> {
    require(path, "descriptor database", "run `arborloc build-db` first")?;
    Ok(DescriptorDb::read(&mut std::io::BufReader::new(fs::File::open(path)?))?)
}

struct LocalizeInputs {
    ground: PathBuf,
    aerial: PathBuf,
    odometry: PathBuf,
    db: PathBuf,
    world: Option<PathBuf>,
}

fn localize(cli: &Cli, inputs: Option<LocalizeInputs>, manifest_path: Option<&Path>, out: &Path) -> Result<()> {
    let (inputs, cfg) = match manifest_path {
        Some(m) => {
            let old = Manifest::load(m)?;
            old.verify_inputs().map_err(|e| invalid(e.to_string()))?;
            let get = |k: &str| {
                old.inputs
                    .get(k)
                    .map(|r| r.path.clone())
                    .ok_or_else(|| invalid(format!("manifest lacks input `{k}`")))
            };
            let inputs = LocalizeInputs {
                ground: get("ground")?,
                aerial: get("aerial")?,
                odometry: get("odometry")?,
                db: get("db")?,
                world: old.inputs.get("world").map(|r| r.path.clone()),
            };
            let cfg = RunConfig::from_toml(&old.config).map_err(|e| invalid(format!("manifest config: {e}")))?;
            (inputs, cfg)
        }
        None => {
            let inputs = inputs.expect("clap requires inputs without a manifest");
            let mut cfg = load_config(cli, FixtureSpec::standard())?;
            if let Some(w) = &inputs.world {
                cfg.fixture = load_world(w)?;
            }
            (inputs, cfg)
        }
    };
    let hint = "run `arborloc submaps` first";
    require(&inputs.ground, "ground submap set", hint)?;
    require(&inputs.aerial, "aerial submap set", hint)?;
    require(&inputs.odometry, "odometry stream", "run `arborloc simulate` first")?;
    let db = load_db(&inputs.db)?;

    let mut outputs = Outputs::default();
    outputs.dir(out)?;
    let mut manifest = Manifest::new("localize", &cfg)?;
    manifest.add_input("ground", &inputs.ground)?;
    manifest.add_input("aerial", &inputs.aerial)?;
    manifest.add_input("odometry", &inputs.odometry)?;
    manifest.add_input("db", &inputs.db)?;
    if let Some(w) = &inputs.world {
        manifest.add_input("world", w)?;
    }
    let names = [
        ("trajectory", "trajectory.txt"),
        ("diagnostics", "diagnostics.csv"),
        ("timing", "timing.csv"),
        ("registrations", "registrations.log"),
        ("marginals", "marginals.csv"),
    ];
    for (k, f) in names {
        manifest.add_output(k, &out.join(f));
    }
    let manifest_out = outputs.file(out.join("manifest.json"));
    manifest.save(&manifest_out)?;

    let ground = load_submaps(&inputs.ground)?;
    let aerial = load_submaps(&inputs.aerial)?;
    let odom = load_odometry(&inputs.odometry)?;
    log::info!("localising {} ground submaps against {} aerial submaps", ground.len(), aerial.len());
    let result = run(&ground, &odom, &aerial, &db, &cfg)?;

    save_trajectory(&outputs.file(out.join("trajectory.txt")), &result.trajectory)?;
    let mut w = create(&outputs.file(out.join("diagnostics.csv")))?;
    write_diagnostics(&result.diagnostics, &mut w)?;
    w.flush()?;
    let mut w = create(&outputs.file(out.join("timing.csv")))?;
    write_timing(&result.diagnostics, &mut w)?;
    w.flush()?;
    let mut w = create(&outputs.file(out.join("registrations.log")))?;
    write_registrations(&result.diagnostics, &mut w)?;
    w.flush()?;
    let mut w = create(&outputs.file(out.join("marginals.csv")))?;
    write_covariance_table(&result.marginals, &mut w)?;
    w.flush()?;
    manifest.finish()?;
    manifest.save(&manifest_out)?;
    outputs.commit();
    let tracked = result.diagnostics.iter().filter(|d| d.outcome.as_str() == "map_factor").count();
    println!(
        "{} submaps, {} poses, {} map factors; outputs in {}",
        result.diagnostics.len(),
        result.trajectory.len(),
        tracked,
        out.display()
    );
    Ok(())
}

fn read_timing(path: &Path) -> Result<Vec<StageTimes>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let v: Vec<f64> = line
            .split(',')
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| invalid(format!("{} line {}: non-numeric field", path.display(), n + 1)))?;
        if v.len() != 6 {
            return Err(invalid(format!("{} line {}: expected 6 columns", path.display(), n + 1)));
        }
        rows.push(StageTimes {
            odometry: v[1],
            registration: v[2],
            fg_optimisation: v[3],
            relocalisation: v[4],
        });
    }
    Ok(rows)
}

struct EvaluateArgs<'a> {
    estimate: &'a Path,
    reference: &'a Path,
    timing: Option<&'a Path>,
    ground: Option<&'a Path>,
    db: Option<&'a Path>,
    out: &'a Path,
}

fn evaluate(cli: &Cli, a: EvaluateArgs) -> Result<()> {
    let cfg = load_config(cli, FixtureSpec::standard())?;
    require(a.estimate, "estimated trajectory", "run `arborloc localize` first")?;
    require(a.reference, "reference trajectory", "run `arborloc simulate` first")?;
    let est = load_trajectory(a.estimate)?;
    let reference = load_trajectory(a.reference)?;
    let mut outputs = Outputs::default();
    outputs.dir(a.out)?;
    for (mode, name) in [(ErrorMode::ThreeDof, "ate_3dof.csv"), (ErrorMode::SixDof, "ate_6dof.csv")] {
        let summary = absolute_errors(&est, &reference, mode)?;
        let mut w = create(&outputs.file(a.out.join(name)))?;
        write_error_summary(&summary, mode, &mut w)?;
        w.flush()?;
        println!(
            "{name}: translation rmse {:.3} m, rotation rmse {:.3} deg over {} poses",
            summary.translation.rmse, summary.rotation.rmse, summary.pairs
        );
    }
    let rte = relative_translation_error(&est, &reference, &cfg.eval.rte_bins)?;
    for s in &rte.skipped {
        println!("rte: {s} m bin skipped (longer than the reference path)");
    }
    let mut w = create(&outputs.file(a.out.join("rte.csv")))?;
    write_rte(&rte, &mut w)?;
    w.flush()?;
    if let Some(t) = a.timing {
        require(t, "timing table", "run `arborloc localize` first")?;
        let report = runtime_report(&read_timing(t)?);
        let mut w = create(&outputs.file(a.out.join("runtime.csv")))?;
        write_runtime(&report, &mut w)?;
        w.flush()?;
        println!("runtime: {:.3} ± {:.3} s per submap", report.total.mean, report.total.std);
    }
    if let (Some(g), Some(d)) = (a.ground, a.db) {
        require(g, "ground submap set", "run `arborloc submaps` first")?;
        let ground = load_submaps(g)?;
        let db = load_db(d)?;
        let dp = &cfg.reloc.descriptors;
        let projection = Projection::new(dp.global_dim, dp.projection_seed);
        let mut judgements = Vec::new();
        for s in &ground {
            let Ok(q) = global_descriptor_of(&s.cloud, &projection, dp) else {
                continue;
            };
            let Some(&(id, dist)) = retrieve_topk(&q, &db, 1).first() else {
                continue;
            };
            let o = s.origin.translation();
            let planar = |c: &arborloc::geometry::Point3| (c - o).xy().norm();
            let top = planar(&db.get(id).expect("retrieved from db").centroid);
            let has_positive = db.entries.iter().any(|e| planar(&e.centroid) < TRUE_POSITIVE_RADIUS);
            judgements.push(RetrievalJudgement::new(s.id, id, dist, top, has_positive));
        }
        let curve = pr_curve_f1max(&judgements)?;
        let mut w = create(&outputs.file(a.out.join("pr_curve.csv")))?;
        write_pr_curve(&curve, &mut w)?;
        w.flush()?;
        println!("retrieval: F1max {:.3} over {} queries", curve.f1max, judgements.len());
    }
    outputs.commit();
    Ok(())
}

fn labelled(spec: &str) -> Result<(String, PathBuf)> {
    let (label, path) = spec
        .split_once('=')
        .ok_or_else(|| invalid(format!("`{spec}` is not of the form label=path")))?;
    Ok((label.to_string(), PathBuf::from(path)))
}

fn plot(rte: &[String], pr: &[String], out: &Path) -> Result<()> {
    if rte.is_empty() && pr.is_empty() {
        return Err(invalid("nothing to plot: pass --rte and/or --pr"));
    }
    let mut outputs = Outputs::default();
    outputs.dir(out)?;
    if !rte.is_empty() {
        let mut series = Vec::new();
        for s in rte {
            let (label, path) = labelled(s)?;
            require(&path, "RTE table", "run `arborloc evaluate` first")?;
            series.push((label, read_rte(fs::File::open(&path)?)?));
        }
        fs::write(outputs.file(out.join("rte.svg")), rte_boxplot_svg(&series, "Relative translation error"))?;
    }
    if !pr.is_empty() {
        let mut curves = Vec::new();
        for s in pr {
            let (label, path) = labelled(s)?;
            require(&path, "PR table", "run `arborloc evaluate --ground --db` first")?;
            curves.push((label, read_pr_curve(fs::File::open(&path)?)?));
        }
        fs::write(outputs.file(out.join("pr.svg")), pr_curve_svg(&curves, "Place recognition"))?;
    }
    outputs.commit();
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenWorld { seed, preset, out } => gen_world(cli, *seed, *preset, out),
        Command::Simulate { world, out } => simulate(world, out),
        Command::Submaps { world, sim, out } => submaps(world, sim, out),
        Command::BuildDb { aerial, out, lazy } => build_database(cli, aerial, out, *lazy),
        Command::Db {
            action: DbAction::Inspect { path },
        } => {
            println!("{}", load_db(path)?.summary());
            Ok(())
        }
        Command::Localize {
            ground,
            aerial,
            odometry,
            db,
            world,
            manifest,
            out,
        } => {
            let inputs = match (ground, aerial, odometry, db) {
                (Some(g), Some(a), Some(o), Some(d)) => Some(LocalizeInputs {
                    ground: g.clone(),
                    aerial: a.clone(),
                    odometry: o.clone(),
                    db: d.clone(),
                    world: world.clone(),
                }),
                _ => None,
            };
            localize(cli, inputs, manifest.as_deref(), out)
        }
        Command::Evaluate {
            estimate,
            reference,
            timing,
            ground,
            db,
            out,
        } => evaluate(
            cli,
            EvaluateArgs {
                estimate,
                reference,
                timing: timing.as_deref(),
                ground: ground.as_deref(),
                db: db.as_deref(),
                out,
            },
        ),
        Command::Plot { rte, pr, out } => plot(rte, pr, out),
        Command::Config {
            action: ConfigAction::Dump,
        } => {
            print!("{}", load_config(cli, FixtureSpec::standard())?.to_toml()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

