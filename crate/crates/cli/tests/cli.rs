use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_arborloc"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small preset taken through simulate, submaps, build-db and localize.
struct Chain {
    dir: TempDir,
}

impl Chain {
    fn p(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }
}

fn chain() -> &'static Chain {
    static C: OnceLock<Chain> = OnceLock::new();
    C.get_or_init(|| {
        let c = Chain {
            dir: TempDir::new().unwrap(),
        };
        ok(&["gen-world", "--preset", "small", "--seed", "7", "--out", s(&c.p("world.toml"))]);
        ok(&["simulate", "--world", s(&c.p("world.toml")), "--out", s(&c.p("sim"))]);
        ok(&[
            "submaps",
            "--world",
            s(&c.p("world.toml")),
            "--sim",
            s(&c.p("sim")),
            "--out",
            s(&c.p("sm")),
        ]);
        ok(&["build-db", "--aerial", s(&c.p("sm/aerial.sms")), "--out", s(&c.p("db.bin")), "--lazy"]);
        ok(&[
            "localize",
            "--ground",
            s(&c.p("sm/ground.sms")),
            "--aerial",
            s(&c.p("sm/aerial.sms")),
            "--odometry",
            s(&c.p("sim/odometry.txt")),
            "--db",
            s(&c.p("db.bin")),
            "--world",
            s(&c.p("world.toml")),
            "--out",
            s(&c.p("run")),
        ]);
        c
    })
}

fn evaluate(c: &Chain, run_dir: &str, out: &str) {
    ok(&[
        "evaluate",
        "--estimate",
        s(&c.p(&format!("{run_dir}/trajectory.txt"))),
        "--reference",
        s(&c.p("sim/truth.txt")),
        "--timing",
        s(&c.p(&format!("{run_dir}/timing.csv"))),
        "--out",
        s(&c.p(out)),
    ]);
}

#[test]
fn help_lists_every_key_with_its_module() {
    let out = ok(&["--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for key in [
        "pipeline.max_failures = 5",
        "gicp.max_iterations",
        "smoother.lag",
        "reloc.retrieval_k = 5",
        "fixture.world_seed",
        "eval.rte_bins",
    ] {
        assert!(text.contains(key), "missing {key}");
    }
    assert!(text.contains("[factor-graph]") && text.contains("[semantics]"));
}

#[test]
fn gen_world_is_reproducible() {
    let d = TempDir::new().unwrap();
    let (a, b) = (d.path().join("a.toml"), d.path().join("b.toml"));
    ok(&["gen-world", "--preset", "small", "--seed", "3", "--out", s(&a)]);
    ok(&["gen-world", "--preset", "small", "--seed", "3", "--out", s(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let text = fs::read_to_string(&a).unwrap();
    assert!(text.contains("world_seed = 3"));
}

#[test]
fn config_dump_round_trips_with_overrides() {
    let d = TempDir::new().unwrap();
    let file = d.path().join("c.toml");
    fs::write(&file, "[pipeline]\nmax_failures = 4\ntracking_radius = 12.0\n").unwrap();
    let out = ok(&["config", "dump", "--config", s(&file), "--set", "pipeline.max_failures=3"]);
    let dumped: toml::Table = String::from_utf8(out.stdout).unwrap().parse().unwrap();
    assert_eq!(dumped["pipeline"]["max_failures"].as_integer(), Some(3));
    assert_eq!(dumped["pipeline"]["tracking_radius"].as_float(), Some(12.0));
    assert!(dumped["gicp"].as_table().is_some());
}

#[test]
fn invalid_configuration_exits_with_2() {
    let out = run(&["config", "dump", "--set", "pipeline.max_failure=3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("max_failure"));
    let out = run(&["config", "dump", "--set", "reloc.fitness_threshold=1.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn localize_without_db_names_the_missing_step() {
    let c = chain();
    let out_dir = c.p("nodb");
    let out = run(&[
        "localize",
        "--ground",
        s(&c.p("sm/ground.sms")),
        "--aerial",
        s(&c.p("sm/aerial.sms")),
        "--odometry",
        s(&c.p("sim/odometry.txt")),
        "--db",
        s(&c.p("missing.bin")),
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("build-db"));
    assert!(!out_dir.exists());
}

#[test]
fn failed_localize_leaves_no_partial_outputs() {
    let c = chain();
    // odometry that stops short of the last submap
    let text = fs::read_to_string(c.p("sim/odometry.txt")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let short = c.p("short_odometry.txt");
    fs::write(&short, lines[..lines.len() / 2].join("\n") + "\n").unwrap();
    let out_dir = c.p("short");
    let out = run(&[
        "localize",
        "--ground",
        s(&c.p("sm/ground.sms")),
        "--aerial",
        s(&c.p("sm/aerial.sms")),
        "--odometry",
        s(&short),
        "--db",
        s(&c.p("db.bin")),
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!out_dir.exists());
}

#[test]
fn manifest_rerun_is_byte_identical() {
    let c = chain();
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(c.p("run/manifest.json")).unwrap()).unwrap();
    assert!(manifest["finished_unix"].is_number());
    assert_eq!(manifest["seeds"]["world"], 7);
    assert!(manifest["outputs"]["trajectory"]["sha256"].is_string());

    ok(&["localize", "--manifest", s(&c.p("run/manifest.json")), "--out", s(&c.p("rerun"))]);
    for f in ["trajectory.txt", "diagnostics.csv", "registrations.log", "marginals.csv"] {
        assert_eq!(fs::read(c.p(&format!("run/{f}"))).unwrap(), fs::read(c.p(&format!("rerun/{f}"))).unwrap(), "{f}");
    }
    evaluate(c, "run", "ev1");
    evaluate(c, "rerun", "ev2");
    for f in ["ate_3dof.csv", "ate_6dof.csv", "rte.csv"] {
        assert_eq!(fs::read(c.p(&format!("ev1/{f}"))).unwrap(), fs::read(c.p(&format!("ev2/{f}"))).unwrap(), "{f}");
    }
    let ate = fs::read_to_string(c.p("ev1/ate_6dof.csv")).unwrap();
    assert!(ate.lines().count() >= 2);
    let runtime = fs::read_to_string(c.p("ev1/runtime.csv")).unwrap();
    for col in ["odometry", "registration", "fg_optimisation", "relocalisation"] {
        assert!(runtime.contains(col), "{col}");
    }
}

#[test]
fn plot_renders_svg() {
    let c = chain();
    evaluate(c, "run", "ev_plot");
    let rte = format!("ours={}", s(&c.p("ev_plot/rte.csv")));
    ok(&["plot", "--rte", &rte, "--out", s(&c.p("plots"))]);
    let svg = fs::read_to_string(c.p("plots/rte.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("ours"));
    let out = run(&["plot", "--out", s(&c.p("plots2"))]);
    assert_eq!(out.status.code(), Some(2));
}
