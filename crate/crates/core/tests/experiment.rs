use cachecast::experiment::{
    csv_bytes, emit_outputs, run_sweep, simulate_trials, Config, OutputFormat, SolutionFile,
    SweepScheme, SweepSpec,
};
use cachecast::optimizer::{optimize_rlfu, optimize_uniform, OptimizerConfig};
use cachecast::Error;

fn spec(toml: &str) -> SweepSpec {
    let cfg = Config::from_toml(toml).unwrap();
    SweepSpec::from_config(&cfg, cfg.seed.unwrap_or(3)).unwrap()
}

const SMALL: &str = r#"
seed = 5
[instance]
n = 4
m = 8
alpha = 0.8
sigma2 = "uniform(0.7,1.6,2)"
[sweep]
capacities = [1, 2]
cache_sizes = [0, 1, 2, 4]
schemes = ["lcu", "ccm-rlfu", "ccm-symmetric"]
trials = 400
evaluation = "monte-carlo"
[optimizer]
restarts = 3
max_iterations = 60
"#;

#[test]
fn lcu_point_without_cache_or_link() {
    let s = spec(
        r#"
[instance]
n = 2
m = 3
q = [[0.5, 0.3, 0.2], [0.5, 0.3, 0.2]]
sigma2 = [1.0, 2.0, 4.0]
[sweep]
capacities = [0]
cache_sizes = [0]
schemes = ["lcu"]
"#,
    );
    let t = run_sweep(&s).unwrap();
    assert_eq!(t.rows.len(), 1);
    let want = 0.5 * 1.0 + 0.3 * 2.0 + 0.2 * 4.0;
    assert!((t.rows[0].distortion - want).abs() < 1e-12);
    assert_eq!(t.rows[0].stderr, 0.0);
    assert_eq!(t.rows[0].meta, "eval=exact");
}

#[test]
fn small_sweep_shape() {
    let t = run_sweep(&spec(SMALL)).unwrap();
    assert_eq!(t.rows.len(), 3 * 2 * 4);
    for scheme in [
        SweepScheme::Lcu,
        SweepScheme::CcmRlfu,
        SweepScheme::CcmSymmetric,
    ] {
        for r in [1.0, 2.0] {
            let c = t.curve(scheme, r);
            assert_eq!(c.len(), 4);
            for w in c.windows(2) {
                assert!(w[1].1 <= w[0].1 + 1e-6, "{scheme} R={r}: {c:?}");
            }
        }
        for m in [0.0, 1.0, 2.0, 4.0] {
            let lo = t.get(scheme, 1.0, m).unwrap().distortion;
            let hi = t.get(scheme, 2.0, m).unwrap().distortion;
            assert!(hi <= lo + 1e-6, "{scheme} M={m}");
        }
    }
    for row in t.rows.iter().filter(|r| r.scheme.is_ccm()) {
        let lcu = t.get(SweepScheme::Lcu, row.capacity, row.cache).unwrap();
        assert!(
            row.distortion <= lcu.distortion + 1e-6,
            "{row:?} vs {lcu:?}"
        );
        assert!(row.meta.contains("feasible=true"));
    }
}

#[test]
fn sweep_is_byte_stable() {
    let s = spec(SMALL);
    let a = csv_bytes(&run_sweep(&s).unwrap()).unwrap();
    let b = csv_bytes(&run_sweep(&s).unwrap()).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("scheme,R,M,distortion,stderr,meta\n"));
}

#[test]
fn uniform_scheme_needs_flat_demand() {
    let bad = SMALL.replace(r#""ccm-symmetric""#, r#""ccm-uniform""#);
    assert!(matches!(run_sweep(&spec(&bad)), Err(Error::Config(_))));
    let flat = bad
        .replace("alpha = 0.8", "alpha = 0.0")
        .replace(r#"sigma2 = "uniform(0.7,1.6,2)""#, "sigma2 = 1.5");
    let t = run_sweep(&spec(&flat)).unwrap();
    let row = t.get(SweepScheme::CcmUniform, 2.0, 4.0).unwrap();
    let direct = optimize_uniform(1.5, 0.5, 2.0, 4).unwrap();
    assert!((row.distortion - direct.objective).abs() < 1e-12);
}

#[test]
fn empty_scheme_list_names_the_valid_ones() {
    let cfg = Config::from_toml(&SMALL.replace(
        r#"schemes = ["lcu", "ccm-rlfu", "ccm-symmetric"]"#,
        "schemes = []",
    ))
    .unwrap();
    let err = SweepSpec::from_config(&cfg, 1).unwrap_err().to_string();
    for name in ["lcu", "ccm-rlfu", "ccm-uniform", "ccm-symmetric"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn spec_validation() {
    let unsorted = SMALL.replace("cache_sizes = [0, 1, 2, 4]", "cache_sizes = [0, 2, 1]");
    let cfg = Config::from_toml(&unsorted).unwrap();
    assert!(SweepSpec::from_config(&cfg, 1).is_err());
    let empty = SMALL.replace("capacities = [1, 2]", "capacities = []");
    let cfg = Config::from_toml(&empty).unwrap();
    assert!(SweepSpec::from_config(&cfg, 1).is_err());
}

#[test]
fn plotdata_files() {
    let s = spec(SMALL);
    let t = run_sweep(&s).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_outputs(&t, dir.path(), OutputFormat::Plotdata).unwrap();
    assert_eq!(files.len(), 3 * 2 + 1);
    let curve = std::fs::read_to_string(dir.path().join("ccm-rlfu_R2.dat")).unwrap();
    assert_eq!(curve.lines().count(), 5);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["sigma2"].as_array().unwrap().len(), 8);
    assert_eq!(manifest["curves"].as_array().unwrap().len(), 6);

    let again = tempfile::tempdir().unwrap();
    emit_outputs(
        &run_sweep(&s).unwrap(),
        again.path(),
        OutputFormat::Plotdata,
    )
    .unwrap();
    for f in &files {
        let name = f.file_name().unwrap();
        assert_eq!(
            std::fs::read(f).unwrap(),
            std::fs::read(again.path().join(name)).unwrap()
        );
    }
}

#[test]
fn unwritable_output() {
    let t = run_sweep(&spec(SMALL)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let err = emit_outputs(&t, &blocker.join("out"), OutputFormat::Csv).unwrap_err();
    assert!(matches!(err, Error::Output { .. }));
}

#[test]
fn solution_replay() {
    let cfg = Config::from_toml(SMALL).unwrap();
    let lib = cfg.instance.library().unwrap();
    let model = cfg.instance.demand_model().unwrap();
    let opt = OptimizerConfig {
        restarts: 2,
        ..Default::default()
    };
    let sol = optimize_rlfu(&lib, model.row(0), 2.0, 2.0, 4, &opt).unwrap();
    let file = SolutionFile::new(&sol, 2.0, &[2.0; 4], 8).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sol.json");
    file.save(&path).unwrap();
    let back = SolutionFile::load(&path).unwrap();
    assert_eq!(back, file);

    let a = simulate_trials(&lib, &model, &back.plan, 2.0, 20, 30, 9).unwrap();
    let b = simulate_trials(&lib, &model, &back.plan, 2.0, 20, 30, 9).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 30);
    for row in &a {
        assert!(row.coded_rate <= row.naive_rate + 1e-9);
        assert!(row.coded_rate + row.unicast_rate <= 2.0 + 1e-6, "{row:?}");
    }
}

#[test]
fn uniform_solution_covers_every_file() {
    let sol = optimize_uniform(1.5, 0.5, 2.0, 3).unwrap();
    let file = SolutionFile::new(&sol, 2.0, &[5.0; 3], 10).unwrap();
    assert_eq!(file.plan.m(), 10);
    assert_eq!(file.plan.n(), 3);
}
