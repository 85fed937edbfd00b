use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

use proptest::prelude::*;

use consortia::harness::config::METRIC_NAMES;
use consortia::harness::{run_scenario, Format, Mode, MonteCarlo, Perturbation, RunOptions, Scenario, Sweep};
use consortia::{Error, ReferenceSignal};

fn reference() -> impl Strategy<Value = ReferenceSignal> {
    prop_oneof![
        (0.0..5.0f64).prop_map(ReferenceSignal::constant),
        (0.0..2.0f64, 0.0..5.0f64, 0.0..600.0f64).prop_map(|(b, a, t)| ReferenceSignal::step(b, a, t)),
        (0.5..2.0f64, 0.0..0.5f64, 10.0..500.0f64, 0.0..6.0f64).prop_map(|(mean, amplitude, period, phase)| {
            ReferenceSignal::Sinusoid {
                mean,
                amplitude,
                period,
                phase,
            }
        }),
    ]
}

fn scenario() -> impl Strategy<Value = Scenario> {
    (
        "[a-z][a-z0-9_]{0,12}",
        any::<u64>(),
        prop::bool::ANY,
        prop::collection::btree_map(prop::sample::select(vec!["mu", "theta", "gamma_z", "k_u", "beta_x"]), 0.5..50.0f64, 0..3),
        reference(),
        100.0..3000.0f64,
        prop::sample::subsequence(METRIC_NAMES.to_vec(), 0..4),
        prop::option::of((1usize..40, 0.0..0.5f64, prop::bool::ANY)),
        prop::option::of(prop::collection::vec(0.1..10.0f64, 1..6)),
    )
        .prop_map(|(name, seed, open, params, reference, horizon, metrics, mc, ratios)| {
            let mut s = Scenario::minimal(&name);
            s.seed = seed;
            s.mode = if open { Mode::Open } else { Mode::Closed };
            s.params = params.into_iter().map(|(k, v)| (k.to_string(), v)).collect::<BTreeMap<_, _>>();
            s.reference = reference;
            s.integrator.horizon = horizon;
            s.metrics = metrics.into_iter().map(String::from).collect();
            s.monte_carlo = mc.map(|(replicates, magnitude, log)| MonteCarlo {
                replicates,
                magnitude,
                distribution: if log { Perturbation::LogNormal } else { Perturbation::Uniform },
                parameters: vec!["alpha_max".into(), "n_u".into()],
                seed: Some(seed ^ 1),
            });
            s.sweep = ratios.map(|values| Sweep {
                variable: "ratio".into(),
                values,
                modes: vec![Mode::Closed, Mode::Open],
                range: None,
            });
            s
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonical_form_round_trips(s in scenario()) {
        let text = s.to_canonical_toml().unwrap();
        let back = Scenario::from_toml_str(&text).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(back.to_canonical_toml().unwrap(), text);
    }
}

fn read_outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

fn run_twice(text: &str) -> (BTreeMap<String, Vec<u8>>, BTreeMap<String, Vec<u8>>) {
    let s = Scenario::from_toml_str(text).unwrap();
    let outputs: Vec<_> = [Some(1), Some(4)]
        .into_iter()
        .map(|threads| {
            let dir = tempfile::tempdir().unwrap();
            let opts = RunOptions {
                out_dir: dir.path().to_path_buf(),
                format: Format::Csv,
                threads,
            };
            run_scenario(&s, &opts).unwrap();
            read_outputs(dir.path())
        })
        .collect();
    let mut it = outputs.into_iter();
    (it.next().unwrap(), it.next().unwrap())
}

#[test]
fn monte_carlo_outputs_do_not_depend_on_thread_count() {
    let (a, b) = run_twice(
        r#"
name = "mc"
seed = 11
[integrator]
horizon = 600.0
output_dt = 5.0
[monte_carlo]
replicates = 6
parameters = ["alpha_max", "k_u", "beta_x"]
"#,
    );
    assert!(a.contains_key("montecarlo.csv"), "{:?}", a.keys());
    assert_eq!(a, b);
}

#[test]
fn sweep_outputs_do_not_depend_on_thread_count() {
    let (a, b) = run_twice(
        r#"
name = "ratios"
[reference]
kind = "constant"
value = 1.0
[sweep]
variable = "ratio"
values = [0.2, 1.0, 5.0]
"#,
    );
    assert!(a.contains_key("sweep.csv"));
    assert_eq!(a, b);
}

#[test]
fn agent_outputs_repeat_for_a_fixed_seed() {
    let (a, b) = run_twice(
        r#"
name = "colony"
engine = "agent"
seed = 5
[integrator]
horizon = 30.0
output_dt = 10.0
[agent]
width = 60.0
height = 40.0
dt = 0.05
growth_rate = 0.01
[agent.placement]
kind = "mixed"
controllers = 20
targets = 20
"#,
    );
    assert!(a.contains_key("cells.csv"), "{:?}", a.keys());
    assert_eq!(a, b);
}

#[test]
fn changing_the_seed_changes_replicates() {
    let run = |seed: u64| {
        let mut s = Scenario::minimal("mc");
        s.seed = seed;
        s.integrator.horizon = 300.0;
        s.monte_carlo = Some(MonteCarlo {
            replicates: 2,
            ..Default::default()
        });
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions {
            out_dir: dir.path().to_path_buf(),
            format: Format::Csv,
            threads: Some(1),
        };
        run_scenario(&s, &opts).unwrap();
        fs::read(dir.path().join("montecarlo.csv")).unwrap()
    };
    assert_ne!(run(1), run(2));
}

#[test]
fn svg_outputs_are_well_formed() {
    let mut s = Scenario::minimal("step");
    s.integrator.horizon = 300.0;
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        out_dir: dir.path().to_path_buf(),
        format: Format::Svg,
        threads: None,
    };
    let out = run_scenario(&s, &opts).unwrap();
    assert!(out.files.iter().all(|f| f.extension().is_some_and(|x| x == "svg")));
    let svg = fs::read_to_string(dir.path().join("trajectories.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert!(svg.contains("<polyline"));
}

#[test]
fn incompatible_blocks_are_rejected_with_field_names() {
    let cases = [
        ("name = \"x\"\nengine = \"agent\"\ncontroller = \"PID\"\n", "controller"),
        ("name = \"x\"\nengine = \"composition\"\n[monte_carlo]\nreplicates = 2\n", "monte_carlo"),
        ("name = \"x\"\n[compare]\nreference_grid = [1.0]\n", "compare.reference_grid"),
        ("name = \"x\"\nmetrics = [\"speed\"]\n", "metrics"),
    ];
    for (text, expected) in cases {
        match Scenario::from_toml_str(text) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, expected, "{text}"),
            other => panic!("{text}: {other:?}"),
        }
    }
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_consortia")).args(args).output().unwrap()
}

#[test]
fn cli_exit_codes_separate_config_and_runtime_failures() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    fs::write(&good, "name = \"good\"\n[integrator]\nhorizon = 120.0\n").unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "name = \"bad\"\n[params]\ntheta = -1.0\n").unwrap();
    let broken = dir.path().join("broken.toml");
    fs::write(&broken, "name = \"broken\"\nseed = = 1\n").unwrap();
    let missing = dir.path().join("missing.toml");
    let out_dir = dir.path().join("out");

    let ok = cli(&["validate", good.to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("good: ok"));

    let invalid = cli(&["validate", bad.to_str().unwrap()]);
    assert_eq!(invalid.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&invalid.stderr).contains("params.theta"));

    let parse = cli(&["validate", broken.to_str().unwrap()]);
    assert_eq!(parse.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&parse.stderr).contains("line 2"));

    assert_eq!(cli(&["run", missing.to_str().unwrap()]).status.code(), Some(2));

    let run = cli(&["run", good.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(out_dir.join("trajectories.csv").exists());
    assert!(!out_dir.join("trajectories.svg").exists());
}

#[test]
fn cli_canonical_output_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.toml");
    fs::write(&path, "name = \"s\"\nseed = 3\n[params]\nmu = 2.0\n").unwrap();
    let out = cli(&["validate", "--canonical", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let s = Scenario::from_toml_str(&text).unwrap();
    assert_eq!(s, Scenario::load(&path).unwrap());
}

#[test]
fn shipped_scenarios_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|x| x == "toml") {
            let s = Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(Some(s.name.as_str()), path.file_stem().and_then(|x| x.to_str()));
            n += 1;
        }
    }
    assert!(n >= 5, "only {n} scenarios found");
}
