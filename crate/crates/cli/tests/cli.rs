use std::fs;
use std::path::Path;
use std::process::Command;

use nlschwarz_cli::config::{ExperimentConfig, InitialGuess, Plan, Problem};
use nlschwarz_cli::experiment::{read_runs, RunRow};
use nlschwarz_cli::{cmd_mesh, cmd_report, cmd_solve};

fn plan(text: &str) -> Plan {
    ExperimentConfig::parse(text).unwrap().validate().unwrap()
}

fn errors(text: &str) -> Vec<String> {
    match ExperimentConfig::parse(text) {
        Err(e) => vec![format!("{e:#}")],
        Ok(c) => c.validate().unwrap_err().0.iter().map(ToString::to_string).collect(),
    }
}

fn small_lshape(out: &Path) -> String {
    small_lshape_on(out, "[[2, 2], [3, 3]]")
}

fn small_lshape_on(out: &Path, partitions: &str) -> String {
    format!(
        r#"
problem = "pme-lshape"
partitions = {partitions}
out = "{}"
mesh.target_h = 0.1666666666667
"#,
        out.display()
    )
}

fn with_plan<T>(text: &str, f: impl FnOnce(&Plan) -> T) -> T {
    f(&plan(text))
}

#[test]
fn defaults_follow_the_problem() {
    let p = plan(r#"problem = "pme-lshape""#);
    assert_eq!(p.methods.len(), 5);
    assert_eq!(p.partitions, [[3, 3], [5, 5], [9, 9]]);
    assert_eq!((p.pme_exponent, p.pme_scale), (4, 1.0));
    assert_eq!(p.initial_guesses, [InitialGuess::Zeros]);
    assert!((p.overlap - 0.05).abs() < 1e-15);

    let p = plan(r#"problem = "pme-perforated""#);
    assert_eq!((p.pme_exponent, p.pme_scale), (3, 15.0));
    assert_eq!(p.initial_guesses, [InitialGuess::Zeros, InitialGuess::Ones]);

    let p = plan(r#"problem = "dw-transient""#);
    assert_eq!(p.partitions, [[1, 2], [2, 4], [4, 8]]);
    assert_eq!(p.initial_guesses, [InitialGuess::Bathymetry]);
    assert!(p.time_loop(nlschwarz::Method::Newton).global_adaptive);
    assert!(!p.time_loop(nlschwarz::Method::Raspen2).global_adaptive);
}

#[test]
fn dotted_keys_reach_the_solver_config() {
    let p = plan(
        r#"
problem = "pme-lshape"
solver.outer_tol = 1e-6
solver.gmres_max_iter = 50
solver.parallel = false
time.min_dt = 0.5
"#,
    );
    assert_eq!(p.solver.outer_tol, 1e-6);
    assert_eq!(p.solver.gmres.max_iter, 50);
    assert!(!p.solver.parallel);
    assert_eq!(p.time_loop(nlschwarz::Method::Raspen1).min_dt, 0.5);
}

#[test]
fn parse_errors_carry_the_field_path() {
    let e = errors("problem = \"pme-lshape\"\nsolver.max_outer = \"many\"\n");
    assert!(e[0].contains("solver.max_outer"), "{e:?}");
    let e = errors("problem = \"pme-lshape\"\nsolver.outer_tolerance = 1e-6\n");
    assert!(e[0].contains("solver") && e[0].contains("outer_tolerance"), "{e:?}");
    let e = errors("problem = \"pme-cube\"\n");
    assert!(e[0].contains("problem"), "{e:?}");
    let e = errors("methods = [\"newton\"]\n");
    assert!(e[0].contains("problem"), "{e:?}");
}

#[test]
fn validation_reports_every_bad_field() {
    let e = errors(
        r#"
problem = "pme-lshape"
methods = ["newton", "gauss-seidel", "newton"]
overlap = 0.7
initial_guess = ["bathymetry"]
solver.outer_tol = -1.0
dw.exponent_mode = "literal"
time.dt = 0.0
"#,
    );
    let paths: Vec<&str> = e.iter().map(|s| s.split(':').next().unwrap()).collect();
    assert_eq!(
        paths,
        ["methods[1]", "methods[2]", "overlap", "initial_guess[0]", "dw.exponent_mode", "solver.outer_tol", "time.dt"]
    );
}

#[test]
fn empty_method_list_is_rejected() {
    let e = errors("problem = \"pme-lshape\"\nmethods = []\n");
    assert_eq!(e, ["methods: at least one method is required"]);
}

#[test]
fn perforated_cells_must_fit_the_finest_partition() {
    let e = errors("problem = \"pme-perforated\"\npartitions = [[3, 3]]\nperforated.cells = 64\n");
    assert!(e[0].starts_with("perforated.cells"), "{e:?}");
}

#[test]
fn mesh_files_need_both_halves() {
    let e = errors("problem = \"pme-lshape\"\nmesh.node_file = \"a.node\"\n");
    assert!(e[0].starts_with("mesh.ele_file"), "{e:?}");
}

#[test]
fn lshape_report_has_a_row_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let text = small_lshape(dir.path()) + "methods = [\"raspen2\", \"newton\", \"anderson\"]\n";
    let (out, rows) = with_plan(&text, |p| cmd_solve(p).unwrap());
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.status == "ok"), "{rows:?}");
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    for label in ["Newton", "2-level RASPEN", "Anderson"] {
        assert!(summary.lines().any(|l| l.starts_with(label)), "{summary}");
    }
    assert!(!summary.lines().any(|l| l.starts_with("Two-step")));
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("method,partition,initial,outer,residual,gmres_its,local_solves\n"));
    let solution = fs::read_to_string(out.join("solutions/newton-3x3-zeros.csv")).unwrap();
    assert!(solution.starts_with("node,x,y,u,h\n"));
}

#[test]
fn solutions_agree_across_partitions_and_methods() {
    let dir = tempfile::tempdir().unwrap();
    let (out, _) = with_plan(&small_lshape(dir.path()), |p| cmd_solve(p).unwrap());
    let read = |name: &str| -> Vec<f64> {
        let text = fs::read_to_string(out.join("solutions").join(name)).unwrap();
        text.lines().skip(1).map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect()
    };
    let reference = read("newton-3x3-zeros.csv");
    for name in ["raspen2-2x2-zeros.csv", "anderson-3x3-zeros.csv", "two-step-2x2-zeros.csv"] {
        let u = read(name);
        let diff = u.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-6, "{name}: {diff}");
    }
}

#[test]
fn fine_mesh_is_shared_by_all_partitions() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"
problem = "pme-perforated"
methods = ["raspen2"]
partitions = [[2, 2], [4, 4]]
initial_guess = ["zeros"]
perforated.cells = 16
out = "{}"
"#,
        dir.path().display()
    );
    let (_, rows) = with_plan(&text, |p| cmd_solve(p).unwrap());
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].nodes, rows[1].nodes);
    assert_eq!(rows[0].unknowns, rows[1].unknowns);
    assert_ne!(rows[0].subdomains, rows[1].subdomains);
}

#[test]
fn perforated_runs_cover_both_initial_guesses() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"
problem = "pme-perforated"
methods = ["newton", "raspen2"]
partitions = [[2, 2]]
perforated.cells = 16
out = "{}"
"#,
        dir.path().display()
    );
    let (out, rows) = with_plan(&text, |p| cmd_solve(p).unwrap());
    let initial: Vec<&str> = rows.iter().map(|r| r.initial.as_str()).collect();
    assert_eq!(initial, ["zeros", "zeros", "ones", "ones"]);
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("initial guess zeros") && summary.contains("initial guess ones"));
}

fn flat_scene(out: &Path) -> String {
    format!(
        r#"
problem = "dw-transient"
methods = ["newton", "raspen2"]
partitions = [[1, 2]]
out = "{}"
mesh.target_h = 1.0
scene.width = 12.0
scene.length = 24.0
scene.buildings = 2
scene.flat = true
time.final_time = 30.0
time.dt = 10.0
"#,
        out.display()
    )
}

#[test]
fn flat_dry_scene_never_floods() {
    let dir = tempfile::tempdir().unwrap();
    let (out, rows) = with_plan(&flat_scene(dir.path()), |p| cmd_solve(p).unwrap());
    assert!(rows.iter().all(|r| r.status == "ok" && r.time_steps == Some(3)), "{rows:?}");
    let mut reader = csv::Reader::from_path(out.join("steps.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "flooded").unwrap();
    let mut n = 0;
    for rec in reader.records() {
        assert_eq!(&rec.unwrap()[col], "0");
        n += 1;
    }
    assert_eq!(n, 6);
    assert!(!out.join("trace.csv").exists());
}

#[test]
fn failures_are_recorded_and_the_rest_still_runs() {
    let dir = tempfile::tempdir().unwrap();
    let text = small_lshape(dir.path()) + "methods = [\"newton\", \"raspen2\"]\nsolver.max_outer = 8\n";
    let (out, rows) = with_plan(&text, |p| cmd_solve(p).unwrap());
    let status: Vec<(&str, &str)> = rows.iter().map(|r| (r.method.as_str(), r.status.as_str())).collect();
    assert_eq!(status, [("newton", "failed"), ("raspen2", "ok"), ("newton", "failed"), ("raspen2", "ok")]);
    assert!(rows[0].error.contains("outer iteration limit"));
    assert_eq!(rows[0].k_out, 8);
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("failed runs\nnewton 2x2 from zeros: outer iteration limit 8"), "{summary}");
    assert!(!out.join("solutions/newton-2x2-zeros.csv").exists());
}

#[test]
fn solution_file_restarts_at_the_root() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let text = small_lshape_on(&first, "[[3, 3]]") + "methods = [\"newton\"]\n";
    with_plan(&text, |p| cmd_solve(p).unwrap());
    let restart = small_lshape_on(&dir.path().join("second"), "[[3, 3]]")
        + &format!(
            "methods = [\"raspen2\"]\ninitial_guess = [\"file:{}\"]\n",
            first.join("solutions/newton-3x3-zeros.csv").display()
        );
    let (_, rows) = with_plan(&restart, |p| cmd_solve(p).unwrap());
    assert_eq!(rows[0].status, "ok");
    assert!(rows[0].k_out <= 1, "{rows:?}");
}

#[test]
fn mesh_files_round_trip_through_the_solver() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    let text = small_lshape(&gen) + "methods = [\"raspen2\"]\n";
    with_plan(&text, |p| cmd_mesh(p).unwrap());
    let described = fs::read_to_string(gen.join("mesh.txt")).unwrap();
    assert!(described.contains("\n2x2 "), "{described}");
    let (_, direct) = with_plan(&text, |p| cmd_solve(p).unwrap());

    let from_files = format!(
        r#"
problem = "pme-lshape"
methods = ["raspen2"]
partitions = [[2, 2], [3, 3]]
out = "{}"
mesh.node_file = "{}"
mesh.ele_file = "{}"
"#,
        dir.path().join("files").display(),
        gen.join("mesh.node").display(),
        gen.join("mesh.ele").display()
    );
    let (_, loaded) = with_plan(&from_files, |p| cmd_solve(p).unwrap());
    let key = |r: &RunRow| (r.nodes, r.unknowns, r.subdomains, r.coarse_dim, r.k_out, r.k_gm_total);
    assert_eq!(direct.iter().map(key).collect::<Vec<_>>(), loaded.iter().map(key).collect::<Vec<_>>());
}

#[test]
fn report_merges_run_directories() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    with_plan(&(small_lshape(&a) + "methods = [\"newton\"]\n"), |p| cmd_solve(p).unwrap());
    with_plan(&(small_lshape(&b) + "methods = [\"raspen1\"]\n"), |p| cmd_solve(p).unwrap());
    let text = cmd_report(&[a.clone(), b]).unwrap();
    let table: Vec<&str> = text.lines().skip(1).take(3).collect();
    assert!(table[0].starts_with("method") && table[0].contains("2x2 k_out"));
    assert!(table[1].starts_with("Newton") && table[2].starts_with("1-level RASPEN"), "{text}");

    // the merged table shows what the single run reported
    let summary = fs::read_to_string(a.join("summary.txt")).unwrap();
    let newton = |s: &str| -> Vec<String> {
        s.lines().find(|l| l.starts_with("Newton")).unwrap().split_whitespace().map(String::from).collect()
    };
    assert_eq!(newton(&text), newton(&summary));
    assert_eq!(read_runs(&a).unwrap().len(), 2);
}

fn run_binary(args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_nlschwarz")).args(args).env("RUST_LOG", "warn").output().unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(files(&path));
        } else {
            out.push((path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap()));
        }
    }
    out.sort();
    out
}

#[test]
fn same_config_gives_byte_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    fs::write(
        &config,
        r#"
problem = "pme-perforated"
methods = ["two-step", "raspen1", "raspen2"]
partitions = [[2, 2]]
initial_guess = ["ones"]
perforated.cells = 16
"#,
    )
    .unwrap();
    let one = dir.path().join("one");
    let two = dir.path().join("two");
    let cfg = config.to_str().unwrap();
    run_binary(&["solve", "--config", cfg, "--out", one.to_str().unwrap(), "--seed", "3"]);
    run_binary(&["--threads", "2", "solve", "--config", cfg, "--out", two.to_str().unwrap(), "--seed", "3", "--concurrent"]);
    let (a, b) = (files(&one), files(&two));
    assert_eq!(a.len(), 6);
    assert!(a == b, "outputs differ");

    let other = dir.path().join("other");
    run_binary(&["solve", "--config", cfg, "--out", other.to_str().unwrap(), "--seed", "4"]);
    assert!(files(&other) != a, "the seed must change the geometry");
}

#[test]
fn relative_paths_follow_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    fs::write(&config, "problem = \"pme-lshape\"\nout = \"results\"\n").unwrap();
    let p = ExperimentConfig::load(&config).unwrap().validate().unwrap();
    assert_eq!(p.out.unwrap(), dir.path().join("results"));
    assert_eq!(p.problem, Problem::PmeLshape);
}
