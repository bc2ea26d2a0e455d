//! Mesh generation, the method x partition runs and their output files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use nlschwarz::mesh::{generate_perforated_mesh, load_mesh, write_mesh, MeshSpec, Rect, Sides, TriMesh};
use nlschwarz::metrics::{estimate_costs, render_report, CostModel, RunSummary, Table};
use nlschwarz::problems::{pme_system, PmeSystem};
use nlschwarz::scenarios::{lshape_dirichlet, Discretization, DomainSetup};
use nlschwarz::solvers::solve;
use nlschwarz::timestepping::{run_transient, DwScene, StepRecord};
use nlschwarz::{Counters, Method};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{finest_partition, InitialGuess, MeshSource, Plan, Problem};

/// The discretized problem shared by all runs of an experiment.
pub struct Built {
    pub disc: Discretization<f64>,
    pub model: Model,
}

pub enum Model {
    Pme(PmeSystem<f64>),
    Dw { zb: Vec<f64> },
}

impl Built {
    /// Nodal bathymetry, zero for the stationary problems.
    pub fn bathymetry(&self) -> Vec<f64> {
        match &self.model {
            Model::Pme(_) => vec![0.0; self.disc.mesh.node_count()],
            Model::Dw { zb } => zb.clone(),
        }
    }
}

fn lshape_mesh(target_h: f64, coarse: [usize; 2]) -> nlschwarz::Result<TriMesh<f64>> {
    generate_perforated_mesh(&MeshSpec {
        domain: Rect::new(-1.0, -1.0, 1.0, 1.0),
        perforations: vec![Rect::new(0.0, 0.0, 1.0, 1.0)],
        target_h,
        coarse,
        dirichlet: Sides { top: true, right: true, ..Sides::NONE },
    })
}

/// Fine mesh conforming to the finest partition.
pub fn build_mesh(plan: &Plan) -> Result<TriMesh<f64>> {
    let mesh = match &plan.mesh {
        MeshSource::Files { node, ele } => load_mesh(node, ele)?,
        MeshSource::Generate { target_h } => match plan.problem {
            Problem::PmeLshape => lshape_mesh(*target_h, finest_partition(&plan.partitions))?,
            Problem::PmePerforated => plan.perforated_pme().mesh()?,
            Problem::DwTransient => plan.inclined_scene().mesh()?,
        },
    };
    Ok(mesh)
}

pub fn build_problem(plan: &Plan, mesh: TriMesh<f64>) -> Result<Built> {
    Ok(match plan.problem {
        Problem::PmeLshape => {
            let disc = Discretization::new(mesh, lshape_dirichlet)?;
            let sys = pme_system(&disc.mesh, &disc.fem, plan.pme_exponent, plan.pme_scale, disc.free.clone())?;
            Built { disc, model: Model::Pme(sys) }
        }
        Problem::PmePerforated => {
            let (disc, sys) = plan.perforated_pme().discretize(mesh)?;
            Built { disc, model: Model::Pme(sys) }
        }
        Problem::DwTransient => {
            let (disc, zb) = plan.inclined_scene().discretize(mesh, &plan.bathymetry()?)?;
            Built { disc, model: Model::Dw { zb } }
        }
    })
}

/// Nodal initial state.
pub fn initial_state(guess: &InitialGuess, built: &Built) -> Result<Vec<f64>> {
    let n = built.disc.mesh.node_count();
    Ok(match guess {
        InitialGuess::Zeros => vec![0.0; n],
        InitialGuess::Ones => vec![1.0; n],
        InitialGuess::Bathymetry => built.bathymetry(),
        InitialGuess::File(path) => {
            let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
            let mut u = vec![f64::NAN; n];
            for row in reader.deserialize::<SolutionRow>() {
                let row = row.with_context(|| format!("parsing {}", path.display()))?;
                *u.get_mut(row.node).ok_or_else(|| anyhow!("{}: node {} out of range", path.display(), row.node))? = row.u;
            }
            if let Some(node) = u.iter().position(|v| v.is_nan()) {
                bail!("{}: no value for node {node}", path.display());
            }
            u
        }
    })
}

/// Result of one method on one partition from one initial guess.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub method: Method,
    pub partition: [usize; 2],
    pub guess: usize,
    pub subdomains: usize,
    pub coarse_dim: usize,
    pub counters: Counters,
    /// Nodal solution of a successful run.
    pub u: Option<Vec<f64>>,
    pub steps: Vec<StepRecord<f64>>,
    pub reductions: usize,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn time_steps(&self, problem: Problem) -> Option<usize> {
        problem.is_transient().then_some(self.steps.len())
    }
}

fn run_one(plan: &Plan, built: &Built, setup: &DomainSetup<f64>, method: Method, u0: &[f64]) -> RunRecord {
    let free = &built.disc.free;
    let mut record = RunRecord {
        method,
        partition: setup.decomp.grid(),
        guess: 0,
        subdomains: setup.schwarz.len(),
        coarse_dim: setup.schwarz.coarse().map_or(0, |c| c.dim()),
        counters: Counters::new(setup.schwarz.len()),
        u: None,
        steps: Vec::new(),
        reductions: 0,
        error: None,
    };
    match &built.model {
        Model::Pme(sys) => match solve(method, sys, &setup.schwarz, &free.to_free(u0), &plan.solver) {
            Ok(sol) => {
                record.u = Some(free.to_full(&sol.u));
                record.counters = sol.counters;
            }
            Err(failure) => {
                record.error = Some(failure.to_string());
                record.counters = failure.last.counters;
            }
        },
        Model::Dw { zb } => {
            let scene = DwScene { mesh: &built.disc.mesh, fem: &built.disc.fem, free, zb, params: plan.dw };
            match run_transient(&scene, &setup.schwarz, u0, &plan.time_loop(method), &plan.solver) {
                Ok(report) => {
                    record.u = Some(report.u);
                    record.counters = report.counters;
                    record.steps = report.steps;
                    record.reductions = report.reductions;
                }
                Err(e) => record.error = Some(e.to_string()),
            }
        }
    }
    record
}

/// Runs every initial guess x partition x method combination on the same
/// fine mesh. Failures are recorded and do not stop the other runs.
pub fn run_all(plan: &Plan, built: &Built) -> Result<Vec<RunRecord>> {
    let starts: Vec<Vec<f64>> =
        plan.initial_guesses.iter().map(|g| initial_state(g, built)).collect::<Result<_>>()?;
    let mut setups = Vec::new();
    for &[nx, ny] in &plan.partitions {
        let t = Instant::now();
        let setup = built.disc.decompose(nx, ny, plan.overlap, plan.degree);
        match &setup {
            Ok(s) => info!(
                "{nx}x{ny}: {} subdomains, coarse dimension {}, set up in {:.2?}",
                s.schwarz.len(),
                s.schwarz.coarse().map_or(0, |c| c.dim()),
                t.elapsed()
            ),
            Err(e) => warn!("{nx}x{ny}: decomposition failed: {e}"),
        }
        setups.push(setup);
    }
    let mut jobs = Vec::new();
    for g in 0..starts.len() {
        for p in 0..plan.partitions.len() {
            for &m in &plan.methods {
                jobs.push((g, p, m));
            }
        }
    }
    let job = |&(g, p, method): &(usize, usize, Method)| -> RunRecord {
        let partition = plan.partitions[p];
        let record = match &setups[p] {
            Ok(setup) => {
                let t = Instant::now();
                let r = run_one(plan, built, setup, method, &starts[g]);
                let label = plan.initial_guesses[g].label();
                match &r.error {
                    None => info!("{method} {}x{} from {label}: k_out {} in {:.2?}", partition[0], partition[1], r.counters.k_out, t.elapsed()),
                    Some(e) => warn!("{method} {}x{} from {label} failed: {e}", partition[0], partition[1]),
                }
                r
            }
            Err(e) => RunRecord {
                method,
                partition,
                guess: g,
                subdomains: 0,
                coarse_dim: 0,
                counters: Counters::default(),
                u: None,
                steps: Vec::new(),
                reductions: 0,
                error: Some(format!("decomposition failed: {e}")),
            },
        };
        RunRecord { guess: g, partition, ..record }
    };
    Ok(if plan.concurrent { jobs.par_iter().map(job).collect() } else { jobs.iter().map(job).collect() })
}

#[derive(Debug, Serialize, Deserialize)]
struct SolutionRow {
    node: usize,
    x: f64,
    y: f64,
    u: f64,
    h: f64,
}

#[derive(Debug, Serialize)]
struct TraceCsvRow<'a> {
    method: &'a str,
    partition: String,
    initial: String,
    outer: usize,
    residual: f64,
    gmres_its: usize,
    local_solves: usize,
}

#[derive(Debug, Serialize)]
struct StepCsvRow<'a> {
    method: &'a str,
    partition: String,
    initial: String,
    step: usize,
    t: f64,
    dt: f64,
    k_out: usize,
    k_gm: usize,
    k_c: usize,
    flooded: usize,
    max_depth: f64,
    volume: f64,
    rejected: usize,
    continuations: usize,
}

/// One line of `runs.csv`; enough to rebuild the report tables.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunRow {
    pub problem: String,
    pub method: String,
    pub partition: String,
    pub initial: String,
    pub status: String,
    pub nodes: usize,
    pub unknowns: usize,
    pub subdomains: usize,
    pub coarse_dim: usize,
    pub k_out: usize,
    pub k_gm_count: usize,
    pub k_gm_total: usize,
    pub k_c_count: usize,
    pub k_c_total: usize,
    pub local_solves: usize,
    pub continuations: usize,
    pub time_steps: Option<usize>,
    pub reductions: usize,
    pub min_u: Option<f64>,
    pub final_residual: Option<f64>,
    pub cost_per_iteration: Option<f64>,
    pub cost_total: Option<f64>,
    pub error: String,
}

fn partition_label(p: [usize; 2]) -> String {
    format!("{}x{}", p[0], p[1])
}

fn parse_partition(s: &str) -> Result<[usize; 2]> {
    let (a, b) = s.split_once('x').ok_or_else(|| anyhow!("malformed partition `{s}`"))?;
    Ok([a.parse()?, b.parse()?])
}

fn cost(plan: &Plan, built: &Built, r: &RunRecord) -> Option<(f64, f64)> {
    if r.subdomains == 0 {
        return None;
    }
    let model = CostModel::new(built.disc.free.len(), r.coarse_dim.max(1), r.subdomains)
        .with_counters(&r.counters, r.time_steps(plan.problem).unwrap_or(1));
    estimate_costs(&model, r.method).ok().map(|c| (c.per_iteration, c.total))
}

fn run_row(plan: &Plan, built: &Built, r: &RunRecord) -> RunRow {
    let free = &built.disc.free;
    let min_u = r.u.as_ref().map(|u| free.free_nodes().iter().map(|&v| u[v]).fold(f64::INFINITY, f64::min));
    let (per, total) = cost(plan, built, r).unzip();
    RunRow {
        problem: plan.problem.name().into(),
        method: r.method.name().into(),
        partition: partition_label(r.partition),
        initial: plan.initial_guesses[r.guess].label(),
        status: if r.error.is_none() { "ok".into() } else { "failed".into() },
        nodes: built.disc.mesh.node_count(),
        unknowns: free.len(),
        subdomains: r.subdomains,
        coarse_dim: r.coarse_dim,
        k_out: r.counters.k_out,
        k_gm_count: r.counters.k_gm.len(),
        k_gm_total: r.counters.k_gm_total(),
        k_c_count: r.counters.k_c.len(),
        k_c_total: r.counters.k_c_total(),
        local_solves: r.counters.local_solves(),
        continuations: r.counters.continuations,
        time_steps: r.time_steps(plan.problem),
        reductions: r.reductions,
        min_u,
        final_residual: r.counters.trace.last().map(|t| t.residual),
        cost_per_iteration: per,
        cost_total: total,
        error: r.error.clone().unwrap_or_default(),
    }
}

/// Counters with the same counts and totals as a `runs.csv` line, which is
/// all the report tables use.
fn counters_from_row(row: &RunRow) -> Counters {
    let spread = |count: usize, total: usize| -> Vec<usize> {
        (0..count).map(|i| total / count + usize::from(i < total % count)).collect()
    };
    Counters {
        k_out: row.k_out,
        k_gm: spread(row.k_gm_count, row.k_gm_total),
        k_c: spread(row.k_c_count, row.k_c_total),
        ..Counters::default()
    }
}

/// Report tables, one per problem and initial guess, of the successful runs.
pub fn report_tables(rows: &[RunRow]) -> Result<Vec<(String, Table)>> {
    let mut groups: BTreeMap<(String, String), Vec<RunSummary>> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.status == "ok") {
        groups.entry((row.problem.clone(), row.initial.clone())).or_default().push(RunSummary {
            method: row.method.parse()?,
            partition: parse_partition(&row.partition)?,
            counters: counters_from_row(row),
            time_steps: row.time_steps,
        });
    }
    Ok(groups.into_iter().map(|((p, i), runs)| (format!("{p}, initial guess {i}"), render_report(&runs))).collect())
}

fn cost_table(rows: &[RunRow]) -> Table {
    let header = ["method", "partition", "initial", "work/iteration", "total work"].map(String::from).to_vec();
    let fmt = |v: Option<f64>| v.map_or_else(|| "--".to_string(), |v| format!("{v:.3e}"));
    let rows = rows
        .iter()
        .map(|r| vec![r.method.clone(), r.partition.clone(), r.initial.clone(), fmt(r.cost_per_iteration), fmt(r.cost_total)])
        .collect();
    Table { header, rows }
}

/// Summary text of a set of runs.
pub fn summary_text(rows: &[RunRow]) -> Result<String> {
    let mut out = String::new();
    if let Some(first) = rows.first() {
        out += &format!("problem {}: {} nodes, {} unknowns\n\n", first.problem, first.nodes, first.unknowns);
    }
    for (title, table) in report_tables(rows)? {
        out += &format!("{title}\n{}\n", table.to_text());
    }
    out += &format!("relative work estimates\n{}", cost_table(rows).to_text());
    let failed: Vec<&RunRow> = rows.iter().filter(|r| r.status != "ok").collect();
    if !failed.is_empty() {
        out += "\nfailed runs\n";
        for r in failed {
            out += &format!("{} {} from {}: {}\n", r.method, r.partition, r.initial, r.error);
        }
    }
    Ok(out)
}

/// Writes `trace.csv` (stationary) or `steps.csv` (transient), one
/// solution file per successful run, `runs.csv` and `summary.txt`.
pub fn write_outputs(plan: &Plan, built: &Built, records: &[RunRecord], out: &Path) -> Result<Vec<RunRow>> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let label = |r: &RunRecord| (partition_label(r.partition), plan.initial_guesses[r.guess].label());
    if plan.problem.is_transient() {
        let mut w = csv::Writer::from_path(out.join("steps.csv"))?;
        for r in records {
            let (partition, initial) = label(r);
            for s in &r.steps {
                w.serialize(StepCsvRow {
                    method: r.method.name(),
                    partition: partition.clone(),
                    initial: initial.clone(),
                    step: s.step,
                    t: s.t,
                    dt: s.dt,
                    k_out: s.k_out,
                    k_gm: s.k_gm,
                    k_c: s.k_c,
                    flooded: s.flooded,
                    max_depth: s.max_depth,
                    volume: s.volume,
                    rejected: s.rejected,
                    continuations: s.continuations,
                })?;
            }
        }
        w.flush()?;
    } else {
        let mut w = csv::Writer::from_path(out.join("trace.csv"))?;
        for r in records {
            let (partition, initial) = label(r);
            for t in &r.counters.trace {
                w.serialize(TraceCsvRow {
                    method: r.method.name(),
                    partition: partition.clone(),
                    initial: initial.clone(),
                    outer: t.outer,
                    residual: t.residual,
                    gmres_its: t.gmres,
                    local_solves: t.local_solves,
                })?;
            }
        }
        w.flush()?;
    }

    let dir = out.join("solutions");
    fs::create_dir_all(&dir)?;
    let zb = built.bathymetry();
    for r in records {
        let Some(u) = &r.u else { continue };
        let name = format!(
            "{}-{}-{}.csv",
            r.method.name(),
            partition_label(r.partition),
            plan.initial_guesses[r.guess].tag(r.guess)
        );
        let mut w = csv::Writer::from_path(dir.join(name))?;
        for (node, (p, (&u, &z))) in built.disc.mesh.nodes().iter().zip(u.iter().zip(&zb)).enumerate() {
            w.serialize(SolutionRow { node, x: p[0], y: p[1], u, h: (u - z).max(0.0) })?;
        }
        w.flush()?;
    }

    let rows: Vec<RunRow> = records.iter().map(|r| run_row(plan, built, r)).collect();
    let mut w = csv::Writer::from_path(out.join("runs.csv"))?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    fs::write(out.join("summary.txt"), summary_text(&rows)?)?;
    Ok(rows)
}

pub fn read_runs(dir: &Path) -> Result<Vec<RunRow>> {
    let path = dir.join("runs.csv");
    let mut reader = csv::Reader::from_path(&path).with_context(|| format!("reading {}", path.display()))?;
    reader
        .deserialize()
        .map(|r| r.with_context(|| format!("parsing {}", path.display())))
        .collect()
}

fn output_dir(plan: &Plan) -> Result<PathBuf> {
    plan.out.clone().ok_or_else(|| anyhow!("out: no output directory (set `out` or pass --out)"))
}

/// Writes the fine mesh as `mesh.node` / `mesh.ele` and a description of
/// each partition to `mesh.txt`.
pub fn cmd_mesh(plan: &Plan) -> Result<PathBuf> {
    let out = output_dir(plan)?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mesh = build_mesh(plan)?;
    write_mesh(&mesh, &out.join("mesh.node"), &out.join("mesh.ele"))?;
    let built = build_problem(plan, mesh)?;
    let mesh = &built.disc.mesh;
    let mut text = format!(
        "problem {}\nnodes {}\ntriangles {}\nunknowns {}\nperforations {}\n",
        plan.problem,
        mesh.node_count(),
        mesh.triangles().len(),
        built.disc.free.len(),
        mesh.perforations().len()
    );
    let mut table = Table {
        header: ["partition", "subdomains", "coarse_dim", "min_local", "max_local"].map(String::from).to_vec(),
        rows: Vec::new(),
    };
    for &[nx, ny] in &plan.partitions {
        let setup = built.disc.decompose(nx, ny, plan.overlap, plan.degree)?;
        let sizes: Vec<usize> = (0..setup.schwarz.len()).map(|j| setup.schwarz.subdomain_dofs(j).len()).collect();
        table.rows.push(vec![
            partition_label([nx, ny]),
            setup.schwarz.len().to_string(),
            setup.trefftz.dim().to_string(),
            sizes.iter().min().copied().unwrap_or(0).to_string(),
            sizes.iter().max().copied().unwrap_or(0).to_string(),
        ]);
    }
    text += &format!("\n{}", table.to_text());
    fs::write(out.join("mesh.txt"), text)?;
    Ok(out)
}

pub fn cmd_solve(plan: &Plan) -> Result<(PathBuf, Vec<RunRow>)> {
    let out = output_dir(plan)?;
    let t = Instant::now();
    let mesh = build_mesh(plan)?;
    let built = build_problem(plan, mesh)?;
    info!(
        "{}: {} nodes, {} unknowns, built in {:.2?}",
        plan.problem,
        built.disc.mesh.node_count(),
        built.disc.free.len(),
        t.elapsed()
    );
    let records = run_all(plan, &built)?;
    let rows = write_outputs(plan, &built, &records, &out)?;
    Ok((out, rows))
}

/// Merged report of several run directories.
pub fn cmd_report(dirs: &[PathBuf]) -> Result<String> {
    let mut rows = Vec::new();
    for d in dirs {
        rows.extend(read_runs(d)?);
    }
    let mut out = String::new();
    for (title, table) in report_tables(&rows)? {
        out += &format!("{title}\n{}\n", table.to_text());
    }
    out += &format!("relative work estimates\n{}", cost_table(&rows).to_text());
    Ok(out)
}
