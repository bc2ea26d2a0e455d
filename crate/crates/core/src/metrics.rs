//! Work model and iteration tables.
//!
//! Costs are relative: a sparse LU of an `m x m` matrix costs `c1 m^{3/2}`,
//! assembly and a matrix-vector product cost `c2 m`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::solvers::{Counters, Method};

/// Problem sizes, measured iteration counts and unit constants.
#[derive(Clone, Debug, PartialEq)]
pub struct CostModel {
    /// Global unknowns `m_Ω`.
    pub m_global: f64,
    /// Unknowns per subdomain `m_ℓ`.
    pub m_local: f64,
    /// Coarse unknowns `m_c`.
    pub m_coarse: f64,
    pub subdomains: f64,
    pub time_steps: f64,
    /// Outer iterations per time step.
    pub k_out: f64,
    /// Local Newton iterations per subdomain and outer iteration.
    pub k_loc: f64,
    /// GMRES iterations per outer iteration.
    pub k_gm: f64,
    /// Coarse solves per outer iteration.
    pub k_c: f64,
    pub c1: f64,
    pub c2: f64,
}

impl CostModel {
    /// Model with `m_ℓ = m_Ω / N_s`, no measured work and unit constants.
    pub fn new(m_global: usize, m_coarse: usize, subdomains: usize) -> Self {
        CostModel {
            m_global: m_global as f64,
            m_local: m_global as f64 / subdomains.max(1) as f64,
            m_coarse: m_coarse as f64,
            subdomains: subdomains as f64,
            time_steps: 1.0,
            k_out: 0.0,
            k_loc: 0.0,
            k_gm: 0.0,
            k_c: 0.0,
            c1: 1.0,
            c2: 1.0,
        }
    }

    /// Fills the iteration counts from (possibly accumulated) counters of
    /// `time_steps` solves.
    pub fn with_counters(mut self, counters: &Counters, time_steps: usize) -> Self {
        let steps = time_steps.max(1) as f64;
        let outer = counters.k_out as f64;
        self.time_steps = steps;
        self.k_out = outer / steps;
        self.k_gm = counters.mean_k_gm().unwrap_or(0.0);
        self.k_c = if outer > 0.0 { counters.k_c_total() as f64 / outer } else { 0.0 };
        self.k_loc = if outer > 0.0 { counters.local_solves() as f64 / (outer * self.subdomains.max(1.0)) } else { 0.0 };
        self
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [self.m_global, self.m_local, self.m_coarse, self.subdomains, self.time_steps];
        if sizes.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter("cost model sizes must be positive".into()));
        }
        if self.m_coarse > self.m_global {
            return Err(Error::InvalidParameter(format!(
                "coarse size {} exceeds global size {}",
                self.m_coarse, self.m_global
            )));
        }
        Ok(())
    }

    pub fn lu_local(&self) -> f64 {
        self.c1 * self.m_local.powf(1.5)
    }

    /// Coarse factorization, also the cost of one coarse solve.
    pub fn lu_coarse(&self) -> f64 {
        self.c1 * self.m_coarse.powf(1.5)
    }

    pub fn assembly_local(&self) -> f64 {
        self.c2 * self.m_local
    }

    /// Global assembly, also the cost of one matrix-vector product.
    pub fn assembly(&self) -> f64 {
        self.c2 * self.m_global
    }

    pub fn nras(&self) -> f64 {
        self.subdomains * self.k_loc * (self.lu_local() + self.assembly_local())
    }

    /// Preconditioner setup and Krylov work of a Newton-type linear solve.
    pub fn gmres_newton(&self) -> f64 {
        self.subdomains * self.lu_local() + self.lu_coarse() + self.assembly() + self.k_gm * self.assembly()
    }
}

/// Estimated work of one outer iteration and of the whole run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostEstimate {
    pub per_iteration: f64,
    pub total: f64,
}

pub fn estimate_costs(model: &CostModel, method: Method) -> Result<CostEstimate> {
    model.validate()?;
    let per_iteration = match method {
        Method::Newton => model.gmres_newton(),
        Method::TwoStep => model.nras() + model.gmres_newton(),
        Method::Raspen1 => model.nras() + model.k_gm * model.assembly(),
        Method::Raspen2 => model.nras() + model.k_gm * model.assembly() + model.k_c * model.lu_coarse(),
        // the least-squares term is linear in the global size
        Method::Anderson => model.nras() + model.assembly() + model.c2 * model.m_global,
    };
    let total = per_iteration * model.k_out * model.time_steps;
    Ok(CostEstimate { per_iteration, total })
}

/// Counters of one solve or one transient run on an `nx x ny` partition.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub method: Method,
    pub partition: [usize; 2],
    pub counters: Counters,
    /// Number of time steps for transient runs.
    pub time_steps: Option<usize>,
}

/// A rendered table: one row per method, one column group per partition.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for line in std::iter::once(&self.header).chain(&self.rows) {
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// Columns padded to a common width.
    pub fn to_text(&self) -> String {
        let ncols = self.rows.iter().map(Vec::len).chain([self.header.len()]).max().unwrap_or(0);
        let mut widths = vec![0; ncols];
        for line in std::iter::once(&self.header).chain(&self.rows) {
            for (w, cell) in widths.iter_mut().zip(line) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        for line in std::iter::once(&self.header).chain(&self.rows) {
            let cells: Vec<String> = line.iter().zip(&widths).map(|(c, &w)| format!("{c:<w$}")).collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    /// Body rows joined by `&` and terminated by `\\`.
    pub fn to_latex(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let _ = writeln!(out, "{} \\\\", row.join(" & "));
        }
        out
    }
}

fn method_label(method: Method) -> &'static str {
    match method {
        Method::Newton => "Newton",
        Method::TwoStep => "Two-step",
        Method::Raspen1 => "1-level RASPEN",
        Method::Raspen2 => "2-level RASPEN",
        Method::Anderson => "Anderson",
    }
}

/// Iteration table. Stationary runs get `k_out`, mean `k_gm` and
/// `k_out k_gm` per partition, transient runs the cumulative `K_out` and
/// `K_gm`. Two-level RASPEN adds the coarse solves in parentheses, Anderson
/// prints `--` in the GMRES columns. `k_out k_gm` is the measured total.
pub fn render_report(runs: &[RunSummary]) -> Table {
    let mut partitions: Vec<[usize; 2]> = Vec::new();
    for r in runs {
        if !partitions.contains(&r.partition) {
            partitions.push(r.partition);
        }
    }
    let transient = runs.iter().any(|r| r.time_steps.is_some());
    let mut header = vec!["method".to_string()];
    for p in &partitions {
        let tag = format!("{}x{}", p[0], p[1]);
        if transient {
            header.extend([format!("{tag} N_T"), format!("{tag} K_out"), format!("{tag} K_gm")]);
        } else {
            header.extend([format!("{tag} k_out"), format!("{tag} k_gm"), format!("{tag} k_out*k_gm")]);
        }
    }
    let mut methods: Vec<Method> = runs.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    let rows = methods
        .into_iter()
        .map(|m| {
            let mut row = vec![method_label(m).to_string()];
            for p in &partitions {
                match runs.iter().find(|r| r.method == m && r.partition == *p) {
                    Some(r) => row.extend(cells(r, transient)),
                    None => row.extend(std::iter::repeat(String::new()).take(3)),
                }
            }
            row
        })
        .collect();
    Table { header, rows }
}

fn cells(run: &RunSummary, transient: bool) -> [String; 3] {
    let c = &run.counters;
    let total_gm = c.k_gm_total();
    let coarse = run.method == Method::Raspen2;
    let (mean_cell, total_cell) = if run.method == Method::Anderson {
        ("--".to_string(), "--".to_string())
    } else {
        let mean = c.mean_k_gm().map_or_else(|| "--".to_string(), |v| format!("{v:.1}"));
        match (coarse, c.mean_k_c()) {
            (true, Some(kc)) => (format!("{mean} ({kc:.1})"), format!("{total_gm} ({})", c.k_c_total())),
            _ => (mean, total_gm.to_string()),
        }
    };
    if transient {
        [run.time_steps.unwrap_or(0).to_string(), c.k_out.to_string(), total_cell]
    } else {
        [c.k_out.to_string(), mean_cell, total_cell]
    }
}
