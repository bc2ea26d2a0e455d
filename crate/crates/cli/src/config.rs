//! Experiment configuration.
//!
//! A config is a TOML file of flat dotted keys, for example
//!
//! ```toml
//! problem = "pme-lshape"
//! methods = ["newton", "raspen2"]
//! partitions = [[3, 3], [9, 9]]
//! mesh.target_h = 0.0222
//! solver.outer_tol = 1e-8
//! ```
//!
//! Every key is optional except `problem`. Unknown keys are rejected.
//! Relative paths are taken relative to the directory of the config file.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use nlschwarz::linalg::GmresOptions;
use nlschwarz::problems::{Bathymetry, DwParams, ExponentMode, RasterGrid};
use nlschwarz::scenarios::{InclinedScene, PerforatedPme};
use nlschwarz::{Method, SolverConfig, TimeLoopConfig};
use serde::Deserialize;

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    /// Stationary porous medium equation on the L-shape.
    PmeLshape,
    /// Stationary porous medium equation on a randomly perforated square.
    PmePerforated,
    /// Diffusive Wave time stepping on an inclined scene with buildings.
    DwTransient,
}

impl Problem {
    pub fn name(self) -> &'static str {
        match self {
            Problem::PmeLshape => "pme-lshape",
            Problem::PmePerforated => "pme-perforated",
            Problem::DwTransient => "dw-transient",
        }
    }

    pub fn is_transient(self) -> bool {
        self == Problem::DwTransient
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Problem,
    /// Method tags; all five when absent.
    #[serde(default)]
    pub methods: Option<Vec<String>>,
    /// Coarse partitions `[nx, ny]`.
    #[serde(default)]
    pub partitions: Option<Vec<[usize; 2]>>,
    /// Overlap as a fraction of the subdomain size.
    #[serde(default = "default_overlap")]
    pub overlap: f64,
    /// Polynomial degree of the coarse traces.
    #[serde(default = "default_degree")]
    pub degree: usize,
    /// `zeros`, `ones`, `bathymetry` or `file:<path>`; each entry is a
    /// separate set of runs.
    #[serde(default)]
    pub initial_guess: Option<Vec<String>>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Run the method and partition combinations concurrently.
    #[serde(default)]
    pub concurrent: bool,
    #[serde(default)]
    pub mesh: MeshSection,
    #[serde(default)]
    pub pme: PmeSection,
    #[serde(default)]
    pub perforated: PerforatedSection,
    #[serde(default)]
    pub scene: SceneSection,
    #[serde(default)]
    pub dw: DwSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub time: TimeSection,
}

fn default_overlap() -> f64 {
    nlschwarz::scenarios::OVERLAP_FRACTION
}

fn default_degree() -> usize {
    1
}

/// Either generation parameters or a pair of Triangle files.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSection {
    /// Fine mesh size of the L-shape and the DW scene.
    pub target_h: Option<f64>,
    pub node_file: Option<PathBuf>,
    pub ele_file: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PmeSection {
    /// `m` in `max(u,0)^m`; 4 on the L-shape, 3 on the perforated square.
    pub exponent: Option<i32>,
    /// `c`; 1 on the L-shape, 15 on the perforated square.
    pub scale: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerforatedSection {
    pub half_width: f64,
    /// Fine cells per side of the square.
    pub cells: usize,
    /// Number of holes; drawn from the seed when absent.
    pub holes: Option<usize>,
}

impl Default for PerforatedSection {
    fn default() -> Self {
        let d = PerforatedPme::<f64>::default();
        PerforatedSection { half_width: d.half_width, cells: d.finest * d.cells_per_subdomain, holes: None }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSection {
    pub width: f64,
    pub length: f64,
    pub slope: f64,
    pub inflow_depth: f64,
    pub inflow: [f64; 2],
    pub buildings: usize,
    /// Level ground without inflow.
    pub flat: bool,
    /// Raster elevation file replacing the inclined plane.
    pub bathymetry_file: Option<PathBuf>,
}

impl Default for SceneSection {
    fn default() -> Self {
        let d = InclinedScene::<f64>::default();
        SceneSection {
            width: d.width,
            length: d.length,
            slope: d.slope,
            inflow_depth: d.inflow_depth,
            inflow: d.inflow,
            buildings: d.buildings,
            flat: false,
            bathymetry_file: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DwSection {
    pub alpha: f64,
    pub gamma: f64,
    pub friction: f64,
    /// `paper-literal` or `continuous-kappa`.
    pub exponent_mode: String,
    pub epsilon: f64,
}

impl Default for DwSection {
    fn default() -> Self {
        let d = DwParams::<f64>::default();
        DwSection {
            alpha: d.alpha,
            gamma: d.gamma,
            friction: d.friction,
            exponent_mode: "paper-literal".into(),
            epsilon: d.epsilon,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub outer_tol: f64,
    pub outer_abs_tol: f64,
    pub max_outer: usize,
    pub local_tol: f64,
    pub max_local_newton: usize,
    pub coarse_tol: f64,
    pub max_coarse_newton: usize,
    pub gmres_tol: f64,
    pub gmres_max_iter: usize,
    pub anderson_m: usize,
    pub line_search: bool,
    pub two_level: bool,
    pub local_continuation: bool,
    pub continuation_floor: f64,
    /// Solve subdomains in parallel.
    pub parallel: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let c = SolverConfig::default();
        SolverSection {
            outer_tol: c.outer_tol,
            outer_abs_tol: c.outer_abs_tol,
            max_outer: c.max_outer,
            local_tol: c.local_tol,
            max_local_newton: c.max_local_newton,
            coarse_tol: c.coarse_tol,
            max_coarse_newton: c.max_coarse_newton,
            gmres_tol: c.gmres.rel_tol,
            gmres_max_iter: c.gmres.max_iter,
            anderson_m: c.anderson_m,
            line_search: c.line_search,
            two_level: c.two_level,
            local_continuation: c.local_continuation,
            continuation_floor: c.continuation_floor,
            parallel: c.parallel,
        }
    }
}

impl SolverSection {
    pub fn to_config(&self) -> SolverConfig {
        SolverConfig {
            outer_tol: self.outer_tol,
            outer_abs_tol: self.outer_abs_tol,
            max_outer: self.max_outer,
            local_tol: self.local_tol,
            max_local_newton: self.max_local_newton,
            coarse_tol: self.coarse_tol,
            max_coarse_newton: self.max_coarse_newton,
            gmres: GmresOptions { rel_tol: self.gmres_tol, max_iter: self.gmres_max_iter },
            anderson_m: self.anderson_m,
            line_search: self.line_search,
            two_level: self.two_level,
            local_continuation: self.local_continuation,
            continuation_floor: self.continuation_floor,
            parallel: self.parallel,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    pub final_time: f64,
    pub dt: f64,
    /// Adaptive global steps; Newton only when absent.
    pub global_adaptive: Option<bool>,
    pub factor: f64,
    /// Smallest global step; `dt / 1024` when absent.
    pub min_dt: Option<f64>,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection { final_time: 400.0, dt: 10.0, global_adaptive: None, factor: 2f64.sqrt(), min_dt: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialGuess {
    Zeros,
    Ones,
    /// The bathymetry, a dry start.
    Bathymetry,
    /// Nodal values from the `u` column of a solution CSV.
    File(PathBuf),
}

impl InitialGuess {
    pub fn label(&self) -> String {
        match self {
            InitialGuess::Zeros => "zeros".into(),
            InitialGuess::Ones => "ones".into(),
            InitialGuess::Bathymetry => "bathymetry".into(),
            InitialGuess::File(p) => format!("file:{}", p.display()),
        }
    }

    /// Short tag for file names.
    pub fn tag(&self, index: usize) -> String {
        match self {
            InitialGuess::File(_) => format!("file{index}"),
            other => other.label(),
        }
    }
}

/// A configuration error located at a dotted key.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigErrors(pub Vec<FieldError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config")?;
        for e in &self.0 {
            write!(f, "\n  {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// Where the fine mesh comes from.
#[derive(Clone, Debug)]
pub enum MeshSource {
    Generate { target_h: f64 },
    Files { node: PathBuf, ele: PathBuf },
}

/// A validated experiment with all problem defaults filled in.
#[derive(Clone, Debug)]
pub struct Plan {
    pub problem: Problem,
    pub methods: Vec<Method>,
    pub partitions: Vec<[usize; 2]>,
    pub overlap: f64,
    pub degree: usize,
    pub initial_guesses: Vec<InitialGuess>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub concurrent: bool,
    pub mesh: MeshSource,
    pub pme_exponent: i32,
    pub pme_scale: f64,
    pub perforated: PerforatedSection,
    pub scene: SceneSection,
    pub dw: DwParams<f64>,
    pub solver: SolverConfig,
    pub time: TimeSection,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let message = e.inner().message().trim().to_string();
            ConfigErrors(vec![FieldError { path, message }]).into()
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config = Self::parse(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    /// Makes relative file paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.mesh.node_file, &mut self.mesh.ele_file, &mut self.scene.bathymetry_file, &mut self.out] {
            if let Some(p) = p.as_mut() {
                fix(p);
            }
        }
        if let Some(list) = self.initial_guess.as_mut() {
            for g in list.iter_mut() {
                if let Some(rest) = g.strip_prefix("file:") {
                    let mut p = PathBuf::from(rest);
                    fix(&mut p);
                    *g = format!("file:{}", p.display());
                }
            }
        }
    }

    /// Checks every field and fills in the problem defaults. All problems
    /// found are reported together.
    pub fn validate(&self) -> std::result::Result<Plan, ConfigErrors> {
        let mut errors = Vec::new();
        let mut err = |path: &str, message: String| errors.push(FieldError { path: path.into(), message });

        let methods: Vec<Method> = match &self.methods {
            None => Method::ALL.to_vec(),
            Some(list) => {
                if list.is_empty() {
                    err("methods", "at least one method is required".into());
                }
                let mut out = Vec::new();
                for (i, tag) in list.iter().enumerate() {
                    match tag.parse::<Method>() {
                        Ok(m) if out.contains(&m) => err(&format!("methods[{i}]"), format!("duplicate method `{tag}`")),
                        Ok(m) => out.push(m),
                        Err(e) => err(&format!("methods[{i}]"), e.to_string()),
                    }
                }
                out
            }
        };

        let partitions = self.partitions.clone().unwrap_or_else(|| match self.problem {
            Problem::PmeLshape => vec![[3, 3], [5, 5], [9, 9]],
            Problem::PmePerforated => vec![[2, 2], [4, 4], [8, 8]],
            Problem::DwTransient => vec![[1, 2], [2, 4], [4, 8]],
        });
        if partitions.is_empty() {
            err("partitions", "at least one partition is required".into());
        }
        for (i, p) in partitions.iter().enumerate() {
            if p[0] == 0 || p[1] == 0 {
                err(&format!("partitions[{i}]"), format!("empty partition {}x{}", p[0], p[1]));
            }
        }
        let finest = finest_partition(&partitions);

        if !(self.overlap > 0.0 && self.overlap < 0.5) {
            err("overlap", format!("must lie in (0, 0.5), got {}", self.overlap));
        }
        if self.degree == 0 {
            err("degree", "must be at least 1".into());
        }

        let default_guess = match self.problem {
            Problem::PmeLshape => vec!["zeros".to_string()],
            Problem::PmePerforated => vec!["zeros".to_string(), "ones".to_string()],
            Problem::DwTransient => vec!["bathymetry".to_string()],
        };
        let mut initial_guesses = Vec::new();
        let guesses = self.initial_guess.clone().unwrap_or(default_guess);
        if guesses.is_empty() {
            err("initial_guess", "at least one initial guess is required".into());
        }
        for (i, g) in guesses.iter().enumerate() {
            let path = format!("initial_guess[{i}]");
            let parsed = match g.as_str() {
                "zeros" => Some(InitialGuess::Zeros),
                "ones" => Some(InitialGuess::Ones),
                "bathymetry" => Some(InitialGuess::Bathymetry),
                other => match other.strip_prefix("file:") {
                    Some(p) if !p.is_empty() => Some(InitialGuess::File(PathBuf::from(p))),
                    _ => {
                        err(&path, format!("expected zeros, ones, bathymetry or file:<path>, got `{g}`"));
                        None
                    }
                },
            };
            if parsed == Some(InitialGuess::Bathymetry) && !self.problem.is_transient() {
                err(&path, format!("bathymetry needs the dw-transient problem, not {}", self.problem));
            }
            if let Some(p) = parsed {
                if initial_guesses.contains(&p) {
                    err(&path, format!("duplicate initial guess `{g}`"));
                } else {
                    initial_guesses.push(p);
                }
            }
        }

        let mesh = match (&self.mesh.node_file, &self.mesh.ele_file) {
            (Some(node), Some(ele)) => {
                if self.mesh.target_h.is_some() {
                    err("mesh.target_h", "cannot be combined with mesh files".into());
                }
                MeshSource::Files { node: node.clone(), ele: ele.clone() }
            }
            (None, None) => {
                let target_h = self.mesh.target_h.unwrap_or(match self.problem {
                    Problem::PmeLshape => 1.0 / 45.0,
                    Problem::PmePerforated => 2.0 * self.perforated.half_width / self.perforated.cells.max(1) as f64,
                    Problem::DwTransient => 1.0,
                });
                if !(target_h > 0.0 && target_h.is_finite()) {
                    err("mesh.target_h", format!("must be positive, got {target_h}"));
                }
                if self.problem == Problem::PmePerforated && self.mesh.target_h.is_some() {
                    err("mesh.target_h", "the perforated mesh size is set by perforated.cells".into());
                }
                MeshSource::Generate { target_h }
            }
            (Some(_), None) => {
                err("mesh.ele_file", "required together with mesh.node_file".into());
                MeshSource::Generate { target_h: 1.0 }
            }
            (None, Some(_)) => {
                err("mesh.node_file", "required together with mesh.ele_file".into());
                MeshSource::Generate { target_h: 1.0 }
            }
        };

        let (pme_exponent, pme_scale) = match self.problem {
            Problem::PmePerforated => (self.pme.exponent.unwrap_or(3), self.pme.scale.unwrap_or(15.0)),
            _ => (self.pme.exponent.unwrap_or(4), self.pme.scale.unwrap_or(1.0)),
        };
        if pme_exponent < 1 {
            err("pme.exponent", format!("must be at least 1, got {pme_exponent}"));
        }
        if !(pme_scale > 0.0 && pme_scale.is_finite()) {
            err("pme.scale", format!("must be positive, got {pme_scale}"));
        }

        let perf = &self.perforated;
        if !(perf.half_width > 0.0) {
            err("perforated.half_width", format!("must be positive, got {}", perf.half_width));
        }
        if self.problem == Problem::PmePerforated {
            if finest[0] != finest[1] {
                err("partitions", format!("the perforated square needs square partitions, finest is {}x{}", finest[0], finest[1]));
            }
            if perf.cells == 0 || finest[0] == 0 || perf.cells % finest[0] != 0 {
                err("perforated.cells", format!("must be a positive multiple of the finest partition size {}", finest[0]));
            }
        }

        let scene = &self.scene;
        for (key, v) in [("scene.width", scene.width), ("scene.length", scene.length)] {
            if !(v > 0.0 && v.is_finite()) {
                err(key, format!("must be positive, got {v}"));
            }
        }
        if !(scene.inflow_depth >= 0.0) {
            err("scene.inflow_depth", format!("must be non-negative, got {}", scene.inflow_depth));
        }
        if !(0.0 <= scene.inflow[0] && scene.inflow[0] <= scene.inflow[1] && scene.inflow[1] <= 1.0) {
            err("scene.inflow", format!("need 0 <= from <= to <= 1, got {:?}", scene.inflow));
        }

        let exponent_mode = match self.dw.exponent_mode.as_str() {
            "paper-literal" => ExponentMode::PaperLiteral,
            "continuous-kappa" => ExponentMode::ContinuousKappa,
            other => {
                err("dw.exponent_mode", format!("expected paper-literal or continuous-kappa, got `{other}`"));
                ExponentMode::PaperLiteral
            }
        };
        let dw = DwParams {
            alpha: self.dw.alpha,
            gamma: self.dw.gamma,
            friction: self.dw.friction,
            exponent_mode,
            epsilon: self.dw.epsilon,
        };
        if !(dw.alpha >= 1.0) {
            err("dw.alpha", format!("must be at least 1, got {}", dw.alpha));
        }
        if !(dw.gamma > 0.0 && dw.gamma <= 1.0) {
            err("dw.gamma", format!("must lie in (0, 1], got {}", dw.gamma));
        }
        if !(dw.friction > 0.0) {
            err("dw.friction", format!("must be positive, got {}", dw.friction));
        }
        if !(dw.epsilon > 0.0) {
            err("dw.epsilon", format!("must be positive, got {}", dw.epsilon));
        }

        let s = &self.solver;
        for (key, v) in [
            ("solver.outer_tol", s.outer_tol),
            ("solver.outer_abs_tol", s.outer_abs_tol),
            ("solver.local_tol", s.local_tol),
            ("solver.coarse_tol", s.coarse_tol),
            ("solver.gmres_tol", s.gmres_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                err(key, format!("must be positive, got {v}"));
            }
        }
        if !(s.continuation_floor > 0.0 && s.continuation_floor <= 1.0) {
            err("solver.continuation_floor", format!("must lie in (0, 1], got {}", s.continuation_floor));
        }
        for (key, v) in [
            ("solver.max_outer", s.max_outer),
            ("solver.max_local_newton", s.max_local_newton),
            ("solver.max_coarse_newton", s.max_coarse_newton),
            ("solver.gmres_max_iter", s.gmres_max_iter),
        ] {
            if v == 0 {
                err(key, "must be positive".into());
            }
        }

        let t = &self.time;
        if !(t.final_time > 0.0 && t.final_time.is_finite()) {
            err("time.final_time", format!("must be positive, got {}", t.final_time));
        }
        if !(t.dt > 0.0 && t.dt.is_finite()) {
            err("time.dt", format!("must be positive, got {}", t.dt));
        }
        if !(t.factor > 1.0) {
            err("time.factor", format!("must exceed 1, got {}", t.factor));
        }
        if let Some(min_dt) = t.min_dt {
            if !(min_dt > 0.0 && min_dt <= t.dt) {
                err("time.min_dt", format!("need 0 < min_dt <= dt, got {min_dt}"));
            }
        }

        if !errors.is_empty() {
            return Err(ConfigErrors(errors));
        }
        let seed = self.seed.unwrap_or(match self.problem {
            Problem::PmePerforated => PerforatedPme::<f64>::default().seed,
            Problem::DwTransient => InclinedScene::<f64>::default().seed,
            Problem::PmeLshape => 0,
        });
        Ok(Plan {
            problem: self.problem,
            methods,
            partitions,
            overlap: self.overlap,
            degree: self.degree,
            initial_guesses,
            seed,
            out: self.out.clone(),
            concurrent: self.concurrent,
            mesh,
            pme_exponent,
            pme_scale,
            perforated: self.perforated.clone(),
            scene: self.scene.clone(),
            dw,
            solver: self.solver.to_config(),
            time: self.time.clone(),
        })
    }
}

/// The partition with the most subdomains; the fine mesh conforms to it.
pub fn finest_partition(partitions: &[[usize; 2]]) -> [usize; 2] {
    partitions.iter().copied().max_by_key(|p| (p[0] * p[1], p[0])).unwrap_or([1, 1])
}

impl Plan {
    pub fn time_loop(&self, method: Method) -> TimeLoopConfig {
        let mut c = TimeLoopConfig::new(self.time.final_time, self.time.dt, method);
        c.factor = self.time.factor;
        if let Some(g) = self.time.global_adaptive {
            c.global_adaptive = g;
        }
        if let Some(m) = self.time.min_dt {
            c.min_dt = m;
        }
        c
    }

    pub fn perforated_pme(&self) -> PerforatedPme<f64> {
        let finest = finest_partition(&self.partitions)[0];
        PerforatedPme {
            seed: self.seed,
            half_width: self.perforated.half_width,
            finest,
            cells_per_subdomain: self.perforated.cells / finest,
            holes: self.perforated.holes,
            scale: self.pme_scale,
            exponent: self.pme_exponent,
        }
    }

    pub fn inclined_scene(&self) -> InclinedScene<f64> {
        let s = &self.scene;
        let target_h = match self.mesh {
            MeshSource::Generate { target_h } => target_h,
            MeshSource::Files { .. } => 1.0,
        };
        InclinedScene {
            seed: self.seed,
            width: s.width,
            length: s.length,
            finest: finest_partition(&self.partitions),
            target_h,
            slope: s.slope,
            inflow_depth: s.inflow_depth,
            inflow: s.inflow,
            buildings: s.buildings,
            flat: s.flat,
        }
    }

    pub fn bathymetry(&self) -> Result<Bathymetry<f64>> {
        match &self.scene.bathymetry_file {
            Some(path) => Ok(Bathymetry::Raster(RasterGrid::load(path)?)),
            None => Ok(self.inclined_scene().bathymetry()),
        }
    }
}
