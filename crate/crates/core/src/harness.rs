//! Single runs, reference solutions and error-versus-Δt studies on the
//! Zeldovich front problem.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::collocation::{CollocationError, CollocationTable};
use crate::fem::{BcMode, FemError, LagrangeSpace, Mesh1D, SpatialOperators};
use crate::numerics::NewtonOptions;
use crate::pfasst::{PfasstError, TwoLevelHierarchy};
use crate::problems::ReactionDiffusionSpec;
use crate::sdc::{Formulation, SdcError, StepProblem, SweepMode};

pub const CSV_HEADER: &str = "method,order,elements,dt,k,error_inf";
pub const DEFAULT_DTS: [f64; 5] = [0.5, 0.25, 0.125, 0.0625, 0.03125];
pub const DEFAULT_KS: [usize; 5] = [1, 2, 3, 4, 5];
pub const REF_FACTOR: usize = 8;
/// Collocation residual tolerance of reference runs. The residual carries the
/// mass matrix, so `1e-13` still leaves a few `1e-12` of error at `T`.
pub const REF_TOL: f64 = 1e-15;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Collocation(#[from] CollocationError),
    #[error(transparent)]
    Sdc(#[from] SdcError),
    #[error(transparent)]
    Pfasst(#[from] PfasstError),
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("{0} study point(s) failed")]
    FailedPoints(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl HarnessError {
    /// 2 for configuration problems, 1 for everything that failed numerically.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Collocation(_) => 2,
            HarnessError::Fem(e) if !matches!(e, FemError::Numerics(_)) => 2,
            _ => 1,
        }
    }
}

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Sdc,
    /// Serial SDC on the mass-inverted formulation.
    SdcNaive,
    Pfasst,
    /// PFASST on the mass-inverted formulation with interpolation restriction
    /// of residuals.
    PfasstNaive,
}

impl Method {
    pub fn formulation(self) -> Formulation {
        match self {
            Method::Sdc | Method::Pfasst => Formulation::Mass,
            Method::SdcNaive | Method::PfasstNaive => Formulation::MassInverted,
        }
    }

    pub fn is_pfasst(self) -> bool {
        matches!(self, Method::Pfasst | Method::PfasstNaive)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Sdc => "sdc",
            Method::SdcNaive => "sdc_naive",
            Method::Pfasst => "pfasst",
            Method::PfasstNaive => "pfasst_naive",
        })
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "sdc" => Ok(Method::Sdc),
            "sdc_naive" => Ok(Method::SdcNaive),
            "pfasst" => Ok(Method::Pfasst),
            "pfasst_naive" => Ok(Method::PfasstNaive),
            _ => Err(config_err(format!("unknown method '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coarsening {
    /// Same mesh, polynomial order reduced by one.
    Order,
    /// Same order, half the elements.
    Halve,
}

impl FromStr for Coarsening {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "p" | "order" => Ok(Coarsening::Order),
            "h" | "halve" => Ok(Coarsening::Halve),
            _ => Err(config_err(format!("unknown coarsening '{s}' (expected p or h)"))),
        }
    }
}

impl FromStr for BcMode {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "natural" => Ok(BcMode::Natural),
            "dirichlet" => Ok(BcMode::DirichletFrozen),
            _ => Err(config_err(format!("unknown boundary mode '{s}'"))),
        }
    }
}

/// One point of an experiment: method, discretisation and iteration count.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub order: usize,
    pub elements: usize,
    pub coarsening: Coarsening,
    pub nodes: usize,
    pub block: usize,
    pub bc: BcMode,
    pub dt: f64,
    pub k: usize,
}

impl RunConfig {
    pub fn new(method: Method, order: usize, elements: usize, dt: f64, k: usize) -> Self {
        let coarsening = if order > 1 { Coarsening::Order } else { Coarsening::Halve };
        Self { method, order, elements, coarsening, nodes: 4, block: 4, bc: BcMode::Natural, dt, k }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub method: Method,
    pub order: usize,
    pub elements: usize,
    pub coarsening: Coarsening,
    pub dts: Vec<f64>,
    pub ks: Vec<usize>,
    pub nodes: usize,
    pub block: usize,
    pub bc: BcMode,
    pub ref_factor: usize,
    pub ref_tol: f64,
}

impl StudyConfig {
    pub fn new(method: Method, order: usize, elements: usize) -> Self {
        Self {
            method,
            order,
            elements,
            coarsening: if order > 1 { Coarsening::Order } else { Coarsening::Halve },
            dts: DEFAULT_DTS.to_vec(),
            ks: DEFAULT_KS.to_vec(),
            nodes: 4,
            block: 4,
            bc: BcMode::Natural,
            ref_factor: REF_FACTOR,
            ref_tol: REF_TOL,
        }
    }

    /// Parses `key = value` lines. `#` starts a comment, lists are
    /// comma-separated. `method`, `order` and `elements` are required.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut entries: Vec<(String, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected key = value", lineno + 1)))?;
            entries.push((key.trim().to_string(), value.trim().to_string()));
        }
        let lookup = |name: &str| entries.iter().rev().find(|(k, _)| k == name).map(|(_, v)| v.as_str());
        let required = |name: &str| lookup(name).ok_or_else(|| config_err(format!("missing key '{name}'")));

        let method: Method = required("method")?.parse()?;
        let order = parse_value(required("order")?, "order")?;
        let elements = parse_value(required("elements")?, "elements")?;
        let mut cfg = StudyConfig::new(method, order, elements);
        for (key, value) in &entries {
            match key.as_str() {
                "method" | "order" | "elements" => {}
                "coarsening" => cfg.coarsening = value.parse()?,
                "dt" => cfg.dts = parse_list(value, "dt")?,
                "k" => cfg.ks = parse_list(value, "k")?,
                "nodes" => cfg.nodes = parse_value(value, "nodes")?,
                "block" => cfg.block = parse_value(value, "block")?,
                "bc" => cfg.bc = value.parse()?,
                "ref_factor" => cfg.ref_factor = parse_value(value, "ref_factor")?,
                "ref_tol" => cfg.ref_tol = parse_value(value, "ref_tol")?,
                other => return Err(config_err(format!("unknown key '{other}'"))),
            }
        }
        Ok(cfg)
    }

    pub fn run_config(&self, dt: f64, k: usize) -> RunConfig {
        RunConfig {
            method: self.method,
            order: self.order,
            elements: self.elements,
            coarsening: self.coarsening,
            nodes: self.nodes,
            block: self.block,
            bc: self.bc,
            dt,
            k,
        }
    }

    pub fn validate(&self, spec: &ReactionDiffusionSpec) -> Result<(), HarnessError> {
        if self.dts.is_empty() || self.ks.is_empty() {
            return Err(config_err("dt and k lists must be non-empty"));
        }
        if self.ref_factor == 0 || !(self.ref_tol > 0.0) {
            return Err(config_err("reference factor and tolerance must be positive"));
        }
        for &dt in &self.dts {
            validate_run(spec, &self.run_config(dt, 0))?;
        }
        Ok(())
    }
}

fn parse_value<T: FromStr>(s: &str, key: &str) -> Result<T, HarnessError> {
    s.trim().parse().map_err(|_| config_err(format!("invalid value '{s}' for '{key}'")))
}

fn parse_list<T: FromStr>(s: &str, key: &str) -> Result<Vec<T>, HarnessError> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(|p| parse_value(p, key)).collect()
}

/// Number of steps of size `dt` in the spec's time interval, if integral.
pub fn step_count(spec: &ReactionDiffusionSpec, dt: f64) -> Result<usize, HarnessError> {
    let span = spec.t_end - spec.t0;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(config_err(format!("time step {dt} must be positive")));
    }
    let n = (span / dt).round();
    if n < 1.0 || (n * dt - span).abs() > 1e-12 * span {
        return Err(config_err(format!("time step {dt} does not divide the interval")));
    }
    Ok(n as usize)
}

fn validate_run(spec: &ReactionDiffusionSpec, run: &RunConfig) -> Result<(), HarnessError> {
    let n_steps = step_count(spec, run.dt)?;
    if !(1..=3).contains(&run.order) {
        return Err(config_err(format!("order {} not supported", run.order)));
    }
    if run.elements == 0 {
        return Err(config_err("need at least one element"));
    }
    if run.nodes == 0 || run.nodes > crate::collocation::MAX_NODES {
        return Err(config_err(format!("{} collocation nodes not supported", run.nodes)));
    }
    if run.method.is_pfasst() {
        if run.block == 0 || n_steps % run.block != 0 {
            return Err(config_err(format!("{n_steps} steps cannot be split into blocks of {}", run.block)));
        }
        match run.coarsening {
            Coarsening::Order if run.order < 2 => {
                return Err(config_err("order coarsening needs a fine order of at least 2"))
            }
            Coarsening::Halve if run.elements % 2 != 0 => {
                return Err(config_err("element halving needs an even element count"))
            }
            _ => {}
        }
    }
    Ok(())
}

pub fn fine_space(spec: &ReactionDiffusionSpec, order: usize, elements: usize) -> Result<LagrangeSpace, HarnessError> {
    Ok(LagrangeSpace::new(Mesh1D::uniform(spec.a, spec.b, elements)?, order)?)
}

pub fn coarse_space(fine: &LagrangeSpace, coarsening: Coarsening) -> Result<LagrangeSpace, HarnessError> {
    Ok(match coarsening {
        Coarsening::Order => LagrangeSpace::new(*fine.mesh(), fine.order() - 1)?,
        Coarsening::Halve => LagrangeSpace::new(fine.mesh().coarsened()?, fine.order())?,
    })
}

fn step_problem(
    spec: &ReactionDiffusionSpec,
    space: LagrangeSpace,
    bc: BcMode,
    table: &Arc<CollocationTable>,
    dt: f64,
    formulation: Formulation,
    newton: NewtonOptions,
) -> Result<StepProblem, HarnessError> {
    let ops = Arc::new(SpatialOperators::new(space, bc)?);
    Ok(StepProblem::new(ops, spec.reaction.clone(), table.clone(), dt, formulation).with_newton(newton))
}

/// Runs one method from the interpolated initial profile to the final time
/// and returns the final coefficient vector.
pub fn run_method(spec: &ReactionDiffusionSpec, run: &RunConfig) -> Result<Vec<f64>, HarnessError> {
    validate_run(spec, run)?;
    let n_steps = step_count(spec, run.dt)?;
    let space = fine_space(spec, run.order, run.elements)?;
    let table = Arc::new(CollocationTable::radau_right(run.nodes)?);
    let newton = NewtonOptions::default();
    let formulation = run.method.formulation();
    let fine = step_problem(spec, space, run.bc, &table, run.dt, formulation, newton)?;
    let u0 = space.interpolate(spec.initial_profile);
    if run.method.is_pfasst() {
        let coarse_space = coarse_space(&space, run.coarsening)?;
        let coarse = step_problem(spec, coarse_space, run.bc, &table, run.dt, formulation, newton)?;
        let h = TwoLevelHierarchy::new(fine, coarse, run.block)?;
        Ok(h.run(&u0, n_steps, run.k)?)
    } else {
        Ok(fine.run_serial(&u0, n_steps, SweepMode::Fixed(run.k))?)
    }
}

/// Serial SDC converged to `tol` in the collocation residual at
/// `Δt = dt_min / factor`, on the given space.
pub fn reference_solution_with(
    spec: &ReactionDiffusionSpec,
    space: LagrangeSpace,
    bc: BcMode,
    nodes: usize,
    dt_min: f64,
    factor: usize,
    tol: f64,
) -> Result<Vec<f64>, HarnessError> {
    let dt = dt_min / factor as f64;
    let n_steps = step_count(spec, dt)?;
    let table = Arc::new(CollocationTable::radau_right(nodes)?);
    let newton = NewtonOptions { tol: 0.1 * tol, ..NewtonOptions::default() };
    let p = step_problem(spec, space, bc, &table, dt, Formulation::Mass, newton)?;
    let u0 = space.interpolate(spec.initial_profile);
    Ok(p.run_serial(&u0, n_steps, SweepMode::tolerance(tol))?)
}

/// Reference with the default factor and residual tolerance.
pub fn reference_solution(
    spec: &ReactionDiffusionSpec,
    space: LagrangeSpace,
    nodes: usize,
    dt_min: f64,
) -> Result<Vec<f64>, HarnessError> {
    reference_solution_with(spec, space, spec.bc, nodes, dt_min, REF_FACTOR, REF_TOL)
}

pub fn error_inf(u: &[f64], u_ref: &[f64]) -> Result<f64, HarnessError> {
    if u.len() != u_ref.len() {
        return Err(HarnessError::LengthMismatch(u.len(), u_ref.len()));
    }
    Ok(u.iter().zip(u_ref).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub method: Method,
    pub order: usize,
    pub elements: usize,
    pub dt: f64,
    pub k: usize,
    /// `None` when the run failed.
    pub error_inf: Option<f64>,
}

impl StudyRow {
    pub fn csv_line(&self) -> String {
        let err = match self.error_inf {
            Some(e) => format!("{e:.5e}"),
            None => "failed".to_string(),
        };
        format!("{},{},{},{},{},{}", self.method, self.order, self.elements, self.dt, self.k, err)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
    /// Least-squares log₂ slope of error against Δt for each k.
    pub slopes: Vec<(usize, Option<f64>)>,
}

impl StudyResult {
    pub fn error(&self, dt: f64, k: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.dt == dt && r.k == k).and_then(|r| r.error_inf)
    }

    pub fn slope(&self, k: usize) -> Option<f64> {
        self.slopes.iter().find(|(kk, _)| *kk == k).and_then(|(_, s)| *s)
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error_inf.is_none()).count()
    }

    pub fn write_csv(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for row in &self.rows {
            writeln!(out, "{}", row.csv_line())?;
        }
        Ok(())
    }
}

/// Least-squares slope of `log₂ y` against `log₂ x`.
pub fn fit_log2_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.log2(), y.log2()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Runs every `(Δt, k)` point of the study against one shared reference.
/// Points run concurrently; rows come back in configuration order, `Δt`
/// outermost.
pub fn run_study(spec: &ReactionDiffusionSpec, cfg: &StudyConfig) -> Result<StudyResult, HarnessError> {
    cfg.validate(spec)?;
    let space = fine_space(spec, cfg.order, cfg.elements)?;
    let dt_min = cfg.dts.iter().copied().fold(f64::INFINITY, f64::min);
    let reference = reference_solution_with(spec, space, cfg.bc, cfg.nodes, dt_min, cfg.ref_factor, cfg.ref_tol)?;
    let points: Vec<(f64, usize)> = cfg.dts.iter().flat_map(|&dt| cfg.ks.iter().map(move |&k| (dt, k))).collect();
    let rows: Vec<StudyRow> = points
        .par_iter()
        .map(|&(dt, k)| {
            let error_inf = run_method(spec, &cfg.run_config(dt, k))
                .and_then(|u| error_inf(&u, &reference))
                .ok()
                .filter(|e| e.is_finite());
            StudyRow { method: cfg.method, order: cfg.order, elements: cfg.elements, dt, k, error_inf }
        })
        .collect();
    let slopes = cfg
        .ks
        .iter()
        .map(|&k| {
            let pts: Option<Vec<(f64, f64)>> =
                rows.iter().filter(|r| r.k == k).map(|r| r.error_inf.map(|e| (r.dt, e))).collect();
            (k, pts.and_then(|p| fit_log2_slope(&p)))
        })
        .collect();
    Ok(StudyResult { rows, slopes })
}
