//! Batch front end: TOML configs, experiment dispatch, CSV and manifest output.
//!
//! Matrices are written as lists of rows. Any number may also be given as a
//! string, either a decimal or an exact fraction such as `"1/3"`. Indices
//! (blocks, atoms, coordinates) are 0-based.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::continuity::{self, PerturbationKind};
use crate::error::Error;
use crate::linalg::{Matrix, ProjectivePoint};
use crate::lyapunov::spectrum_qr;
use crate::measure::{wasserstein, FiniteMeasure};
use crate::structure::{
    aperiodicity, center_factored, mean_log_scalars, mixing_rate_with_horizon, permutation_walk,
    rescaled_log_means, BlockDecomposition, FactoredMeasure, DEFAULT_TV_HORIZON,
};
use crate::walk::{
    berry_esseen_series, equidistribution_series, exact_occupancy_series, occupancy_series, slope_moments,
    slope_series, RegionPartition,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("compute error: {0}")]
    Compute(#[from] Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Compute(_) | Self::Io { .. } => 1,
        }
    }
}

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Experiment {
    Spectrum,
    Wasserstein,
    Structure,
    Mixing,
    Centering,
    Slopes,
    BerryEsseen,
    Occupancy,
    Equidistribution,
    DriftGap,
    Modulus,
    Bound,
}

impl Experiment {
    pub const ALL: [Experiment; 12] = [
        Self::Spectrum,
        Self::Wasserstein,
        Self::Structure,
        Self::Mixing,
        Self::Centering,
        Self::Slopes,
        Self::BerryEsseen,
        Self::Occupancy,
        Self::Equidistribution,
        Self::DriftGap,
        Self::Modulus,
        Self::Bound,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Spectrum => "spectrum",
            Self::Wasserstein => "wasserstein",
            Self::Structure => "structure",
            Self::Mixing => "mixing",
            Self::Centering => "centering",
            Self::Slopes => "slopes",
            Self::BerryEsseen => "berry-esseen",
            Self::Occupancy => "occupancy",
            Self::Equidistribution => "equidistribution",
            Self::DriftGap => "drift-gap",
            Self::Modulus => "modulus",
            Self::Bound => "bound",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, HarnessError> {
        Self::ALL
            .iter()
            .copied()
            .find(|e| e.name() == s)
            .ok_or_else(|| config_err(format!("unknown experiment `{s}`")))
    }
}

/// A real number read from a decimal, an integer, or a string such as `"1/3"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Number(pub f64);

impl Number {
    pub fn parse(s: &str) -> Option<f64> {
        let s = s.trim();
        match s.split_once('/') {
            Some((p, q)) => {
                let p: f64 = p.trim().parse().ok()?;
                let q: f64 = q.trim().parse().ok()?;
                (q != 0.0).then(|| p / q)
            }
            None => s.parse().ok(),
        }
    }
}

impl<'de> Deserialize<'de> for Number {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Float(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(i) => Ok(Number(i as f64)),
            Raw::Float(x) => Ok(Number(x)),
            Raw::Text(s) => Number::parse(&s)
                .map(Number)
                .ok_or_else(|| serde::de::Error::custom(format!("`{s}` is not a number or fraction p/q"))),
        }
    }
}

impl Serialize for Number {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

fn numbers(v: &[Number]) -> Vec<f64> {
    v.iter().map(|n| n.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    /// Each atom is a list of rows.
    pub atoms: Vec<Vec<Vec<Number>>>,
    pub weights: Vec<Number>,
}

impl MeasureSpec {
    pub fn from_measure(mu: &FiniteMeasure) -> Self {
        let d = mu.dim();
        Self {
            atoms: mu
                .atoms()
                .iter()
                .map(|g| (0..d).map(|i| (0..d).map(|j| Number(g.get(i, j))).collect()).collect())
                .collect(),
            weights: mu.weights().iter().map(|w| Number(*w)).collect(),
        }
    }

    pub fn build(&self) -> crate::Result<FiniteMeasure> {
        let atoms = self
            .atoms
            .iter()
            .map(|rows| {
                let rows: Vec<Vec<f64>> = rows.iter().map(|r| numbers(r)).collect();
                let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
                Matrix::from_rows(&refs)
            })
            .collect::<crate::Result<Vec<_>>>()?;
        FiniteMeasure::new(atoms, numbers(&self.weights))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlocksSpec {
    pub blocks: Vec<Vec<usize>>,
    /// Defaults to one orbit containing every block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orbits: Option<Vec<Vec<usize>>>,
}

impl BlocksSpec {
    pub fn from_blocks(b: &BlockDecomposition) -> Self {
        Self {
            blocks: b.blocks().to_vec(),
            orbits: Some(b.orbits().to_vec()),
        }
    }

    pub fn build(&self, dim: usize) -> crate::Result<BlockDecomposition> {
        let orbits = self
            .orbits
            .clone()
            .unwrap_or_else(|| vec![(0..self.blocks.len()).collect()]);
        BlockDecomposition::new(dim, self.blocks.clone(), orbits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilySpec {
    WeightShift { up: usize, down: usize },
    AtomScale { atom: usize },
    AtomRotation { atom: usize, p: usize, q: usize },
}

impl From<FamilySpec> for PerturbationKind {
    fn from(f: FamilySpec) -> Self {
        match f {
            FamilySpec::WeightShift { up, down } => PerturbationKind::WeightShift { up, down },
            FamilySpec::AtomScale { atom } => PerturbationKind::AtomScale { atom },
            FamilySpec::AtomRotation { atom, p, q } => PerturbationKind::AtomRotation { atom, p, q },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub seed: Option<u64>,
    pub steps: Option<usize>,
    pub n: Option<usize>,
    pub ns: Option<Vec<usize>>,
    pub trials: Option<usize>,
    pub particles: Option<usize>,
    pub burn_in: Option<usize>,
    pub horizon: Option<usize>,
    pub r: Option<Number>,
    pub x0: Option<Vec<Number>>,
    pub j: Option<usize>,
    pub j_prime: Option<usize>,
    pub exact: Option<bool>,
    pub family: Option<FamilySpec>,
    pub epsilons: Option<Vec<Number>>,
    pub d_w: Option<Number>,
    pub c0: Option<Number>,
    pub gamma: Option<Number>,
    pub c_k: Option<Number>,
}

/// The document as written.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<String>,
    pub output_dir: Option<PathBuf>,
    pub measure: Option<MeasureSpec>,
    pub measure_prime: Option<MeasureSpec>,
    pub blocks: Option<BlocksSpec>,
    #[serde(default)]
    pub params: Params,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub experiment: Option<Experiment>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub measure: Option<FiniteMeasure>,
    pub measure_prime: Option<FiniteMeasure>,
    pub blocks: Option<BlockDecomposition>,
    pub params: Params,
    /// The parsed document, echoed into the manifest.
    pub echo: toml::Value,
}

pub fn parse_config(text: &str, overrides: &Overrides) -> Result<ExperimentConfig, HarnessError> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
    let echo: toml::Value = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
    let named = file.experiment.as_deref().map(Experiment::from_str).transpose()?;
    let experiment = match (overrides.experiment, named) {
        (Some(a), Some(b)) if a != b => {
            return Err(config_err(format!("experiment: config says `{b}` but `{a}` was requested")))
        }
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => return Err(config_err("experiment: not given")),
    };
    let seed = overrides
        .seed
        .or(file.params.seed)
        .ok_or_else(|| config_err("params.seed: missing (every run needs an explicit seed)"))?;
    let output_dir = overrides
        .output_dir
        .clone()
        .or(file.output_dir.clone())
        .ok_or_else(|| config_err("output_dir: missing"))?;
    let measure = file
        .measure
        .as_ref()
        .map(|m| m.build().map_err(|e| config_err(format!("measure: {e}"))))
        .transpose()?;
    let measure_prime = file
        .measure_prime
        .as_ref()
        .map(|m| m.build().map_err(|e| config_err(format!("measure_prime: {e}"))))
        .transpose()?;
    let blocks = match (&file.blocks, &measure) {
        (Some(b), Some(mu)) => Some(b.build(mu.dim()).map_err(|e| config_err(format!("blocks: {e}")))?),
        (Some(_), None) => return Err(config_err("blocks: given without [measure]")),
        (None, _) => None,
    };
    Ok(ExperimentConfig {
        experiment,
        seed,
        output_dir,
        measure,
        measure_prime,
        blocks,
        params: file.params,
        echo,
    })
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, overrides)
}

/// TOML text for a measure (and optionally blocks) that `parse_config` reads
/// back to equal values.
pub fn to_config_text(mu: &FiniteMeasure, blocks: Option<&BlockDecomposition>) -> String {
    let file = ConfigFile {
        measure: Some(MeasureSpec::from_measure(mu)),
        blocks: blocks.map(BlocksSpec::from_blocks),
        ..ConfigFile::default()
    };
    toml::to_string(&file).expect("config serializes")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Real(f64),
    Text(String),
    Bool(bool),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(i) => write!(f, "{i}"),
            Cell::Real(x) => write!(f, "{x:.16e}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Bool(b) => write!(f, "{b}"),
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(file: &str, columns: &[&str]) -> Self {
        Self {
            file: file.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Header line, then one line per row, newline-terminated.
pub fn emit_csv(table: &Table, dir: &Path) -> Result<PathBuf, HarnessError> {
    let path = dir.join(&table.file);
    let mut out = String::new();
    out.push_str(&table.columns.join(","));
    out.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(Cell::to_string).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_file(&path, out.as_bytes())?;
    Ok(path)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let io = |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(bytes).map_err(io)
}

fn need<'a, T>(value: &'a Option<T>, field: &str, exp: Experiment) -> Result<&'a T, HarnessError> {
    value
        .as_ref()
        .ok_or_else(|| config_err(format!("{field}: required by `{exp}`")))
}

fn start_point(cfg: &ExperimentConfig, dim: usize) -> Result<ProjectivePoint, HarnessError> {
    match &cfg.params.x0 {
        None => Ok(ProjectivePoint::barycenter(dim)),
        Some(v) => {
            if v.len() != dim {
                return Err(config_err(format!("params.x0: expected {dim} coordinates, got {}", v.len())));
            }
            ProjectivePoint::new(&numbers(v)).map_err(|e| config_err(format!("params.x0: {e}")))
        }
    }
}

fn perm_text(p: &[usize]) -> Cell {
    Cell::Text(p.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" "))
}

/// Computes the tables of one experiment without touching the file system.
pub fn compute_tables(cfg: &ExperimentConfig) -> Result<Vec<Table>, HarnessError> {
    let exp = cfg.experiment;
    let p = &cfg.params;
    let seed = cfg.seed;
    let mut tables = Vec::new();
    match exp {
        Experiment::Spectrum => {
            let mu = need(&cfg.measure, "measure", exp)?;
            let steps = *need(&p.steps, "params.steps", exp)?;
            let est = spectrum_qr(mu, steps, seed)?;
            let mut t = Table::new("spectrum.csv", &["index", "lambda_hat", "stderr"]);
            for (i, (v, s)) in est.values.iter().zip(&est.stderr).enumerate() {
                t.push(vec![(i + 1).into(), (*v).into(), (*s).into()]);
            }
            tables.push(t);
        }
        Experiment::Wasserstein => {
            let mu = need(&cfg.measure, "measure", exp)?;
            let nu = need(&cfg.measure_prime, "measure_prime", exp)?;
            let (dist, plan) = wasserstein(mu, nu)?;
            let mut t = Table::new("wasserstein.csv", &["dist"]);
            t.push(vec![dist.into()]);
            tables.push(t);
            let mut c = Table::new("coupling.csv", &["source", "target", "mass"]);
            for (i, row) in plan.coupling.iter().enumerate() {
                for (j, m) in row.iter().enumerate() {
                    if *m > 0.0 {
                        c.push(vec![i.into(), j.into(), (*m).into()]);
                    }
                }
            }
            tables.push(c);
        }
        Experiment::Structure => {
            let mu = need(&cfg.measure, "measure", exp)?;
            let blocks = need(&cfg.blocks, "blocks", exp)?;
            let walk = permutation_walk(mu, blocks)?;
            let ap = aperiodicity(&walk)?;
            let mut t = Table::new("structure.csv", &["index", "permutation", "generator_mass", "in_subgroup"]);
            for (i, s) in walk.group_elements.iter().enumerate() {
                let mass: f64 = walk
                    .generator_distribution
                    .iter()
                    .filter(|(g, _)| g == s)
                    .fold(0.0, |acc, (_, w)| acc + w);
                t.push(vec![i.into(), perm_text(s), mass.into(), ap.subgroup.contains(s).into()]);
            }
            tables.push(t);
            let mut a = Table::new(
                "aperiodicity.csv",
                &["p", "subgroup_order", "power_supported_in_subgroup", "power_generates_subgroup"],
            );
            a.push(vec![
                ap.p.into(),
                ap.subgroup.len().into(),
                ap.power_supported_in_subgroup.into(),
                ap.power_generates_subgroup.into(),
            ]);
            tables.push(a);
        }
        Experiment::Mixing => {
            let mu = need(&cfg.measure, "measure", exp)?;
            let blocks = need(&cfg.blocks, "blocks", exp)?;
            let walk = permutation_walk(mu, blocks)?;
            let rep = mixing_rate_with_horizon(&walk, p.horizon.unwrap_or(DEFAULT_TV_HORIZON));
            let mut t = Table::new("mixing.csv", &["step", "tv"]);
            for (n, tv) in &rep.tv_curve {
                t.push(vec![(*n).into(), (*tv).into()]);
            }
            tables.push(t);
            let mut s = Table::new("mixing_summary.csv", &["rho", "measured_rate", "constant"]);
            s.push(vec![rep.rho.into(), rep.measured_rate.into(), rep.constant.into()]);
            tables.push(s);
        }
        Experiment::Centering => {
            let mu = need(&cfg.measure, "measure", exp)?;
            let blocks = need(&cfg.blocks, "blocks", exp)?;
            let fm = FactoredMeasure::new(mu, blocks)?;
            let tw = center_factored(&fm)?;
            let before = mean_log_scalars(&fm);
            let after = rescaled_log_means(&fm, &tw);
            let orbit_of = blocks.orbit_of();
            let mut t = Table::new("centering.csv", &["block", "orbit", "t", "mean_log_before", "mean_log_after"]);
            for j in 0..blocks.len() {
                t.push(vec![j.into(), orbit_of[j].into(), tw[j].into(), before[j].into(), after[j].into()]);
            }
            tables.push(t);
        }
        Experiment::Slopes => {
            let mu = need(&cfg.measure, "measure", exp)?;
            let blocks = need(&cfg.blocks, "blocks", exp)?;
            let (j, jp) = (*need(&p.j, "params.j", exp)?, *need(&p.j_prime, "params.j_prime", exp)?);
            let n = *need(&p.n, "params.n", exp)?;
            let trials = *need(&p.trials, "params.trials", exp)?;
            if trials == 0 {
                return Err(config_err("params.trials: must be positive"));
            }
            let series = slope_series(mu, blocks, j, jp, n, trials, seed)?;
            let exact = slope_moments(&FactoredMeasure::new(mu, blocks)?, j, jp, n)?;
            let mut t = Table::new(
                "slopes.csv",
                &["m", "mean", "second_moment", "exact_mean", "exact_second_moment"],
            );
            for (m, (e1, e2)) in exact.iter().enumerate() {
                let (s1, s2) = series
                    .increments
                    .iter()
                    .fold((0.0, 0.0), |(a, b), row| (a + row[m], b + row[m] * row[m]));
                let tn = trials as f64;
                t.push(vec![(m + 1).into(), (s1 / tn).into(), (s2 / tn).into(), (*e1).into(), (*e2).into()]);
            }
            tables.push(t);
            let mut s = Table::new("slopes_summary.csv", &["trials", "max_telescoping_error"]);
            s.push(vec![trials.into(), series.max_telescoping_error.into()]);
            tables.push(s);
        }
        Experiment::BerryEsseen => {
            let mu = need(&cfg.measure, "measure", exp)?;
            let blocks = need(&cfg.blocks, "blocks", exp)?;
            let (j, jp) = (*need(&p.j, "params.j", exp)?, *need(&p.j_prime, "params.j_prime", exp)?);
            let ns = need(&p.ns, "params.ns", exp)?;
            let trials = *need(&p.trials, "params.trials", exp)?;
            let fm = FactoredMeasure::new(mu, blocks)?;
            let pts = berry_esseen_series(&fm, j, jp, ns, trials, seed)?;
            let mut t = Table::new("berry_esseen.csv", &["n", "gap", "normalized", "w_n"]);
            for q in pts {
                t.push(vec![q.n.into(), q.gap.into(), q.normalized.into(), q.w_n.into()]);
            }
            tables.push(t);
        }
        Experiment::Occupancy => {
            let mu = need(&cfg.measure, "measure", exp)?;
            let blocks = need(&cfg.blocks, "blocks", exp)?;
            let r = need(&p.r, "params.r", exp)?.0;
            let ns = need(&p.ns, "params.ns", exp)?;
            let x0 = start_point(cfg, mu.dim())?;
            let mut columns = vec!["n".to_string(), "complement_mass".into(), "stderr".into()];
            columns.extend((0..blocks.len()).map(|j| format!("region_{j}")));
            let mut t = Table {
                file: "occupancy.csv".into(),
                columns,
                rows: Vec::new(),
            };
            if p.exact.unwrap_or(false) {
                for e in exact_occupancy_series(mu, &x0, blocks, &[r], ns)? {
                    let mut row: Vec<Cell> = vec![e.n.into(), e.complement_mass.into(), 0.0.into()];
                    row.extend(e.region_masses.iter().map(|m| Cell::from(*m)));
                    t.push(row);
                }
            } else {
                let trials = *need(&p.trials, "params.trials", exp)?;
                for o in occupancy_series(mu, &x0, blocks, &[r], ns, trials, seed)? {
                    let mut row: Vec<Cell> = vec![o.n.into(), o.complement_mass.into(), o.stderr.into()];
                    row.extend(o.region_masses.iter().map(|m| Cell::from(*m)));
                    t.push(row);
                }
            }
            tables.push(t);
        }
        Experiment::Equidistribution => {
            let mu = need(&cfg.measure, "measure", exp)?;
            let blocks = need(&cfg.blocks, "blocks", exp)?;
            let r = need(&p.r, "params.r", exp)?.0;
            let ns = need(&p.ns, "params.ns", exp)?;
            let trials = *need(&p.trials, "params.trials", exp)?;
            let x0 = start_point(cfg, mu.dim())?;
            let part = RegionPartition::new(blocks.clone(), r)?;
            let mut t = Table::new("equidistribution.csv", &["n", "gap", "stderr"]);
            for g in equidistribution_series(mu, &x0, &part, ns, trials, seed)? {
                t.push(vec![g.n.into(), g.gap.into(), g.stderr.into()]);
            }
            tables.push(t);
        }
        Experiment::DriftGap => {
            let mu = need(&cfg.measure, "measure", exp)?;
            let mu_prime = cfg.measure_prime.as_ref().unwrap_or(mu);
            let ns = need(&p.ns, "params.ns", exp)?;
            let particles = p.particles.unwrap_or(continuity::DEFAULT_DRIFT_PARTICLES);
            let burn_in = p.burn_in.unwrap_or(continuity::DEFAULT_DRIFT_BURN_IN);
            let mut t = Table::new("drift_gap.csv", &["n", "gap"]);
            for (n, g) in continuity::drift_gap_series(mu, mu_prime, ns, particles, burn_in, seed)? {
                t.push(vec![n.into(), g.into()]);
            }
            tables.push(t);
        }
        Experiment::Modulus => {
            let mu = need(&cfg.measure, "measure", exp)?;
            let family = *need(&p.family, "params.family", exp)?;
            let steps = *need(&p.steps, "params.steps", exp)?;
            let eps = p
                .epsilons
                .as_deref()
                .map(numbers)
                .unwrap_or_else(continuity::default_epsilons);
            let fam = continuity::make_family(family.into(), mu, eps)
                .map_err(|e| config_err(format!("params.family: {e}")))?;
            let rep = continuity::modulus_experiment(&fam, steps, seed)?;
            let mut t = Table::new("modulus.csv", &["epsilon", "dW", "lambda_index", "delta", "stderr"]);
            for r in &rep.records {
                for (i, (d, s)) in r.deltas.iter().zip(&r.stderr).enumerate() {
                    t.push(vec![r.epsilon.into(), r.d_w.into(), (i + 1).into(), (*d).into(), (*s).into()]);
                }
            }
            tables.push(t);
            let mut f = Table::new("modulus_fit.csv", &["C", "gamma"]);
            if let Some(env) = rep.envelope {
                f.push(vec![env.c.into(), env.gamma.into()]);
            }
            tables.push(f);
        }
        Experiment::Bound => {
            let n = *need(&p.n, "params.n", exp)?;
            let d_w = need(&p.d_w, "params.d_w", exp)?.0;
            let c0 = need(&p.c0, "params.c0", exp)?.0;
            let gamma = need(&p.gamma, "params.gamma", exp)?.0;
            let c_k = need(&p.c_k, "params.c_k", exp)?.0;
            let b = continuity::bound_assembly(n, d_w, c0, gamma, c_k)
                .map_err(|e| config_err(format!("params: {e}")))?;
            let mut t = Table::new(
                "bound.csv",
                &["n", "dW", "C0", "gamma", "C_K", "rhs", "n_star", "budget_bound"],
            );
            t.push(vec![
                n.into(),
                d_w.into(),
                c0.into(),
                gamma.into(),
                c_k.into(),
                b.rhs.into(),
                b.n_star.into(),
                b.budget_bound.into(),
            ]);
            tables.push(t);
        }
    }
    Ok(tables)
}

#[derive(Debug, Clone, Serialize)]
struct SchemaEntry {
    version: u32,
    columns: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
struct Manifest<'a> {
    experiment: &'a str,
    seed: u64,
    crate_version: &'a str,
    threads: usize,
    wall_time_seconds: f64,
    files: Vec<String>,
    schemas: BTreeMap<String, SchemaEntry>,
    config: &'a toml::Value,
}

/// Runs the experiment and writes its CSV files and `manifest.json` into the
/// output directory. Returns the paths written.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, HarnessError> {
    let start = Instant::now();
    let tables = compute_tables(cfg)?;
    fs::create_dir_all(&cfg.output_dir).map_err(|source| HarnessError::Io {
        path: cfg.output_dir.clone(),
        source,
    })?;
    let mut written = tables
        .iter()
        .map(|t| emit_csv(t, &cfg.output_dir))
        .collect::<Result<Vec<_>, _>>()?;
    let manifest = Manifest {
        experiment: cfg.experiment.name(),
        seed: cfg.seed,
        crate_version: env!("CARGO_PKG_VERSION"),
        threads: rayon::current_num_threads(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        files: tables.iter().map(|t| t.file.clone()).collect(),
        schemas: tables
            .iter()
            .map(|t| {
                (
                    t.file.clone(),
                    SchemaEntry {
                        version: SCHEMA_VERSION,
                        columns: t.columns.clone(),
                    },
                )
            })
            .collect(),
        config: &cfg.echo,
    };
    let path = cfg.output_dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&path, format!("{json}\n").as_bytes())?;
    written.push(path);
    Ok(written)
}
