//! Run configuration: defaults, `key = value` files and flag overrides.

use qma_core::fields::FlatBackground;
use qma_core::monitor::Mutation;
use qma_core::solver::SolverConfig;
use qma_core::suites::{ChartChoice, Suite, SuiteConfig};
use qma_core::thresholds::Thresholds;
use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ChartKind {
    Flat,
    #[value(alias = "eguchi-hanson")]
    Eh,
}

impl FromStr for ChartKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "flat" => Ok(ChartKind::Flat),
            "eh" | "eguchi-hanson" => Ok(ChartKind::Eh),
            _ => Err(format!("unknown chart '{s}' (expected flat or eh)")),
        }
    }
}

/// Source of the density `F`.
#[derive(Clone, Debug, PartialEq)]
pub enum DensitySource {
    Zero,
    Manufactured,
    Random(f64),
    File(PathBuf),
}

impl FromStr for DensitySource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "zero" => Ok(DensitySource::Zero),
            "manufactured" => Ok(DensitySource::Manufactured),
            _ => {
                if let Some(a) = s.strip_prefix("random:") {
                    let amp: f64 = a.parse().map_err(|_| format!("bad amplitude in '{s}'"))?;
                    if !(amp.is_finite() && amp >= 0.0) {
                        return Err(format!("amplitude must be finite and non-negative, got {amp}"));
                    }
                    Ok(DensitySource::Random(amp))
                } else if s.is_empty() {
                    Err("empty density".into())
                } else {
                    Ok(DensitySource::File(PathBuf::from(s)))
                }
            }
        }
    }
}

impl fmt::Display for DensitySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DensitySource::Zero => write!(f, "zero"),
            DensitySource::Manufactured => write!(f, "manufactured"),
            DensitySource::Random(a) => write!(f, "random:{a}"),
            DensitySource::File(p) => write!(f, "{}", p.display()),
        }
    }
}

impl Serialize for DensitySource {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub suite: Option<Suite>,
    pub chart: ChartKind,
    /// Eguchi-Hanson parameter.
    pub a: f64,
    /// Quaternionic dimension of the flat chart and torus.
    pub n: usize,
    pub points: usize,
    pub samples: usize,
    pub seed: u64,
    pub mutate: Mutation,
    /// Points per torus axis; `None` means 16, or the size of an input snapshot.
    pub grid: Option<usize>,
    pub steps: usize,
    pub newton_tol: f64,
    pub linear_tol: f64,
    pub max_newton: usize,
    pub eps_pos: f64,
    pub f: DensitySource,
    pub monitor: bool,
    pub refine: bool,
    pub thresholds: Thresholds,
    /// Output location is not part of the hashed configuration.
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

pub const DEFAULT_GRID: usize = 16;

impl Default for RunConfig {
    fn default() -> Self {
        let s = SolverConfig::default();
        Self {
            suite: None,
            chart: ChartKind::Flat,
            a: 1.0,
            n: 1,
            points: 20,
            samples: 20,
            seed: 0,
            mutate: Mutation::None,
            grid: None,
            steps: s.steps,
            newton_tol: s.newton_tol,
            linear_tol: s.linear_tol,
            max_newton: s.max_newton,
            eps_pos: s.eps_pos,
            f: DensitySource::Zero,
            monitor: false,
            refine: false,
            thresholds: Thresholds::V1,
            out: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("{key}: {e}"))
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "suite" => self.suite = Some(parse(key, v)?),
            "chart" => self.chart = parse(key, v)?,
            "a" => self.a = parse(key, v)?,
            "n" => self.n = parse(key, v)?,
            "points" => self.points = parse(key, v)?,
            "samples" => self.samples = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "mutate" => self.mutate = parse(key, v)?,
            "grid" => self.grid = Some(parse(key, v)?),
            "steps" => self.steps = parse(key, v)?,
            "newton_tol" => self.newton_tol = parse(key, v)?,
            "linear_tol" => self.linear_tol = parse(key, v)?,
            "max_newton" => self.max_newton = parse(key, v)?,
            "eps_pos" => self.eps_pos = parse(key, v)?,
            "f" => self.f = parse(key, v)?,
            "monitor" => self.monitor = parse(key, v)?,
            "refine" => self.refine = parse(key, v)?,
            "out" => self.out = Some(PathBuf::from(v)),
            "thresholds" => {
                if v != "1" && v != "v1" {
                    return Err(format!("thresholds: unknown table version '{v}'"));
                }
                self.thresholds = Thresholds::V1;
            }
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Applies a `key = value` file. Blank lines and `#` comments are
    /// ignored; unknown or repeated keys are errors.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<(), String> {
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = || format!("{}:{}", origin.display(), i + 1);
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("{}: expected 'key = value'", at()))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(format!("{}: repeated key '{k}'", at()));
            }
            self.set(k, v).map_err(|e| format!("{}: {e}", at()))?;
        }
        Ok(())
    }

    pub fn chart_choice(&self) -> ChartChoice {
        match self.chart {
            ChartKind::Flat => ChartChoice::Flat { n: self.n },
            ChartKind::Eh => ChartChoice::EguchiHanson { a: self.a },
        }
    }

    pub fn grid_size(&self) -> usize {
        self.grid.unwrap_or(DEFAULT_GRID)
    }

    pub fn suite_config(&self) -> Result<SuiteConfig, String> {
        let suite = self.suite.ok_or("verify needs a suite")?;
        let mut c = SuiteConfig::new(suite, self.chart_choice());
        c.points = self.points;
        c.samples = self.samples;
        c.seed = self.seed;
        c.mutate = self.mutate;
        c.grid_n = self.n;
        c.grid_size = self.grid_size();
        c.thresholds = self.thresholds.clone();
        c.validate().map_err(|e| e.to_string())?;
        Ok(c)
    }

    pub fn solver_config(&self, size: usize) -> Result<SolverConfig, String> {
        let c = SolverConfig {
            n: self.n,
            size,
            steps: self.steps,
            newton_tol: self.newton_tol,
            linear_tol: self.linear_tol,
            max_newton: self.max_newton,
            eps_pos: self.eps_pos,
            seed: self.seed,
            ..SolverConfig::default()
        };
        c.validate().map_err(|e| e.to_string())?;
        Ok(c)
    }

    pub fn background(&self) -> FlatBackground {
        FlatBackground::standard(self.n)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_and_errors() {
        let mut c = RunConfig::default();
        let p = Path::new("t.cfg");
        c.apply_text("# comment\nsuite = fund\nchart = eh # trailing\n\na = 2.5\nf = random:0.3\n", p)
            .unwrap();
        assert_eq!(c.suite, Some(Suite::Fund));
        assert_eq!(c.chart, ChartKind::Eh);
        assert_eq!(c.a, 2.5);
        assert_eq!(c.f, DensitySource::Random(0.3));
        let err = RunConfig::default().apply_text("colour = red\n", p).unwrap_err();
        assert!(err.contains("t.cfg:1") && err.contains("unknown key"), "{err}");
        assert!(RunConfig::default().apply_text("seed = 1\nseed = 2\n", p).is_err());
        assert!(RunConfig::default().apply_text("seed 1\n", p).is_err());
        assert!(RunConfig::default().apply_text("points = -3\n", p).is_err());
        assert!(RunConfig::default().apply_text("f = random:nan\n", p).is_err());
    }

    #[test]
    fn hash_ignores_output_location() {
        let mut a = RunConfig::default();
        let mut b = RunConfig::default();
        a.out = Some("x".into());
        b.out = Some("y".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
