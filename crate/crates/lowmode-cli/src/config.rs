//! Run configuration: per-experiment defaults, a small key-value config file
//! format, validation, and a canonical hash for provenance.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use lowmode::{Error, Result};

/// The five experiments the CLI can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Convergence,
    ModeSweep,
    Conditioning,
    CompareSolvers,
    SchurDecay,
}

impl ExperimentKind {
    pub fn id(&self) -> &'static str {
        match self {
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::ModeSweep => "mode-sweep",
            ExperimentKind::Conditioning => "conditioning",
            ExperimentKind::CompareSolvers => "compare-solvers",
            ExperimentKind::SchurDecay => "schur-decay",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "convergence" => Ok(ExperimentKind::Convergence),
            "mode-sweep" => Ok(ExperimentKind::ModeSweep),
            "conditioning" => Ok(ExperimentKind::Conditioning),
            "compare-solvers" => Ok(ExperimentKind::CompareSolvers),
            "schur-decay" => Ok(ExperimentKind::SchurDecay),
            other => Err(Error::InvalidArgument(format!(
                "unknown experiment '{other}'"
            ))),
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// Everything an experiment run depends on.  Built from per-experiment
/// defaults, then overridden by a config file and command-line flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    pub problem: String,
    /// Grid sizes (interior points per axis).
    pub grids: Vec<usize>,
    /// Spectral cutoffs for sweep-style experiments.
    pub cutoffs: Vec<usize>,
    /// Cutoff for experiments that hold M fixed.
    pub fixed_cutoff: usize,
    pub solver_tol: f64,
    /// Timing repetitions; medians are reported.
    pub repetitions: usize,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub threads: usize,
}

impl RunConfig {
    /// Desk-scale defaults for one experiment.
    pub fn defaults(experiment: ExperimentKind) -> Self {
        let mut cfg = RunConfig {
            experiment,
            problem: "example1".to_string(),
            grids: vec![63, 127, 255, 511],
            cutoffs: Vec::new(),
            fixed_cutoff: 8,
            solver_tol: 1e-10,
            repetitions: 5,
            out_dir: PathBuf::from("out"),
            seed: 2024,
            threads: 1,
        };
        match experiment {
            ExperimentKind::Convergence => {}
            ExperimentKind::ModeSweep => {
                cfg.grids = vec![511];
                cfg.cutoffs = vec![2, 3, 4, 6, 8, 12, 16];
                cfg.repetitions = 1;
            }
            ExperimentKind::Conditioning => {
                // First grid carries the cutoff sweep; the rest form the
                // mesh-independence block at the fixed cutoff.
                cfg.grids = vec![256, 63, 127, 255];
                cfg.cutoffs = vec![2, 4, 6, 8, 12, 16];
                cfg.repetitions = 1;
            }
            ExperimentKind::CompareSolvers => {
                cfg.grids = vec![31, 63, 127, 255];
            }
            ExperimentKind::SchurDecay => {
                cfg.grids = vec![31];
                cfg.cutoffs = vec![2, 4, 8, 12];
                cfg.repetitions = 1;
            }
        }
        cfg
    }

    /// Grid ladder at the paper's full scale (the desk defaults shrink the
    /// largest grids so the suite stays runnable on small machines).
    pub fn apply_paper_scale(&mut self) {
        match self.experiment {
            ExperimentKind::Convergence => self.grids = vec![255, 511, 1023, 2047],
            ExperimentKind::ModeSweep => self.grids = vec![1023],
            ExperimentKind::Conditioning => {}
            ExperimentKind::CompareSolvers => self.grids = vec![31, 63, 127, 255, 511],
            ExperimentKind::SchurDecay => {}
        }
    }

    /// Applies `key = value` overrides from a config file (see
    /// [`parse_overrides`]).
    pub fn apply_overrides(&mut self, overrides: &BTreeMap<String, String>) -> Result<()> {
        for (key, value) in overrides {
            match key.as_str() {
                "experiment" => self.experiment = ExperimentKind::parse(value)?,
                "problem" => self.problem = value.clone(),
                "grids" => self.grids = parse_usize_list(value, "grids")?,
                "cutoffs" => self.cutoffs = parse_usize_list(value, "cutoffs")?,
                "fixed_cutoff" => self.fixed_cutoff = parse_scalar(value, "fixed_cutoff")?,
                "tol" => self.solver_tol = parse_scalar(value, "tol")?,
                "repetitions" => self.repetitions = parse_scalar(value, "repetitions")?,
                "out_dir" => self.out_dir = PathBuf::from(value),
                "seed" => self.seed = parse_scalar(value, "seed")?,
                "threads" => self.threads = parse_scalar(value, "threads")?,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown config key '{other}'"
                    )))
                }
            }
        }
        Ok(())
    }

    /// Checks the cross-field invariants before a run starts.
    pub fn validate(&self) -> Result<()> {
        if self.grids.is_empty() {
            return Err(Error::InvalidArgument("no grid sizes configured".into()));
        }
        if self.grids.iter().any(|&m| m == 0) {
            return Err(Error::InvalidArgument("grid sizes must be >= 1".into()));
        }
        let min_m = *self.grids.iter().min().unwrap();
        let needs_cutoffs = matches!(
            self.experiment,
            ExperimentKind::ModeSweep | ExperimentKind::Conditioning | ExperimentKind::SchurDecay
        );
        if needs_cutoffs && self.cutoffs.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "experiment '{}' needs a cutoff list",
                self.experiment
            )));
        }
        for &cutoff in &self.cutoffs {
            if cutoff == 0 || cutoff > min_m {
                return Err(Error::InvalidArgument(format!(
                    "cutoff {cutoff} outside 1..={min_m} (smallest grid)"
                )));
            }
        }
        if self.fixed_cutoff == 0 || self.fixed_cutoff > min_m {
            return Err(Error::InvalidArgument(format!(
                "fixed cutoff {} outside 1..={min_m}",
                self.fixed_cutoff
            )));
        }
        if self.experiment == ExperimentKind::CompareSolvers {
            // The multigrid baseline needs nested grids.
            if let Some(&m) = self.grids.iter().find(|&&m| !(m + 1).is_power_of_two()) {
                return Err(Error::InvalidArgument(format!(
                    "solver comparison needs m = 2^l - 1 for the multigrid baseline, got {m}"
                )));
            }
        }
        if !(self.solver_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "solver tolerance must be positive, got {}",
                self.solver_tol
            )));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidArgument("repetitions must be >= 1".into()));
        }
        if self.threads == 0 {
            return Err(Error::InvalidArgument("threads must be >= 1".into()));
        }
        Ok(())
    }

    /// Canonical `key=value` rendering; backs the provenance hash, so the
    /// field order is fixed.
    pub fn canonical_string(&self) -> String {
        let grids: Vec<String> = self.grids.iter().map(|m| m.to_string()).collect();
        let cutoffs: Vec<String> = self.cutoffs.iter().map(|m| m.to_string()).collect();
        format!(
            "experiment={}\nproblem={}\ngrids={}\ncutoffs={}\nfixed_cutoff={}\ntol={:e}\nrepetitions={}\nseed={}\nthreads={}\n",
            self.experiment,
            self.problem,
            grids.join(","),
            cutoffs.join(","),
            self.fixed_cutoff,
            self.solver_tol,
            self.repetitions,
            self.seed,
            self.threads,
        )
    }

    /// First sixteen hex digits of the SHA-256 of the canonical rendering.
    /// The output directory is deliberately excluded: the same run written
    /// elsewhere is the same run.
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_string().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn parse_usize_list(value: &str, key: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>().map_err(|_| {
                Error::InvalidArgument(format!("bad entry '{s}' in list '{key}'"))
            })
        })
        .collect()
}

fn parse_scalar<T: std::str::FromStr>(value: &str, key: &str) -> Result<T> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| Error::InvalidArgument(format!("bad value '{value}' for '{key}'")))
}

/// Parses the `key = value` config file format: one pair per line, `#`
/// starts a comment, blank lines ignored.
pub fn parse_overrides(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::InvalidArgument(format!(
                "config line {}: expected 'key = value', got '{raw}'",
                lineno + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}
