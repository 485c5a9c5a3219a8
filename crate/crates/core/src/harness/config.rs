//! Experiment configuration: a flat TOML file plus command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bandlimits::GridFunction;
use crate::dbm::Scheme;
use crate::ensembles::{build_entry_distribution, EnsembleSpec, EntryKind};
use crate::error::{Error, Result};
use crate::functionals::CumulantPair;
use crate::testfn::{ClosedForm, TestFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Clt,
    BandVariance,
    CovarianceGrid,
    CountingVariance,
    Wegner,
    DbmMoments,
    Homogenization,
    KernelValidate,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Clt,
        ExperimentKind::BandVariance,
        ExperimentKind::CovarianceGrid,
        ExperimentKind::CountingVariance,
        ExperimentKind::Wegner,
        ExperimentKind::DbmMoments,
        ExperimentKind::Homogenization,
        ExperimentKind::KernelValidate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Clt => "clt",
            ExperimentKind::BandVariance => "band-variance",
            ExperimentKind::CovarianceGrid => "covariance-grid",
            ExperimentKind::CountingVariance => "counting-variance",
            ExperimentKind::Wegner => "wegner",
            ExperimentKind::DbmMoments => "dbm-moments",
            ExperimentKind::Homogenization => "homogenization",
            ExperimentKind::KernelValidate => "kernel-validate",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleChoice {
    #[default]
    Goe,
    Gue,
    /// Real symmetric with the off-diagonal law given by `entry`.
    Wigner,
}

/// A closed-form test function, or a sampled one stored on disk
/// (`.csv` or the binary grid format, chosen by extension).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TestFunctionSpec {
    Grid { grid: PathBuf },
    Closed(ClosedForm<f64>),
}

impl TestFunctionSpec {
    pub fn load(&self) -> Result<Box<dyn TestFunction<f64>>> {
        match self {
            TestFunctionSpec::Closed(f) => Ok(Box::new(f.clone())),
            TestFunctionSpec::Grid { grid } => Ok(Box::new(load_grid(grid)?)),
        }
    }
}

pub fn load_grid(path: &Path) -> Result<GridFunction> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => GridFunction::read_csv(path),
        _ => GridFunction::read_binary(path),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub ensemble: EnsembleChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry: Option<EntryKind>,
    /// Gaussian-divisible mixing time applied to the sampled matrices.
    #[serde(default)]
    pub divisible_t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_function: Option<TestFunctionSpec>,
    /// Overrides the cumulants implied by the entry law.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cumulants: Option<CumulantPair<f64>>,
    /// Inclusive band range `[k_min, k_max]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bands: Option<[i32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energies: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub etas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indices: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_log2_len: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// Command-line values that replace the file's.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub n: Option<usize>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// A config with every optional field at its default.
    pub fn new(kind: ExperimentKind, n: usize, trials: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            trials,
            seed,
            ensemble: EnsembleChoice::Goe,
            entry: None,
            divisible_t: 0.0,
            test_function: None,
            cumulants: None,
            bands: None,
            xi: None,
            energies: None,
            etas: None,
            sizes: None,
            time: None,
            dt: None,
            indices: None,
            scheme: None,
            grid_half_width: None,
            grid_log2_len: None,
            out: None,
        }
    }

    /// Parses TOML text; relative file paths are resolved against `base`.
    pub fn from_toml_str(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(base) = base {
            if let Some(TestFunctionSpec::Grid { grid }) = &mut cfg.test_function {
                if grid.is_relative() {
                    *grid = base.join(&*grid);
                }
            }
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text, path.parent())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(n) = o.n {
            self.n = n;
        }
        if let Some(t) = o.trials {
            self.trials = t;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.trials < 1 {
            return bad("trials must be at least 1".into());
        }
        if self.n < 1 {
            return bad("n must be at least 1".into());
        }
        if let Some(TestFunctionSpec::Grid { grid }) = &self.test_function {
            if !grid.exists() {
                return bad(format!("test function grid {} does not exist", grid.display()));
            }
        }
        if self.ensemble == EnsembleChoice::Wigner && self.entry.is_none() {
            return bad("ensemble = \"wigner\" needs an [entry] law".into());
        }
        if self.ensemble != EnsembleChoice::Wigner && self.entry.is_some() {
            return bad("an [entry] law is only used with ensemble = \"wigner\"".into());
        }
        if let Some(c) = self.cumulants {
            if !c.is_admissible() {
                return bad(format!("cumulants s3 = {}, s4 = {} violate s4 >= s3^2 - 2", c.s3, c.s4));
            }
        }
        let positive = |name: &str, v: &Option<Vec<f64>>| -> Result<()> {
            match v {
                Some(v) if v.is_empty() || v.iter().any(|x| !(*x > 0.0)) => {
                    Err(Error::Config(format!("{name} must be a non-empty list of positive numbers")))
                }
                _ => Ok(()),
            }
        };
        positive("etas", &self.etas)?;
        if matches!(&self.energies, Some(e) if e.is_empty()) {
            return bad("energies must not be empty".into());
        }
        let real_symmetric = self.ensemble != EnsembleChoice::Gue;
        match self.kind {
            ExperimentKind::Clt => {
                if self.test_function.is_none() {
                    return bad("clt needs a test_function".into());
                }
                if !real_symmetric {
                    return bad("clt predictions are stated for real symmetric ensembles".into());
                }
            }
            ExperimentKind::BandVariance => {
                match &self.test_function {
                    Some(TestFunctionSpec::Closed(f)) if f.support().is_none() => {
                        return bad("band-variance needs a compactly supported test function".into())
                    }
                    None => return bad("band-variance needs a test_function".into()),
                    _ => {}
                }
                match self.bands {
                    Some([lo, hi]) if lo >= -1 && lo <= hi => {}
                    Some(_) => return bad("bands must satisfy -1 <= k_min <= k_max".into()),
                    None => return bad("band-variance needs bands = [k_min, k_max]".into()),
                }
            }
            ExperimentKind::CovarianceGrid => {
                if !real_symmetric {
                    return bad("covariance-grid predictions are stated for real symmetric ensembles".into());
                }
            }
            ExperimentKind::CountingVariance => {
                if matches!(&self.sizes, Some(s) if s.len() < 3 || s.contains(&0)) {
                    return bad("counting-variance needs at least three positive sizes".into());
                }
            }
            ExperimentKind::Wegner => {}
            ExperimentKind::DbmMoments => {
                if matches!(self.time, Some(t) if !(t > 0.0)) {
                    return bad("time must be positive".into());
                }
            }
            ExperimentKind::Homogenization => {
                if matches!(self.time, Some(t) if !(0.05..=1.0).contains(&t)) {
                    return bad("homogenization time must lie in [0.05, 1]".into());
                }
                if self.ensemble == EnsembleChoice::Gue {
                    return bad("homogenization runs real symmetric DBM".into());
                }
                if let Some(idx) = &self.indices {
                    if idx.iter().any(|k| *k == 0 || *k > self.n) {
                        return bad(format!("indices must lie in 1..={}", self.n));
                    }
                }
            }
            ExperimentKind::KernelValidate => {
                if self.n < 3 {
                    return bad("kernel-validate needs n >= 3".into());
                }
            }
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return bad("dt must be positive".into());
            }
        }
        Ok(())
    }

    /// The ensemble at dimension `n` (usually `self.n`).
    pub fn ensemble_spec(&self, n: usize) -> Result<EnsembleSpec> {
        let mut spec = match self.ensemble {
            EnsembleChoice::Goe => EnsembleSpec::goe(n),
            EnsembleChoice::Gue => EnsembleSpec::gue(n),
            EnsembleChoice::Wigner => {
                let kind = self
                    .entry
                    .clone()
                    .ok_or_else(|| Error::Config("ensemble = \"wigner\" needs an [entry] law".into()))?;
                EnsembleSpec::wigner(n, build_entry_distribution(kind)?)
            }
        };
        spec.divisible_t = self.divisible_t;
        spec.validate()?;
        Ok(spec)
    }

    pub fn cumulant_pair(&self, spec: &EnsembleSpec) -> CumulantPair<f64> {
        self.cumulants.unwrap_or_else(|| spec.offdiag.cumulants())
    }

    pub fn test_fn(&self) -> Result<Box<dyn TestFunction<f64>>> {
        self.test_function.as_ref().ok_or_else(|| Error::Config(format!("{} needs a test_function", self.kind)))?.load()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CLT: &str = r#"
kind = "clt"
n = 300
trials = 10000
seed = 11
ensemble = "wigner"
entry = { kind = "laplace" }
test_function = { kind = "polynomial", coeffs = [0.0, 0.0, 1.0] }
xi = [0.5, -0.5, 1.0]
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml_str(CLT, None).unwrap();
        assert_eq!(cfg.kind, ExperimentKind::Clt);
        assert_eq!(cfg.entry, Some(EntryKind::Laplace));
        assert_eq!(cfg.test_function, Some(TestFunctionSpec::Closed(ClosedForm::square())));
        cfg.validate().unwrap();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap(), None).unwrap();
        assert_eq!(back, cfg);
        let spec = cfg.ensemble_spec(cfg.n).unwrap();
        assert!((cfg.cumulant_pair(&spec).s4 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn overrides_replace_values() {
        let mut cfg = ExperimentConfig::from_toml_str(CLT, None).unwrap();
        cfg.apply(&Overrides { n: Some(50), trials: None, seed: Some(3), out: Some("o".into()) });
        assert_eq!((cfg.n, cfg.trials, cfg.seed), (50, 10000, 3));
        assert_eq!(cfg.out, Some(PathBuf::from("o")));
    }

    #[test]
    fn rejects_incomplete_configs() {
        let cases = [
            "kind = \"clt\"\nn = 10\ntrials = 10\nseed = 1\n",
            "kind = \"clt\"\nn = 10\ntrials = 0\nseed = 1\ntest_function = { kind = \"polynomial\", coeffs = [1.0] }\n",
            "kind = \"band-variance\"\nn = 10\ntrials = 10\nseed = 1\ntest_function = { kind = \"bump\", center = 0.0, radius = 1.0 }\n",
            "kind = \"wegner\"\nn = 10\ntrials = 10\nseed = 1\nensemble = \"wigner\"\n",
            "kind = \"wegner\"\nn = 10\ntrials = 10\nseed = 1\netas = [0.1, -1.0]\n",
            "kind = \"clt\"\nn = 10\ntrials = 10\nseed = 1\ntest_function = { grid = \"/nonexistent/phi.bin\" }\n",
        ];
        for text in cases {
            let cfg = ExperimentConfig::from_toml_str(text, None).unwrap();
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{text}");
        }
        assert!(
            ExperimentConfig::from_toml_str("kind = \"clt\"\nn = 1\ntrials = 1\nseed = 1\nbogus = 2\n", None).is_err()
        );
        assert!(ExperimentConfig::from_toml_str("kind = \"nope\"\nn = 1\ntrials = 1\nseed = 1\n", None).is_err());
    }

    #[test]
    fn grid_paths_resolve_against_the_config_directory() {
        let dir = tempfile::tempdir().unwrap();
        let grid = GridFunction::from_fn(&ClosedForm::Bump { center: 0.0, radius: 1.0 }, 4.0, 8).unwrap();
        grid.write_binary(&dir.path().join("phi.bin")).unwrap();
        let text = "kind = \"clt\"\nn = 10\ntrials = 10\nseed = 1\ntest_function = { grid = \"phi.bin\" }\n";
        let path = dir.path().join("exp.toml");
        std::fs::write(&path, text).unwrap();
        let cfg = ExperimentConfig::from_file(&path).unwrap();
        cfg.validate().unwrap();
        let f = cfg.test_fn().unwrap();
        assert!((f.value(0.0) - (-1.0f64).exp()).abs() < 1e-12);
    }
}
