//! Run configuration: INI sections flattened to `section.key` options.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use nalgebra::DMatrix;
use radgp::inference::{
    BetaPrior, CgConfig, InverseGamma, McmcConfig, Preconditioner, PriorSpec, ThetaPrior,
};
use radgp::{Family, KernelSpec};

use crate::CliError;

/// Every recognized option with its default; `""` means unset.
const OPTIONS: &[(&str, &str)] = &[
    ("run.seed", "1"),
    ("run.threads", ""),
    ("run.out", "."),
    ("data.train", ""),
    ("data.test", ""),
    ("data.truth", ""),
    ("data.fit", ""),
    ("data.predictions", ""),
    ("kernel.family", "exponential"),
    ("kernel.params", "1, 19.97"),
    ("model.rho", "auto"),
    ("model.intercept", "false"),
    ("prior.beta", "flat"),
    ("prior.beta_mean", ""),
    ("prior.beta_precision", "1e-4"),
    ("prior.sigma2", "ig(2, 0.01)"),
    ("prior.theta_0", "ig(2, 1)"),
    ("prior.theta_1", "flat(1, 100)"),
    ("mcmc.l1", "2000"),
    ("mcmc.l2", "1001"),
    ("mcmc.thin", "1"),
    ("mcmc.partition_seed", "20240601"),
    ("mcmc.jitter", "0"),
    ("mcmc.proposal_scale", "0.1"),
    ("mcmc.adaptive_initial_scale", "0.1"),
    ("mcmc.adapt", "true"),
    ("mcmc.target_acceptance", "0.24"),
    ("mcmc.theta_init", "auto"),
    ("mcmc.sigma2_init", ""),
    ("mcmc.fix_theta", "false"),
    ("mcmc.fix_sigma2", "false"),
    ("mcmc.store_latent", "true"),
    ("cg.tol", "1e-8"),
    ("cg.max_iter", ""),
    ("cg.preconditioner", "jacobi"),
    ("simulate.layout", "grid"),
    ("simulate.per_side", "40"),
    ("simulate.n", "1600"),
    ("simulate.dim", "2"),
    ("simulate.n_test", "1000"),
    ("simulate.sigma", "0.1"),
    ("simulate.max_dense", "6000"),
    ("predict.level", "0.95"),
    ("diagnose.level", "0.95"),
    ("diagnose.truth_column", "y"),
    ("diagnose.projections", "200"),
    ("diagnose.cap", "2000"),
    ("diagnose.rho", ""),
    ("diagnose.sigma2", "0.01"),
    ("diagnose.regions", ""),
];

fn config_err(message: impl Into<String>) -> CliError {
    CliError::new("config", message)
}

#[derive(Debug, Clone)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            values: OPTIONS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl Config {
    /// Defaults overlaid with an INI file. Keys outside a section are taken
    /// as already dotted.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut cfg = Config::default();
        if let Some(path) = path {
            let ini = Ini::load_from_file(path)
                .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
            for (section, props) in ini.iter() {
                for (k, v) in props.iter() {
                    let key = match section {
                        Some(s) => format!("{s}.{k}"),
                        None => k.to_string(),
                    };
                    cfg.set(&key, v)?;
                }
            }
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = key.trim();
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.trim().to_string();
                Ok(())
            }
            None => Err(config_err(format!("unknown option {key}"))),
        }
    }

    /// Parses `key=value`.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), CliError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| config_err(format!("expected key=value, got {pair:?}")))?;
        self.set(k, v)
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("option {key} not declared"))
    }

    pub fn opt_str(&self, key: &str) -> Option<&str> {
        Some(self.raw(key)).filter(|v| !v.is_empty())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let v = self.raw(key);
        v.parse().map_err(|_| config_err(format!("cannot parse {key} = {v:?}")))
    }

    pub fn get_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.opt_str(key) {
            None => Ok(None),
            Some(_) => self.get(key).map(Some),
        }
    }

    pub fn list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        parse_list(self.raw(key)).map_err(|m| config_err(format!("{key}: {m}")))
    }

    /// Input path that must exist.
    pub fn input(&self, key: &str) -> Result<PathBuf, CliError> {
        let p = self
            .opt_str(key)
            .map(PathBuf::from)
            .ok_or_else(|| config_err(format!("{key} is required")))?;
        if !p.exists() {
            return Err(config_err(format!("{key}: {} does not exist", p.display())));
        }
        Ok(p)
    }

    pub fn optional_input(&self, key: &str) -> Result<Option<PathBuf>, CliError> {
        match self.opt_str(key) {
            None => Ok(None),
            Some(_) => self.input(key).map(Some),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.raw("run.out"))
    }

    pub fn kernel(&self) -> Result<KernelSpec, CliError> {
        let family: Family = self.get("kernel.family")?;
        Ok(KernelSpec::from_params(family, &self.list("kernel.params")?)?)
    }

    pub fn prior(&self, p: usize) -> Result<PriorSpec, CliError> {
        let beta = match self.raw("prior.beta") {
            "flat" => BetaPrior::Flat,
            "normal" => {
                let mean = match self.opt_str("prior.beta_mean") {
                    None => vec![0.0; p],
                    Some(_) => self.list("prior.beta_mean")?,
                };
                let prec: f64 = self.get("prior.beta_precision")?;
                BetaPrior::Normal {
                    mean,
                    precision: DMatrix::identity(p, p) * prec,
                }
            }
            other => return Err(config_err(format!("prior.beta must be flat or normal, got {other:?}"))),
        };
        let sigma2 = match parse_prior(self.raw("prior.sigma2")).map_err(|m| config_err(format!("prior.sigma2: {m}")))? {
            ("ig", a, b) => InverseGamma::new(a, b)?,
            _ => return Err(config_err("prior.sigma2 must be ig(shape, scale)")),
        };
        let theta = |key: &str| -> Result<ThetaPrior, CliError> {
            let (kind, a, b) = parse_prior(self.raw(key)).map_err(|m| config_err(format!("{key}: {m}")))?;
            Ok(match kind {
                "ig" => ThetaPrior::inverse_gamma(a, b)?,
                _ => ThetaPrior::flat(a, b)?,
            })
        };
        Ok(PriorSpec {
            beta,
            sigma2,
            theta: [theta("prior.theta_0")?, theta("prior.theta_1")?],
        })
    }

    pub fn mcmc(&self, kernel: &KernelSpec) -> Result<McmcConfig, CliError> {
        let l1: usize = self.get("mcmc.l1")?;
        let l2: usize = self.get("mcmc.l2")?;
        if l2 > l1 {
            return Err(config_err(format!("mcmc.l2 = {l2} exceeds mcmc.l1 = {l1}")));
        }
        let theta_init = match self.raw("mcmc.theta_init") {
            "auto" => None,
            "kernel" => Some(kernel.theta()),
            other => {
                let v = parse_list(other).map_err(|m| config_err(format!("mcmc.theta_init: {m}")))?;
                match v[..] {
                    [a, b] => Some([a, b]),
                    _ => return Err(config_err("mcmc.theta_init takes auto, kernel or two numbers")),
                }
            }
        };
        let preconditioner = match self.raw("cg.preconditioner") {
            "jacobi" => Preconditioner::Jacobi,
            "none" => Preconditioner::None,
            other => return Err(config_err(format!("cg.preconditioner must be jacobi or none, got {other:?}"))),
        };
        Ok(McmcConfig {
            l1,
            l2,
            seed: self.get("run.seed")?,
            partition_seed: self.get("mcmc.partition_seed")?,
            jitter: self.get("mcmc.jitter")?,
            cg: CgConfig {
                tol: self.get("cg.tol")?,
                max_iter: self.get_opt("cg.max_iter")?,
                preconditioner,
            },
            proposal_scale: self.get("mcmc.proposal_scale")?,
            adaptive_initial_scale: self.get("mcmc.adaptive_initial_scale")?,
            adapt: self.get("mcmc.adapt")?,
            target_acceptance: self.get("mcmc.target_acceptance")?,
            theta_init,
            sigma2_init: self.get_opt("mcmc.sigma2_init")?,
            fix_theta: self.get("mcmc.fix_theta")?,
            fix_sigma2: self.get("mcmc.fix_sigma2")?,
            store_latent: self.get("mcmc.store_latent")?,
            thin: self.get("mcmc.thin")?,
        })
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("cannot parse {t:?} as a number")))
        .collect::<Result<_, _>>()?;
    Ok(v)
}

/// `ig(a, b)` or `flat(min, max)`; `inf` is accepted as a bound.
fn parse_prior(s: &str) -> Result<(&'static str, f64, f64), String> {
    let s = s.trim();
    let (kind, rest) = if let Some(r) = s.strip_prefix("ig(") {
        ("ig", r)
    } else if let Some(r) = s.strip_prefix("flat(") {
        ("flat", r)
    } else {
        return Err(format!("expected ig(a, b) or flat(min, max), got {s:?}"));
    };
    let inner = rest.strip_suffix(')').ok_or_else(|| format!("unbalanced parentheses in {s:?}"))?;
    match parse_list(inner)?[..] {
        [a, b] => Ok((kind, a, b)),
        _ => Err(format!("{kind} takes two numbers")),
    }
}

/// A named axis-aligned box `name:lo1,hi1,lo2,hi2,...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub name: String,
    pub bounds: Vec<(f64, f64)>,
}

impl Region {
    pub fn contains(&self, p: &[f64]) -> bool {
        self.bounds.iter().zip(p).all(|(&(lo, hi), &v)| v >= lo && v <= hi)
    }
}

pub fn parse_regions(s: &str, dim: usize) -> Result<Vec<Region>, CliError> {
    if s.trim().is_empty() {
        return Ok(vec![Region {
            name: "all".into(),
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); dim],
        }]);
    }
    s.split(';')
        .map(|part| {
            let (name, nums) = part
                .split_once(':')
                .ok_or_else(|| config_err(format!("region {part:?} needs name:bounds")))?;
            let v = parse_list(nums).map_err(|m| config_err(format!("region {name}: {m}")))?;
            if v.len() != 2 * dim {
                return Err(config_err(format!("region {name} needs {} bounds", 2 * dim)));
            }
            Ok(Region {
                name: name.trim().to_string(),
                bounds: v.chunks(2).map(|c| (c[0], c[1])).collect(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_build_simulation_priors() {
        let c = Config::default();
        assert_eq!(c.prior(0).unwrap(), PriorSpec::simulation_default());
        assert_eq!(c.kernel().unwrap(), KernelSpec::exponential(1.0, 19.97).unwrap());
    }

    #[test]
    fn unknown_key_rejected() {
        let mut c = Config::default();
        assert!(c.set("mcmc.l3", "4").is_err());
        c.set_pair("mcmc.l1=4").unwrap();
        assert_eq!(c.get::<usize>("mcmc.l1").unwrap(), 4);
    }

    #[test]
    fn l2_above_l1_rejected() {
        let mut c = Config::default();
        c.set("mcmc.l1", "5").unwrap();
        c.set("mcmc.l2", "6").unwrap();
        assert!(c.mcmc(&c.kernel().unwrap()).is_err());
    }

    #[test]
    fn prior_syntax() {
        assert_eq!(parse_prior("flat(1, inf)").unwrap(), ("flat", 1.0, f64::INFINITY));
        assert!(parse_prior("gamma(1, 2)").is_err());
        assert!(parse_prior("ig(1)").is_err());
    }

    #[test]
    fn regions() {
        let r = parse_regions("a:0,0.5,0,0.5; b:0.5,1,0.5,1", 2).unwrap();
        assert_eq!(r.len(), 2);
        assert!(r[0].contains(&[0.2, 0.5]));
        assert!(!r[1].contains(&[0.2, 0.7]));
        assert!(parse_regions("a:0,1", 2).is_err());
        assert_eq!(parse_regions("", 3).unwrap()[0].name, "all");
    }
}
