//! Run configuration: JSON file merged under command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use equikoop::dictionary::DictionarySpec;
use equikoop::scenario::Tolerances;
use equikoop::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discard: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dictionary: Option<DictionarySpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub registry: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank_tol: Option<f64>,
    #[serde(skip_serializing_if = "ToleranceOverrides::is_empty")]
    pub tolerances: ToleranceOverrides,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checks: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub x0: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equivariance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_frobenius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_hausdorff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistical_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub commutation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_fraction: Option<f64>,
}

impl ToleranceOverrides {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        let slot = match key {
            "equivariance" => &mut self.equivariance,
            "exact_frobenius" => &mut self.exact_frobenius,
            "exact_hausdorff" => &mut self.exact_hausdorff,
            "statistical_factor" => &mut self.statistical_factor,
            "spectrum" => &mut self.spectrum,
            "commutation" => &mut self.commutation,
            "image_fraction" => &mut self.image_fraction,
            other => return Err(Error::Config(format!("unknown tolerance '{other}'"))),
        };
        *slot = Some(value);
        Ok(())
    }

    fn merged(&self, over: &Self) -> Self {
        Self {
            equivariance: over.equivariance.or(self.equivariance),
            exact_frobenius: over.exact_frobenius.or(self.exact_frobenius),
            exact_hausdorff: over.exact_hausdorff.or(self.exact_hausdorff),
            statistical_factor: over.statistical_factor.or(self.statistical_factor),
            spectrum: over.spectrum.or(self.spectrum),
            commutation: over.commutation.or(self.commutation),
            image_fraction: over.image_fraction.or(self.image_fraction),
        }
    }

    pub fn apply(&self, t: &mut Tolerances) {
        let pairs = [
            (self.equivariance, &mut t.equivariance),
            (self.exact_frobenius, &mut t.exact_frobenius),
            (self.exact_hausdorff, &mut t.exact_hausdorff),
            (self.statistical_factor, &mut t.statistical_factor),
            (self.spectrum, &mut t.spectrum),
            (self.commutation, &mut t.commutation),
            (self.image_fraction, &mut t.image_fraction),
        ];
        for (value, slot) in pairs {
            if let Some(v) = value {
                *slot = v;
            }
        }
    }
}

impl RunConfig {
    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.group, &mut cfg.registry, &mut cfg.output_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// `over` (command-line flags) takes precedence over `self`.
    pub fn merged(&self, over: &RunConfig) -> RunConfig {
        let mut params = self.params.clone();
        params.extend(over.params.clone());
        RunConfig {
            system: over.system.clone().or_else(|| self.system.clone()),
            params,
            dt: over.dt.or(self.dt),
            n_steps: over.n_steps.or(self.n_steps),
            discard: over.discard.or(self.discard),
            seed: over.seed.or(self.seed),
            dictionary: over.dictionary.clone().or_else(|| self.dictionary.clone()),
            group: over.group.clone().or_else(|| self.group.clone()),
            registry: over.registry.clone().or_else(|| self.registry.clone()),
            rank_tol: over.rank_tol.or(self.rank_tol),
            tolerances: self.tolerances.merged(&over.tolerances),
            output_dir: over.output_dir.clone().or_else(|| self.output_dir.clone()),
            checks: over.checks.clone().or_else(|| self.checks.clone()),
            x0: if over.x0.is_empty() { self.x0.clone() } else { over.x0.clone() },
            count: over.count.or(self.count),
        }
    }

    /// Fails fast on referenced files that cannot be read.
    pub fn check_paths(&self) -> Result<()> {
        for (what, p) in [("group", &self.group), ("registry", &self.registry)] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(Error::Config(format!("{what} file {} is not readable", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

pub fn parse_vector(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("'{t}': {e}")))
        .collect()
}

pub fn parse_key_value(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got '{s}'"))?;
    let v = v.trim().parse::<f64>().map_err(|e| format!("'{v}': {e}"))?;
    Ok((k.trim().to_string(), v))
}

/// `identity`, `monomial:D`, `monomial:D:noconst`, or a JSON spec.
pub fn parse_dictionary(s: &str) -> std::result::Result<DictionarySpec, String> {
    let s = s.trim();
    if s.starts_with('{') {
        return serde_json::from_str(s).map_err(|e| e.to_string());
    }
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["identity"] => Ok(DictionarySpec::Identity),
        ["monomial", d] | ["monomial", d, "const"] => Ok(DictionarySpec::Monomial {
            max_degree: d.parse().map_err(|e| format!("degree '{d}': {e}"))?,
            include_constant: true,
        }),
        ["monomial", d, "noconst"] => Ok(DictionarySpec::Monomial {
            max_degree: d.parse().map_err(|e| format!("degree '{d}': {e}"))?,
            include_constant: false,
        }),
        _ => Err(format!("unrecognized dictionary '{s}' (identity | monomial:D[:noconst] | JSON)")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file = RunConfig {
            system: Some("lorenz".into()),
            dt: Some(0.02),
            seed: Some(1),
            params: [("rho".to_string(), 20.0)].into(),
            ..Default::default()
        };
        let flags = RunConfig {
            dt: Some(0.005),
            params: [("sigma".to_string(), 9.0)].into(),
            ..Default::default()
        };
        let m = file.merged(&flags);
        assert_eq!(m.system.as_deref(), Some("lorenz"));
        assert_eq!(m.dt, Some(0.005));
        assert_eq!(m.seed, Some(1));
        assert_eq!(m.params.len(), 2);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sytem": "lorenz"}"#).is_err());
        let cfg: RunConfig = serde_json::from_str(r#"{"tolerances": {"spectrum": 1e-6}}"#).unwrap();
        assert_eq!(cfg.tolerances.spectrum, Some(1e-6));
    }

    #[test]
    fn dictionary_shorthand() {
        assert_eq!(parse_dictionary("identity").unwrap(), DictionarySpec::Identity);
        assert_eq!(
            parse_dictionary("monomial:3:noconst").unwrap(),
            DictionarySpec::Monomial {
                max_degree: 3,
                include_constant: false
            }
        );
        assert!(parse_dictionary("fourier:2").is_err());
        assert_eq!(parse_vector("3, -0.5").unwrap(), vec![3.0, -0.5]);
    }
}
