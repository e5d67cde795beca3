//! Pipeline configuration document (TOML) and assembly of pipeline inputs
//! from the files it references.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationMethod, Calibrator};
use crate::data::{make_split, Role};
use crate::error::{Error, Result};
use crate::fusion::FusionConfig;
use crate::pipeline::{GlobalSource, LocalSource, MuPolicy, PipelineInputs, PipelineOptions};
use crate::retrieval::Budget;
use crate::seeds::derive_seed;

use super::embedding_file::read_embedding_file;
use super::label_file::read_label_file;
use super::match_file::read_match_file;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub labels: LabelsSection,
    pub scores: Vec<ScoreSection>,
    #[serde(default)]
    pub calibration: CalibrationSection,
    #[serde(default)]
    pub mu: MuSection,
    pub split: SplitSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fusion: Option<FusionSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shortlist: Option<ShortlistSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_shot: Option<ZeroShotSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelsSection {
    pub query: PathBuf,
    pub database: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreSection {
    pub name: String,
    #[serde(rename = "type")]
    pub score_type: ScoreType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_embeddings: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub database_embeddings: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matches: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreType {
    Global,
    Local,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationSection {
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample_items: Option<usize>,
}

fn default_method() -> String {
    "isotonic_pchip".to_string()
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self {
            method: default_method(),
            subsample_items: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MuSection {
    #[serde(default = "default_policy")]
    pub policy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
}

fn default_policy() -> String {
    "fixed".to_string()
}

impl Default for MuSection {
    fn default() -> Self {
        Self {
            policy: default_policy(),
            value: None,
            grid: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSection {
    pub ratio: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FusionSection {
    pub weights: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShortlistSection {
    pub budget: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZeroShotSection {
    pub calibrator_dir: PathBuf,
}

/// CLI-level overrides applied on top of the config document.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub seed: Option<u64>,
    pub mu: Option<f64>,
    pub budget: Option<usize>,
    pub calibration: Option<CalibrationMethod>,
    pub zero_shot_dir: Option<PathBuf>,
}

/// Parse the config and verify every referenced file exists. Relative
/// paths resolve against the config file's directory.
pub fn load_config(path: &Path) -> Result<(PipelineConfig, PathBuf)> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read config {}: {e}", path.display()))
    })?;
    let config: PipelineConfig = toml::from_str(&text)
        .map_err(|e| Error::Config(format!("config parse error: {e}")))?;
    let base = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    for p in config.referenced_paths() {
        let resolved = resolve(&base, &p);
        if !resolved.exists() {
            return Err(Error::Config(format!(
                "referenced file does not exist: {}",
                resolved.display()
            )));
        }
    }
    Ok((config, base))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl PipelineConfig {
    fn referenced_paths(&self) -> Vec<PathBuf> {
        let mut paths = vec![self.labels.query.clone(), self.labels.database.clone()];
        for s in &self.scores {
            paths.extend(s.query_embeddings.clone());
            paths.extend(s.database_embeddings.clone());
            paths.extend(s.matches.clone());
        }
        if let Some(z) = &self.zero_shot {
            paths.push(z.calibrator_dir.clone());
        }
        paths
    }

    /// Load all referenced data and build the pipeline inputs and options.
    pub fn assemble(
        &self,
        base: &Path,
        overrides: &ConfigOverrides,
    ) -> Result<(PipelineInputs, PipelineOptions)> {
        if self.scores.is_empty() {
            return Err(Error::Config("config lists no score sources".into()));
        }
        let query_catalog = read_label_file(&resolve(base, &self.labels.query), Role::Query)?;
        let db_catalog = read_label_file(&resolve(base, &self.labels.database), Role::Database)?;

        let mut globals = Vec::new();
        let mut locals = Vec::new();
        for s in &self.scores {
            match s.score_type {
                ScoreType::Global => {
                    let (qp, dp) = match (&s.query_embeddings, &s.database_embeddings) {
                        (Some(q), Some(d)) => (q, d),
                        _ => {
                            return Err(Error::Config(format!(
                                "global score '{}' needs query_embeddings and database_embeddings",
                                s.name
                            )))
                        }
                    };
                    let query = read_embedding_file(&resolve(base, qp))?;
                    let database = read_embedding_file(&resolve(base, dp))?;
                    query.aligned_to(&query_catalog)?;
                    database.aligned_to(&db_catalog)?;
                    globals.push(GlobalSource {
                        name: s.name.clone(),
                        query,
                        database,
                    });
                }
                ScoreType::Local => {
                    let mp = s.matches.as_ref().ok_or_else(|| {
                        Error::Config(format!("local score '{}' needs a matches path", s.name))
                    })?;
                    let records =
                        read_match_file(&resolve(base, mp), &query_catalog, &db_catalog)?;
                    locals.push(LocalSource {
                        name: s.name.clone(),
                        records,
                    });
                }
            }
        }

        let seed = overrides.seed.unwrap_or(self.split.seed);
        let split = make_split(&query_catalog, self.split.ratio, derive_seed(seed, "split"))?;

        let calibration = match overrides.calibration {
            Some(m) => m,
            None => CalibrationMethod::parse(&self.calibration.method)?,
        };

        let mu = if let Some(value) = overrides.mu {
            MuPolicy::Fixed(value)
        } else {
            match self.mu.policy.as_str() {
                "fixed" => MuPolicy::Fixed(
                    self.mu
                        .value
                        .unwrap_or(crate::similarity::MatchThreshold::DEFAULT),
                ),
                "tuned" => MuPolicy::Tuned {
                    grid: self.mu.grid.clone(),
                },
                other => {
                    return Err(Error::Config(format!("unknown mu policy '{other}'")))
                }
            }
        };

        let fusion = match &self.fusion {
            Some(section) => Some(FusionConfig::new(
                section
                    .weights
                    .iter()
                    .map(|(k, &v)| (k.clone(), v))
                    .collect(),
            )?),
            None => None,
        };

        let budget = match overrides.budget.or(self.shortlist.as_ref().map(|s| s.budget)) {
            Some(b) => Some(Budget::new(b)?),
            None => None,
        };

        let zero_shot_dir = overrides
            .zero_shot_dir
            .clone()
            .or_else(|| self.zero_shot.as_ref().map(|z| z.calibrator_dir.clone()));
        let zero_shot = match zero_shot_dir {
            Some(dir) => {
                let dir = resolve(base, &dir);
                let mut map = BTreeMap::new();
                for s in &self.scores {
                    let path = dir.join(format!("{}.calib.json", s.name));
                    if !path.exists() {
                        return Err(Error::Config(format!(
                            "zero-shot calibrator missing: {}",
                            path.display()
                        )));
                    }
                    map.insert(s.name.clone(), Calibrator::load(&path)?);
                }
                Some(map)
            }
            None => None,
        };

        let options = PipelineOptions {
            calibration,
            mu,
            fusion,
            budget,
            zero_shot,
            subsample_items: self.calibration.subsample_items,
            seed,
        };
        let inputs = PipelineInputs {
            query_catalog,
            db_catalog,
            globals,
            locals,
            split,
        };
        Ok((inputs, options))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_minimal_config() {
        let text = r#"
            [labels]
            query = "query.labels"
            database = "database.labels"

            [[scores]]
            name = "cos"
            type = "global"
            query_embeddings = "q.femb"
            database_embeddings = "d.femb"

            [split]
            ratio = 0.5
            seed = 42
        "#;
        let config: PipelineConfig = toml::from_str(text).unwrap();
        assert_eq!(config.scores.len(), 1);
        assert_eq!(config.calibration.method, "isotonic_pchip");
        assert_eq!(config.mu.policy, "fixed");
    }

    #[test]
    fn missing_referenced_file_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(
            &path,
            r#"
            [labels]
            query = "nope.labels"
            database = "nope2.labels"

            [[scores]]
            name = "cos"
            type = "global"
            query_embeddings = "q.femb"
            database_embeddings = "d.femb"

            [split]
            ratio = 0.5
            seed = 1
            "#,
        )
        .unwrap();
        let err = load_config(&path).unwrap_err();
        assert!(matches!(err, Error::Config(m) if m.contains("nope.labels")));
    }

    #[test]
    fn syntax_error_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "not [valid toml").unwrap();
        assert!(matches!(load_config(&path), Err(Error::Config(_))));
    }
}
