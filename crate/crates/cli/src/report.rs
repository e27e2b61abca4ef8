use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cmp {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">")]
    Gt,
}

impl Cmp {
    pub fn holds(self, a: f64, b: f64) -> bool {
        match self {
            Cmp::Ge => a >= b,
            Cmp::Le => a <= b,
            Cmp::Lt => a < b,
            Cmp::Gt => a > b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub check: String,
    pub metric: String,
    pub value: f64,
    pub cmp: Cmp,
    /// Either a number or the name of another metric.
    pub threshold: String,
    pub threshold_value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    /// Dataset sizes, config hashes and the like.
    pub inputs: BTreeMap<String, serde_json::Value>,
    pub metrics: BTreeMap<String, f64>,
    /// Paths relative to the report directory.
    pub artifacts: Vec<String>,
    pub verdicts: Vec<Verdict>,
}

impl ExperimentReport {
    pub fn new(experiment: &str, seed: u64) -> Self {
        ExperimentReport {
            experiment: experiment.into(),
            seed,
            inputs: BTreeMap::new(),
            metrics: BTreeMap::new(),
            artifacts: Vec::new(),
            verdicts: Vec::new(),
        }
    }

    pub fn input(&mut self, key: &str, v: impl Serialize) {
        self.inputs.insert(key.into(), serde_json::to_value(v).expect("serializable"));
    }

    pub fn metric(&mut self, key: &str, v: f64) {
        self.metrics.insert(key.into(), v);
    }

    pub fn artifact(&mut self, root: &Path, path: &Path) {
        let rel = path.strip_prefix(root).unwrap_or(path);
        self.artifacts.push(rel.to_string_lossy().into_owned());
    }

    /// Records a verdict comparing metric `metric` against a number or another metric.
    pub fn check(&mut self, check: &str, metric: &str, cmp: Cmp, threshold: Threshold) -> Result<()> {
        let Some(&value) = self.metrics.get(metric) else {
            bail!("verdict `{check}` refers to unknown metric `{metric}`");
        };
        let (label, t) = match threshold {
            Threshold::Value(v) => (v.to_string(), v),
            Threshold::Metric(m) => match self.metrics.get(m) {
                Some(&v) => (m.to_string(), v),
                None => bail!("verdict `{check}` refers to unknown metric `{m}`"),
            },
        };
        self.verdicts.push(Verdict {
            check: check.into(),
            metric: metric.into(),
            value,
            cmp,
            threshold: label,
            threshold_value: t,
            pass: cmp.holds(value, t),
        });
        Ok(())
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn verdict(&self, check: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.check == check)
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("report.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

pub enum Threshold<'a> {
    Value(f64),
    Metric(&'a str),
}
