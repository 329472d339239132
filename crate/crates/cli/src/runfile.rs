//! Declarative benchmark grids.
//!
//! ```toml
//! seed = 2024
//!
//! [output]
//! table = "fig2_desk.csv"
//!
//! [[cell]]
//! label = "logistic_small"
//! regime = "moderate"
//! family = "logistic"
//! n = 500
//! p = 60
//! p1 = 30
//! covariance = "toeplitz"
//! r = [0.0, 0.2, 0.4]
//! signal = "fixed:6.5"
//! methods = ["ds", "mds:50", "gm", "bhq-mle"]
//! reps = 20
//! ```
//!
//! Each cell expands to one scenario per `(r, method)` pair; all methods of
//! a cell see the same replicated datasets.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use mirror_fdr::bench::{Regime, Scenario};
use mirror_fdr::datagen::{DesignScale, SignalSpec};
use mirror_fdr::estimators::nodewise::TauMethod;
use mirror_fdr::mirror::LambdaRules;
use serde::Deserialize;

use crate::parse;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Output,
    #[serde(default)]
    pub cell: Vec<Cell>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    /// Bench CSV path, relative to the working directory.
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    pub label: Option<String>,
    pub regime: Regime,
    pub family: String,
    pub dispersion: Option<f64>,
    pub n: usize,
    pub p: usize,
    pub p1: usize,
    #[serde(default = "identity")]
    pub covariance: String,
    pub r: Option<OneOrMany>,
    #[serde(default = "ten")]
    pub blocks: usize,
    pub signal: String,
    /// `unit` or `inv_n`; the regime decides when absent.
    pub scale: Option<DesignScale>,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default = "product")]
    pub f: String,
    pub methods: Vec<String>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub lambda: Option<String>,
    pub node_lambda: Option<String>,
    pub weighted_cross: Option<bool>,
    pub tau: Option<TauMethod>,
}

fn identity() -> String {
    "identity".into()
}
fn ten() -> usize {
    10
}
fn default_q() -> f64 {
    0.1
}
fn product() -> String {
    "product".into()
}

impl RunFile {
    pub fn read(path: &Path) -> Result<RunFile> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        toml::from_str(&text).map_err(|e| anyhow!("{}: {e}", path.display()))
    }

    /// Expands every cell and validates the resulting scenarios.
    /// `reps` overrides the per-cell replication counts.
    pub fn scenarios(&self, reps: Option<usize>) -> Result<Vec<Scenario>> {
        if self.cell.is_empty() {
            bail!("run file has no [[cell]] entries");
        }
        let mut grid = Vec::new();
        for (k, cell) in self.cell.iter().enumerate() {
            let label = cell.label.clone().unwrap_or_else(|| format!("cell{}", k + 1));
            let ctx = || format!("cell '{label}'");
            let family = parse::family(&cell.family, cell.dispersion).with_context(ctx)?;
            let signal = SignalSpec { p1: cell.p1, mode: parse::signal(&cell.signal).with_context(ctx)? };
            let f_choice = parse::f_choice(&cell.f).with_context(ctx)?;
            let mut rules = LambdaRules::default();
            if let Some(s) = &cell.lambda {
                rules.main = parse::lambda(s).with_context(ctx)?;
            }
            if let Some(s) = &cell.node_lambda {
                rules.node = parse::lambda(s).with_context(ctx)?;
            }
            if let Some(w) = cell.weighted_cross {
                rules.weighted_cross = w;
            }
            if cell.methods.is_empty() {
                bail!("{}: methods is empty", ctx());
            }
            let rs = cell.r.as_ref().map(OneOrMany::values).unwrap_or_else(|| vec![0.0]);
            if rs.is_empty() {
                bail!("{}: r is empty", ctx());
            }
            for &r in &rs {
                let covariance = parse::covariance(&cell.covariance, r, cell.blocks).with_context(ctx)?;
                for m in &cell.methods {
                    let method = parse::method(m, None).with_context(ctx)?;
                    let mut sc = Scenario::new(cell.regime, cell.n, cell.p, family, covariance, signal, method);
                    sc.label = label.clone();
                    sc.scale = cell.scale.unwrap_or(cell.regime.default_scale());
                    sc.q = cell.q;
                    sc.f_choice = f_choice;
                    sc.reps = reps.or(cell.reps).unwrap_or(sc.reps);
                    sc.seed = cell.seed.unwrap_or(self.seed);
                    sc.rules = rules;
                    sc.tau = cell.tau.unwrap_or_default();
                    sc.validate().map_err(|e| anyhow!("{} (r = {r}, {method}): {e}", ctx()))?;
                    grid.push(sc);
                }
            }
        }
        Ok(grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mirror_fdr::bench::Method;

    const SMALL: &str = r#"
seed = 3
[[cell]]
regime = "moderate"
family = "logistic"
n = 80
p = 10
p1 = 3
covariance = "toeplitz"
r = [0.0, 0.5]
signal = "fixed:1"
methods = ["ds", "gm"]
reps = 2
"#;

    #[test]
    fn expands_r_by_method() {
        let rf: RunFile = toml::from_str(SMALL).unwrap();
        let grid = rf.scenarios(None).unwrap();
        assert_eq!(grid.len(), 4);
        assert_eq!(grid[1].method, Method::Gm);
        assert_eq!(grid[2].covariance.r(), 0.5);
        assert!(grid.iter().all(|s| s.seed == 3 && s.reps == 2 && s.label == "cell1"));
        assert_eq!(grid[0].scale, DesignScale::InvN);
        assert!(rf.scenarios(Some(1)).unwrap().iter().all(|s| s.reps == 1));
    }

    #[test]
    fn rejects_unknown_keys_and_empty_grids() {
        let bad = SMALL.replace("reps = 2", "reps = 2\nbogus = 1");
        assert!(toml::from_str::<RunFile>(&bad).is_err());
        let rf: RunFile = toml::from_str("seed = 1").unwrap();
        assert!(rf.scenarios(None).is_err());
        let rf: RunFile = toml::from_str(&SMALL.replace("n = 80", "n = 8")).unwrap();
        assert!(rf.scenarios(None).is_err());
    }

    #[test]
    fn scalar_r_is_accepted() {
        let rf: RunFile = toml::from_str(&SMALL.replace("r = [0.0, 0.5]", "r = 0.3")).unwrap();
        assert_eq!(rf.scenarios(None).unwrap().len(), 2);
    }
}
