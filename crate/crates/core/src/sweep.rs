//! Parameter sweeps over intervention policies.

use serde::{Deserialize, Serialize};

use crate::intervention::InterventionPolicy;
use crate::scenario::{
    prepare, run_prepared, BaselineCache, MetricRow, ScenarioConfig, ScenarioError,
    ScenarioErrorKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyParam {
    Q,
    P,
    LI,
    LH,
    LR,
}

impl PolicyParam {
    fn set(self, policy: &mut InterventionPolicy, v: f64) {
        match self {
            PolicyParam::Q => policy.q = v,
            PolicyParam::P => policy.p = v,
            PolicyParam::LI => policy.l_i = v,
            PolicyParam::LH => policy.l_h = v,
            PolicyParam::LR => policy.l_r = v,
        }
    }
}

/// One sweep axis: an explicit value list, or `count` evenly spaced values
/// from `min` to `max` inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub param: PolicyParam,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

impl Axis {
    pub fn range(param: PolicyParam, min: f64, max: f64, count: usize) -> Self {
        Self {
            param,
            values: Vec::new(),
            min: Some(min),
            max: Some(max),
            count: Some(count),
        }
    }

    pub fn list(param: PolicyParam, values: Vec<f64>) -> Self {
        Self {
            param,
            values,
            min: None,
            max: None,
            count: None,
        }
    }

    pub fn points(&self) -> Result<Vec<f64>, String> {
        match (self.values.is_empty(), self.min, self.max, self.count) {
            (false, None, None, None) => Ok(self.values.clone()),
            (true, Some(lo), Some(hi), Some(n)) if n >= 1 && lo <= hi => Ok(if n == 1 {
                vec![lo]
            } else {
                (0..n)
                    .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                    .collect()
            }),
            _ => Err(format!(
                "axis {:?} needs either a value list or min <= max with count >= 1",
                self.param
            )),
        }
    }
}

/// Outer panel grid; an empty list keeps the base policy's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Panels {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub p: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub base: ScenarioConfig,
    /// At most two axes; the last varies fastest.
    #[serde(default)]
    pub axes: Vec<Axis>,
    #[serde(default)]
    pub panels: Panels,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl SweepConfig {
    /// Cell scenarios in row-major order: panel p, panel q, then the axes.
    pub fn cells(&self) -> Result<Vec<ScenarioConfig>, ScenarioError> {
        let fail = |m: String| ScenarioError::new(&self.base.id, ScenarioErrorKind::Config(m));
        if self.axes.len() > 2 {
            return Err(fail(format!("at most two axes, got {}", self.axes.len())));
        }
        let base = &self.base.policy;
        let ps = if self.panels.p.is_empty() {
            vec![base.p]
        } else {
            self.panels.p.clone()
        };
        let qs = if self.panels.q.is_empty() {
            vec![base.q]
        } else {
            self.panels.q.clone()
        };
        let axes: Vec<(PolicyParam, Vec<f64>)> = self
            .axes
            .iter()
            .map(|a| a.points().map(|v| (a.param, v)).map_err(fail))
            .collect::<Result<_, _>>()?;

        let mut grid: Vec<Vec<(PolicyParam, f64)>> = Vec::new();
        for &p in &ps {
            for &q in &qs {
                grid.push(vec![(PolicyParam::P, p), (PolicyParam::Q, q)]);
            }
        }
        for (param, values) in &axes {
            grid = grid
                .into_iter()
                .flat_map(|cell| {
                    values.iter().map(move |&v| {
                        let mut c = cell.clone();
                        c.push((*param, v));
                        c
                    })
                })
                .collect();
        }
        Ok(grid
            .into_iter()
            .enumerate()
            .map(|(i, assignments)| {
                let mut cfg = self.base.clone();
                cfg.id = format!("{}-{i:04}", self.base.id);
                for (param, v) in assignments {
                    param.set(&mut cfg.policy, v);
                }
                cfg
            })
            .collect())
    }
}

/// Runs every cell on a pool of `threads` workers (all cores when `None`).
/// Rows come back in cell order regardless of the thread count; a failing
/// cell yields a row with `status = error`.
pub fn run_sweep(
    cfg: &SweepConfig,
    threads: Option<usize>,
) -> Result<Vec<MetricRow>, ScenarioError> {
    let cells = cfg.cells()?;
    let prepared = prepare(&cfg.base)?;
    let cache = BaselineCache::new();
    cache.get_or_run(&cfg.base, &prepared)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.or(cfg.threads).unwrap_or(0))
        .build()
        .map_err(|e| ScenarioError::new(&cfg.base.id, ScenarioErrorKind::Config(e.to_string())))?;
    use rayon::prelude::*;
    Ok(pool.install(|| {
        cells
            .par_iter()
            .map(|cell| match run_prepared(cell, &prepared, &cache) {
                Ok(res) => MetricRow::success(cell, &res),
                Err(e) => MetricRow::failure(cell, &e),
            })
            .collect()
    }))
}
