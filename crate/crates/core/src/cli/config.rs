//! Effective run configuration: an optional TOML file overlaid by flags.

use std::path::Path;
use std::str::FromStr;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::benchgen::{GenParams, Interval};
use crate::metrics::{Axis, DEFAULT_COLLISION_EPS};
use crate::rewards::RewardConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    #[default]
    TextTable,
    Json,
    Csv,
}

/// Keys accepted in `--config` files. Every key mirrors a flag.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub collision_eps: Option<f64>,
    pub iou_thresholds: Option<Vec<f64>>,
    pub sort_axis: Option<Axis>,
    pub format: Option<ReportFormat>,
    pub parallelism: Option<usize>,
    pub seed: Option<u64>,
    pub grid_hint: Option<bool>,
    #[serde(default)]
    pub gen: GenParamArgs,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub collision_eps: f64,
    pub iou_thresholds: Vec<f64>,
    pub sort_axis: Option<Axis>,
    pub format: ReportFormat,
    /// Not embedded in reports: output must not depend on the pool size.
    #[serde(skip)]
    pub parallelism: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.2,
            lambda2: 0.2,
            collision_eps: DEFAULT_COLLISION_EPS,
            iou_thresholds: vec![0.5],
            sort_axis: None,
            format: ReportFormat::TextTable,
            parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
            seed: 0,
        }
    }
}

/// Flag values that override the file; `None` leaves the lower layer.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub collision_eps: Option<f64>,
    pub iou_thresholds: Option<Vec<f64>>,
    pub sort_axis: Option<Axis>,
    pub format: Option<ReportFormat>,
    pub parallelism: Option<usize>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn resolve(file: &FileConfig, flags: &Overrides) -> Result<Self, CliError> {
        let d = RunConfig::default();
        let cfg = RunConfig {
            lambda1: flags.lambda1.or(file.lambda1).unwrap_or(d.lambda1),
            lambda2: flags.lambda2.or(file.lambda2).unwrap_or(d.lambda2),
            collision_eps: flags.collision_eps.or(file.collision_eps).unwrap_or(d.collision_eps),
            iou_thresholds: flags
                .iou_thresholds
                .clone()
                .or_else(|| file.iou_thresholds.clone())
                .unwrap_or(d.iou_thresholds),
            sort_axis: flags.sort_axis.or(file.sort_axis),
            format: flags.format.or(file.format).unwrap_or(d.format),
            parallelism: flags.parallelism.or(file.parallelism).unwrap_or(d.parallelism),
            seed: flags.seed.or(file.seed).unwrap_or(d.seed),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if let Some(t) = self.iou_thresholds.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(CliError::Usage(format!("IoU threshold {t} must lie in (0, 1)")));
        }
        if self.parallelism == 0 {
            return Err(CliError::Usage("parallelism must be at least 1".into()));
        }
        if self.collision_eps.is_nan() || self.collision_eps < 0.0 {
            return Err(CliError::Usage("collision_eps must be non-negative".into()));
        }
        if !self.lambda1.is_finite() || !self.lambda2.is_finite() {
            return Err(CliError::Usage("lambda weights must be finite".into()));
        }
        Ok(())
    }

    pub fn reward_config(&self) -> RewardConfig {
        RewardConfig {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            collision_eps: self.collision_eps,
            ..RewardConfig::default()
        }
    }
}

/// Generator parameters as flags (ranges like `3-5` or `0.2..0.4`).
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenParamArgs {
    /// Objects per sorting scene.
    #[arg(long)]
    pub objects: Option<String>,
    /// Groups per sorting scene.
    #[arg(long)]
    pub groups: Option<String>,
    /// Gap between neighbours within a group, meters.
    #[arg(long)]
    pub object_gap: Option<String>,
    /// Gap between groups, meters.
    #[arg(long)]
    pub group_gap: Option<String>,
    /// Fixed row length for sorting; the group gap is derived from it.
    #[arg(long)]
    pub total_span: Option<f64>,
    /// Sorting axis (x or y).
    #[arg(long)]
    pub axis: Option<Axis>,
    /// Grid rows for alignment.
    #[arg(long)]
    pub rows: Option<String>,
    /// Grid columns for alignment.
    #[arg(long)]
    pub cols: Option<String>,
    /// Fraction of grid objects to displace.
    #[arg(long)]
    pub perturb: Option<String>,
    /// Existing objects per room.
    #[arg(long)]
    pub existing: Option<String>,
    /// Reference objects per insertion (2 or 3).
    #[arg(long)]
    pub refs: Option<String>,
}

fn interval<T: FromStr + Copy>(name: &str, v: &Option<String>) -> Result<Option<Interval<T>>, CliError> {
    v.as_deref()
        .map(|s| {
            s.parse::<Interval<T>>()
                .map_err(|e| CliError::Usage(format!("--{name}: {e}")))
        })
        .transpose()
}

impl GenParamArgs {
    /// Flags win over the file.
    pub fn overlay(&self, file: &GenParamArgs) -> GenParamArgs {
        GenParamArgs {
            objects: self.objects.clone().or_else(|| file.objects.clone()),
            groups: self.groups.clone().or_else(|| file.groups.clone()),
            object_gap: self.object_gap.clone().or_else(|| file.object_gap.clone()),
            group_gap: self.group_gap.clone().or_else(|| file.group_gap.clone()),
            total_span: self.total_span.or(file.total_span),
            axis: self.axis.or(file.axis),
            rows: self.rows.clone().or_else(|| file.rows.clone()),
            cols: self.cols.clone().or_else(|| file.cols.clone()),
            perturb: self.perturb.clone().or_else(|| file.perturb.clone()),
            existing: self.existing.clone().or_else(|| file.existing.clone()),
            refs: self.refs.clone().or_else(|| file.refs.clone()),
        }
    }

    pub fn to_params(&self) -> Result<GenParams, CliError> {
        let mut p = GenParams::default();
        if let Some(v) = interval("objects", &self.objects)? {
            p.sorting.n_objects = v;
        }
        if let Some(v) = interval("groups", &self.groups)? {
            p.sorting.n_groups = v;
        }
        if let Some(v) = interval("object-gap", &self.object_gap)? {
            p.sorting.object_gap = v;
        }
        if let Some(v) = interval("group-gap", &self.group_gap)? {
            p.sorting.group_gap = v;
        }
        p.sorting.total_span = self.total_span;
        p.sorting.axis = self.axis;
        if let Some(v) = interval("rows", &self.rows)? {
            p.alignment.rows = v;
        }
        if let Some(v) = interval("cols", &self.cols)? {
            p.alignment.cols = v;
        }
        if let Some(v) = interval("perturb", &self.perturb)? {
            p.alignment.perturb_fraction = v;
        }
        if let Some(v) = interval("existing", &self.existing)? {
            p.roomedit.n_existing = v;
        }
        if let Some(v) = interval("refs", &self.refs)? {
            p.roomedit.n_refs = v;
        }
        Ok(p)
    }
}
