//! Run configuration: flat `key = value` text, unknown keys and out-of-range
//! values are hard errors. CLI `--set key=value` pairs override file values.

use std::path::Path;

use crate::changepoint::{TvParams, WeightMode};
use crate::error::{Error, Result};
use crate::score::{MotionBoxParams, ScoreWeights};
use crate::walk::WalkParams;

/// Parses flat `key = value` lines; `#` starts a comment line, blank lines
/// are skipped, duplicate keys are rejected.
pub fn parse_kv(path: &Path, text: &str) -> Result<Vec<(String, String, usize)>> {
    let mut out: Vec<(String, String, usize)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::parse(path, line_no, format!("expected `key = value`, found `{raw}`"))
        })?;
        let key = key.trim().to_owned();
        if key.is_empty() {
            return Err(Error::parse(path, line_no, "empty key"));
        }
        if out.iter().any(|(k, _, _)| *k == key) {
            return Err(Error::parse(path, line_no, format!("duplicate key `{key}`")));
        }
        out.push((key, value.trim().to_owned(), line_no));
    }
    Ok(out)
}

/// All pipeline knobs with their defaults.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Sub-proposal (trellis layer) count.
    pub f: usize,
    pub lambda_i: f64,
    pub lambda_m: f64,
    pub lambda_o: f64,
    pub lambda_a: f64,
    /// Edge weight of the path energy.
    pub lambda_edge: f64,
    /// Tube-level NMS overlap threshold of the pre-step.
    pub nms_threshold: f64,
    /// Perimeter exponent of the contour-enclosure score.
    pub kappa: f64,
    /// Appearance-similarity bandwidth.
    pub sigma: f64,
    /// Ranked proposals emitted per video (per shot when untrimmed).
    pub k: usize,
    /// Reserved for components that sample; the ranking pipeline itself is
    /// deterministic.
    pub seed: u64,
    pub motion_scales: Vec<f64>,
    pub motion_aspects: Vec<f64>,
    pub motion_stride_frac: f64,
    pub motion_top_m: usize,
    pub motion_nms_iou: f64,
    /// `None` selects the per-frame Otsu threshold.
    pub contour_threshold: Option<f64>,
    /// `None` selects the median heuristic.
    pub walk_alpha: Option<f64>,
    pub walk_beta: f64,
    pub walk_iterations: usize,
    pub walk_include_self: bool,
    pub keep_fraction: f64,
    pub seg_weight_mode: WeightMode,
    pub seg_tol: f64,
    pub seg_max_iter: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let motion = MotionBoxParams::default();
        let walk = WalkParams::default();
        let tv = TvParams::default();
        Self {
            f: 5,
            lambda_i: 1.0,
            lambda_m: 1.0,
            lambda_o: 1.0,
            lambda_a: 1.0,
            lambda_edge: 1.0,
            nms_threshold: 0.8,
            kappa: motion.kappa,
            sigma: 1.0,
            k: 20,
            seed: 0,
            motion_scales: motion.scales,
            motion_aspects: motion.aspects,
            motion_stride_frac: motion.stride_frac,
            motion_top_m: motion.top_m,
            motion_nms_iou: motion.nms_iou,
            contour_threshold: None,
            walk_alpha: None,
            walk_beta: walk.beta,
            walk_iterations: walk.iterations,
            walk_include_self: walk.include_self,
            keep_fraction: walk.keep_fraction,
            seg_weight_mode: tv.weight_mode,
            seg_tol: tv.tol,
            seg_max_iter: tv.max_iter,
        }
    }
}

fn bad(key: &str, msg: impl Into<String>) -> Error {
    Error::config(key, msg.into())
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| bad(key, format!("cannot parse `{value}`")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    let items: Vec<f64> = value
        .split(',')
        .map(|v| parse_num(key, v.trim()))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(bad(key, "list must be non-empty"));
    }
    Ok(items)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        for (key, value, _) in parse_kv(path, &text)? {
            cfg.apply(&key, &value)?;
        }
        Ok(cfg)
    }

    /// Applies `key=value` override pairs (as given by `--set`).
    pub fn apply_overrides(&mut self, pairs: &[(String, String)]) -> Result<()> {
        for (key, value) in pairs {
            self.apply(key, value)?;
        }
        Ok(())
    }

    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "f" => {
                self.f = parse_num(key, value)?;
                if self.f == 0 {
                    return Err(bad(key, "must be at least 1"));
                }
            }
            "lambda_i" | "lambda_m" | "lambda_o" | "lambda_a" | "lambda_edge" => {
                let v: f64 = parse_num(key, value)?;
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(bad(key, "must be a non-negative real"));
                }
                match key {
                    "lambda_i" => self.lambda_i = v,
                    "lambda_m" => self.lambda_m = v,
                    "lambda_o" => self.lambda_o = v,
                    "lambda_a" => self.lambda_a = v,
                    _ => self.lambda_edge = v,
                }
            }
            "nms_threshold" => {
                self.nms_threshold = parse_num(key, value)?;
                if !(self.nms_threshold > 0.0 && self.nms_threshold <= 1.0) {
                    return Err(bad(key, "must lie in (0, 1]"));
                }
            }
            "kappa" => {
                self.kappa = parse_num(key, value)?;
                if !(self.kappa > 0.0) {
                    return Err(bad(key, "must be positive"));
                }
            }
            "sigma" => {
                self.sigma = parse_num(key, value)?;
                if !(self.sigma > 0.0) {
                    return Err(bad(key, "must be positive"));
                }
            }
            "k" => {
                self.k = parse_num(key, value)?;
                if self.k == 0 {
                    return Err(bad(key, "must be at least 1"));
                }
            }
            "seed" => self.seed = parse_num(key, value)?,
            "motion_scales" => {
                let list = parse_list(key, value)?;
                if list.iter().any(|&v| !(v > 0.0 && v <= 1.0)) {
                    return Err(bad(key, "scales must lie in (0, 1]"));
                }
                self.motion_scales = list;
            }
            "motion_aspects" => {
                let list = parse_list(key, value)?;
                if list.iter().any(|&v| !(v > 0.0)) {
                    return Err(bad(key, "aspect ratios must be positive"));
                }
                self.motion_aspects = list;
            }
            "motion_stride_frac" => {
                self.motion_stride_frac = parse_num(key, value)?;
                if !(self.motion_stride_frac > 0.0 && self.motion_stride_frac <= 1.0) {
                    return Err(bad(key, "must lie in (0, 1]"));
                }
            }
            "motion_top_m" => {
                self.motion_top_m = parse_num(key, value)?;
                if self.motion_top_m == 0 {
                    return Err(bad(key, "must be at least 1"));
                }
            }
            "motion_nms_iou" => {
                self.motion_nms_iou = parse_num(key, value)?;
                if !(self.motion_nms_iou > 0.0 && self.motion_nms_iou <= 1.0) {
                    return Err(bad(key, "must lie in (0, 1]"));
                }
            }
            "contour_threshold" => {
                if value == "otsu" {
                    self.contour_threshold = None;
                } else {
                    let v: f64 = parse_num(key, value)?;
                    if !(v > 0.0) {
                        return Err(bad(key, "must be positive or `otsu`"));
                    }
                    self.contour_threshold = Some(v);
                }
            }
            "walk_alpha" => {
                if value == "median" {
                    self.walk_alpha = None;
                } else {
                    let v: f64 = parse_num(key, value)?;
                    if !(v > 0.0) {
                        return Err(bad(key, "must be positive or `median`"));
                    }
                    self.walk_alpha = Some(v);
                }
            }
            "walk_beta" => {
                self.walk_beta = parse_num(key, value)?;
                if !(self.walk_beta > 0.0 && self.walk_beta < 1.0) {
                    return Err(bad(key, "must lie in (0, 1)"));
                }
            }
            "walk_iterations" => {
                self.walk_iterations = parse_num(key, value)?;
                if self.walk_iterations == 0 {
                    return Err(bad(key, "must be at least 1"));
                }
            }
            "walk_include_self" => {
                self.walk_include_self = match value {
                    "true" => true,
                    "false" => false,
                    _ => return Err(bad(key, "must be `true` or `false`")),
                };
            }
            "keep_fraction" => {
                self.keep_fraction = parse_num(key, value)?;
                if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
                    return Err(bad(key, "must lie in (0, 1]"));
                }
            }
            "seg_weight_mode" => {
                self.seg_weight_mode = match value {
                    "divide" => WeightMode::Divide,
                    "multiply" => WeightMode::Multiply,
                    _ => return Err(bad(key, "must be `divide` or `multiply`")),
                };
            }
            "seg_tol" => {
                self.seg_tol = parse_num(key, value)?;
                if !(self.seg_tol > 0.0) {
                    return Err(bad(key, "must be positive"));
                }
            }
            "seg_max_iter" => {
                self.seg_max_iter = parse_num(key, value)?;
                if self.seg_max_iter == 0 {
                    return Err(bad(key, "must be at least 1"));
                }
            }
            _ => return Err(bad(key, "unknown key")),
        }
        Ok(())
    }

    pub fn weights(&self) -> ScoreWeights {
        ScoreWeights {
            lambda_i: self.lambda_i,
            lambda_m: self.lambda_m,
            lambda_o: self.lambda_o,
            lambda_a: self.lambda_a,
            lambda_edge: self.lambda_edge,
        }
    }

    pub fn motion_params(&self) -> MotionBoxParams {
        MotionBoxParams {
            scales: self.motion_scales.clone(),
            aspects: self.motion_aspects.clone(),
            stride_frac: self.motion_stride_frac,
            top_m: self.motion_top_m,
            nms_iou: self.motion_nms_iou,
            kappa: self.kappa,
            contour_threshold: self.contour_threshold,
        }
    }

    pub fn walk_params(&self) -> WalkParams {
        WalkParams {
            alpha: self.walk_alpha,
            beta: self.walk_beta,
            iterations: self.walk_iterations,
            keep_fraction: self.keep_fraction,
            include_self: self.walk_include_self,
        }
    }

    pub fn tv_params(&self) -> TvParams {
        TvParams {
            weight_mode: self.seg_weight_mode,
            tol: self.seg_tol,
            max_iter: self.seg_max_iter,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load_str(text: &str) -> Result<RunConfig> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, text).unwrap();
        RunConfig::load(&path)
    }

    #[test]
    fn defaults_match_documented_values() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.f, 5);
        assert_eq!(cfg.k, 20);
        assert_eq!(cfg.nms_threshold, 0.8);
        assert_eq!(cfg.kappa, 1.5);
        assert_eq!(cfg.sigma, 1.0);
        assert_eq!(cfg.walk_beta, 0.85);
        assert_eq!(cfg.keep_fraction, 0.8);
        assert_eq!(cfg.weights(), ScoreWeights::default());
    }

    #[test]
    fn file_values_and_comments() {
        let cfg = load_str("# comment\nf = 3\nk = 7\nmotion_scales = 0.2, 0.5\n").unwrap();
        assert_eq!(cfg.f, 3);
        assert_eq!(cfg.k, 7);
        assert_eq!(cfg.motion_scales, vec![0.2, 0.5]);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = load_str("nms_treshold = 0.5\n").unwrap_err().to_string();
        assert!(err.contains("unknown key"), "{err}");
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let err = load_str("k = 5\nk = 6\n").unwrap_err().to_string();
        assert!(err.contains("duplicate"), "{err}");
    }

    #[test]
    fn range_violations_are_rejected() {
        assert!(load_str("nms_threshold = 0\n").is_err());
        assert!(load_str("walk_beta = 1.0\n").is_err());
        assert!(load_str("keep_fraction = 1.5\n").is_err());
        assert!(load_str("f = 0\n").is_err());
        assert!(load_str("kappa = -1\n").is_err());
    }

    #[test]
    fn overrides_win_over_file() {
        let mut cfg = load_str("k = 7\n").unwrap();
        cfg.apply_overrides(&[("k".into(), "9".into())]).unwrap();
        assert_eq!(cfg.k, 9);
        assert!(cfg
            .apply_overrides(&[("bogus".into(), "1".into())])
            .is_err());
    }

    #[test]
    fn sentinel_values_for_auto_knobs() {
        let cfg = load_str("contour_threshold = 2.5\nwalk_alpha = median\n").unwrap();
        assert_eq!(cfg.contour_threshold, Some(2.5));
        assert_eq!(cfg.walk_alpha, None);
        let cfg = load_str("contour_threshold = otsu\nwalk_alpha = 0.3\n").unwrap();
        assert_eq!(cfg.contour_threshold, None);
        assert_eq!(cfg.walk_alpha, Some(0.3));
    }
}
