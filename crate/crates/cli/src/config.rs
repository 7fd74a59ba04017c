//! `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::Path;

use gapcast::data::{CsvSchema, MaskingConfig};
use gapcast::error::{Error, Result};
use gapcast::evaluation::{BenchmarkConfig, MaseNormalizer, Method};
use gapcast::model::{DecoderVariant, EncoderKind, LossMode};
use gapcast::optim::{OptimizerConfig, OptimizerKind};
use gapcast::synthetic::SyntheticConfig;
use gapcast::train::TrainingConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub schema: CsvSchema,
    pub variant: DecoderVariant,
    pub encoder: EncoderKind,
    pub hidden: usize,
    pub layers: usize,
    pub position_feature: bool,
    pub in_len: usize,
    pub out_len: usize,
    pub stride: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub loss_mode: Option<LossMode>,
    pub patience: Option<usize>,
    pub mask: MaskingConfig,
    pub methods: Vec<Method>,
    pub test_len: usize,
    pub max_test_windows: Option<usize>,
    pub mask_test_region: bool,
    pub mase_normalizer: MaseNormalizer,
    pub method_seeds: BTreeMap<Method, u64>,
    pub synthetic: SyntheticConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let bench = BenchmarkConfig::default();
        Self {
            schema: CsvSchema::default(),
            variant: DecoderVariant::Demi,
            encoder: EncoderKind::Dual,
            hidden: 7,
            layers: 1,
            position_feature: false,
            in_len: 20,
            out_len: 10,
            stride: 1,
            batch_size: 64,
            optimizer: OptimizerKind::Adam,
            lr: 1e-3,
            epochs: 100,
            seed: 0,
            loss_mode: None,
            patience: None,
            mask: MaskingConfig::default(),
            methods: bench.methods,
            test_len: bench.test_len,
            max_test_windows: bench.max_test_windows,
            mask_test_region: bench.mask_test_region,
            mase_normalizer: bench.mase,
            method_seeds: BTreeMap::new(),
            synthetic: SyntheticConfig::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Usage(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Usage(format!("invalid value `{value}` for `{key}`"))),
    }
}

fn parse_opt<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

/// `a..b` (inclusive) or a comma-separated list.
pub fn parse_widths(value: &str) -> Result<Vec<usize>> {
    if let Some((a, b)) = value.split_once("..") {
        let (a, b): (usize, usize) = (parse("mask.widths", a.trim())?, parse("mask.widths", b.trim())?);
        if a > b {
            return Err(Error::Usage(format!("empty width range `{value}`")));
        }
        return Ok((a..=b).collect());
    }
    value
        .split(',')
        .map(|w| parse("mask.widths", w.trim()))
        .collect()
}

fn list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn fmt_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".into(), T::to_string)
}

fn fmt_widths(w: &[usize]) -> String {
    match (w.first(), w.last()) {
        (Some(a), Some(b)) if w.len() > 1 && w.iter().zip(w.iter().skip(1)).all(|(x, y)| y == &(x + 1)) => {
            format!("{a}..{b}")
        }
        _ => w.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "id_column" => self.schema.id_column = value.into(),
            "tick_column" => self.schema.tick_column = value.into(),
            "y_columns" => self.schema.y_columns = list(value),
            "x_columns" => self.schema.x_columns = list(value),
            "variant" => self.variant = parse(key, value)?,
            "encoder" => self.encoder = parse(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "layers" => self.layers = parse(key, value)?,
            "position_feature" => self.position_feature = parse_bool(key, value)?,
            "in_len" => self.in_len = parse(key, value)?,
            "out_len" => self.out_len = parse(key, value)?,
            "stride" => self.stride = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "optimizer" => self.optimizer = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "loss_mode" => self.loss_mode = parse_opt(key, value)?,
            "patience" => self.patience = parse_opt(key, value)?,
            "mask.q0" => self.mask.q0 = parse(key, value)?,
            "mask.widths" => self.mask.widths = parse_widths(value)?,
            "mask.seed" => self.mask.seed = parse(key, value)?,
            "methods" => {
                self.methods = list(value)
                    .iter()
                    .map(|m| m.parse())
                    .collect::<Result<_>>()?
            }
            "test_len" => self.test_len = parse(key, value)?,
            "max_test_windows" => self.max_test_windows = parse_opt(key, value)?,
            "mask_test_region" => self.mask_test_region = parse_bool(key, value)?,
            "mase_normalizer" => self.mase_normalizer = parse(key, value)?,
            "synthetic.series" => self.synthetic.series = parse(key, value)?,
            "synthetic.length" => self.synthetic.length = parse(key, value)?,
            "synthetic.period" => self.synthetic.period = parse(key, value)?,
            "synthetic.noise" => self.synthetic.noise = parse(key, value)?,
            "synthetic.promo_rate" => self.synthetic.promo_rate = parse(key, value)?,
            "synthetic.seed" => self.synthetic.seed = parse(key, value)?,
            _ => match key.strip_prefix("method_seed.") {
                Some(m) => {
                    self.method_seeds.insert(m.parse()?, parse(key, value)?);
                }
                None => return Err(Error::Usage(format!("unknown config key `{key}`"))),
            },
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("config line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
            cfg.apply_text(&text)?;
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("override `{o}` is not key=value")))?;
            cfg.set(k.trim(), v)?;
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut lines = vec![
            format!("id_column = {}", self.schema.id_column),
            format!("tick_column = {}", self.schema.tick_column),
            format!("y_columns = {}", self.schema.y_columns.join(",")),
            format!("x_columns = {}", self.schema.x_columns.join(",")),
            format!("variant = {}", self.variant.tag()),
            format!("encoder = {}", self.encoder.tag()),
            format!("hidden = {}", self.hidden),
            format!("layers = {}", self.layers),
            format!("position_feature = {}", self.position_feature),
            format!("in_len = {}", self.in_len),
            format!("out_len = {}", self.out_len),
            format!("stride = {}", self.stride),
            format!("batch_size = {}", self.batch_size),
            format!("optimizer = {}", self.optimizer),
            format!("lr = {}", self.lr),
            format!("epochs = {}", self.epochs),
            format!("seed = {}", self.seed),
            format!(
                "loss_mode = {}",
                self.loss_mode.map_or("none", |m| match m {
                    LossMode::ObservedOnly => "observed_only",
                    LossMode::ImputedTargets => "imputed_targets",
                })
            ),
            format!("patience = {}", fmt_opt(&self.patience)),
            format!("mask.q0 = {}", self.mask.q0),
            format!("mask.widths = {}", fmt_widths(&self.mask.widths)),
            format!("mask.seed = {}", self.mask.seed),
            format!(
                "methods = {}",
                self.methods.iter().map(Method::tag).collect::<Vec<_>>().join(",")
            ),
            format!("test_len = {}", self.test_len),
            format!("max_test_windows = {}", fmt_opt(&self.max_test_windows)),
            format!("mask_test_region = {}", self.mask_test_region),
            format!(
                "mase_normalizer = {}",
                match self.mase_normalizer {
                    MaseNormalizer::PerStep => "per_step",
                    MaseNormalizer::LagK => "lag_k",
                }
            ),
            format!("synthetic.series = {}", self.synthetic.series),
            format!("synthetic.length = {}", self.synthetic.length),
            format!("synthetic.period = {}", self.synthetic.period),
            format!("synthetic.noise = {}", self.synthetic.noise),
            format!("synthetic.promo_rate = {}", self.synthetic.promo_rate),
            format!("synthetic.seed = {}", self.synthetic.seed),
        ];
        lines.extend(
            self.method_seeds
                .iter()
                .map(|(m, s)| format!("method_seed.{} = {s}", m.tag())),
        );
        lines.join("\n") + "\n"
    }

    pub fn training(&self) -> TrainingConfig {
        TrainingConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            optimizer: match self.optimizer {
                OptimizerKind::Adam => OptimizerConfig::adam(self.lr),
                OptimizerKind::RmsProp => OptimizerConfig::rmsprop(self.lr),
            },
            seed: self.seed,
            loss_mode: self.loss_mode,
            patience: self.patience,
        }
    }

    pub fn benchmark(&self) -> BenchmarkConfig {
        BenchmarkConfig {
            methods: self.methods.clone(),
            in_len: self.in_len,
            out_len: self.out_len,
            test_len: self.test_len,
            max_test_windows: self.max_test_windows,
            train_stride: self.stride,
            hidden: self.hidden,
            layers: self.layers,
            training: self.training(),
            masking: Some(self.mask.clone()),
            mask_test_region: self.mask_test_region,
            method_masking_seeds: self.method_seeds.clone(),
            mase: self.mase_normalizer,
        }
    }
}
