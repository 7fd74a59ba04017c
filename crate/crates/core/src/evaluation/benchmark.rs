//! End-to-end comparison of forecasting methods on block-masked series.
//!
//! Every series is cut into a training region and a held-out test region of
//! `test_len` ticks at its end. All trained methods share one model across
//! series, fitted on per-series scaled data. Test forecasts start at every
//! tick of the test region (stride 1), are mapped back to series units and
//! scored against the unmasked values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::codec::{encode_window, Tick, Window};
use crate::data::{example_at, fit_scaling, make_examples, synthetic_mask, MaskingConfig, SeriesRecord};
use crate::error::{Error, Result};
use crate::evaluation::impute::{linear_to_mean_fill, mean_fill};
use crate::evaluation::metrics::{copy_previous, mape, mase, MaseNormalizer, MaseScale};
use crate::evaluation::report::{
    build_report, EvalReport, Method, MethodScores, SeriesScores, SplitProtocol, WindowScore,
};
use crate::model::{DecoderVariant, EncoderKind, ForecastExample, ModelConfig, Seq2Seq};
use crate::train::{train, TrainingConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub methods: Vec<Method>,
    pub in_len: usize,
    pub out_len: usize,
    /// Held-out ticks at the end of every series.
    pub test_len: usize,
    /// Cap on test windows per series.
    pub max_test_windows: Option<usize>,
    pub train_stride: usize,
    pub hidden: usize,
    pub layers: usize,
    pub training: TrainingConfig,
    /// `None` evaluates the data as given.
    pub masking: Option<MaskingConfig>,
    /// Also mask the held-out test region. Off: only the training region
    /// is masked and test windows see the data as given.
    pub mask_test_region: bool,
    /// Per-method masking seed overrides. Any difference from the shared
    /// seed makes the report a protocol error.
    pub method_masking_seeds: BTreeMap<Method, u64>,
    pub mase: MaseNormalizer,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Demi, Method::Degd, Method::Bedxm, Method::Bedxl, Method::GrudFull],
            in_len: 20,
            out_len: 10,
            test_len: 120,
            max_test_windows: Some(100),
            train_stride: 1,
            hidden: 7,
            layers: 1,
            training: TrainingConfig::default(),
            masking: Some(MaskingConfig::default()),
            mask_test_region: false,
            method_masking_seeds: BTreeMap::new(),
            mase: MaseNormalizer::PerStep,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkOutcome {
    pub report: EvalReport,
    pub scores: Vec<MethodScores>,
}

/// Masked, scaled data and test windows for one masking seed.
struct Prepared {
    masked: Vec<SeriesRecord>,
    scaled: Vec<SeriesRecord>,
    scaling: crate::data::ScalingProfile,
    train_end: Vec<usize>,
    origins: Vec<Vec<usize>>,
    /// Per series and endogenous component.
    mase_scales: Vec<Vec<MaseScale>>,
    /// Per series: training-region mean of every component, `x ⊕ y`, scaled.
    means: Vec<Vec<f64>>,
}

fn prepare(truth: &[SeriesRecord], cfg: &BenchmarkConfig, masking_seed: Option<u64>) -> Result<Prepared> {
    let mut train_end = Vec::with_capacity(truth.len());
    let mut origins = Vec::with_capacity(truth.len());
    for s in truth {
        let n = s.len();
        if cfg.test_len < cfg.out_len || n < cfg.test_len + cfg.in_len + cfg.out_len {
            return Err(Error::Data(format!(
                "series `{}` ({n} ticks) cannot hold a {}-tick test region after a {}+{} training window",
                s.id, cfg.test_len, cfg.in_len, cfg.out_len
            )));
        }
        let end = n - cfg.test_len;
        train_end.push(end);
        let all = end - cfg.in_len..=n - cfg.in_len - cfg.out_len;
        origins.push(all.take(cfg.max_test_windows.unwrap_or(usize::MAX)).collect());
    }
    let masked: Vec<SeriesRecord> = match (&cfg.masking, masking_seed) {
        (Some(m), Some(seed)) => {
            let m = MaskingConfig { seed, ..m.clone() };
            truth
                .iter()
                .zip(&train_end)
                .map(|(s, &end)| {
                    if cfg.mask_test_region {
                        return synthetic_mask(s, &m).map(|r| r.0);
                    }
                    let mut out = synthetic_mask(&s.head(end), &m)?.0;
                    out.ticks.extend_from_slice(&s.ticks[end..]);
                    Ok(out)
                })
                .collect::<Result<_>>()?
        }
        _ => truth.to_vec(),
    };
    let train_regions: Vec<SeriesRecord> = masked.iter().zip(&train_end).map(|(s, &e)| s.head(e)).collect();
    let scaling = fit_scaling(&train_regions)?;
    let scaled = masked.iter().map(|s| scaling.apply(s)).collect::<Result<Vec<_>>>()?;

    let mase_scales = train_regions
        .iter()
        .map(|s| {
            let dy = s.dims().map_or(0, |d| d.1);
            (0..dy)
                .map(|c| MaseScale::fit(&s.y_component(c), cfg.out_len, cfg.mase))
                .collect()
        })
        .collect();
    let means = scaled
        .iter()
        .zip(&train_end)
        .map(|(s, &e)| component_means(&s.head(e)))
        .collect();
    Ok(Prepared {
        masked,
        scaled,
        scaling,
        train_end,
        origins,
        mase_scales,
        means,
    })
}

fn component_values(s: &SeriesRecord) -> Vec<Vec<Option<f64>>> {
    let (dx, dy) = s.dims().unwrap_or((0, 0));
    (0..dx + dy)
        .map(|c| {
            s.ticks
                .iter()
                .map(|t| match (&t.x, &t.y) {
                    (Some(x), Some(y)) => Some(if c < dx { x[c] } else { y[c - dx] }),
                    _ => None,
                })
                .collect()
        })
        .collect()
}

fn component_means(s: &SeriesRecord) -> Vec<f64> {
    component_values(s)
        .iter()
        .map(|v| {
            let obs: Vec<f64> = v.iter().flatten().copied().collect();
            if obs.is_empty() {
                0.0
            } else {
                obs.iter().sum::<f64>() / obs.len() as f64
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Fill {
    Mean,
    Linear,
}

/// Fully observed copy of `s` with every gap filled per component.
fn impute_record(s: &SeriesRecord, means: &[f64], fill: Fill) -> SeriesRecord {
    let Some((dx, _)) = s.dims() else {
        return s.clone();
    };
    let filled: Vec<Vec<f64>> = component_values(s)
        .iter()
        .zip(means)
        .map(|(v, &m)| match fill {
            Fill::Mean => mean_fill(v, m),
            Fill::Linear => linear_to_mean_fill(v, m),
        })
        .collect();
    let ticks = (0..s.len())
        .map(|t| {
            let all: Vec<f64> = filled.iter().map(|c| c[t]).collect();
            Tick::observed(all[..dx].to_vec(), all[dx..].to_vec())
        })
        .collect();
    SeriesRecord {
        id: s.id.clone(),
        first_tick: s.first_tick,
        ticks,
    }
}

enum Forecaster {
    Model { model: Seq2Seq, fill: Option<Fill> },
    CopyPrevious,
}

fn model_config(method: Method, cfg: &BenchmarkConfig, dx: usize, dy: usize) -> ModelConfig {
    let (encoder, decoder) = match method {
        Method::Bedxm | Method::Bedxl => (EncoderKind::Full, DecoderVariant::Demi),
        Method::GrudFull => (EncoderKind::FullGruD, DecoderVariant::Degd),
        m => (EncoderKind::Dual, m.dual_variant().expect("proposed method")),
    };
    ModelConfig {
        encoder,
        layers: cfg.layers,
        ..ModelConfig::dual(decoder, cfg.hidden, dx, dy)
    }
}

fn build_forecaster(method: Method, prep: &Prepared, cfg: &BenchmarkConfig) -> Result<(Forecaster, Option<f64>)> {
    let fill = match method {
        Method::CopyPrevious => return Ok((Forecaster::CopyPrevious, None)),
        Method::Bedxm => Some(Fill::Mean),
        Method::Bedxl => Some(Fill::Linear),
        _ => None,
    };
    let (dx, dy) = prep
        .scaled
        .iter()
        .find_map(SeriesRecord::dims)
        .ok_or_else(|| Error::Data("no observed values".into()))?;
    let mut examples: Vec<ForecastExample> = Vec::new();
    for (i, s) in prep.scaled.iter().enumerate() {
        let region = s.head(prep.train_end[i]);
        let region = match fill {
            Some(f) => impute_record(&region, &prep.means[i], f),
            None => region,
        };
        examples.extend(make_examples(&region, i, cfg.in_len, cfg.out_len, cfg.train_stride)?.examples);
    }
    let mut model = Seq2Seq::new(model_config(method, cfg, dx, dy), cfg.training.seed)?;
    let report = train(&mut model, &examples, &cfg.training)?;
    log::info!(
        "{method}: {} training examples, final loss {:?}",
        report.used_examples,
        report.final_loss()
    );
    Ok((Forecaster::Model { model, fill }, report.final_loss()))
}

/// Scaled-unit forecast for the window starting at `origin`; `None` when the
/// method cannot forecast it.
fn forecast_window(
    f: &Forecaster,
    prep: &Prepared,
    series: usize,
    origin: usize,
    cfg: &BenchmarkConfig,
) -> Result<Option<Vec<Vec<f64>>>> {
    let s = &prep.scaled[series];
    let start = origin + cfg.in_len;
    match f {
        Forecaster::CopyPrevious => {
            let dy = s.dims().map_or(0, |d| d.1);
            let per_comp: Option<Vec<Vec<f64>>> = (0..dy)
                .map(|c| copy_previous(&s.y_component(c), start, cfg.out_len).ok())
                .collect();
            Ok(per_comp.map(|pc| (0..cfg.out_len).map(|k| pc.iter().map(|c| c[k]).collect()).collect()))
        }
        Forecaster::Model { model, fill: None } => match example_at(s, series, origin, cfg.in_len, cfg.out_len)? {
            Some(ex) => model.forecast(&ex.input, &ex.future_exo).map(Some),
            None => Ok(None),
        },
        Forecaster::Model { model, fill: Some(fill) } => {
            let means = &prep.means[series];
            let past = impute_record(&s.head(start), means, *fill);
            let input = encode_window(&Window::new(past.ticks[origin..start].to_vec()))?;
            let full = impute_record(s, means, *fill);
            let future_exo = full.ticks[start..start + cfg.out_len]
                .iter()
                .map(|t| t.x.clone())
                .collect::<Vec<_>>();
            model.forecast(&input, &future_exo).map(Some)
        }
    }
}

fn score_window(
    preds: Option<Vec<Vec<f64>>>,
    truth: &SeriesRecord,
    prep: &Prepared,
    series: usize,
    origin: usize,
    cfg: &BenchmarkConfig,
) -> Result<WindowScore> {
    let mut score = WindowScore {
        origin,
        mase: None,
        mape: None,
        zero_actuals: 0,
    };
    let Some(preds) = preds else {
        return Ok(score);
    };
    let id = &prep.scaled[series].id;
    let preds = preds
        .iter()
        .map(|p| prep.scaling.invert_y(id, p))
        .collect::<Result<Vec<_>>>()?;
    let start = origin + cfg.in_len;
    let scales = &prep.mase_scales[series];
    let mut mase_sum = 0.0;
    let mut mase_ok = true;
    let mut mape_vals = Vec::new();
    for (c, scale) in scales.iter().enumerate() {
        let p: Vec<f64> = preds.iter().map(|v| v[c]).collect();
        let a: Vec<Option<f64>> = truth.ticks[start..start + cfg.out_len]
            .iter()
            .map(|t| t.y.as_ref().map(|y| y[c]))
            .collect();
        match mase(&p, &a, scale)? {
            Some(m) => mase_sum += m,
            None => mase_ok = false,
        }
        let m = mape(&p, &a)?;
        score.zero_actuals += m.excluded_zero;
        mape_vals.extend(m.value);
    }
    if mase_ok && !scales.is_empty() {
        score.mase = Some(mase_sum / scales.len() as f64);
    }
    if !mape_vals.is_empty() {
        score.mape = Some(mape_vals.iter().sum::<f64>() / mape_vals.len() as f64);
    }
    Ok(score)
}

/// Runs one method on its masking seed and scores its test windows.
pub fn run_method(truth: &[SeriesRecord], method: Method, cfg: &BenchmarkConfig) -> Result<MethodScores> {
    let masking_seed = cfg
        .masking
        .as_ref()
        .map(|m| cfg.method_masking_seeds.get(&method).copied().unwrap_or(m.seed));
    let prep = prepare(truth, cfg, masking_seed)?;
    debug_assert_eq!(prep.masked.len(), truth.len());
    let (forecaster, final_loss) = build_forecaster(method, &prep, cfg)?;
    let series = truth
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let windows = prep.origins[i]
                .iter()
                .map(|&o| {
                    let preds = forecast_window(&forecaster, &prep, i, o, cfg)?;
                    score_window(preds, t, &prep, i, o, cfg)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SeriesScores {
                series_id: t.id.clone(),
                windows,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MethodScores {
        method,
        protocol: SplitProtocol {
            masking_seed,
            in_len: cfg.in_len,
            out_len: cfg.out_len,
            test_len: cfg.test_len,
        },
        series,
        final_train_loss: final_loss,
    })
}

/// Runs every configured method on the same ground truth and builds the
/// report.
pub fn run_benchmark(truth: &[SeriesRecord], cfg: &BenchmarkConfig) -> Result<BenchmarkOutcome> {
    if cfg.methods.is_empty() {
        return Err(Error::Usage("no methods to benchmark".into()));
    }
    if truth.is_empty() {
        return Err(Error::Data("no series to benchmark".into()));
    }
    let scores = cfg
        .methods
        .iter()
        .map(|&m| run_method(truth, m, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchmarkOutcome {
        report: build_report(&scores)?,
        scores,
    })
}
