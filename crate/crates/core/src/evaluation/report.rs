//! Benchmark report assembly and rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::metrics::{welch_t_test, WelchTest};
use crate::model::DecoderVariant;

/// A forecasting method compared by the benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "DEMI")]
    Demi,
    #[serde(rename = "DEGD")]
    Degd,
    #[serde(rename = "DEVL")]
    VariableLength,
    #[serde(rename = "DEBM")]
    BinaryMask,
    #[serde(rename = "BEDXM")]
    Bedxm,
    #[serde(rename = "BEDXL")]
    Bedxl,
    #[serde(rename = "GRUD_FULL")]
    GrudFull,
    #[serde(rename = "COPY_PREVIOUS")]
    CopyPrevious,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Demi,
        Method::Degd,
        Method::VariableLength,
        Method::BinaryMask,
        Method::Bedxm,
        Method::Bedxl,
        Method::GrudFull,
        Method::CopyPrevious,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Method::Demi => "DEMI",
            Method::Degd => "DEGD",
            Method::VariableLength => "DEVL",
            Method::BinaryMask => "DEBM",
            Method::Bedxm => "BEDXM",
            Method::Bedxl => "BEDXL",
            Method::GrudFull => "GRUD_FULL",
            Method::CopyPrevious => "COPY_PREVIOUS",
        }
    }

    /// Dual-encoder decoder variant, for the proposed methods.
    pub fn dual_variant(&self) -> Option<DecoderVariant> {
        match self {
            Method::Demi => Some(DecoderVariant::Demi),
            Method::Degd => Some(DecoderVariant::Degd),
            Method::VariableLength => Some(DecoderVariant::VariableLength),
            Method::BinaryMask => Some(DecoderVariant::BinaryMask),
            _ => None,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == up)
            .ok_or_else(|| Error::Usage(format!("unknown method `{s}`")))
    }
}

/// Settings every compared method must share.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitProtocol {
    pub masking_seed: Option<u64>,
    pub in_len: usize,
    pub out_len: usize,
    pub test_len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowScore {
    /// 0-based first input tick.
    pub origin: usize,
    pub mase: Option<f64>,
    pub mape: Option<f64>,
    pub zero_actuals: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesScores {
    pub series_id: String,
    pub windows: Vec<WindowScore>,
}

impl SeriesScores {
    pub fn mean_mase(&self) -> Option<f64> {
        mean(self.windows.iter().filter_map(|w| w.mase))
    }

    pub fn mean_mape(&self) -> Option<f64> {
        mean(self.windows.iter().filter_map(|w| w.mape))
    }
}

/// Test-window scores of one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodScores {
    pub method: Method,
    pub protocol: SplitProtocol,
    pub series: Vec<SeriesScores>,
    /// Final training loss, for trained methods.
    pub final_train_loss: Option<f64>,
}

fn mean(it: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub max: f64,
    pub avg: f64,
    pub min: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        Some(Self {
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            avg: values.iter().sum::<f64>() / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub series_id: String,
    /// Aligned with [`EvalReport::methods`].
    pub mase: Vec<Option<f64>>,
    pub mape: Vec<Option<f64>>,
    pub windows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub method: Method,
    pub mase: Option<Summary>,
    pub mape: Option<Summary>,
    pub zero_actuals_excluded: usize,
    pub final_train_loss: Option<f64>,
}

/// Head-to-head counts on per-sequence mean errors. Ties go to the incumbent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub sequences: usize,
    pub challenger_better_pct: f64,
    pub incumbent_better_pct: f64,
    /// Mean of `challenger - incumbent`.
    pub mean_diff: f64,
    /// `(challenger, incumbent)` mean errors where the challenger is better.
    pub when_challenger_better: Option<(f64, f64)>,
    /// `(challenger, incumbent)` mean errors where the incumbent is better or tied.
    pub when_incumbent_better: Option<(f64, f64)>,
}

pub fn compare_pair(challenger: &[f64], incumbent: &[f64]) -> Option<PairStats> {
    if challenger.is_empty() || challenger.len() != incumbent.len() {
        return None;
    }
    let n = challenger.len();
    let (wins, losses): (Vec<(f64, f64)>, Vec<(f64, f64)>) = challenger
        .iter()
        .copied()
        .zip(incumbent.iter().copied())
        .partition(|(c, i)| c < i);
    let cond = |v: &[(f64, f64)]| {
        Some((mean(v.iter().map(|p| p.0))?, mean(v.iter().map(|p| p.1))?))
    };
    let pct = 100.0 * wins.len() as f64 / n as f64;
    Some(PairStats {
        sequences: n,
        challenger_better_pct: pct,
        incumbent_better_pct: 100.0 * losses.len() as f64 / n as f64,
        mean_diff: challenger.iter().zip(incumbent).map(|(c, i)| c - i).sum::<f64>() / n as f64,
        when_challenger_better: cond(&wins),
        when_incumbent_better: cond(&losses),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mase,
    Mape,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseRow {
    pub challenger: Method,
    pub incumbent: Method,
    pub metric: Metric,
    pub stats: Option<PairStats>,
    /// On window-level errors pooled over the relevant sequences.
    pub welch: Option<WelchTest>,
    pub significant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub methods: Vec<Method>,
    pub protocol: SplitProtocol,
    pub tie_rule: String,
    pub alpha: f64,
    pub per_series: Vec<SeriesRow>,
    /// Sequences where at least one method has mean MASE below 1.
    pub relevant: Vec<String>,
    /// Sequences where no method beats copy-previous on MASE.
    pub set_aside: Vec<String>,
    pub aggregates: Vec<MethodAggregate>,
    pub pairwise: Vec<PairwiseRow>,
}

pub const TIE_RULE: &str = "ties are credited to the incumbent (the method listed later)";
pub const ALPHA: f64 = 0.05;

/// Builds the report. Methods are compared pairwise in list order: the
/// earlier method is the challenger, the later one the incumbent.
pub fn build_report(results: &[MethodScores]) -> Result<EvalReport> {
    let first = results
        .first()
        .ok_or_else(|| Error::Protocol("no method results to report".into()))?;
    for r in results {
        if r.protocol != first.protocol {
            return Err(Error::Protocol(format!(
                "{} was run with {:?}, {} with {:?}",
                r.method, r.protocol, first.method, first.protocol
            )));
        }
        let same_windows = r.series.len() == first.series.len()
            && r.series.iter().zip(&first.series).all(|(a, b)| {
                a.series_id == b.series_id
                    && a.windows.len() == b.windows.len()
                    && a.windows.iter().zip(&b.windows).all(|(x, y)| x.origin == y.origin)
            });
        if !same_windows {
            return Err(Error::Protocol(format!(
                "{} and {} were scored on different test windows",
                r.method, first.method
            )));
        }
    }
    for (i, r) in results.iter().enumerate() {
        if results[..i].iter().any(|o| o.method == r.method) {
            return Err(Error::Protocol(format!("{} listed twice", r.method)));
        }
    }

    let methods: Vec<Method> = results.iter().map(|r| r.method).collect();
    let per_series: Vec<SeriesRow> = (0..first.series.len())
        .map(|s| SeriesRow {
            series_id: first.series[s].series_id.clone(),
            mase: results.iter().map(|r| r.series[s].mean_mase()).collect(),
            mape: results.iter().map(|r| r.series[s].mean_mape()).collect(),
            windows: first.series[s].windows.len(),
        })
        .collect();
    let is_relevant: Vec<bool> = per_series
        .iter()
        .map(|row| row.mase.iter().flatten().any(|m| *m < 1.0))
        .collect();
    let ids = |keep: bool| {
        per_series
            .iter()
            .zip(&is_relevant)
            .filter(|(_, r)| **r == keep)
            .map(|(row, _)| row.series_id.clone())
            .collect::<Vec<_>>()
    };
    let (relevant, set_aside) = (ids(true), ids(false));

    let column = |m: usize, metric: Metric| -> Vec<Option<f64>> {
        per_series
            .iter()
            .zip(&is_relevant)
            .filter(|(_, r)| **r)
            .map(|(row, _)| match metric {
                Metric::Mase => row.mase[m],
                Metric::Mape => row.mape[m],
            })
            .collect()
    };
    let aggregates = results
        .iter()
        .enumerate()
        .map(|(m, r)| MethodAggregate {
            method: r.method,
            mase: Summary::of(&column(m, Metric::Mase).into_iter().flatten().collect::<Vec<_>>()),
            mape: Summary::of(&column(m, Metric::Mape).into_iter().flatten().collect::<Vec<_>>()),
            zero_actuals_excluded: r.series.iter().flat_map(|s| &s.windows).map(|w| w.zero_actuals).sum(),
            final_train_loss: r.final_train_loss,
        })
        .collect();

    let window_pool = |m: usize, metric: Metric| -> Vec<f64> {
        results[m]
            .series
            .iter()
            .zip(&is_relevant)
            .filter(|(_, r)| **r)
            .flat_map(|(s, _)| &s.windows)
            .filter_map(|w| match metric {
                Metric::Mase => w.mase,
                Metric::Mape => w.mape,
            })
            .collect()
    };
    let mut pairwise = Vec::new();
    for c in 0..results.len() {
        for i in c + 1..results.len() {
            for metric in [Metric::Mase, Metric::Mape] {
                let (a, b): (Vec<f64>, Vec<f64>) = column(c, metric)
                    .into_iter()
                    .zip(column(i, metric))
                    .filter_map(|(x, y)| Some((x?, y?)))
                    .unzip();
                let welch = welch_t_test(&window_pool(c, metric), &window_pool(i, metric));
                pairwise.push(PairwiseRow {
                    challenger: methods[c],
                    incumbent: methods[i],
                    metric,
                    stats: compare_pair(&a, &b),
                    welch,
                    significant: welch.is_some_and(|w| w.significant(ALPHA)),
                });
            }
        }
    }

    Ok(EvalReport {
        methods,
        protocol: first.protocol.clone(),
        tie_rule: TIE_RULE.into(),
        alpha: ALPHA,
        per_series,
        relevant,
        set_aside,
        aggregates,
        pairwise,
    })
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.prec$}"))
}

impl EvalReport {
    pub fn aggregate(&self, m: Method) -> Option<&MethodAggregate> {
        self.aggregates.iter().find(|a| a.method == m)
    }

    pub fn pair(&self, challenger: Method, incumbent: Method, metric: Metric) -> Option<&PairwiseRow> {
        self.pairwise
            .iter()
            .find(|p| p.challenger == challenger && p.incumbent == incumbent && p.metric == metric)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Per-sequence metrics as `series_id,method,mase,mape,windows`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("series_id,method,mase,mape,windows\n");
        for row in &self.per_series {
            for (m, method) in self.methods.iter().enumerate() {
                let cell = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    row.series_id,
                    method,
                    cell(row.mase[m]),
                    cell(row.mape[m]),
                    row.windows
                );
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let p = &self.protocol;
        let _ = writeln!(
            out,
            "input window {}, horizon {}, test region {} ticks, masking seed {}",
            p.in_len,
            p.out_len,
            p.test_len,
            p.masking_seed.map_or_else(|| "none".into(), |s| s.to_string())
        );
        let _ = writeln!(out, "\nper-sequence mean MASE / MAPE");
        let _ = write!(out, "{:<16}", "series");
        for m in &self.methods {
            let _ = write!(out, "{:>22}", m.tag());
        }
        out.push('\n');
        for row in &self.per_series {
            let _ = write!(out, "{:<16}", row.series_id);
            for m in 0..self.methods.len() {
                let _ = write!(out, "{:>22}", format!("{} / {}", opt(row.mase[m], 3), opt(row.mape[m], 1)));
            }
            out.push('\n');
        }

        let _ = writeln!(
            out,
            "\n{} relevant sequences (some method has MASE < 1), {} set aside",
            self.relevant.len(),
            self.set_aside.len()
        );
        if !self.set_aside.is_empty() {
            let _ = writeln!(out, "set aside: {}", self.set_aside.join(", "));
        }
        let _ = writeln!(
            out,
            "\n{:<16}{:>9}{:>9}{:>9}{:>10}{:>10}{:>10}",
            "method", "MASE max", "avg", "min", "MAPE max", "avg", "min"
        );
        for a in &self.aggregates {
            let f = |s: Option<Summary>, prec: usize| {
                s.map_or(["-".to_string(), "-".to_string(), "-".to_string()], |s| {
                    [format!("{:.prec$}", s.max), format!("{:.prec$}", s.avg), format!("{:.prec$}", s.min)]
                })
            };
            let [a1, a2, a3] = f(a.mase, 3);
            let [b1, b2, b3] = f(a.mape, 1);
            let _ = writeln!(out, "{:<16}{a1:>9}{a2:>9}{a3:>9}{b1:>10}{b2:>10}{b3:>10}", a.method.tag());
        }

        if !self.pairwise.is_empty() {
            let _ = writeln!(out, "\npairwise ({}; significance at {})", self.tie_rule, self.alpha);
            let _ = writeln!(
                out,
                "{:<14}{:<14}{:<6}{:>8}{:>8}{:>10}{:>10}{:>5}",
                "challenger", "incumbent", "metric", "wins %", "loses %", "mean diff", "p", "sig"
            );
            for r in &self.pairwise {
                let metric = match r.metric {
                    Metric::Mase => "MASE",
                    Metric::Mape => "MAPE",
                };
                let (w, l, d) = r.stats.map_or(("-".into(), "-".into(), "-".into()), |s| {
                    (
                        format!("{:.1}", s.challenger_better_pct),
                        format!("{:.1}", s.incumbent_better_pct),
                        format!("{:.4}", s.mean_diff),
                    )
                });
                let _ = writeln!(
                    out,
                    "{:<14}{:<14}{:<6}{w:>8}{l:>8}{d:>10}{:>10}{:>5}",
                    r.challenger.tag(),
                    r.incumbent.tag(),
                    metric,
                    r.welch.map_or_else(|| "-".into(), |t| format!("{:.4}", t.p)),
                    if r.significant { "*" } else { "" }
                );
            }
            let _ = writeln!(out, "\nconditional mean MASE (challenger, incumbent)");
            for r in self.pairwise.iter().filter(|r| r.metric == Metric::Mase) {
                let pair = |v: Option<(f64, f64)>| v.map_or_else(|| "-".into(), |(a, b)| format!("({a:.3}, {b:.3})"));
                let (cb, ib) = r
                    .stats
                    .map_or((None, None), |s| (s.when_challenger_better, s.when_incumbent_better));
                let _ = writeln!(
                    out,
                    "{} vs {}: challenger better {}, incumbent better {}",
                    r.challenger.tag(),
                    r.incumbent.tag(),
                    pair(cb),
                    pair(ib)
                );
            }
        }
        out
    }
}
