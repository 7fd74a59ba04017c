//! Series ingestion, synthetic block masking, total variation, windowing and
//! per-series scaling.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{encode_window, Tick, Window};
use crate::error::{Error, Result};
use crate::model::ForecastExample;

/// One series on consecutive integer ticks `first_tick, first_tick + 1, ...`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRecord {
    pub id: String,
    pub first_tick: i64,
    pub ticks: Vec<Tick>,
}

impl SeriesRecord {
    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    pub fn mask(&self) -> Vec<bool> {
        self.ticks.iter().map(Tick::is_observed).collect()
    }

    pub fn missing_fraction(&self) -> f64 {
        if self.ticks.is_empty() {
            return 0.0;
        }
        self.ticks.iter().filter(|t| !t.is_observed()).count() as f64 / self.len() as f64
    }

    /// Dimensions `(exo, endo)` of the first observed tick.
    pub fn dims(&self) -> Option<(usize, usize)> {
        self.ticks.iter().find_map(|t| match (&t.x, &t.y) {
            (Some(x), Some(y)) => Some((x.len(), y.len())),
            _ => None,
        })
    }

    /// Endogenous component `c` per tick.
    pub fn y_component(&self, c: usize) -> Vec<Option<f64>> {
        self.ticks
            .iter()
            .map(|t| t.y.as_ref().map(|y| y[c]))
            .collect()
    }

    /// The first `n` ticks.
    pub fn head(&self, n: usize) -> Self {
        Self {
            id: self.id.clone(),
            first_tick: self.first_tick,
            ticks: self.ticks[..n.min(self.len())].to_vec(),
        }
    }

    /// Ticks `start .. start + len` (0-based) as a window.
    pub fn window(&self, start: usize, len: usize) -> Window {
        Window::new(self.ticks[start..start + len].to_vec())
    }
}

/// Column mapping for the series CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub id_column: String,
    pub tick_column: String,
    pub y_columns: Vec<String>,
    /// Empty: every column not named above.
    pub x_columns: Vec<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            id_column: "series_id".into(),
            tick_column: "tick".into(),
            y_columns: vec!["y".into()],
            x_columns: Vec::new(),
        }
    }
}

struct ResolvedColumns {
    id: usize,
    tick: usize,
    y: Vec<usize>,
    x: Vec<usize>,
    x_names: Vec<String>,
}

impl CsvSchema {
    fn resolve(&self, headers: &csv::StringRecord) -> Result<ResolvedColumns> {
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Data(format!("missing column `{name}`")))
        };
        let id = find(&self.id_column)?;
        let tick = find(&self.tick_column)?;
        let y = self.y_columns.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
        let x_names: Vec<String> = if self.x_columns.is_empty() {
            headers
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != id && *i != tick && !y.contains(i))
                .map(|(_, h)| h.trim().to_string())
                .collect()
        } else {
            self.x_columns.clone()
        };
        let x = x_names.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
        if y.is_empty() || x.is_empty() {
            return Err(Error::Data(
                "need at least one endogenous and one exogenous column".into(),
            ));
        }
        Ok(ResolvedColumns {
            id,
            tick,
            y,
            x,
            x_names,
        })
    }
}

fn parse_values(record: &csv::StringRecord, cols: &[usize], line: u64) -> Result<Option<Vec<f64>>> {
    let cells: Vec<&str> = cols.iter().map(|&c| record.get(c).unwrap_or("").trim()).collect();
    let empty = cells.iter().filter(|c| c.is_empty()).count();
    if empty == cells.len() {
        return Ok(None);
    }
    if empty > 0 {
        return Err(Error::Data(format!("line {line}: partially missing value vector")));
    }
    cells
        .iter()
        .map(|c| match c.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::Data(format!("line {line}: `{c}` is not a finite number"))),
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

/// Reads series from CSV. Empty cells mean missing; ticks are integers and
/// absent ticks inside a series' range are treated as missing. Series keep
/// the order in which they first appear.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<Vec<SeriesRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        log::warn!("empty CSV input");
        return Ok(Vec::new());
    }
    let cols = schema.resolve(&headers)?;

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, BTreeMap<i64, Tick>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec.get(cols.id).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(Error::Data(format!("line {line}: empty series id")));
        }
        let tick_text = rec.get(cols.tick).unwrap_or("").trim();
        let tick: i64 = tick_text
            .parse()
            .map_err(|_| Error::Data(format!("line {line}: tick `{tick_text}` is not an integer")))?;
        let y = parse_values(&rec, &cols.y, line)?;
        let x = parse_values(&rec, &cols.x, line)?;
        if y.is_some() != x.is_some() {
            return Err(Error::Data(format!(
                "line {line}: exogenous and endogenous values must be jointly present or jointly missing"
            )));
        }
        let entry = rows.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            BTreeMap::new()
        });
        if entry.insert(tick, Tick { x, y }).is_some() {
            return Err(Error::Data(format!("line {line}: duplicate tick {tick} for series `{id}`")));
        }
    }
    if order.is_empty() {
        log::warn!("CSV input has a header but no rows");
    }
    log::debug!("exogenous columns: {:?}", cols.x_names);

    Ok(order
        .into_iter()
        .map(|id| {
            let ticks = rows.remove(&id).unwrap_or_default();
            let first_tick = *ticks.keys().next().expect("non-empty");
            let last_tick = *ticks.keys().next_back().expect("non-empty");
            let mut dense = vec![Tick::missing(); (last_tick - first_tick + 1) as usize];
            for (t, v) in ticks {
                dense[(t - first_tick) as usize] = v;
            }
            SeriesRecord {
                id,
                first_tick,
                ticks: dense,
            }
        })
        .collect())
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Vec<SeriesRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    if file.metadata()?.len() == 0 {
        log::warn!("{} is empty", path.display());
        return Ok(Vec::new());
    }
    read_csv(file, schema)
}

/// Writes series in the default schema layout (`series_id,tick,y...,x...`);
/// missing ticks become empty cells. Float formatting round-trips exactly.
pub fn write_csv<W: Write>(writer: W, series: &[SeriesRecord], schema: &CsvSchema) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let (dx, dy) = series.iter().find_map(SeriesRecord::dims).unwrap_or((1, schema.y_columns.len()));
    let x_names: Vec<String> = if schema.x_columns.is_empty() {
        if dx == 1 {
            vec!["x".into()]
        } else {
            (1..=dx).map(|i| format!("x{i}")).collect()
        }
    } else {
        schema.x_columns.clone()
    };
    if x_names.len() != dx || schema.y_columns.len() != dy {
        return Err(Error::Data("schema does not match series dimensions".into()));
    }
    let mut header = vec![schema.id_column.clone(), schema.tick_column.clone()];
    header.extend(schema.y_columns.iter().cloned());
    header.extend(x_names);
    w.write_record(&header)?;
    for s in series {
        for (i, t) in s.ticks.iter().enumerate() {
            let mut row = vec![s.id.clone(), (s.first_tick + i as i64).to_string()];
            match (&t.y, &t.x) {
                (Some(y), Some(x)) => row.extend(y.iter().chain(x).map(|v| v.to_string())),
                _ => row.extend(std::iter::repeat(String::new()).take(dx + dy)),
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(path: impl AsRef<Path>, series: &[SeriesRecord], schema: &CsvSchema) -> Result<()> {
    write_csv(std::fs::File::create(path)?, series, schema)
}

/// Synthetic block masking parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskingConfig {
    /// Heads probability before the first masked run.
    pub q0: f64,
    /// Candidate run widths, sampled uniformly.
    pub widths: Vec<usize>,
    pub seed: u64,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        Self {
            q0: 0.05,
            widths: (30..=40).collect(),
            seed: 0,
        }
    }
}

impl MaskingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.q0) {
            return Err(Error::Usage(format!("q0 must lie in [0, 1], got {}", self.q0)));
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Usage("mask widths must be a non-empty set of positive integers".into()));
        }
        Ok(())
    }
}

/// Masked runs produced by [`synthetic_mask`], as 0-based `(start, width)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MaskReport {
    pub runs: Vec<(usize, usize)>,
    /// Width sampled for the last run when it was cut short by the series end.
    pub truncated_from: Option<usize>,
}

/// FNV-1a, used to derive per-series seeds that do not depend on the
/// standard library's hasher.
pub fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

pub fn series_seed(master: u64, series_id: &str) -> u64 {
    master ^ stable_hash(series_id)
}

/// Block masking by a coin with adaptive heads probability.
///
/// The scan starts with `q = q0`. On heads at tick `t` a width `w` is drawn
/// uniformly from `cfg.widths`, ticks `t .. t + w` are masked (cut at the
/// series end), the tick after the run is kept, and `q` becomes `1 / w`. On
/// tails the scan moves one tick. The next run therefore starts on average
/// `w` kept ticks later, which gives about half the series missing.
pub fn synthetic_mask(s: &SeriesRecord, cfg: &MaskingConfig) -> Result<(SeriesRecord, MaskReport)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(series_seed(cfg.seed, &s.id));
    let n = s.len();
    let mut out = s.clone();
    let mut report = MaskReport::default();
    let mut q = cfg.q0;
    let mut t = 0;
    while t < n {
        if q > 0.0 && rng.gen_bool(q) {
            let w = cfg.widths[rng.gen_range(0..cfg.widths.len())];
            let end = (t + w).min(n);
            for tick in &mut out.ticks[t..end] {
                *tick = Tick::missing();
            }
            if end - t < w {
                report.truncated_from = Some(w);
            }
            report.runs.push((t, end - t));
            q = 1.0 / w as f64;
            t = end + 1;
        } else {
            t += 1;
        }
    }
    Ok((out, report))
}

/// Sum of absolute differences between consecutive observed values.
pub fn total_variation(values: &[Option<f64>]) -> f64 {
    let observed: Vec<f64> = values.iter().flatten().copied().collect();
    if observed.len() < 2 {
        log::warn!("total variation of a series with fewer than two observed points is 0");
        return 0.0;
    }
    observed.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Total variation of the endogenous values, summed over components.
pub fn series_total_variation(s: &SeriesRecord) -> f64 {
    let dy = s.dims().map_or(0, |d| d.1);
    (0..dy).map(|c| total_variation(&s.y_component(c))).sum()
}

/// Indices of the top `fraction` of series by total variation, highest
/// first. At least one series is returned for a non-empty input.
pub fn rank_by_total_variation(series: &[SeriesRecord], fraction: f64) -> Vec<usize> {
    let mut scored: Vec<(usize, f64)> = series
        .iter()
        .enumerate()
        .map(|(i, s)| (i, series_total_variation(s)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let keep = ((series.len() as f64 * fraction).ceil() as usize).clamp(usize::from(!series.is_empty()), series.len());
    scored.into_iter().take(keep).map(|(i, _)| i).collect()
}

/// Examples cut from one series.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExampleSet {
    pub examples: Vec<ForecastExample>,
    /// Windows dropped because their input had no available point.
    pub dropped_empty: usize,
}

/// The example whose input window starts at `origin` (0-based), or `None`
/// when the input window has no available point.
pub fn example_at(
    s: &SeriesRecord,
    series_index: usize,
    origin: usize,
    in_len: usize,
    out_len: usize,
) -> Result<Option<ForecastExample>> {
    if in_len == 0 || out_len == 0 {
        return Err(Error::Usage("window lengths must be positive".into()));
    }
    if origin + in_len + out_len > s.len() {
        return Err(Error::Usage(format!(
            "window at {origin} of {in_len}+{out_len} ticks exceeds series `{}` of length {}",
            s.id,
            s.len()
        )));
    }
    let input = encode_window(&s.window(origin, in_len))?;
    if input.available.is_empty() {
        return Ok(None);
    }
    let future = &s.ticks[origin + in_len..origin + in_len + out_len];
    Ok(Some(ForecastExample {
        input,
        future_exo: future.iter().map(|t| t.x.clone()).collect(),
        targets: future.iter().map(|t| t.y.clone()).collect(),
        series: series_index,
        origin,
    }))
}

/// Sliding windows with the given stride over the whole series.
pub fn make_examples(
    s: &SeriesRecord,
    series_index: usize,
    in_len: usize,
    out_len: usize,
    stride: usize,
) -> Result<ExampleSet> {
    if stride == 0 {
        return Err(Error::Usage("stride must be positive".into()));
    }
    if in_len + out_len > s.len() {
        return Err(Error::Usage(format!(
            "series `{}` has {} ticks, fewer than {in_len}+{out_len}",
            s.id,
            s.len()
        )));
    }
    let mut set = ExampleSet::default();
    for origin in (0..=s.len() - in_len - out_len).step_by(stride) {
        match example_at(s, series_index, origin, in_len, out_len)? {
            Some(ex) => set.examples.push(ex),
            None => set.dropped_empty += 1,
        }
    }
    Ok(set)
}

/// Per-series scale factors for each endogenous and exogenous component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesScale {
    pub y: Vec<f64>,
    pub x: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScalingProfile {
    pub scales: BTreeMap<String, SeriesScale>,
}

fn mean_abs(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v.abs(), n + 1));
    match n {
        0 => None,
        _ if sum == 0.0 => Some(1.0),
        _ => Some(sum / n as f64),
    }
}

/// Scale = mean absolute observed value per series and component, computed
/// on the given (training) records; 1.0 when that mean is zero.
pub fn fit_scaling(train: &[SeriesRecord]) -> Result<ScalingProfile> {
    let mut profile = ScalingProfile::default();
    for s in train {
        let (dx, dy) = s
            .dims()
            .ok_or_else(|| Error::Scaling(format!("series `{}` has no observed training value", s.id)))?;
        let observed: Vec<(&Vec<f64>, &Vec<f64>)> = s
            .ticks
            .iter()
            .filter_map(|t| Some((t.x.as_ref()?, t.y.as_ref()?)))
            .collect();
        let y = (0..dy)
            .map(|c| mean_abs(observed.iter().map(|(_, y)| y[c])).unwrap_or(1.0))
            .collect();
        let x = (0..dx)
            .map(|c| mean_abs(observed.iter().map(|(x, _)| x[c])).unwrap_or(1.0))
            .collect();
        profile.scales.insert(s.id.clone(), SeriesScale { y, x });
    }
    Ok(profile)
}

impl ScalingProfile {
    pub fn get(&self, series_id: &str) -> Result<&SeriesScale> {
        self.scales
            .get(series_id)
            .ok_or_else(|| Error::Scaling(format!("series `{series_id}` is not in the scaling profile")))
    }

    /// Divides every value of the series by its scales.
    pub fn apply(&self, s: &SeriesRecord) -> Result<SeriesRecord> {
        let sc = self.get(&s.id)?;
        let mut out = s.clone();
        for t in &mut out.ticks {
            if let Some(y) = &mut t.y {
                y.iter_mut().zip(&sc.y).for_each(|(v, k)| *v /= k);
            }
            if let Some(x) = &mut t.x {
                x.iter_mut().zip(&sc.x).for_each(|(v, k)| *v /= k);
            }
        }
        Ok(out)
    }

    /// Multiplies endogenous values (e.g. model output) back to series units.
    pub fn invert_y(&self, series_id: &str, y: &[f64]) -> Result<Vec<f64>> {
        let sc = self.get(series_id)?;
        Ok(y.iter().zip(&sc.y).map(|(v, k)| v * k).collect())
    }

    /// Text form: one line per series, `id<TAB>y=s1,s2<TAB>x=s1,...`.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        self.scales
            .iter()
            .map(|(id, s)| format!("{id}\ty={}\tx={}\n", join(&s.y), join(&s.x)))
            .collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let parse_list = |field: &str, prefix: &str| -> Result<Vec<f64>> {
            field
                .strip_prefix(prefix)
                .ok_or_else(|| Error::Scaling(format!("expected `{prefix}` in `{field}`")))?
                .split(',')
                .map(|v| {
                    v.parse::<f64>()
                        .ok()
                        .filter(|k| *k > 0.0 && k.is_finite())
                        .ok_or_else(|| Error::Scaling(format!("bad scale `{v}`")))
                })
                .collect()
        };
        let mut profile = Self::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Scaling(format!("malformed scaling line `{line}`")));
            }
            profile.scales.insert(
                fields[0].to_string(),
                SeriesScale {
                    y: parse_list(fields[1], "y=")?,
                    x: parse_list(fields[2], "x=")?,
                },
            );
        }
        Ok(profile)
    }
}
