use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use gapcast::checkpoint;
use gapcast::codec::encode_window;
use gapcast::data::{
    example_at, fit_scaling, load_csv, make_examples, save_csv, synthetic_mask, ScalingProfile, SeriesRecord,
};
use gapcast::error::{Error, Result};
use gapcast::evaluation::run_benchmark;
use gapcast::model::{EmptyInputPolicy, ModelConfig, Seq2Seq};
use gapcast::synthetic::generate;
use gapcast::train::train as fit;

use crate::config::RunConfig;
use crate::ConfigArgs;

fn resolve(args: &ConfigArgs) -> Result<RunConfig> {
    RunConfig::load(args.config.as_deref(), &args.overrides)
}

fn load_series(path: &Path, cfg: &RunConfig) -> Result<Vec<SeriesRecord>> {
    let series = load_csv(path, &cfg.schema)?;
    if series.is_empty() {
        return Err(Error::Data(format!("{} holds no series", path.display())));
    }
    Ok(series)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Data(format!("cannot create {}: {e}", dir.display())))
}

fn with_suffix(path: &Path, suffix: &str) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    s.into()
}

pub fn mask(input: &Path, output: &Path, report: Option<&Path>, args: &ConfigArgs) -> Result<()> {
    let cfg = resolve(args)?;
    cfg.mask.validate()?;
    let series = load_series(input, &cfg)?;
    let mut masked = Vec::with_capacity(series.len());
    let mut text = format!(
        "q0 {}, widths {:?}, seed {}\n\n{:<16}{:>8}{:>10}{:>8}\n",
        cfg.mask.q0, cfg.mask.widths, cfg.mask.seed, "series", "ticks", "missing", "runs"
    );
    let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
    let (mut total, mut missing) = (0usize, 0usize);
    for s in &series {
        let (m, r) = synthetic_mask(s, &cfg.mask)?;
        let n_missing = m.ticks.iter().filter(|t| !t.is_observed()).count();
        total += m.len();
        missing += n_missing;
        for &(_, w) in &r.runs {
            *histogram.entry(w).or_default() += 1;
        }
        let _ = writeln!(
            text,
            "{:<16}{:>8}{:>10.4}{:>8}",
            s.id,
            m.len(),
            m.missing_fraction(),
            r.runs.len()
        );
        masked.push(m);
    }
    let _ = writeln!(
        text,
        "\noverall missing fraction {:.4} ({missing} of {total} ticks)\n\nrun width histogram",
        if total == 0 { 0.0 } else { missing as f64 / total as f64 }
    );
    for (w, c) in &histogram {
        let _ = writeln!(text, "{w:>4} {c}");
    }
    save_csv(output, &masked, &cfg.schema)?;
    write(&report.map_or_else(|| with_suffix(output, ".report.txt"), Path::to_path_buf), &text)?;
    write(&with_suffix(output, ".config.txt"), &cfg.to_text())?;
    print!("{text}");
    Ok(())
}

fn model_config(cfg: &RunConfig, series: &[SeriesRecord]) -> Result<ModelConfig> {
    let (exo_dim, endo_dim) = series
        .iter()
        .find_map(SeriesRecord::dims)
        .ok_or_else(|| Error::Data("no observed tick in the input".into()))?;
    Ok(ModelConfig {
        encoder: cfg.encoder,
        decoder: cfg.variant,
        hidden: cfg.hidden,
        layers: cfg.layers,
        exo_dim,
        endo_dim,
        position_feature: cfg.position_feature,
        empty_input: EmptyInputPolicy::Reject,
    })
}

pub fn train(input: &Path, out_dir: &Path, args: &ConfigArgs) -> Result<()> {
    let cfg = resolve(args)?;
    let series = load_series(input, &cfg)?;
    let scaling = fit_scaling(&series)?;
    let mut examples = Vec::new();
    let mut dropped = 0;
    for (i, s) in series.iter().enumerate() {
        if s.len() < cfg.in_len + cfg.out_len {
            log::warn!("series `{}` is shorter than one window and is skipped", s.id);
            continue;
        }
        let set = make_examples(&scaling.apply(s)?, i, cfg.in_len, cfg.out_len, cfg.stride)?;
        dropped += set.dropped_empty;
        examples.extend(set.examples);
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} windows without available points");
    }
    if examples.is_empty() {
        return Err(Error::Data("no training examples; series are shorter than in_len + out_len".into()));
    }
    let mut model = Seq2Seq::new(model_config(&cfg, &series)?, cfg.seed)?;
    let report = fit(&mut model, &examples, &cfg.training())?;

    create_dir(out_dir)?;
    checkpoint::save(&model, out_dir.join("model.ckpt"))?;
    write(&out_dir.join("scaling.txt"), &scaling.to_text())?;
    let mut trace = String::from("epoch,loss\n");
    for (e, l) in report.loss_trace.iter().enumerate() {
        let _ = writeln!(trace, "{},{l}", e + 1);
    }
    write(&out_dir.join("loss_trace.csv"), &trace)?;
    write(&out_dir.join("config.txt"), &cfg.to_text())?;
    println!(
        "trained {} on {} examples ({} rejected, {} skipped); final loss {}",
        model.config.decoder.tag(),
        report.used_examples,
        report.rejected,
        report.skipped_first_missing,
        report.final_loss().map_or_else(|| "-".into(), |l| l.to_string())
    );
    Ok(())
}

pub fn forecast(
    ckpt: &Path,
    scaling: &Path,
    input: &Path,
    output: &Path,
    at: Option<i64>,
    only: Option<&str>,
    args: &ConfigArgs,
) -> Result<()> {
    let cfg = resolve(args)?;
    let model = checkpoint::load(ckpt)?;
    let profile_text = std::fs::read_to_string(scaling)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", scaling.display())))?;
    let profile = ScalingProfile::from_text(&profile_text)?;
    let series = load_series(input, &cfg)?;
    let selected: Vec<(usize, &SeriesRecord)> = series
        .iter()
        .enumerate()
        .filter(|(_, s)| only.is_none_or(|id| s.id == id))
        .collect();
    if selected.is_empty() {
        return Err(Error::Usage(format!("series `{}` not found", only.unwrap_or_default())));
    }

    let mut header = vec![cfg.schema.id_column.clone(), cfg.schema.tick_column.clone()];
    for y in &cfg.schema.y_columns {
        header.push(format!("{y}_forecast"));
        header.push(format!("{y}_actual"));
    }
    let mut out = header.join(",") + "\n";
    for (i, s) in selected {
        let first = at.map_or(s.len() as i64 - cfg.out_len as i64, |t| t - s.first_tick);
        if first < cfg.in_len as i64 || first + cfg.out_len as i64 > s.len() as i64 {
            return Err(Error::Usage(format!(
                "series `{}`: forecast at tick {} needs {} ticks before and {} ticks from it",
                s.id,
                first + s.first_tick,
                cfg.in_len,
                cfg.out_len
            )));
        }
        let first = first as usize;
        let scaled = profile.apply(s)?;
        let ex = example_at(&scaled, i, first - cfg.in_len, cfg.in_len, cfg.out_len)?.ok_or_else(|| {
            Error::Data(format!("series `{}`: input window has no available points", s.id))
        })?;
        let preds = model.forecast(&ex.input, &ex.future_exo)?;
        for (k, p) in preds.iter().enumerate() {
            let p = profile.invert_y(&s.id, p)?;
            let actual = s.ticks[first + k].y.as_ref();
            let mut row = vec![s.id.clone(), (s.first_tick + (first + k) as i64).to_string()];
            for (c, v) in p.iter().enumerate() {
                row.push(v.to_string());
                row.push(actual.map(|a| a[c].to_string()).unwrap_or_default());
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
    }
    write(output, &out)?;
    write(&with_suffix(output, ".config.txt"), &cfg.to_text())?;
    Ok(())
}

pub fn benchmark(input: Option<&Path>, out_dir: &Path, args: &ConfigArgs) -> Result<()> {
    let cfg = resolve(args)?;
    let truth = match input {
        Some(path) => load_series(path, &cfg)?,
        None => generate(&cfg.synthetic)?,
    };
    let outcome = run_benchmark(&truth, &cfg.benchmark())?;
    create_dir(out_dir)?;
    let text = outcome.report.to_text();
    write(&out_dir.join("report.json"), &outcome.report.to_json()?)?;
    write(&out_dir.join("report.txt"), &text)?;
    write(&out_dir.join("per_series.csv"), &outcome.report.to_csv())?;
    write(&out_dir.join("config.txt"), &cfg.to_text())?;
    print!("{text}");
    Ok(())
}

pub fn encode_inspect(input: &Path, only: Option<&str>, window: usize, args: &ConfigArgs) -> Result<()> {
    let cfg = resolve(args)?;
    let series = load_series(input, &cfg)?;
    let s = match only {
        Some(id) => series
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::Usage(format!("series `{id}` not found")))?,
        None => &series[0],
    };
    if cfg.in_len == 0 || window + cfg.in_len > s.len() {
        return Err(Error::Usage(format!(
            "window {window} of length {} is out of range for series `{}` ({} ticks, {} windows)",
            cfg.in_len,
            s.id,
            s.len(),
            (s.len() + 1).saturating_sub(cfg.in_len)
        )));
    }
    let encoded = encode_window(&s.window(window, cfg.in_len))?;
    println!(
        "series {}, ticks {}..={}",
        s.id,
        s.first_tick + window as i64,
        s.first_tick + (window + cfg.in_len) as i64 - 1
    );
    print!("{encoded}");
    Ok(())
}
