//! Versioned text checkpoints.
//!
//! ```text
//! gapcast-checkpoint v1
//! encoder dual
//! decoder degd
//! hidden 7
//! layers 1
//! exo_dim 1
//! endo_dim 1
//! position_feature false
//! empty_input reject
//! input_mean 0.98 1.02
//! tensor enc1.l0.w_z 7 2
//! <one line per row, values separated by spaces>
//! ...
//! end
//! ```
//!
//! Tensors appear in the model's parameter order. Values use the shortest
//! decimal form that parses back to the same `f64`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{DecoderVariant, EmptyInputPolicy, EncoderKind, ModelConfig, Seq2Seq};
use crate::param::Parameterized;
use crate::tensor::Matrix;

pub const MAGIC: &str = "gapcast-checkpoint";
pub const VERSION: u32 = 1;

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

pub fn to_string(model: &Seq2Seq) -> String {
    let c = &model.config;
    let mut out = format!("{MAGIC} v{VERSION}\n");
    let _ = writeln!(out, "encoder {}", c.encoder.tag());
    let _ = writeln!(out, "decoder {}", c.decoder.tag());
    let _ = writeln!(out, "hidden {}", c.hidden);
    let _ = writeln!(out, "layers {}", c.layers);
    let _ = writeln!(out, "exo_dim {}", c.exo_dim);
    let _ = writeln!(out, "endo_dim {}", c.endo_dim);
    let _ = writeln!(out, "position_feature {}", c.position_feature);
    let empty = match c.empty_input {
        EmptyInputPolicy::Reject => "reject",
        EmptyInputPolicy::ZeroState => "zero_state",
    };
    let _ = writeln!(out, "empty_input {empty}");
    let _ = writeln!(out, "input_mean {}", join(&model.input_mean));
    for (name, p) in model.params() {
        let (r, cols) = p.value.shape();
        let _ = writeln!(out, "tensor {name} {r} {cols}");
        for i in 0..r {
            let _ = writeln!(out, "{}", join(p.value.row(i)));
        }
    }
    out.push_str("end\n");
    out
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn parse_floats(line: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| bad(format!("bad number `{t}`"))))
        .collect()
}

pub fn from_str(text: &str) -> Result<Seq2Seq> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty checkpoint"))?;
    let version = header
        .strip_prefix(MAGIC)
        .and_then(|v| v.trim().strip_prefix('v'))
        .ok_or_else(|| bad(format!("not a checkpoint: `{header}`")))?;
    if version != VERSION.to_string() {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }

    let mut field = |key: &str| -> Result<String> {
        let line = lines.next().ok_or_else(|| bad(format!("missing `{key}`")))?;
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .map(str::to_string)
            .ok_or_else(|| bad(format!("expected `{key}`, found `{line}`")))
    };
    let num = |s: String, key: &str| s.parse::<usize>().map_err(|_| bad(format!("bad {key} `{s}`")));
    let encoder: EncoderKind = field("encoder")?.parse().map_err(|_| bad("bad encoder"))?;
    let decoder: DecoderVariant = field("decoder")?.parse().map_err(|_| bad("bad decoder"))?;
    let hidden = num(field("hidden")?, "hidden")?;
    let layers = num(field("layers")?, "layers")?;
    let exo_dim = num(field("exo_dim")?, "exo_dim")?;
    let endo_dim = num(field("endo_dim")?, "endo_dim")?;
    let position_feature = match field("position_feature")?.as_str() {
        "true" => true,
        "false" => false,
        other => return Err(bad(format!("bad position_feature `{other}`"))),
    };
    let empty_input = match field("empty_input")?.as_str() {
        "reject" => EmptyInputPolicy::Reject,
        "zero_state" => EmptyInputPolicy::ZeroState,
        other => return Err(bad(format!("bad empty_input `{other}`"))),
    };
    let input_mean = parse_floats(&field("input_mean")?)?;

    let config = ModelConfig {
        encoder,
        decoder,
        hidden,
        layers,
        exo_dim,
        endo_dim,
        position_feature,
        empty_input,
    };
    let mut model = Seq2Seq::new(config, 0).map_err(|e| bad(format!("invalid model settings: {e}")))?;
    model
        .set_input_mean(input_mean)
        .map_err(|e| bad(format!("input mean: {e}")))?;

    let expected: Vec<(String, (usize, usize))> = model
        .params()
        .into_iter()
        .map(|(n, p)| (n, p.value.shape()))
        .collect();
    let mut values = Vec::with_capacity(expected.len());
    for (name, (rows, cols)) in &expected {
        let line = lines.next().ok_or_else(|| bad(format!("missing tensor {name}")))?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "tensor" {
            return Err(bad(format!("expected tensor header, found `{line}`")));
        }
        if parts[1] != name || parts[2] != rows.to_string() || parts[3] != cols.to_string() {
            return Err(bad(format!(
                "tensor `{}` {}x{} does not match expected `{name}` {rows}x{cols}",
                parts[1], parts[2], parts[3]
            )));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..*rows {
            let row = parse_floats(lines.next().ok_or_else(|| bad(format!("truncated tensor {name}")))?)?;
            if row.len() != *cols {
                return Err(bad(format!("tensor {name}: row of {} values, expected {cols}", row.len())));
            }
            data.extend(row);
        }
        values.push(Matrix::from_vec(*rows, *cols, data)?);
    }
    if lines.next() != Some("end") {
        return Err(bad("missing `end` marker"));
    }
    for (p, v) in model.params_mut().into_iter().zip(values) {
        p.value = v;
    }
    Ok(model)
}

pub fn save(model: &Seq2Seq, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_string(model))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Seq2Seq> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
    from_str(&text)
}
