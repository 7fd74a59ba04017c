//! Lossless two-stream encoding of an input window with gaps.
//!
//! A window of `L` ticks is split into
//!
//! * the **available points**, in order of occurrence, each tagged with its
//!   position relative to the window start, and
//! * the **missing blocks**: maximal runs of consecutive missing ticks as
//!   `(start, width)` pairs.
//!
//! The first stream drives encoder 1 and the second drives encoder 2. Neither
//! stream alone determines the window; together they do, so
//! `decode_window(&encode_window(&w)?)? == w` for every valid window.
//!
//! Positions are 1-based ([`POSITION_BASE`]): a block whose first missing tick
//! is the fourth tick of the window has `start == 4`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of the first tick in a window.
pub const POSITION_BASE: usize = 1;

/// One tick of a window. Exogenous and endogenous values are either both
/// present or both absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tick {
    pub x: Option<Vec<f64>>,
    pub y: Option<Vec<f64>>,
}

impl Tick {
    pub fn observed(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self {
            x: Some(x),
            y: Some(y),
        }
    }

    pub fn missing() -> Self {
        Self { x: None, y: None }
    }

    pub fn is_observed(&self) -> bool {
        self.x.is_some() && self.y.is_some()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub ticks: Vec<Tick>,
}

impl Window {
    pub fn new(ticks: Vec<Tick>) -> Self {
        Self { ticks }
    }

    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    pub fn mask(&self) -> Vec<bool> {
        self.ticks.iter().map(Tick::is_observed).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AvailablePoint {
    /// 1-based position within the window.
    pub position: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingBlock {
    /// 1-based position of the first missing tick.
    pub start: usize,
    pub width: usize,
}

impl MissingBlock {
    /// Last missing tick of the block (inclusive).
    pub fn end(&self) -> usize {
        self.start + self.width - 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedWindow {
    pub available: Vec<AvailablePoint>,
    pub blocks: Vec<MissingBlock>,
    pub length: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompressionStats {
    pub enc1_steps: usize,
    pub enc2_steps: usize,
    /// `(enc1_steps + enc2_steps) / L`
    pub ratio: f64,
}

pub fn encode_window(w: &Window) -> Result<EncodedWindow> {
    if w.is_empty() {
        return Err(Error::Data("cannot encode an empty window".into()));
    }
    let mut dims: Option<(usize, usize)> = None;
    let mut available = Vec::new();
    let mut blocks: Vec<MissingBlock> = Vec::new();
    for (i, tick) in w.ticks.iter().enumerate() {
        let position = i + POSITION_BASE;
        match (&tick.x, &tick.y) {
            (Some(x), Some(y)) => {
                match dims {
                    None => dims = Some((x.len(), y.len())),
                    Some(d) if d != (x.len(), y.len()) => {
                        return Err(Error::Data(format!(
                            "tick {position}: value dims ({}, {}) differ from earlier ({}, {})",
                            x.len(),
                            y.len(),
                            d.0,
                            d.1
                        )));
                    }
                    Some(_) => {}
                }
                available.push(AvailablePoint {
                    position,
                    x: x.clone(),
                    y: y.clone(),
                });
            }
            (None, None) => match blocks.last_mut() {
                Some(b) if b.end() + 1 == position => b.width += 1,
                _ => blocks.push(MissingBlock { start: position, width: 1 }),
            },
            _ => {
                return Err(Error::Data(format!(
                    "tick {position}: exogenous and endogenous values must be jointly present or jointly missing"
                )));
            }
        }
    }
    Ok(EncodedWindow {
        available,
        blocks,
        length: w.len(),
    })
}

pub fn decode_window(e: &EncodedWindow) -> Result<Window> {
    e.validate()?;
    let mut ticks = vec![Tick::missing(); e.length];
    for p in &e.available {
        ticks[p.position - POSITION_BASE] = Tick::observed(p.x.clone(), p.y.clone());
    }
    Ok(Window { ticks })
}

pub fn compression_stats(e: &EncodedWindow) -> CompressionStats {
    let enc1_steps = e.available.len();
    let enc2_steps = e.blocks.len();
    CompressionStats {
        enc1_steps,
        enc2_steps,
        ratio: (enc1_steps + enc2_steps) as f64 / e.length as f64,
    }
}

impl EncodedWindow {
    /// Checks ordering, bounds, block maximality and that available
    /// positions and blocks partition `1..=L`.
    pub fn validate(&self) -> Result<()> {
        let l = self.length;
        if l == 0 {
            return Err(Error::Codec("window length must be positive".into()));
        }
        let mut occupied = vec![false; l];
        let mut claim = |pos: usize, what: &str| -> Result<()> {
            if pos < POSITION_BASE || pos >= l + POSITION_BASE {
                return Err(Error::Codec(format!("{what} position {pos} outside 1..={l}")));
            }
            let slot = &mut occupied[pos - POSITION_BASE];
            if *slot {
                return Err(Error::Codec(format!("position {pos} covered twice")));
            }
            *slot = true;
            Ok(())
        };

        for pair in self.available.windows(2) {
            if pair[1].position <= pair[0].position {
                return Err(Error::Codec("available positions must strictly increase".into()));
            }
        }
        if let Some(first) = self.available.first() {
            let d = (first.x.len(), first.y.len());
            if self.available.iter().any(|p| (p.x.len(), p.y.len()) != d) {
                return Err(Error::Codec("available points disagree on dimensions".into()));
            }
        }
        for p in &self.available {
            claim(p.position, "available")?;
        }

        for pair in self.blocks.windows(2) {
            if pair[1].start <= pair[0].end() + 1 {
                return Err(Error::Codec(format!(
                    "blocks at {} and {} overlap or touch",
                    pair[0].start, pair[1].start
                )));
            }
        }
        for b in &self.blocks {
            if b.width == 0 {
                return Err(Error::Codec(format!("zero-width block at {}", b.start)));
            }
            for pos in b.start..b.start + b.width {
                claim(pos, "block")?;
            }
        }
        if let Some(hole) = occupied.iter().position(|o| !o) {
            return Err(Error::Codec(format!(
                "position {} is neither available nor in a block",
                hole + POSITION_BASE
            )));
        }
        Ok(())
    }

    /// Block stream normalised by the window length: `(start / L, width / L)`.
    pub fn block_features(&self) -> Vec<[f64; 2]> {
        let l = self.length as f64;
        self.blocks
            .iter()
            .map(|b| [b.start as f64 / l, b.width as f64 / l])
            .collect()
    }

    /// Observation mask over the window, reconstructed from the block stream.
    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![true; self.length];
        for b in &self.blocks {
            for pos in b.start..b.start + b.width {
                if let Some(slot) = m.get_mut(pos - POSITION_BASE) {
                    *slot = false;
                }
            }
        }
        m
    }
}

fn fmt_values(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

impl fmt::Display for EncodedWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = compression_stats(self);
        writeln!(f, "window length: {}", self.length)?;
        writeln!(
            f,
            "encoder steps: {} + {} = {} (ratio {:.3})",
            s.enc1_steps,
            s.enc2_steps,
            s.enc1_steps + s.enc2_steps,
            s.ratio
        )?;
        if self.available.is_empty() {
            writeln!(f, "available: (none)")?;
        } else {
            writeln!(f, "available: {}", self.available.len())?;
            for p in &self.available {
                writeln!(f, "  pos={:<4} x={} y={}", p.position, fmt_values(&p.x), fmt_values(&p.y))?;
            }
        }
        if self.blocks.is_empty() {
            writeln!(f, "blocks: (none)")?;
        } else {
            writeln!(f, "blocks: {}", self.blocks.len())?;
            for b in &self.blocks {
                writeln!(f, "  (start={},width={})", b.start, b.width)?;
            }
        }
        Ok(())
    }
}
