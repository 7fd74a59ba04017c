//! Encoder-decoder forecasting model with exact backpropagation through time.
//!
//! The default architecture is the dual encoder: encoder 1 runs over the
//! available points of the input window, encoder 2 over its missing blocks,
//! and a bridge (`tanh` of an affine map of both final states) produces the
//! decoder's initial state. The decoder unrolls over the forecast horizon,
//! consuming only future exogenous inputs, and a linear head emits one
//! prediction per step.
//!
//! The same machinery also hosts the single-encoder baselines, which encode
//! the full window tick by tick with a GRU or GRU-D cell.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cells::{masked_sequence, Gru, GruCache, GruD, GruDCache, MaskedInput};
use crate::codec::{decode_window, EncodedWindow};
use crate::error::{Error, Result};
use crate::param::{prefixed, Param, Parameterized};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderVariant {
    /// Missing future exogenous values mean-imputed.
    Demi,
    /// Unroll only up to the first missing target while training.
    VariableLength,
    /// Mean imputation plus the binary mask as an extra input channel.
    BinaryMask,
    /// GRU-D decoder with input decay over the future exogenous gaps.
    Degd,
}

impl DecoderVariant {
    pub const ALL: [Self; 4] = [Self::Demi, Self::VariableLength, Self::BinaryMask, Self::Degd];

    pub fn tag(&self) -> &'static str {
        match self {
            Self::Demi => "demi",
            Self::VariableLength => "variable_length",
            Self::BinaryMask => "binary_mask",
            Self::Degd => "degd",
        }
    }

    pub fn default_loss_mode(&self) -> LossMode {
        match self {
            Self::Demi => LossMode::ImputedTargets,
            _ => LossMode::ObservedOnly,
        }
    }
}

impl std::str::FromStr for DecoderVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Usage(format!("unknown decoder variant `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    /// Available-point encoder plus missing-block encoder.
    Dual,
    /// One GRU over every tick of the (imputed) window.
    Full,
    /// One GRU-D over every tick of the window.
    FullGruD,
}

impl EncoderKind {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::Dual => "dual",
            Self::Full => "full",
            Self::FullGruD => "full_grud",
        }
    }
}

impl std::str::FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Self::Dual, Self::Full, Self::FullGruD]
            .into_iter()
            .find(|v| v.tag() == s)
            .ok_or_else(|| Error::Usage(format!("unknown encoder kind `{s}`")))
    }
}

/// What to do with an input window that has no available points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyInputPolicy {
    Reject,
    /// Encoder 1 contributes its zero initial state.
    ZeroState,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Mean squared error over observed targets only.
    ObservedOnly,
    /// Mean squared error over every horizon step, missing targets replaced
    /// by the training mean.
    ImputedTargets,
}

impl std::str::FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "observed_only" => Ok(Self::ObservedOnly),
            "imputed_targets" => Ok(Self::ImputedTargets),
            _ => Err(Error::Usage(format!("unknown loss mode `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderKind,
    pub decoder: DecoderVariant,
    pub hidden: usize,
    /// 1 or 2 stacked GRU layers in every encoder and the decoder.
    pub layers: usize,
    pub exo_dim: usize,
    pub endo_dim: usize,
    /// Append the relative position `pos / L` to encoder-1 inputs.
    pub position_feature: bool,
    pub empty_input: EmptyInputPolicy,
}

impl ModelConfig {
    pub fn dual(decoder: DecoderVariant, hidden: usize, exo_dim: usize, endo_dim: usize) -> Self {
        Self {
            encoder: EncoderKind::Dual,
            decoder,
            hidden,
            layers: 1,
            exo_dim,
            endo_dim,
            position_feature: false,
            empty_input: EmptyInputPolicy::Reject,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.exo_dim == 0 || self.endo_dim == 0 {
            return Err(Error::Usage("hidden, exo_dim and endo_dim must be positive".into()));
        }
        if !(1..=2).contains(&self.layers) {
            return Err(Error::Usage(format!("layers must be 1 or 2, got {}", self.layers)));
        }
        if self.position_feature && self.encoder != EncoderKind::Dual {
            return Err(Error::Usage("position_feature applies to the dual encoder only".into()));
        }
        Ok(())
    }

    fn enc1_input_dim(&self) -> usize {
        self.exo_dim + self.endo_dim + usize::from(self.position_feature)
    }

    fn decoder_input_dim(&self) -> usize {
        match self.decoder {
            DecoderVariant::Demi | DecoderVariant::VariableLength => self.exo_dim,
            DecoderVariant::BinaryMask => self.exo_dim + 1,
            DecoderVariant::Degd => self.exo_dim,
        }
    }
}

/// One training or evaluation example: an encoded input window plus the
/// horizon's exogenous inputs and targets (`None` where missing).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastExample {
    pub input: EncodedWindow,
    pub future_exo: Vec<Option<Vec<f64>>>,
    pub targets: Vec<Option<Vec<f64>>>,
    /// Index of the source series.
    pub series: usize,
    /// 0-based index of the first input tick within the source series.
    pub origin: usize,
}

impl ForecastExample {
    pub fn horizon(&self) -> usize {
        self.targets.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::Usage("forecast horizon must be positive".into()));
        }
        if self.future_exo.len() != self.targets.len() {
            return Err(Error::Usage(format!(
                "{} future exogenous ticks for a horizon of {}",
                self.future_exo.len(),
                self.targets.len()
            )));
        }
        Ok(())
    }
}

/// Affine map `y = W x + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub w: Param,
    pub b: Param,
}

impl Affine {
    pub fn new<R: rand::Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        Self {
            w: Param::uniform(output, input, rng),
            b: Param::bias(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.value.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.value.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.b.value.as_slice().to_vec();
        self.w.value.matvec_acc(x, &mut y);
        y
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, x: &[f64], dy: &[f64]) -> Vec<f64> {
        self.w.grad.outer_acc(dy, x);
        crate::tensor::add_assign(self.b.grad.as_mut_slice(), dy);
        let mut dx = vec![0.0; x.len()];
        self.w.value.matvec_t_acc(dy, &mut dx);
        dx
    }
}

impl Parameterized for Affine {
    fn params(&self) -> Vec<(String, &Param)> {
        vec![("w".into(), &self.w), ("b".into(), &self.b)]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BottomCell {
    Gru(Gru),
    GruD(GruD),
}

#[derive(Clone, Debug)]
pub enum StepInput {
    Plain(Vec<f64>),
    Masked(MaskedInput),
}

#[derive(Clone, Debug)]
enum BottomCache {
    Gru(GruCache),
    GruD(GruDCache),
}

#[derive(Clone, Debug)]
struct StepCache {
    bottom: BottomCache,
    upper: Option<GruCache>,
}

/// Forward record of a [`Stack`] unrolled over a sequence.
#[derive(Clone, Debug)]
pub struct StackTrace {
    inputs: Vec<StepInput>,
    steps: Vec<StepCache>,
    init: Vec<Vec<f64>>,
}

impl StackTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Top-layer hidden state after step `t`.
    pub fn top_output(&self, t: usize) -> &[f64] {
        let s = &self.steps[t];
        match (&s.upper, &s.bottom) {
            (Some(u), _) => &u.h,
            (None, BottomCache::Gru(c)) => &c.h,
            (None, BottomCache::GruD(c)) => &c.gru.h,
        }
    }

    /// Final hidden state of every layer (the initial state if no steps ran).
    pub fn final_state(&self) -> Vec<Vec<f64>> {
        match self.steps.last() {
            None => self.init.clone(),
            Some(s) => {
                let bottom = match &s.bottom {
                    BottomCache::Gru(c) => c.h.clone(),
                    BottomCache::GruD(c) => c.gru.h.clone(),
                };
                let mut out = vec![bottom];
                if let Some(u) = &s.upper {
                    out.push(u.h.clone());
                }
                out
            }
        }
    }
}

/// One or two recurrent layers; only the bottom layer may be a GRU-D.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stack {
    pub bottom: BottomCell,
    pub upper: Option<Gru>,
}

impl Stack {
    fn gru<R: rand::Rng>(input: usize, hidden: usize, layers: usize, rng: &mut R) -> Self {
        let bottom = BottomCell::Gru(Gru::new(input, hidden, rng));
        let upper = (layers == 2).then(|| Gru::new(hidden, hidden, rng));
        Self { bottom, upper }
    }

    fn grud<R: rand::Rng>(input: usize, hidden: usize, layers: usize, rng: &mut R) -> Self {
        let bottom = BottomCell::GruD(GruD::new(input, hidden, rng));
        let upper = (layers == 2).then(|| Gru::new(hidden, hidden, rng));
        Self { bottom, upper }
    }

    pub fn hidden(&self) -> usize {
        match &self.bottom {
            BottomCell::Gru(g) => g.hidden_dim(),
            BottomCell::GruD(g) => g.hidden_dim(),
        }
    }

    pub fn layers(&self) -> usize {
        1 + usize::from(self.upper.is_some())
    }

    pub fn zero_state(&self) -> Vec<Vec<f64>> {
        vec![vec![0.0; self.hidden()]; self.layers()]
    }

    pub fn run(&self, init: Vec<Vec<f64>>, inputs: Vec<StepInput>) -> Result<StackTrace> {
        let mut state = init.clone();
        let mut steps = Vec::with_capacity(inputs.len());
        for input in &inputs {
            let bottom = match (&self.bottom, input) {
                (BottomCell::Gru(g), StepInput::Plain(u)) => {
                    g.check_dims(&state[0], u)?;
                    BottomCache::Gru(g.forward(&state[0], u))
                }
                (BottomCell::GruD(g), StepInput::Masked(m)) => {
                    g.check_dims(&state[0], m)?;
                    BottomCache::GruD(g.forward(&state[0], m))
                }
                _ => return Err(Error::Usage("step input does not match the cell type".into())),
            };
            state[0] = match &bottom {
                BottomCache::Gru(c) => c.h.clone(),
                BottomCache::GruD(c) => c.gru.h.clone(),
            };
            let upper = self.upper.as_ref().map(|g| g.forward(&state[1], &state[0]));
            if let Some(u) = &upper {
                state[1] = u.h.clone();
            }
            steps.push(StepCache { bottom, upper });
        }
        Ok(StackTrace { inputs, steps, init })
    }

    /// Backpropagates through the whole trace. `d_top[t]` is the gradient
    /// reaching the top layer's output at step `t` (empty slice: none);
    /// `d_final` is the gradient on the final top-layer state. Returns the
    /// gradient with respect to each layer's initial state.
    pub fn backward(
        &mut self,
        trace: &StackTrace,
        d_top: &[Vec<f64>],
        d_final: Option<&[f64]>,
    ) -> Result<Vec<Vec<f64>>> {
        if !d_top.is_empty() && d_top.len() != trace.len() {
            return Err(Error::Usage(format!(
                "{} output gradients for a trace of {} steps",
                d_top.len(),
                trace.len()
            )));
        }
        let h = self.hidden();
        let top = self.layers() - 1;
        let mut carry = vec![vec![0.0; h]; self.layers()];
        if let Some(d) = d_final {
            crate::tensor::add_assign(&mut carry[top], d);
        }
        for t in (0..trace.len()).rev() {
            if let Some(d) = d_top.get(t) {
                crate::tensor::add_assign(&mut carry[top], d);
            }
            let step = &trace.steps[t];
            let mut d_bottom = carry[0].clone();
            if let (Some(g), Some(cache)) = (self.upper.as_mut(), step.upper.as_ref()) {
                let (d_in, d_prev) = g.backward(cache, &carry[1]);
                carry[1] = d_prev;
                crate::tensor::add_assign(&mut d_bottom, &d_in);
            }
            carry[0] = match (&mut self.bottom, &step.bottom, &trace.inputs[t]) {
                (BottomCell::Gru(g), BottomCache::Gru(c), _) => g.backward(c, &d_bottom).1,
                (BottomCell::GruD(g), BottomCache::GruD(c), StepInput::Masked(m)) => {
                    g.backward(c, m, &d_bottom)
                }
                _ => return Err(Error::Usage("trace does not belong to this stack".into())),
            };
        }
        Ok(carry)
    }
}

impl Parameterized for Stack {
    fn params(&self) -> Vec<(String, &Param)> {
        let mut v: Vec<_> = match &self.bottom {
            BottomCell::Gru(g) => prefixed("l0", g.params()).collect(),
            BottomCell::GruD(g) => prefixed("l0", g.params()).collect(),
        };
        if let Some(u) = &self.upper {
            v.extend(prefixed("l1", u.params()));
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = match &mut self.bottom {
            BottomCell::Gru(g) => g.params_mut(),
            BottomCell::GruD(g) => g.params_mut(),
        };
        if let Some(u) = &mut self.upper {
            v.extend(u.params_mut());
        }
        v
    }
}

/// Forward record of the whole model for one example.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    encoders: Vec<StackTrace>,
    bridge_input: Vec<f64>,
    bridge_output: Vec<f64>,
    decoder: StackTrace,
    pub predictions: Vec<Vec<f64>>,
    /// Recurrent steps taken by all encoders together.
    pub encoder_steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Loss {
    pub value: f64,
    /// `dL/dprediction` per unrolled step.
    pub grad: Vec<Vec<f64>>,
    /// Number of (step, component) terms averaged.
    pub terms: usize,
}

/// Mean squared error between `preds` and `targets`.
///
/// `ObservedOnly` averages over observed targets; `ImputedTargets` replaces
/// each missing target by `target_mean` and averages over every step.
pub fn loss(
    preds: &[Vec<f64>],
    targets: &[Option<Vec<f64>>],
    mode: LossMode,
    target_mean: &[f64],
) -> Result<Loss> {
    if preds.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} predictions against {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let mut grad: Vec<Vec<f64>> = preds.iter().map(|p| vec![0.0; p.len()]).collect();
    let mut sum = 0.0;
    let mut terms = 0usize;
    for ((p, t), g) in preds.iter().zip(targets).zip(grad.iter_mut()) {
        let target = match (t, mode) {
            (Some(t), _) => t.as_slice(),
            (None, LossMode::ImputedTargets) => target_mean,
            (None, LossMode::ObservedOnly) => continue,
        };
        if target.len() != p.len() {
            return Err(Error::Shape("prediction and target dims differ".into()));
        }
        for ((pi, ti), gi) in p.iter().zip(target).zip(g.iter_mut()) {
            let e = pi - ti;
            sum += e * e;
            *gi = e;
            terms += 1;
        }
    }
    if terms == 0 {
        return Err(Error::Rejected("no target contributes to the loss".into()));
    }
    let n = terms as f64;
    for g in grad.iter_mut().flatten() {
        *g *= 2.0 / n;
    }
    Ok(Loss {
        value: sum / n,
        grad,
        terms,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seq2Seq {
    pub config: ModelConfig,
    /// Encoder 1 (dual) or the single full-window encoder.
    pub enc1: Stack,
    /// Missing-block encoder (dual only).
    pub enc2: Option<Stack>,
    pub bridge: Affine,
    pub decoder: Stack,
    pub head: Affine,
    /// Empirical mean of the observed training inputs, laid out `x ⊕ y`.
    pub input_mean: Vec<f64>,
}

impl Seq2Seq {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.hidden;
        let l = config.layers;
        let xy = config.exo_dim + config.endo_dim;
        let (enc1, enc2) = match config.encoder {
            EncoderKind::Dual => (
                Stack::gru(config.enc1_input_dim(), h, l, &mut rng),
                Some(Stack::gru(2, h, l, &mut rng)),
            ),
            EncoderKind::Full => (Stack::gru(xy, h, l, &mut rng), None),
            EncoderKind::FullGruD => (Stack::grud(xy, h, l, &mut rng), None),
        };
        let bridge_in = h * (1 + usize::from(enc2.is_some()));
        let bridge = Affine::new(bridge_in, h * l, &mut rng);
        let decoder = match config.decoder {
            DecoderVariant::Degd => Stack::grud(config.decoder_input_dim(), h, l, &mut rng),
            _ => Stack::gru(config.decoder_input_dim(), h, l, &mut rng),
        };
        let head = Affine::new(h, config.endo_dim, &mut rng);
        let mut model = Self {
            config,
            enc1,
            enc2,
            bridge,
            decoder,
            head,
            input_mean: vec![0.0; xy],
        };
        model.set_input_mean(vec![0.0; xy])?;
        Ok(model)
    }

    pub fn exo_mean(&self) -> &[f64] {
        &self.input_mean[..self.config.exo_dim]
    }

    pub fn target_mean(&self) -> &[f64] {
        &self.input_mean[self.config.exo_dim..]
    }

    /// Sets the empirical input mean used for imputation and GRU-D decay.
    pub fn set_input_mean(&mut self, mean: Vec<f64>) -> Result<()> {
        if mean.len() != self.config.exo_dim + self.config.endo_dim {
            return Err(Error::Shape(format!("input mean of length {}", mean.len())));
        }
        if let BottomCell::GruD(g) = &mut self.enc1.bottom {
            g.empirical_mean = mean.clone();
        }
        if let BottomCell::GruD(g) = &mut self.decoder.bottom {
            g.empirical_mean = mean[..self.config.exo_dim].to_vec();
        }
        self.input_mean = mean;
        Ok(())
    }

    /// Mean of every available point's `x ⊕ y` across the examples.
    pub fn fit_input_mean(&mut self, examples: &[ForecastExample]) -> Result<()> {
        let d = self.config.exo_dim + self.config.endo_dim;
        let mut sum = vec![0.0; d];
        let mut n = 0usize;
        for p in examples.iter().flat_map(|e| &e.input.available) {
            for (s, v) in sum.iter_mut().zip(p.x.iter().chain(&p.y)) {
                *s += v;
            }
            n += 1;
        }
        if n > 0 {
            sum.iter_mut().for_each(|s| *s /= n as f64);
        }
        self.set_input_mean(sum)
    }

    /// Steps the decoder unrolls for `ex`: the full horizon, except for the
    /// variable-length variant in training, which stops before the first
    /// missing target.
    pub fn unroll_steps(&self, ex: &ForecastExample, training: bool) -> Result<usize> {
        ex.validate()?;
        if training && self.config.decoder == DecoderVariant::VariableLength {
            let n = ex.targets.iter().take_while(|t| t.is_some()).count();
            if n == 0 {
                return Err(Error::Rejected("first target of the horizon is missing".into()));
            }
            return Ok(n);
        }
        Ok(ex.horizon())
    }

    fn encoder_inputs(&self, input: &EncodedWindow) -> Result<Vec<Vec<StepInput>>> {
        let c = &self.config;
        match c.encoder {
            EncoderKind::Dual => {
                let l = input.length as f64;
                let avail = input
                    .available
                    .iter()
                    .map(|p| {
                        let mut v = Vec::with_capacity(c.enc1_input_dim());
                        v.extend_from_slice(&p.x);
                        v.extend_from_slice(&p.y);
                        if c.position_feature {
                            v.push(p.position as f64 / l);
                        }
                        StepInput::Plain(v)
                    })
                    .collect();
                let blocks = input
                    .block_features()
                    .into_iter()
                    .map(|f| StepInput::Plain(f.to_vec()))
                    .collect();
                Ok(vec![avail, blocks])
            }
            EncoderKind::Full => {
                let w = decode_window(input)?;
                Ok(vec![w
                    .ticks
                    .iter()
                    .map(|t| match (&t.x, &t.y) {
                        (Some(x), Some(y)) => StepInput::Plain([x.as_slice(), y].concat()),
                        _ => StepInput::Plain(self.input_mean.clone()),
                    })
                    .collect()])
            }
            EncoderKind::FullGruD => {
                let w = decode_window(input)?;
                let values: Vec<Option<Vec<f64>>> = w
                    .ticks
                    .iter()
                    .map(|t| match (&t.x, &t.y) {
                        (Some(x), Some(y)) => Some([x.as_slice(), y].concat()),
                        _ => None,
                    })
                    .collect();
                Ok(vec![masked_sequence(&values, &self.input_mean)
                    .into_iter()
                    .map(StepInput::Masked)
                    .collect()])
            }
        }
    }

    fn decoder_inputs(&self, future_exo: &[Option<Vec<f64>>], steps: usize) -> Vec<StepInput> {
        let exo = &future_exo[..steps];
        let mean = self.exo_mean();
        let impute = |v: &Option<Vec<f64>>| v.clone().unwrap_or_else(|| mean.to_vec());
        match self.config.decoder {
            DecoderVariant::Demi | DecoderVariant::VariableLength => {
                exo.iter().map(|v| StepInput::Plain(impute(v))).collect()
            }
            DecoderVariant::BinaryMask => exo
                .iter()
                .map(|v| {
                    let mut u = impute(v);
                    u.push(if v.is_some() { 1.0 } else { 0.0 });
                    StepInput::Plain(u)
                })
                .collect(),
            DecoderVariant::Degd => masked_sequence(exo, mean)
                .into_iter()
                .map(StepInput::Masked)
                .collect(),
        }
    }

    fn check_dims(&self, input: &EncodedWindow, future_exo: &[Option<Vec<f64>>]) -> Result<()> {
        let c = &self.config;
        if let Some(p) = input
            .available
            .iter()
            .find(|p| p.x.len() != c.exo_dim || p.y.len() != c.endo_dim)
        {
            return Err(Error::Shape(format!(
                "input point at {} has dims ({}, {}), model expects ({}, {})",
                p.position,
                p.x.len(),
                p.y.len(),
                c.exo_dim,
                c.endo_dim
            )));
        }
        if future_exo.iter().flatten().any(|x| x.len() != c.exo_dim) {
            return Err(Error::Shape("future exogenous dimension mismatch".into()));
        }
        Ok(())
    }

    /// Encodes the input window and unrolls the decoder for `steps` steps.
    pub fn forward(
        &self,
        input: &EncodedWindow,
        future_exo: &[Option<Vec<f64>>],
        steps: usize,
    ) -> Result<ForwardPass> {
        if steps == 0 || steps > future_exo.len() {
            return Err(Error::Usage(format!(
                "cannot unroll {steps} decoder steps over a horizon of {}",
                future_exo.len()
            )));
        }
        self.check_dims(input, future_exo)?;
        if input.available.is_empty() && self.config.empty_input == EmptyInputPolicy::Reject {
            return Err(Error::Rejected("input window has no available points".into()));
        }

        let mut encoders = Vec::new();
        let mut bridge_input = Vec::new();
        let mut encoder_steps = 0;
        let stacks = std::iter::once(&self.enc1).chain(self.enc2.as_ref());
        for (stack, inputs) in stacks.zip(self.encoder_inputs(input)?) {
            let trace = stack.run(stack.zero_state(), inputs)?;
            encoder_steps += trace.len();
            bridge_input.extend(trace.final_state().pop().expect("at least one layer"));
            encoders.push(trace);
        }

        let bridge_output: Vec<f64> = self
            .bridge
            .forward(&bridge_input)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let h = self.config.hidden;
        let init: Vec<Vec<f64>> = bridge_output.chunks(h).map(<[f64]>::to_vec).collect();
        let decoder = self.decoder.run(init, self.decoder_inputs(future_exo, steps))?;
        let predictions = (0..decoder.len())
            .map(|t| self.head.forward(decoder.top_output(t)))
            .collect();
        Ok(ForwardPass {
            encoders,
            bridge_input,
            bridge_output,
            decoder,
            predictions,
            encoder_steps,
        })
    }

    /// Accumulates parameter gradients given `dL/dprediction` per step.
    pub fn backward(&mut self, pass: &ForwardPass, d_pred: &[Vec<f64>]) -> Result<()> {
        if d_pred.len() != pass.predictions.len() {
            return Err(Error::Usage("gradient count does not match the forward pass".into()));
        }
        let d_top: Vec<Vec<f64>> = d_pred
            .iter()
            .enumerate()
            .map(|(t, d)| self.head.backward(pass.decoder.top_output(t), d))
            .collect();
        let d_init = self.decoder.backward(&pass.decoder, &d_top, None)?;
        let d_pre: Vec<f64> = d_init
            .concat()
            .iter()
            .zip(&pass.bridge_output)
            .map(|(d, s)| d * (1.0 - s * s))
            .collect();
        let d_bridge_in = self.bridge.backward(&pass.bridge_input, &d_pre);

        let h = self.config.hidden;
        let stacks = std::iter::once(&mut self.enc1).chain(self.enc2.as_mut());
        for ((stack, trace), d) in stacks.zip(&pass.encoders).zip(d_bridge_in.chunks(h)) {
            stack.backward(trace, &[], Some(d))?;
        }
        Ok(())
    }

    /// Forward pass plus loss for one example, without touching gradients.
    pub fn example_loss(&self, ex: &ForecastExample, mode: LossMode) -> Result<f64> {
        let steps = self.unroll_steps(ex, true)?;
        let pass = self.forward(&ex.input, &ex.future_exo, steps)?;
        Ok(loss(&pass.predictions, &ex.targets[..steps], mode, self.target_mean())?.value)
    }

    /// Forward, loss and backward for one example. Gradients are scaled by
    /// `weight` and added to the parameters' accumulators.
    pub fn accumulate_gradients(&mut self, ex: &ForecastExample, mode: LossMode, weight: f64) -> Result<f64> {
        let steps = self.unroll_steps(ex, true)?;
        let pass = self.forward(&ex.input, &ex.future_exo, steps)?;
        let mut l = loss(&pass.predictions, &ex.targets[..steps], mode, self.target_mean())?;
        l.grad.iter_mut().flatten().for_each(|g| *g *= weight);
        self.backward(&pass, &l.grad)?;
        Ok(l.value)
    }

    /// Predicts the whole horizon (`future_exo.len()` steps). Pure inference.
    pub fn forecast(&self, input: &EncodedWindow, future_exo: &[Option<Vec<f64>>]) -> Result<Vec<Vec<f64>>> {
        if future_exo.is_empty() {
            return Err(Error::Usage("forecast horizon must be positive".into()));
        }
        Ok(self.forward(input, future_exo, future_exo.len())?.predictions)
    }
}

impl Parameterized for Seq2Seq {
    fn params(&self) -> Vec<(String, &Param)> {
        let mut v: Vec<_> = prefixed("enc1", self.enc1.params()).collect();
        if let Some(e) = &self.enc2 {
            v.extend(prefixed("enc2", e.params()));
        }
        v.extend(prefixed("bridge", self.bridge.params()));
        v.extend(prefixed("dec", self.decoder.params()));
        v.extend(prefixed("head", self.head.params()));
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.enc1.params_mut();
        if let Some(e) = &mut self.enc2 {
            v.extend(e.params_mut());
        }
        v.extend(self.bridge.params_mut());
        v.extend(self.decoder.params_mut());
        v.extend(self.head.params_mut());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode_window, Tick, Window};

    fn window(mask: &[bool]) -> EncodedWindow {
        let ticks = mask
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                if m {
                    Tick::observed(vec![0.1 * i as f64], vec![(i as f64 * 0.7).sin()])
                } else {
                    Tick::missing()
                }
            })
            .collect();
        encode_window(&Window::new(ticks)).unwrap()
    }

    fn example(mask: &[bool], k: usize) -> ForecastExample {
        ForecastExample {
            input: window(mask),
            future_exo: (0..k).map(|i| Some(vec![0.2 * i as f64])).collect(),
            targets: (0..k).map(|i| Some(vec![0.5 - 0.1 * i as f64])).collect(),
            series: 0,
            origin: 0,
        }
    }

    #[test]
    fn loss_examples() {
        let p = vec![vec![1.0], vec![2.0]];
        let t = vec![Some(vec![1.0]), Some(vec![2.0])];
        assert_eq!(loss(&p, &t, LossMode::ObservedOnly, &[0.0]).unwrap().value, 0.0);

        let p = vec![vec![1.0], vec![1.0]];
        let t = vec![Some(vec![3.0]), None];
        let l = loss(&p, &t, LossMode::ObservedOnly, &[0.0]).unwrap();
        assert_eq!(l.value, 4.0);
        assert_eq!(l.grad, vec![vec![-4.0], vec![0.0]]);

        // missing slot contributes (pred - mu)^2
        let l = loss(&p, &t, LossMode::ImputedTargets, &[5.0]).unwrap();
        assert_eq!(l.value, (4.0 + 16.0) / 2.0);

        let none = vec![None, None];
        assert!(matches!(
            loss(&p, &none, LossMode::ObservedOnly, &[0.0]),
            Err(Error::Rejected(_))
        ));
        assert!(loss(&p, &t[..1], LossMode::ObservedOnly, &[0.0]).is_err());
    }

    #[test]
    fn encoder_unrolls_only_stream_lengths() {
        let m = Seq2Seq::new(ModelConfig::dual(DecoderVariant::Demi, 4, 1, 1), 1).unwrap();
        let mut mask = vec![true; 12];
        for i in [2, 3, 4, 8] {
            mask[i] = false;
        }
        let ex = example(&mask, 3);
        let pass = m.forward(&ex.input, &ex.future_exo, 3).unwrap();
        assert_eq!(pass.encoder_steps, 8 + 2);
        assert_eq!(pass.predictions.len(), 3);
    }

    #[test]
    fn empty_block_stream_uses_zero_state() {
        let m = Seq2Seq::new(ModelConfig::dual(DecoderVariant::Demi, 3, 1, 1), 2).unwrap();
        let ex = example(&[true; 6], 2);
        let pass = m.forward(&ex.input, &ex.future_exo, 2).unwrap();
        assert_eq!(&pass.bridge_input[3..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_input_policy() {
        let mut cfg = ModelConfig::dual(DecoderVariant::Demi, 3, 1, 1);
        let ex = example(&[false; 5], 2);
        let m = Seq2Seq::new(cfg.clone(), 2).unwrap();
        assert!(matches!(m.forecast(&ex.input, &ex.future_exo), Err(Error::Rejected(_))));
        cfg.empty_input = EmptyInputPolicy::ZeroState;
        let m = Seq2Seq::new(cfg, 2).unwrap();
        assert_eq!(m.forecast(&ex.input, &ex.future_exo).unwrap().len(), 2);
    }

    #[test]
    fn zero_horizon_is_usage_error() {
        let m = Seq2Seq::new(ModelConfig::dual(DecoderVariant::Degd, 3, 1, 1), 2).unwrap();
        let ex = example(&[true; 5], 2);
        assert!(matches!(m.forecast(&ex.input, &[]), Err(Error::Usage(_))));
    }

    #[test]
    fn variable_length_unrolls_to_first_gap() {
        let m = Seq2Seq::new(ModelConfig::dual(DecoderVariant::VariableLength, 3, 1, 1), 2).unwrap();
        let mut ex = example(&[true; 5], 6);
        ex.targets[2] = None;
        ex.future_exo[2] = None;
        assert_eq!(m.unroll_steps(&ex, true).unwrap(), 2);
        assert_eq!(m.unroll_steps(&ex, false).unwrap(), 6);
        ex.targets[0] = None;
        assert!(matches!(m.unroll_steps(&ex, true), Err(Error::Rejected(_))));
    }

    #[test]
    fn bad_config_rejected() {
        let mut cfg = ModelConfig::dual(DecoderVariant::Demi, 3, 1, 1);
        cfg.layers = 3;
        assert!(Seq2Seq::new(cfg, 0).is_err());
        let mut cfg = ModelConfig::dual(DecoderVariant::Demi, 3, 1, 1);
        cfg.encoder = EncoderKind::Full;
        cfg.position_feature = true;
        assert!(Seq2Seq::new(cfg, 0).is_err());
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let m = Seq2Seq::new(ModelConfig::dual(DecoderVariant::Demi, 3, 2, 1), 2).unwrap();
        let ex = example(&[true; 5], 2);
        assert!(matches!(m.forecast(&ex.input, &ex.future_exo), Err(Error::Shape(_))));
    }

    #[test]
    fn two_layer_parameter_names_are_unique() {
        let mut cfg = ModelConfig::dual(DecoderVariant::Degd, 3, 1, 1);
        cfg.layers = 2;
        let m = Seq2Seq::new(cfg, 9).unwrap();
        let names: Vec<String> = m.params().into_iter().map(|(n, _)| n).collect();
        let mut dedup = names.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(names.len(), dedup.len());
        assert!(names.iter().any(|n| n == "dec.l0.decay_w"));
        assert!(names.iter().any(|n| n == "enc2.l1.u_h"));
        assert_eq!(m.bridge.output_dim(), 6);
        assert_eq!(m.bridge.input_dim(), 6);
    }
}
