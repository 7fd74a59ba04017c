//! GRU and GRU-D (input decay only) cells with hand-derived backward passes.
//!
//! The GRU step is
//!
//! ```text
//! z  = sigmoid(W_z u + U_z h + b_z)
//! r  = sigmoid(W_r u + U_r h + b_r)
//! h~ = tanh(U_h (r * h) + W_h u + b_h)
//! h' = (1 - z) * h + z * h~
//! ```
//!
//! GRU-D replaces a missing input by a learned blend of the last observed
//! value and the empirical mean, `x^ = g * x_last + (1 - g) * x_mean` with
//! `g = exp(-max(0, w * delta + b))`, and appends the binary mask to the cell
//! input. Hidden-state decay is not modelled.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::{prefixed, Param, Parameterized};
use crate::tensor::{sigmoid, Matrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gru {
    pub w_z: Param,
    pub u_z: Param,
    pub b_z: Param,
    pub w_r: Param,
    pub u_r: Param,
    pub b_r: Param,
    pub w_h: Param,
    pub u_h: Param,
    pub b_h: Param,
}

/// Forward intermediates of one GRU step, consumed by [`Gru::backward`].
#[derive(Clone, Debug)]
pub struct GruCache {
    pub input: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub h_tilde: Vec<f64>,
    pub h: Vec<f64>,
}

impl Gru {
    pub fn new<R: Rng>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        Self {
            w_z: Param::uniform(hidden_dim, input_dim, rng),
            u_z: Param::uniform(hidden_dim, hidden_dim, rng),
            b_z: Param::bias(hidden_dim),
            w_r: Param::uniform(hidden_dim, input_dim, rng),
            u_r: Param::uniform(hidden_dim, hidden_dim, rng),
            b_r: Param::bias(hidden_dim),
            w_h: Param::uniform(hidden_dim, input_dim, rng),
            u_h: Param::uniform(hidden_dim, hidden_dim, rng),
            b_h: Param::bias(hidden_dim),
        }
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            w_z: Param::zeros(hidden_dim, input_dim),
            u_z: Param::zeros(hidden_dim, hidden_dim),
            b_z: Param::bias(hidden_dim),
            w_r: Param::zeros(hidden_dim, input_dim),
            u_r: Param::zeros(hidden_dim, hidden_dim),
            b_r: Param::bias(hidden_dim),
            w_h: Param::zeros(hidden_dim, input_dim),
            u_h: Param::zeros(hidden_dim, hidden_dim),
            b_h: Param::bias(hidden_dim),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.value.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_z.value.rows()
    }

    pub fn check_dims(&self, h_prev: &[f64], input: &[f64]) -> Result<()> {
        if h_prev.len() != self.hidden_dim() || input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "GRU({} -> {}) fed input of length {} and state of length {}",
                self.input_dim(),
                self.hidden_dim(),
                input.len(),
                h_prev.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, h_prev: &[f64], input: &[f64]) -> GruCache {
        debug_assert!(self.check_dims(h_prev, input).is_ok());
        let d = self.hidden_dim();

        let mut z = self.b_z.value.as_slice().to_vec();
        self.w_z.value.matvec_acc(input, &mut z);
        self.u_z.value.matvec_acc(h_prev, &mut z);
        z.iter_mut().for_each(|v| *v = sigmoid(*v));

        let mut r = self.b_r.value.as_slice().to_vec();
        self.w_r.value.matvec_acc(input, &mut r);
        self.u_r.value.matvec_acc(h_prev, &mut r);
        r.iter_mut().for_each(|v| *v = sigmoid(*v));

        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        let mut h_tilde = self.b_h.value.as_slice().to_vec();
        self.w_h.value.matvec_acc(input, &mut h_tilde);
        self.u_h.value.matvec_acc(&rh, &mut h_tilde);
        h_tilde.iter_mut().for_each(|v| *v = v.tanh());

        let h = (0..d)
            .map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * h_tilde[i])
            .collect();
        GruCache {
            input: input.to_vec(),
            h_prev: h_prev.to_vec(),
            z,
            r,
            h_tilde,
            h,
        }
    }

    /// Accumulates parameter gradients for one step given `dh = dL/dh_t`.
    /// Returns `(dL/du_t, dL/dh_{t-1})`.
    pub fn backward(&mut self, cache: &GruCache, dh: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.hidden_dim();
        let GruCache {
            input,
            h_prev,
            z,
            r,
            h_tilde,
            ..
        } = cache;

        let mut d_input = vec![0.0; input.len()];
        let mut d_hprev: Vec<f64> = (0..d).map(|i| dh[i] * (1.0 - z[i])).collect();

        // candidate
        let d_cand: Vec<f64> = (0..d)
            .map(|i| dh[i] * z[i] * (1.0 - h_tilde[i] * h_tilde[i]))
            .collect();
        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        self.w_h.grad.outer_acc(&d_cand, input);
        self.u_h.grad.outer_acc(&d_cand, &rh);
        crate::tensor::add_assign(self.b_h.grad.as_mut_slice(), &d_cand);
        self.w_h.value.matvec_t_acc(&d_cand, &mut d_input);
        let mut d_rh = vec![0.0; d];
        self.u_h.value.matvec_t_acc(&d_cand, &mut d_rh);
        for i in 0..d {
            d_hprev[i] += d_rh[i] * r[i];
        }

        // update gate
        let d_z: Vec<f64> = (0..d)
            .map(|i| dh[i] * (h_tilde[i] - h_prev[i]) * z[i] * (1.0 - z[i]))
            .collect();
        self.w_z.grad.outer_acc(&d_z, input);
        self.u_z.grad.outer_acc(&d_z, h_prev);
        crate::tensor::add_assign(self.b_z.grad.as_mut_slice(), &d_z);
        self.w_z.value.matvec_t_acc(&d_z, &mut d_input);
        self.u_z.value.matvec_t_acc(&d_z, &mut d_hprev);

        // reset gate
        let d_r: Vec<f64> = (0..d)
            .map(|i| d_rh[i] * h_prev[i] * r[i] * (1.0 - r[i]))
            .collect();
        self.w_r.grad.outer_acc(&d_r, input);
        self.u_r.grad.outer_acc(&d_r, h_prev);
        crate::tensor::add_assign(self.b_r.grad.as_mut_slice(), &d_r);
        self.w_r.value.matvec_t_acc(&d_r, &mut d_input);
        self.u_r.value.matvec_t_acc(&d_r, &mut d_hprev);

        (d_input, d_hprev)
    }
}

impl Parameterized for Gru {
    fn params(&self) -> Vec<(String, &Param)> {
        vec![
            ("w_z".into(), &self.w_z),
            ("u_z".into(), &self.u_z),
            ("b_z".into(), &self.b_z),
            ("w_r".into(), &self.w_r),
            ("u_r".into(), &self.u_r),
            ("b_r".into(), &self.b_r),
            ("w_h".into(), &self.w_h),
            ("u_h".into(), &self.u_h),
            ("b_h".into(), &self.b_h),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![
            &mut self.w_z,
            &mut self.u_z,
            &mut self.b_z,
            &mut self.w_r,
            &mut self.u_r,
            &mut self.b_r,
            &mut self.w_h,
            &mut self.u_h,
            &mut self.b_h,
        ]
    }
}

/// Checked single GRU step.
pub fn gru_step(p: &Gru, h_prev: &[f64], input: &[f64]) -> Result<Vec<f64>> {
    p.check_dims(h_prev, input)?;
    Ok(p.forward(h_prev, input).h)
}

/// 1 if the tick carries an observation, 0 otherwise.
pub fn compute_mask<T>(value: Option<T>) -> u8 {
    u8::from(value.is_some())
}

/// Ticks since the previous observation: `0` at the first tick, `1` right
/// after an observed tick, and one more for every missing tick in between.
pub fn compute_delta(mask: &[bool]) -> Vec<u32> {
    let mut out = Vec::with_capacity(mask.len());
    for t in 0..mask.len() {
        let d = match t {
            0 => 0,
            _ if mask[t - 1] => 1,
            _ => 1 + out[t - 1],
        };
        out.push(d);
    }
    out
}

/// `exp(-max(0, w * delta + b))` per input variable, with `w` the diagonal of
/// the decay matrix.
pub fn input_decay(decay_w: &[f64], decay_b: &[f64], delta: f64) -> Vec<f64> {
    decay_w
        .iter()
        .zip(decay_b)
        .map(|(w, b)| (-(w * delta + b).max(0.0)).exp())
        .collect()
}

/// GRU-D input: observed values pass through; a missing value becomes
/// `gamma * last + (1 - gamma) * mean`.
pub fn grud_input(observed: bool, x: &[f64], last: &[f64], mean: &[f64], gamma: &[f64]) -> Vec<f64> {
    if observed {
        return x.to_vec();
    }
    (0..last.len())
        .map(|i| gamma[i] * last[i] + (1.0 - gamma[i]) * mean[i])
        .collect()
}

/// One tick of GRU-D input: value, mask, time since last observation and the
/// last observed value to the left.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedInput {
    pub x: Vec<f64>,
    pub observed: bool,
    pub delta: f64,
    pub last: Vec<f64>,
}

/// Builds GRU-D inputs for a window. Missing values are stored as `mean`;
/// before the first observation `last` is `mean` too.
pub fn masked_sequence(values: &[Option<Vec<f64>>], mean: &[f64]) -> Vec<MaskedInput> {
    let mask: Vec<bool> = values.iter().map(Option::is_some).collect();
    let delta = compute_delta(&mask);
    let mut last = mean.to_vec();
    let mut out = Vec::with_capacity(values.len());
    for (v, d) in values.iter().zip(delta) {
        out.push(MaskedInput {
            x: v.clone().unwrap_or_else(|| mean.to_vec()),
            observed: v.is_some(),
            delta: f64::from(d),
            last: last.clone(),
        });
        if let Some(v) = v {
            last.clone_from(v);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GruD {
    /// Inner GRU over `[x^, m]`.
    pub gru: Gru,
    /// Diagonal of the decay weight matrix, one rate per input variable.
    pub decay_w: Param,
    pub decay_b: Param,
    /// Empirical mean of the observed training inputs. Not trained.
    pub empirical_mean: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct GruDCache {
    pub gru: GruCache,
    pub gamma: Vec<f64>,
    pub pre_decay: Vec<f64>,
    pub x_hat: Vec<f64>,
}

impl GruD {
    /// Decay weights start in `[0, 1]` so the decay is active and
    /// non-increasing in `delta`; decay biases start at zero.
    pub fn new<R: Rng>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let w = (0..input_dim).map(|_| rng.gen_range(0.0..=1.0)).collect();
        Self {
            gru: Gru::new(input_dim + 1, hidden_dim, rng),
            decay_w: Param::new(Matrix::from_vec(input_dim, 1, w).expect("non-empty")),
            decay_b: Param::bias(input_dim),
            empirical_mean: vec![0.0; input_dim],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.decay_w.value.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.gru.hidden_dim()
    }

    pub fn check_dims(&self, h_prev: &[f64], input: &MaskedInput) -> Result<()> {
        let d = self.input_dim();
        if input.x.len() != d || input.last.len() != d || h_prev.len() != self.hidden_dim() {
            return Err(Error::Shape(format!(
                "GRU-D({d} -> {}) fed x[{}], last[{}], state[{}]",
                self.hidden_dim(),
                input.x.len(),
                input.last.len(),
                h_prev.len()
            )));
        }
        if input.delta < 0.0 {
            return Err(Error::Usage(format!("negative delta {}", input.delta)));
        }
        Ok(())
    }

    pub fn forward(&self, h_prev: &[f64], input: &MaskedInput) -> GruDCache {
        let w = self.decay_w.value.as_slice();
        let b = self.decay_b.value.as_slice();
        let pre_decay: Vec<f64> = w.iter().zip(b).map(|(w, b)| w * input.delta + b).collect();
        let gamma = input_decay(w, b, input.delta);
        let x_hat = grud_input(input.observed, &input.x, &input.last, &self.empirical_mean, &gamma);
        let mut cell_input = x_hat.clone();
        cell_input.push(if input.observed { 1.0 } else { 0.0 });
        GruDCache {
            gru: self.gru.forward(h_prev, &cell_input),
            gamma,
            pre_decay,
            x_hat,
        }
    }

    /// Returns `dL/dh_{t-1}`; input gradients are not propagated further.
    pub fn backward(&mut self, cache: &GruDCache, input: &MaskedInput, dh: &[f64]) -> Vec<f64> {
        let (d_in, d_hprev) = self.gru.backward(&cache.gru, dh);
        if !input.observed {
            let dw = self.decay_w.grad.as_mut_slice();
            let db = self.decay_b.grad.as_mut_slice();
            for i in 0..self.empirical_mean.len() {
                if cache.pre_decay[i] > 0.0 {
                    let d_gamma = d_in[i] * (input.last[i] - self.empirical_mean[i]);
                    let d_pre = -cache.gamma[i] * d_gamma;
                    dw[i] += d_pre * input.delta;
                    db[i] += d_pre;
                }
            }
        }
        d_hprev
    }
}

impl Parameterized for GruD {
    fn params(&self) -> Vec<(String, &Param)> {
        let mut v: Vec<_> = prefixed("gru", self.gru.params()).collect();
        v.push(("decay_w".into(), &self.decay_w));
        v.push(("decay_b".into(), &self.decay_b));
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.gru.params_mut();
        v.push(&mut self.decay_w);
        v.push(&mut self.decay_b);
        v
    }
}

/// Checked single GRU-D step.
pub fn grud_step(p: &GruD, h_prev: &[f64], input: &MaskedInput) -> Result<Vec<f64>> {
    p.check_dims(h_prev, input)?;
    Ok(p.forward(h_prev, input).gru.h)
}
