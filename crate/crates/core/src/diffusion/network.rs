//! Time-conditioned residual MLP with hand-written backpropagation.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diffusion::{NoisePredictor, NoiseSchedule};
use crate::error::{Error, Result};

/// What the last layer produces.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputMode {
    /// The noise estimate directly.
    #[default]
    Noise,
    /// A clean-data estimate `D`, turned into the noise estimate
    /// `(x_t − √ᾱ_t D) / √(1 − ᾱ_t)`. Needed when `dim` exceeds `hidden`:
    /// the noise itself is full rank, the clean data is not.
    Data,
    /// A velocity estimate `v`, with clean estimate `√ᾱ_t x_t − √(1 − ᾱ_t) v`
    /// and noise estimate `√(1 − ᾱ_t) x_t + √ᾱ_t v`. Low rank like
    /// [`OutputMode::Data`] at large `t`, but the clean estimate tends to the
    /// input as `t → 0` instead of having to reproduce it.
    Velocity,
}

impl OutputMode {
    fn table_name(self) -> Option<&'static str> {
        match self {
            OutputMode::Noise => None,
            OutputMode::Data => Some("skip.alpha_bar"),
            OutputMode::Velocity => Some("velocity.alpha_bar"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden: usize,
    pub blocks: usize,
    pub time_dim: usize,
    pub output: OutputMode,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            blocks: 4,
            time_dim: 64,
            output: OutputMode::Noise,
        }
    }
}

/// `ε_θ(x, t, c)`:
///
/// ```text
/// e   = SiLU(sinusoid(t) W_t + b_t)
/// h   = [x, c] W_in + b_in
/// h  += SiLU(SiLU(h) W_1 + b_1 + e W_e) W_2 + b_2      (per block)
/// out = SiLU(h) W_out + b_out
/// ```
///
/// `W_out` and `b_out` start at zero, so a fresh model predicts zero noise
/// (or a zero clean / velocity estimate in the other modes).
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserModel {
    dim: usize,
    cond_dim: usize,
    config: NetworkConfig,
    names: Vec<String>,
    params: Vec<Array2<f64>>,
    /// `ᾱ_t` for `t = 1..=T` (f32-rounded), present unless in noise mode.
    skip: Option<Array2<f64>>,
}

const TIME_W: usize = 0;
const TIME_B: usize = 1;
const IN_W: usize = 2;
const IN_B: usize = 3;
const FIRST_BLOCK: usize = 4;
const PER_BLOCK: usize = 5;

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

/// `[sin(t f_i), cos(t f_i)]` with geometric frequencies.
pub fn timestep_embedding(ts: &[usize], dim: usize) -> Array2<f64> {
    let half = dim / 2;
    Array2::from_shape_fn((ts.len(), dim), |(r, c)| {
        let i = c % half.max(1);
        let freq = (-(10_000f64).ln() * i as f64 / half.max(1) as f64).exp();
        let a = ts[r] as f64 * freq;
        if c < half {
            a.sin()
        } else if c < 2 * half {
            a.cos()
        } else {
            0.0
        }
    })
}

struct Cache {
    temb_in: Array2<f64>,
    temb_pre: Array2<f64>,
    temb: Array2<f64>,
    input: Array2<f64>,
    /// Residual stream before each block, plus the final one.
    hs: Vec<Array2<f64>>,
    pre_acts: Vec<Array2<f64>>,
    acts: Vec<Array2<f64>>,
    out_in: Array2<f64>,
}

impl DenoiserModel {
    fn layout(dim: usize, cond_dim: usize, config: &NetworkConfig) -> Vec<(String, (usize, usize), f64)> {
        let h = config.hidden;
        // (name, shape, init std; zero for biases and the output layer)
        let mut out = vec![
            ("time.weight".to_string(), (config.time_dim, h), (1.0 / config.time_dim as f64).sqrt()),
            ("time.bias".to_string(), (1, h), 0.0),
            ("input.weight".to_string(), (dim + cond_dim, h), (1.0 / (dim + cond_dim) as f64).sqrt()),
            ("input.bias".to_string(), (1, h), 0.0),
        ];
        let he = (2.0 / h as f64).sqrt();
        for b in 0..config.blocks {
            out.push((format!("block{b}.fc1.weight"), (h, h), he));
            out.push((format!("block{b}.fc1.bias"), (1, h), 0.0));
            out.push((format!("block{b}.time.weight"), (h, h), (1.0 / h as f64).sqrt()));
            out.push((format!("block{b}.fc2.weight"), (h, h), 0.1 * he));
            out.push((format!("block{b}.fc2.bias"), (1, h), 0.0));
        }
        out.push(("output.weight".to_string(), (h, dim), 0.0));
        out.push(("output.bias".to_string(), (1, dim), 0.0));
        out
    }

    fn check_config(dim: usize, config: &NetworkConfig) -> Result<()> {
        if dim == 0 || config.hidden == 0 || config.time_dim < 2 {
            return Err(Error::InvalidInput(format!(
                "bad network shape: dim {dim}, hidden {}, time_dim {}",
                config.hidden, config.time_dim
            )));
        }
        Ok(())
    }

    pub fn new<R: Rng + ?Sized>(
        dim: usize,
        cond_dim: usize,
        config: NetworkConfig,
        schedule: &NoiseSchedule,
        rng: &mut R,
    ) -> Result<Self> {
        Self::check_config(dim, &config)?;
        let (names, params) = Self::layout(dim, cond_dim, &config)
            .into_iter()
            .map(|(name, shape, std)| {
                let value = if std == 0.0 {
                    Array2::zeros(shape)
                } else {
                    let normal = Normal::new(0.0, std).expect("finite std");
                    Array2::from_shape_simple_fn(shape, || normal.sample(rng))
                };
                (name, value)
            })
            .unzip();
        let skip = config.output.table_name().map(|_| {
            Array2::from_shape_fn((1, schedule.t_max()), |(_, i)| schedule.alpha_bar(i + 1) as f32 as f64)
        });
        Ok(Self {
            dim,
            cond_dim,
            config,
            names,
            params,
            skip,
        })
    }

    /// Rebuilds a model from named tensors, inferring the shape.
    pub fn from_tensors(tensors: Vec<(String, Array2<f64>)>) -> Result<Self> {
        let bad = |why: &str| Error::format("denoiser tensors", why);
        let get = |name: &str| tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t);
        let time = get("time.weight").ok_or_else(|| bad("missing time.weight"))?;
        let input = get("input.weight").ok_or_else(|| bad("missing input.weight"))?;
        let out = get("output.weight").ok_or_else(|| bad("missing output.weight"))?;
        let blocks = (0..)
            .take_while(|b| get(&format!("block{b}.fc1.weight")).is_some())
            .count();
        let (output, skip) = [OutputMode::Data, OutputMode::Velocity]
            .into_iter()
            .find_map(|m| get(m.table_name()?).map(|t| (m, Some(t.clone()))))
            .unwrap_or((OutputMode::Noise, None));
        if let Some(t) = &skip {
            if t.nrows() != 1 || t.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
                return Err(bad("bad skip table"));
            }
        }
        let config = NetworkConfig {
            hidden: time.ncols(),
            blocks,
            time_dim: time.nrows(),
            output,
        };
        let dim = out.ncols();
        let cond_dim = input
            .nrows()
            .checked_sub(dim)
            .ok_or_else(|| bad("input narrower than output"))?;
        Self::check_config(dim, &config).map_err(|e| bad(&e.to_string()))?;
        let layout = Self::layout(dim, cond_dim, &config);
        if tensors.len() != layout.len() + skip.is_some() as usize {
            return Err(bad("unexpected extra tensors"));
        }
        let mut names = Vec::with_capacity(layout.len());
        let mut params = Vec::with_capacity(layout.len());
        for (name, shape, _) in layout {
            let t = get(&name).ok_or_else(|| bad(&format!("missing {name}")))?;
            if t.dim() != shape {
                return Err(bad(&format!("{name} has shape {:?}, expected {shape:?}", t.dim())));
            }
            params.push(t.clone());
            names.push(name);
        }
        Ok(Self {
            dim,
            cond_dim,
            config,
            names,
            params,
            skip,
        })
    }

    pub fn config(&self) -> NetworkConfig {
        self.config
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    /// Named tensors for checkpoints: the parameters, then the skip table.
    pub fn tensors(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(&self.params)
            .chain(self.skip.iter().filter_map(|t| Some((self.config.output.table_name()?, t))))
    }

    /// Per-row `(√ᾱ_t, √(1 − ᾱ_t))` outside noise mode.
    fn skip_coefficients(&self, rows: usize, ts: &[usize]) -> Result<Option<Vec<(f64, f64)>>> {
        let Some(table) = &self.skip else {
            return Ok(None);
        };
        let coef = |t: usize| -> Result<(f64, f64)> {
            if t == 0 || t > table.ncols() {
                return Err(Error::InvalidInput(format!("timestep {t} outside 1..={}", table.ncols())));
            }
            let ab = table[[0, t - 1]];
            Ok((ab.sqrt(), (1.0 - ab).sqrt()))
        };
        let out = if ts.len() == 1 {
            vec![coef(ts[0])?; rows]
        } else {
            ts.iter().map(|&t| coef(t)).collect::<Result<_>>()?
        };
        Ok(Some(out))
    }

    /// `ε̂ = (x − a D) / s` or `ε̂ = s x + a v` row by row.
    fn apply_skip(&self, y: &mut Array2<f64>, x: ArrayView2<f64>, coef: &[(f64, f64)]) {
        let velocity = self.config.output == OutputMode::Velocity;
        for ((mut row, xr), &(a, s)) in y.axis_iter_mut(Axis(0)).zip(x.axis_iter(Axis(0))).zip(coef) {
            if velocity {
                row.zip_mut_with(&xr, |d, x| *d = s * x + a * *d);
            } else {
                row.zip_mut_with(&xr, |d, x| *d = (x - a * *d) / s);
            }
        }
    }

    /// `∂ε̂/∂y` for a row with coefficients `(a, s)`.
    fn skip_slope(&self, (a, s): (f64, f64)) -> f64 {
        if self.config.output == OutputMode::Velocity {
            a
        } else {
            -a / s
        }
    }

    pub(crate) fn params(&self) -> &[Array2<f64>] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.params
    }

    /// Rounds every weight to the nearest `f32`, so that saving and loading
    /// a checkpoint reproduces the model exactly.
    pub fn round_to_f32(&mut self) {
        for p in &mut self.params {
            p.mapv_inplace(|v| v as f32 as f64);
        }
    }

    fn block(&self, b: usize, k: usize) -> &Array2<f64> {
        &self.params[FIRST_BLOCK + PER_BLOCK * b + k]
    }

    fn out_w(&self) -> &Array2<f64> {
        &self.params[self.params.len() - 2]
    }

    fn out_b(&self) -> &Array2<f64> {
        &self.params[self.params.len() - 1]
    }

    fn stack_input(&self, x: ArrayView2<f64>, cond: Option<ArrayView2<f64>>) -> Result<Array2<f64>> {
        crate::error::ensure_len("denoiser input width", self.dim, x.ncols())?;
        match cond {
            Some(c) => {
                crate::error::ensure_len("condition width", self.cond_dim, c.ncols())?;
                crate::error::ensure_len("condition rows", x.nrows(), c.nrows())?;
                let mut out = Array2::zeros((x.nrows(), self.dim + self.cond_dim));
                out.slice_mut(s![.., ..self.dim]).assign(&x);
                out.slice_mut(s![.., self.dim..]).assign(&c);
                Ok(out)
            }
            None => {
                crate::error::ensure_len("condition width", self.cond_dim, 0)?;
                Ok(x.to_owned())
            }
        }
    }

    fn forward_cached(&self, input: Array2<f64>, ts: &[usize]) -> (Array2<f64>, Cache) {
        let temb_in = timestep_embedding(ts, self.config.time_dim);
        let temb_pre = temb_in.dot(&self.params[TIME_W]) + &self.params[TIME_B];
        let temb = temb_pre.mapv(silu);
        let mut h = input.dot(&self.params[IN_W]) + &self.params[IN_B];
        let mut hs = Vec::with_capacity(self.config.blocks + 1);
        let mut pre_acts = Vec::with_capacity(self.config.blocks);
        let mut acts = Vec::with_capacity(self.config.blocks);
        for b in 0..self.config.blocks {
            let a = h.mapv(silu).dot(self.block(b, 0)) + self.block(b, 1) + temb.dot(self.block(b, 2));
            let q = a.mapv(silu);
            let next = &h + &(q.dot(self.block(b, 3)) + self.block(b, 4));
            hs.push(h);
            pre_acts.push(a);
            acts.push(q);
            h = next;
        }
        let out_in = h.mapv(silu);
        hs.push(h);
        let y = out_in.dot(self.out_w()) + self.out_b();
        (
            y,
            Cache {
                temb_in,
                temb_pre,
                temb,
                input,
                hs,
                pre_acts,
                acts,
                out_in,
            },
        )
    }

    /// Predictions for rows with individual timesteps. A single timestep
    /// is shared by every row.
    pub fn forward(&self, x: ArrayView2<f64>, ts: &[usize], cond: Option<ArrayView2<f64>>) -> Result<Array2<f64>> {
        if ts.len() != 1 {
            crate::error::ensure_len("timesteps", x.nrows(), ts.len())?;
        }
        let coef = self.skip_coefficients(x.nrows(), ts)?;
        let input = self.stack_input(x, cond)?;
        let mut y = self.forward_cached(input, ts).0;
        if let Some(coef) = coef {
            self.apply_skip(&mut y, x, &coef);
        }
        Ok(y)
    }

    /// Mean squared error against `target` and its gradient for every
    /// parameter, in parameter order.
    pub fn loss_and_grad(
        &self,
        x: ArrayView2<f64>,
        ts: &[usize],
        cond: Option<ArrayView2<f64>>,
        target: ArrayView2<f64>,
    ) -> Result<(f64, Vec<Array2<f64>>)> {
        crate::error::ensure_len("timesteps", x.nrows(), ts.len())?;
        let coef = self.skip_coefficients(x.nrows(), ts)?;
        let input = self.stack_input(x, cond)?;
        let (mut y, c) = self.forward_cached(input, ts);
        if y.dim() != target.dim() {
            return Err(Error::shape("loss target", y.len(), target.len()));
        }
        if let Some(coef) = &coef {
            self.apply_skip(&mut y, x, coef);
        }
        let diff = &y - &target;
        let n = diff.len() as f64;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
        let mut g_y = diff * (2.0 / n);
        if let Some(coef) = &coef {
            for (mut row, &c) in g_y.axis_iter_mut(Axis(0)).zip(coef) {
                row *= self.skip_slope(c);
            }
        }

        let mut grads: Vec<Array2<f64>> = self.params.iter().map(|p| Array2::zeros(p.dim())).collect();
        let last = grads.len();
        grads[last - 2] = c.out_in.t().dot(&g_y);
        grads[last - 1] = g_y.sum_axis(Axis(0)).insert_axis(Axis(0));
        let mut g_h = g_y.dot(&self.out_w().t()) * c.hs[self.config.blocks].mapv(silu_grad);
        let mut g_temb = Array2::<f64>::zeros(c.temb.dim());
        for b in (0..self.config.blocks).rev() {
            let base = FIRST_BLOCK + PER_BLOCK * b;
            grads[base + 3] = c.acts[b].t().dot(&g_h);
            grads[base + 4] = g_h.sum_axis(Axis(0)).insert_axis(Axis(0));
            let g_a = g_h.dot(&self.block(b, 3).t()) * c.pre_acts[b].mapv(silu_grad);
            let s_in = c.hs[b].mapv(silu);
            grads[base] = s_in.t().dot(&g_a);
            grads[base + 1] = g_a.sum_axis(Axis(0)).insert_axis(Axis(0));
            grads[base + 2] = c.temb.t().dot(&g_a);
            g_temb += &g_a.dot(&self.block(b, 2).t());
            g_h += &(g_a.dot(&self.block(b, 0).t()) * c.hs[b].mapv(silu_grad));
        }
        grads[IN_W] = c.input.t().dot(&g_h);
        grads[IN_B] = g_h.sum_axis(Axis(0)).insert_axis(Axis(0));
        let g_pre = g_temb * c.temb_pre.mapv(silu_grad);
        grads[TIME_W] = c.temb_in.t().dot(&g_pre);
        grads[TIME_B] = g_pre.sum_axis(Axis(0)).insert_axis(Axis(0));
        Ok((loss, grads))
    }
}

impl NoisePredictor for DenoiserModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    fn predict(&self, x: ArrayView2<f64>, t: usize, cond: Option<ArrayView2<f64>>) -> Result<Array2<f64>> {
        self.forward(x, &[t], cond)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_with(cond: usize, output: OutputMode) -> DenoiserModel {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = NetworkConfig {
            hidden: 8,
            blocks: 2,
            time_dim: 6,
            output,
        };
        let mut m = DenoiserModel::new(3, cond, cfg, &NoiseSchedule::default(), &mut rng).unwrap();
        // Make the output layer nonzero so every gradient path is exercised.
        let n = m.params.len();
        m.params[n - 2] = Array2::from_shape_fn((8, 3), |(i, j)| ((i * 3 + j) as f64 * 0.37).sin() * 0.3);
        m.params[n - 1] = Array2::from_elem((1, 3), 0.05);
        m
    }

    fn tiny(cond: usize) -> DenoiserModel {
        tiny_with(cond, OutputMode::Noise)
    }

    #[test]
    fn fresh_model_predicts_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = DenoiserModel::new(5, 2, NetworkConfig::default(), &NoiseSchedule::default(), &mut rng).unwrap();
        let x = Array2::from_shape_fn((4, 5), |(i, j)| (i + j) as f64 - 3.0);
        let c = Array2::from_elem((4, 2), 0.5);
        let y = m.predict(x.view(), 17, Some(c.view())).unwrap();
        assert_eq!(y.dim(), (4, 5));
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn shared_timestep_matches_per_row() {
        let m = tiny(2);
        let x = Array2::from_shape_fn((5, 3), |(i, j)| ((i * 3 + j) as f64 * 0.9).sin());
        let c = Array2::from_shape_fn((5, 2), |(i, j)| (i * j) as f64 * 0.1);
        let a = m.forward(x.view(), &[42], Some(c.view())).unwrap();
        let b = m.forward(x.view(), &[42; 5], Some(c.view())).unwrap();
        assert!((a - b).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn fresh_data_model_estimates_zero() {
        let s = NoiseSchedule::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = NetworkConfig {
            output: OutputMode::Data,
            ..NetworkConfig::default()
        };
        let m = DenoiserModel::new(4, 0, cfg, &s, &mut rng).unwrap();
        let x = Array2::from_shape_fn((3, 4), |(i, j)| (i * 4 + j) as f64 * 0.1);
        let y = m.predict(x.view(), 250, None).unwrap();
        let scale = 1.0 / (1.0 - s.alpha_bar(250) as f32 as f64).sqrt();
        for (a, b) in y.iter().zip(&x) {
            assert!((a - b * scale).abs() < 1e-12);
        }
        assert!(m.predict(x.view(), 0, None).is_err());
    }

    #[test]
    fn fresh_velocity_model_scales_input() {
        let s = NoiseSchedule::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = NetworkConfig {
            output: OutputMode::Velocity,
            ..NetworkConfig::default()
        };
        let m = DenoiserModel::new(4, 0, cfg, &s, &mut rng).unwrap();
        let x = Array2::from_shape_fn((3, 4), |(i, j)| (i * 4 + j) as f64 * 0.1);
        for t in [1, 250, 1000] {
            let y = m.predict(x.view(), t, None).unwrap();
            let scale = (1.0 - s.alpha_bar(t) as f32 as f64).sqrt();
            for (a, b) in y.iter().zip(&x) {
                assert!((a - b * scale).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for output in [OutputMode::Noise, OutputMode::Data, OutputMode::Velocity] {
            check_gradients(tiny_with(2, output));
        }
    }

    fn check_gradients(m: DenoiserModel) {
        let x = Array2::from_shape_fn((4, 3), |(i, j)| ((i * 5 + j) as f64 * 0.71).cos());
        let c = Array2::from_shape_fn((4, 2), |(i, j)| (i as f64 - j as f64) * 0.2);
        let ts = [3, 50, 400, 999];
        let target = Array2::from_shape_fn((4, 3), |(i, j)| ((i + 2 * j) as f64 * 0.3).sin());
        let (_, grads) = m.loss_and_grad(x.view(), &ts, Some(c.view()), target.view()).unwrap();
        let h = 1e-6;
        for (p, g) in grads.iter().enumerate() {
            for idx in 0..m.params[p].len().min(12) {
                let (r, col) = (idx / m.params[p].ncols(), idx % m.params[p].ncols());
                let mut plus = m.clone();
                plus.params[p][[r, col]] += h;
                let mut minus = m.clone();
                minus.params[p][[r, col]] -= h;
                let lp = plus.loss_and_grad(x.view(), &ts, Some(c.view()), target.view()).unwrap().0;
                let lm = minus.loss_and_grad(x.view(), &ts, Some(c.view()), target.view()).unwrap().0;
                let fd = (lp - lm) / (2.0 * h);
                assert!((fd - g[[r, col]]).abs() < 1e-7 * (1.0 + g[[r, col]].abs()), "{} [{r},{col}]: {fd} vs {}", m.names[p], g[[r, col]]);
            }
        }
    }

    #[test]
    fn tensors_round_trip() {
        for output in [OutputMode::Noise, OutputMode::Data, OutputMode::Velocity] {
            let m = tiny_with(1, output);
            let tensors = m.tensors().map(|(n, t)| (n.to_string(), t.clone())).collect();
            let back = DenoiserModel::from_tensors(tensors).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.config().output, output);
        }
    }

    #[test]
    fn wrong_widths_rejected() {
        let m = tiny(2);
        let x = Array2::zeros((2, 4));
        assert!(m.predict(x.view(), 1, None).is_err());
        let x = Array2::zeros((2, 3));
        assert!(m.predict(x.view(), 1, None).is_err());
    }

    #[test]
    fn embedding_is_bounded() {
        let e = timestep_embedding(&[1, 500, 1000], 64);
        assert!(e.iter().all(|v| v.abs() <= 1.0));
        assert_eq!(e[[0, 32]], 1f64.cos());
    }
}
