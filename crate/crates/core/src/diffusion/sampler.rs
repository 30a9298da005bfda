//! Forward diffusion, posterior sampling and denoising via diffusion.

use ndarray::{Array2, ArrayView2, Zip};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};

/// Anything that predicts the injected unit-Gaussian noise for a batch of
/// rows `x_t` at step `t`.
pub trait NoisePredictor {
    fn dim(&self) -> usize;

    fn cond_dim(&self) -> usize {
        0
    }

    fn predict(&self, x: ArrayView2<f64>, t: usize, cond: Option<ArrayView2<f64>>) -> Result<Array2<f64>>;
}

/// Wraps a closure as a predictor; handy for analytic oracles.
pub struct FnPredictor<F> {
    dim: usize,
    f: F,
}

impl<F> FnPredictor<F>
where
    F: Fn(ArrayView2<f64>, usize) -> Array2<f64>,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> NoisePredictor for FnPredictor<F>
where
    F: Fn(ArrayView2<f64>, usize) -> Array2<f64>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, x: ArrayView2<f64>, t: usize, _cond: Option<ArrayView2<f64>>) -> Result<Array2<f64>> {
        Ok((self.f)(x, t))
    }
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// `x_t = √ᾱ_t x + √(1−ᾱ_t) n` with the noise supplied by the caller.
pub fn forward_diffuse_with_noise(
    x: ArrayView2<f64>,
    t: usize,
    schedule: &NoiseSchedule,
    noise: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    schedule.check_step(t, 1)?;
    if x.dim() != noise.dim() {
        return Err(Error::shape("diffusion noise", x.len(), noise.len()));
    }
    let ab = schedule.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(Zip::from(&x).and(&noise).map_collect(|x, n| a * x + b * n))
}

pub fn forward_diffuse<R: Rng + ?Sized>(
    x: ArrayView2<f64>,
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<Array2<f64>> {
    let noise = standard_normal(rng, x.nrows(), x.ncols());
    forward_diffuse_with_noise(x, t, schedule, noise.view())
}

fn check_model<M: NoisePredictor + ?Sized>(model: &M, x: ArrayView2<f64>, cond: Option<ArrayView2<f64>>) -> Result<()> {
    crate::error::ensure_len("denoiser input width", model.dim(), x.ncols())?;
    match cond {
        Some(c) => {
            crate::error::ensure_len("condition width", model.cond_dim(), c.ncols())?;
            crate::error::ensure_len("condition rows", x.nrows(), c.nrows())
        }
        None => crate::error::ensure_len("condition width", model.cond_dim(), 0),
    }
}

/// One posterior step with explicit `z`:
/// `x_{t−1} = (x_t − (β_t/√(1−ᾱ_t)) ε̂) / √α_t + σ_t z`.
pub fn reverse_denoise_step_with_noise<M: NoisePredictor + ?Sized>(
    x_t: ArrayView2<f64>,
    t: usize,
    model: &M,
    cond: Option<ArrayView2<f64>>,
    schedule: &NoiseSchedule,
    z: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    schedule.check_step(t, 1)?;
    check_model(model, x_t, cond)?;
    let eps = model.predict(x_t, t, cond)?;
    let coef = schedule.beta(t) / (1.0 - schedule.alpha_bar(t)).sqrt();
    let inv = 1.0 / schedule.alpha(t).sqrt();
    let sigma = if t == 1 { 0.0 } else { schedule.sigma(t) };
    Ok(Zip::from(&x_t)
        .and(&eps)
        .and(&z)
        .map_collect(|x, e, z| inv * (x - coef * e) + sigma * z))
}

/// One posterior step; `z ~ N(0, I)` except at `t = 1`, where it is zero.
pub fn reverse_denoise_step<M: NoisePredictor + ?Sized, R: Rng + ?Sized>(
    x_t: ArrayView2<f64>,
    t: usize,
    model: &M,
    cond: Option<ArrayView2<f64>>,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<Array2<f64>> {
    let z = if t == 1 {
        Array2::zeros(x_t.dim())
    } else {
        standard_normal(rng, x_t.nrows(), x_t.ncols())
    };
    reverse_denoise_step_with_noise(x_t, t, model, cond, schedule, z.view())
}

/// Diffuses `x_hat` to step `t_diff` in one jump, then runs `t_diff`
/// posterior steps back to the data. `t_diff = 0` returns the input.
pub fn denoise_via_diffusion<M: NoisePredictor + ?Sized, R: Rng + ?Sized>(
    x_hat: ArrayView2<f64>,
    cond: Option<ArrayView2<f64>>,
    t_diff: usize,
    model: &M,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<Array2<f64>> {
    schedule.check_step(t_diff, 0)?;
    check_model(model, x_hat, cond)?;
    if t_diff == 0 {
        return Ok(x_hat.to_owned());
    }
    let mut x = forward_diffuse(x_hat, t_diff, schedule, rng)?;
    for t in (1..=t_diff).rev() {
        x = reverse_denoise_step(x.view(), t, model, cond, schedule, rng)?;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_model(dim: usize) -> FnPredictor<impl Fn(ArrayView2<f64>, usize) -> Array2<f64>> {
        FnPredictor::new(dim, |x: ArrayView2<f64>, _| Array2::zeros(x.dim()))
    }

    #[test]
    fn pinned_noise_scales_input() {
        let s = NoiseSchedule::default();
        let x = Array2::from_shape_vec((1, 3), vec![1.0, -2.0, 0.5]).unwrap();
        let out = forward_diffuse_with_noise(x.view(), 250, &s, Array2::zeros((1, 3)).view()).unwrap();
        let a = s.alpha_bar(250).sqrt();
        for (o, x) in out.iter().zip(&x) {
            assert_eq!(*o, a * x);
        }
    }

    #[test]
    fn out_of_range_steps() {
        let s = NoiseSchedule::default();
        let x = Array2::zeros((1, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(forward_diffuse(x.view(), 0, &s, &mut rng).is_err());
        assert!(forward_diffuse(x.view(), 1001, &s, &mut rng).is_err());
        let m = zero_model(2);
        assert!(reverse_denoise_step(x.view(), 0, &m, None, &s, &mut rng).is_err());
        assert!(denoise_via_diffusion(x.view(), None, 1001, &m, &s, &mut rng).is_err());
    }

    #[test]
    fn zero_score_divides_by_sqrt_alpha() {
        let s = NoiseSchedule::default();
        let x = Array2::from_shape_vec((2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = reverse_denoise_step_with_noise(x.view(), 500, &zero_model(2), None, &s, Array2::zeros((2, 2)).view()).unwrap();
        for (o, x) in out.iter().zip(&x) {
            assert!((o - x / s.alpha(500).sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn last_step_is_deterministic() {
        let s = NoiseSchedule::default();
        let x = Array2::from_elem((4, 3), 0.7);
        let m = zero_model(3);
        let a = reverse_denoise_step(x.view(), 1, &m, None, &s, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = reverse_denoise_step(x.view(), 1, &m, None, &s, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_steps_return_input_bitwise() {
        let s = NoiseSchedule::default();
        let x = Array2::from_shape_fn((3, 5), |(i, j)| (i * 7 + j) as f64 * 0.1 - 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = denoise_via_diffusion(x.view(), None, 0, &zero_model(5), &s, &mut rng).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn forward_marginals() {
        let s = NoiseSchedule::default();
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for t in [1, 100, 1000] {
            let x = Array2::from_elem((n, 1), 0.8);
            let xt = forward_diffuse(x.view(), t, &s, &mut rng).unwrap();
            let mean = xt.mean().unwrap();
            let var = xt.mapv(|v| (v - mean).powi(2)).mean().unwrap();
            let m_ref = s.alpha_bar(t).sqrt() * 0.8;
            let v_ref = 1.0 - s.alpha_bar(t);
            assert!((mean - m_ref).abs() < 0.03 * m_ref.abs().max(v_ref.sqrt()), "t={t} mean {mean}");
            assert!((var / v_ref - 1.0).abs() < 0.03, "t={t} var {var}");
        }
    }

    #[test]
    fn gaussian_oracle_chain_preserves_unit_variance() {
        let s = NoiseSchedule::default();
        // Optimal ε for x0 ~ N(0, 1): E[n | x_t] = √(1−ᾱ_t) x_t.
        let oracle = FnPredictor::new(1, |x: ArrayView2<f64>, t| x.mapv(|v| (1.0 - s.alpha_bar(t)).sqrt() * v));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut x = standard_normal(&mut rng, 4000, 1);
        for t in (1..=1000).rev() {
            x = reverse_denoise_step(x.view(), t, &oracle, None, &s, &mut rng).unwrap();
        }
        let var = x.mapv(|v| v * v).mean().unwrap();
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn point_mass_oracle_collapses() {
        let s = NoiseSchedule::default();
        let oracle = FnPredictor::new(2, |x: ArrayView2<f64>, t| x.mapv(|v| v / (1.0 - s.alpha_bar(t)).sqrt()));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_elem((10, 2), 3.0);
        let out = denoise_via_diffusion(x.view(), None, 1000, &oracle, &s, &mut rng).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-6));
    }
}
