use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::numerics::{Scalar, Tensor};

use super::DiffusionError;

/// Linear variance schedule over steps `1..=T`; index 0 is the clean
/// signal with `ᾱ_0 = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub t_max: usize,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    sigma: Vec<f64>,
}

impl Schedule {
    /// `β_t` evenly spaced from `beta_min` (t = 1) to `beta_max` (t = T).
    pub fn linear(t_max: usize, beta_min: f64, beta_max: f64) -> Result<Self, DiffusionError> {
        if t_max < 2 {
            return Err(DiffusionError::Config(format!("T = {t_max} must be at least 2")));
        }
        if !(0.0 < beta_min && beta_min < beta_max && beta_max < 1.0) {
            return Err(DiffusionError::Config(format!("need 0 < beta_min < beta_max < 1, got {beta_min}, {beta_max}")));
        }
        let mut beta = vec![0.0];
        beta.extend((1..=t_max).map(|t| beta_min + (beta_max - beta_min) * (t - 1) as f64 / (t_max - 1) as f64));
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = vec![1.0];
        for t in 1..=t_max {
            alpha_bar.push(alpha_bar[t - 1] * alpha[t]);
        }
        // σ_t² = β_t, except the final step which is noiseless
        let sigma = (0..=t_max).map(|t| if t <= 1 { 0.0 } else { beta[t].sqrt() }).collect();
        Ok(Schedule { t_max, beta, alpha, alpha_bar, sigma })
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma[t]
    }

    /// Accepts `0..=T` when `allow_zero`, else `1..=T`.
    pub fn check_t(&self, t: usize, allow_zero: bool) -> Result<(), DiffusionError> {
        let lo = usize::from(!allow_zero);
        if t < lo || t > self.t_max {
            return Err(DiffusionError::Timestep { t, t_max: self.t_max });
        }
        Ok(())
    }
}

/// Standard-normal `rows × cols` draw whose rows from `valid_len` on are zero.
pub fn masked_noise<T: Scalar>(rows: usize, cols: usize, valid_len: usize, rng: &mut impl Rng) -> Tensor<T> {
    Tensor::from_fn(&[rows, cols], |i| {
        if i / cols < valid_len {
            T::of(rng.sample::<f64, _>(StandardNormal))
        } else {
            T::zero()
        }
    })
}

fn check_same<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<(), DiffusionError> {
    if a.shape() != b.shape() {
        return Err(DiffusionError::Input(format!("shapes {:?} and {:?} differ", a.shape(), b.shape())));
    }
    Ok(())
}

/// `Z_t = √ᾱ_t Z_0 + √(1−ᾱ_t) ε` with seeded `ε`; rows from `valid_len`
/// on receive no noise. `t = 0` returns `Z_0`.
pub fn forward_sample<T: Scalar>(
    s: &Schedule,
    z0: &Tensor<T>,
    valid_len: usize,
    t: usize,
    seed: u64,
) -> Result<(Tensor<T>, Tensor<T>), DiffusionError> {
    s.check_t(t, true)?;
    if !z0.is_matrix() || valid_len > z0.rows() {
        return Err(DiffusionError::Input(format!("Z_0 of shape {:?} with {valid_len} valid rows", z0.shape())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = masked_noise(z0.rows(), z0.cols(), valid_len, &mut rng);
    Ok((corrupt(s, z0, &eps, t), eps))
}

/// The closed-form corruption for a given noise draw.
pub fn corrupt<T: Scalar>(s: &Schedule, z0: &Tensor<T>, eps: &Tensor<T>, t: usize) -> Tensor<T> {
    let ab = s.alpha_bar(t);
    let (a, b) = (T::of(ab.sqrt()), T::of((1.0 - ab).sqrt()));
    let data = z0.data().iter().zip(eps.data()).map(|(&z, &e)| a * z + b * e).collect();
    Tensor::new(z0.shape(), data).expect("same shape")
}

/// One ancestral step: `Z_{t−1} = μ_θ + σ_t ξ`, with `ξ` drawn from `seed`
/// over the first `valid_len` rows; `μ_θ` alone when `deterministic`.
pub fn reverse_step<T: Scalar>(
    s: &Schedule,
    z_t: &Tensor<T>,
    t: usize,
    eps_hat: &Tensor<T>,
    seed: u64,
    deterministic: bool,
    valid_len: usize,
) -> Result<Tensor<T>, DiffusionError> {
    s.check_t(t, false)?;
    check_same(z_t, eps_hat)?;
    let (alpha, ab) = (s.alpha(t), s.alpha_bar(t));
    let k = T::of((1.0 - alpha) / (1.0 - ab).sqrt());
    let inv = T::of(1.0 / alpha.sqrt());
    let mut out: Vec<T> = z_t.data().iter().zip(eps_hat.data()).map(|(&z, &e)| inv * (z - k * e)).collect();
    let sigma = s.sigma(t);
    if !deterministic && sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xi = masked_noise::<T>(z_t.rows(), z_t.cols(), valid_len, &mut rng);
        for (o, &x) in out.iter_mut().zip(xi.data()) {
            *o += T::of(sigma) * x;
        }
    }
    Ok(Tensor::new(z_t.shape(), out)?)
}

/// `Ẑ_0 = (Z_t − √(1−ᾱ_t) ε̂) / √ᾱ_t`.
pub fn estimate_z0<T: Scalar>(s: &Schedule, z_t: &Tensor<T>, t: usize, eps_hat: &Tensor<T>) -> Result<Tensor<T>, DiffusionError> {
    s.check_t(t, true)?;
    check_same(z_t, eps_hat)?;
    let ab = s.alpha_bar(t);
    let (c, inv) = (T::of((1.0 - ab).sqrt()), T::of(1.0 / ab.sqrt()));
    let data = z_t.data().iter().zip(eps_hat.data()).map(|(&z, &e)| (z - c * e) * inv).collect();
    Ok(Tensor::new(z_t.shape(), data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched() -> Schedule {
        Schedule::linear(50, 2e-3, 0.4).unwrap()
    }

    #[test]
    fn schedule_is_monotone() {
        for s in [sched(), Schedule::linear(1000, 1e-4, 0.02).unwrap()] {
            for t in 1..=s.t_max {
                assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
                assert!(t == 1 || s.beta(t) > s.beta(t - 1));
            }
            assert!(s.alpha_bar(s.t_max) < 0.05);
            assert_eq!(s.sigma(1), 0.0);
        }
        assert!(Schedule::linear(10, 0.5, 0.1).is_err());
    }

    #[test]
    fn zero_noise_estimate_scales_by_inverse_root_alpha() {
        let s = sched();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z: Tensor<f64> = masked_noise(4, 3, 4, &mut rng);
        let zero = Tensor::zeros(&[4, 3]);
        let prev = reverse_step(&s, &z, 7, &zero, 0, true, 4).unwrap();
        for (p, q) in prev.data().iter().zip(z.data()) {
            assert!((p - q / s.alpha(7).sqrt()).abs() < 1e-15);
        }
        assert_eq!(estimate_z0(&s, &z, 0, &zero).unwrap(), z);
        assert!(reverse_step(&s, &z, 0, &zero, 0, true, 4).is_err());
        assert!(forward_sample(&s, &z, 4, 51, 0).is_err());
    }

    #[test]
    fn forward_sample_is_seeded_and_skips_padding() {
        let s = sched();
        let z0 = Tensor::<f64>::full(&[6, 2], 0.5);
        let (a, ea) = forward_sample(&s, &z0, 4, 25, 9).unwrap();
        let (b, _) = forward_sample(&s, &z0, 4, 25, 9).unwrap();
        assert_eq!(a, b);
        assert!(ea.data()[8..].iter().all(|&x| x == 0.0));
        let pad = s.alpha_bar(25).sqrt() * 0.5;
        assert!(a.data()[8..].iter().all(|&x| (x - pad).abs() < 1e-15));
        assert_eq!(forward_sample(&s, &z0, 4, 0, 9).unwrap().0, z0);
        // the true noise inverts exactly
        let back = estimate_z0(&s, &a, 25, &ea).unwrap();
        for (p, q) in back.data().iter().zip(z0.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}
