//! Seeded generator of labeled synthetic instances with controllable size,
//! miscalibration and pixel correlation.
//!
//! Per instance: a pixel count (log-uniform), a denominator prevalence `p_b`
//! and a latent ratio `r`. Pixels come in blocks that share a denominator
//! probability `pi ~ Beta(p_b k, (1 - p_b) k)`; each pixel draws its own
//! subregion fraction `rho ~ Beta(r k, (1 - r) k)`. Labels are
//! `y_b ~ Bern(pi)` and `y_a = y_b * Bern(rho)`, and predictions are
//! `sigmoid(logit(p) / T + noise)` with `p = pi` and `p = pi * rho`. At `T = 1`
//! without noise the predictions are calibrated and `E[g_a] / E[g_b] = r`.

use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::labeled_ratio;
use crate::rng::stream;
use crate::scalar::Scalar;
use crate::volume::{InstanceVolume, Labels};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub n_instances: usize,
    pub pixels_min: usize,
    pub pixels_max: usize,
    pub p_b_range: (f64, f64),
    pub ratio_range: (f64, f64),
    pub temperature: f64,
    pub noise_sd: f64,
    /// Pixels sharing one denominator probability; 1 gives i.i.d. pixels.
    pub block_size: usize,
    /// Beta concentration of the per-pixel probabilities; larger is less
    /// spread around `p_b` and `r`.
    pub concentration: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_instances: 500,
            pixels_min: 1_000,
            pixels_max: 20_000,
            p_b_range: (0.2, 0.6),
            ratio_range: (0.1, 0.6),
            temperature: 1.0,
            noise_sd: 0.0,
            block_size: 1,
            concentration: 10.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_instances < 1 {
            return bad("n_instances must be >= 1".into());
        }
        if !(1 <= self.pixels_min && self.pixels_min <= self.pixels_max) {
            return bad(format!("need 1 <= pixels_min <= pixels_max, got {}..{}", self.pixels_min, self.pixels_max));
        }
        let (pl, ph) = self.p_b_range;
        if !(0.0 < pl && pl <= ph && ph < 1.0) {
            return bad(format!("p_b range ({pl}, {ph}) must be ordered inside (0, 1)"));
        }
        let (rl, rh) = self.ratio_range;
        if !(0.0 <= rl && rl <= rh && rh <= 1.0) {
            return bad(format!("ratio range ({rl}, {rh}) must be ordered inside [0, 1]"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be > 0, got {}", self.temperature));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd must be >= 0, got {}", self.noise_sd));
        }
        if self.block_size < 1 {
            return bad("block_size must be >= 1".into());
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return bad(format!("concentration must be > 0, got {}", self.concentration));
        }
        Ok(())
    }
}

/// A generated instance with the latent parameters it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthInstance<T> {
    pub index: usize,
    pub volume: InstanceVolume<T>,
    pub p_b: f64,
    pub ratio: f64,
}

impl<T: Scalar> SynthInstance<T> {
    /// The latent ratio used at generation.
    pub fn true_ratio(&self) -> f64 {
        self.ratio
    }

    /// Ratio of the sampled labels.
    pub fn realized_ratio(&self) -> Result<T> {
        labeled_ratio(&self.volume)
    }
}

pub fn instance_id(index: usize) -> String {
    format!("case_{index:06}")
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `Beta(m k, (1 - m) k)`, or the constant `m` at the ends of `[0, 1]`.
enum Fraction {
    Const(f64),
    Beta(Beta<f64>),
}

impl Fraction {
    fn new(mean: f64, k: f64) -> Result<Self> {
        if mean <= 0.0 || mean >= 1.0 {
            return Ok(Fraction::Const(mean.clamp(0.0, 1.0)));
        }
        Beta::new(mean * k, (1.0 - mean) * k)
            .map(Fraction::Beta)
            .map_err(|e| Error::Config(format!("beta({mean}, {k}): {e}")))
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Fraction::Const(c) => *c,
            Fraction::Beta(b) => b.sample(rng),
        }
    }
}

fn generate_one<T: Scalar>(cfg: &SynthConfig, index: usize) -> Result<SynthInstance<T>> {
    let mut rng = stream(cfg.seed, index as u64);
    let (lo, hi) = ((cfg.pixels_min as f64).ln(), (cfg.pixels_max as f64).ln());
    let n = if cfg.pixels_min == cfg.pixels_max {
        cfg.pixels_min
    } else {
        (rng.random_range(lo..=hi).exp().round() as usize).clamp(cfg.pixels_min, cfg.pixels_max)
    };
    let p_b = if cfg.p_b_range.0 == cfg.p_b_range.1 {
        cfg.p_b_range.0
    } else {
        rng.random_range(cfg.p_b_range.0..=cfg.p_b_range.1)
    };
    let ratio = if cfg.ratio_range.0 == cfg.ratio_range.1 {
        cfg.ratio_range.0
    } else {
        rng.random_range(cfg.ratio_range.0..=cfg.ratio_range.1)
    };

    let block = Fraction::new(p_b, cfg.concentration)?;
    let sub = Fraction::new(ratio, cfg.concentration)?;
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| Error::Config(format!("noise: {e}")))?;
    let distort = |p: f64, rng: &mut rand_chacha::ChaCha8Rng| {
        let eps = if cfg.noise_sd > 0.0 { noise.sample(rng) } else { 0.0 };
        T::lit(sigmoid(logit(p) / cfg.temperature + eps))
    };

    let (mut g_a, mut g_b) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut y_a, mut y_b) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut pi = 0.0;
    for i in 0..n {
        if i % cfg.block_size == 0 {
            pi = block.sample(&mut rng);
        }
        let rho = sub.sample(&mut rng);
        let in_b = rng.random_bool(pi);
        let in_a = rng.random_bool(rho) && in_b;
        y_b.push(in_b);
        y_a.push(in_a);
        g_b.push(distort(pi, &mut rng));
        g_a.push(distort(pi * rho, &mut rng));
    }
    let volume = InstanceVolume::new(instance_id(index), g_a, g_b, Some(Labels { a: y_a, b: y_b }))?;
    Ok(SynthInstance { index, volume, p_b, ratio })
}

/// Instances `start..end`; identical to the same slice of [`generate`].
pub fn generate_range<T: Scalar>(cfg: &SynthConfig, start: usize, end: usize) -> Result<Vec<SynthInstance<T>>> {
    cfg.validate()?;
    (start..end).into_par_iter().map(|i| generate_one(cfg, i)).collect()
}

pub fn generate<T: Scalar>(cfg: &SynthConfig) -> Result<Vec<SynthInstance<T>>> {
    generate_range(cfg, 0, cfg.n_instances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::ece;
    use crate::volume::Channel;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig { n_instances: 20, pixels_min: 200, pixels_max: 2_000, seed, ..Default::default() }
    }

    #[test]
    fn deterministic_and_splittable() {
        let cfg = small(5);
        let all = generate::<f64>(&cfg).unwrap();
        assert_eq!(all, generate::<f64>(&cfg).unwrap());
        let mut parts = generate_range::<f64>(&cfg, 0, 7).unwrap();
        parts.extend(generate_range::<f64>(&cfg, 7, 20).unwrap());
        assert_eq!(all, parts);
        assert_ne!(all, generate::<f64>(&small(6)).unwrap());
    }

    #[test]
    fn labels_respect_subregion() {
        for inst in generate::<f64>(&SynthConfig { noise_sd: 0.5, block_size: 8, ..small(1) }).unwrap() {
            let l = inst.volume.labels().unwrap();
            assert!(l.a.iter().zip(&l.b).all(|(&a, &b)| !a || b));
            assert!((200..=2_000).contains(&inst.volume.n_pixels()));
        }
    }

    #[test]
    fn degenerate_ratio_range() {
        let cfg = SynthConfig { ratio_range: (0.0, 0.0), ..small(2) };
        for inst in generate::<f64>(&cfg).unwrap() {
            assert_eq!(inst.true_ratio(), 0.0);
            assert_eq!(inst.realized_ratio().unwrap_or(0.0), 0.0);
            assert!(inst.volume.g_a().iter().all(|&g| g == 0.0));
        }
        let cfg = SynthConfig { ratio_range: (0.5, 0.5), ..small(2) };
        assert!(generate::<f64>(&cfg).unwrap().iter().all(|i| i.true_ratio() == 0.5));
    }

    #[test]
    fn realized_ratio_converges() {
        let cfg = SynthConfig {
            n_instances: 1,
            pixels_min: 1_000_000,
            pixels_max: 1_000_000,
            ratio_range: (0.35, 0.35),
            seed: 11,
            ..Default::default()
        };
        let inst = &generate::<f64>(&cfg).unwrap()[0];
        assert!((inst.realized_ratio().unwrap() - 0.35).abs() < 0.01);
    }

    fn pooled(cfg: &SynthConfig) -> InstanceVolume<f64> {
        let insts = generate::<f64>(cfg).unwrap();
        insts[1..].iter().fold(insts[0].volume.clone(), |acc, i| acc.concat(&i.volume, "pool"))
    }

    #[test]
    fn temperature_raises_pooled_ece() {
        let cfg = SynthConfig { n_instances: 40, pixels_min: 5_000, pixels_max: 5_000, seed: 3, ..Default::default() };
        let e1 = ece(&pooled(&cfg), Channel::B, 15).unwrap().0;
        let e2 = ece(&pooled(&SynthConfig { temperature: 2.0, ..cfg }), Channel::B, 15).unwrap().0;
        assert!(e1 < 0.01, "calibrated ECE {e1}");
        assert!(e2 > e1);
    }

    #[test]
    fn blocks_correlate_predictions() {
        let cfg = SynthConfig { n_instances: 1, pixels_min: 20_000, pixels_max: 20_000, block_size: 16, seed: 4, ..Default::default() };
        let g = generate::<f64>(&cfg).unwrap()[0].volume.g_b().to_vec();
        // lag-1 correlation within blocks
        let pairs: Vec<(f64, f64)> = (0..g.len() - 1).filter(|i| (i + 1) % 16 != 0).map(|i| (g[i], g[i + 1])).collect();
        let m = g.iter().sum::<f64>() / g.len() as f64;
        let cov = pairs.iter().map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / pairs.len() as f64;
        assert!(cov > 0.0);
    }

    #[test]
    fn config_validation() {
        let ok = SynthConfig::default();
        ok.validate().unwrap();
        for bad in [
            SynthConfig { temperature: 0.0, ..ok },
            SynthConfig { pixels_min: 10, pixels_max: 5, ..ok },
            SynthConfig { p_b_range: (0.5, 0.4), ..ok },
            SynthConfig { p_b_range: (0.0, 0.4), ..ok },
            SynthConfig { ratio_range: (0.2, 1.1), ..ok },
            SynthConfig { block_size: 0, ..ok },
            SynthConfig { noise_sd: -1.0, ..ok },
        ] {
            assert!(matches!(generate::<f64>(&bad), Err(Error::Config(_))));
        }
    }
}
