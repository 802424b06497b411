//! Reparameterization of metric targets.
//!
//! Raw error values cluster near zero with a few large outliers. Training
//! happens in a transformed space centred on the dataset mean `mu`, and
//! predictions are mapped back with the matching inverse.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::{Error, Result, TensorBuffer};

pub const DEFAULT_K_LOGISTIC: f64 = 10.0;
pub const DEFAULT_EMA_ALPHA: f64 = 0.01;
pub const MU_MIN: f64 = 1e-4;
pub const MU_MAX: f64 = 1.0 - 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransformKind {
    Clamped,
    Logistic,
    Identity,
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransformKind::Clamped => "clamped",
            TransformKind::Logistic => "logistic",
            TransformKind::Identity => "identity",
        })
    }
}

impl FromStr for TransformKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clamped" => Ok(Self::Clamped),
            "logistic" => Ok(Self::Logistic),
            "identity" => Ok(Self::Identity),
            other => Err(Error::Config(format!("unknown transform {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MuMode {
    /// Mean of all training targets, computed once before training.
    Precomputed,
    /// Exponential moving average over the batches seen so far.
    Running,
}

impl fmt::Display for MuMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MuMode::Precomputed => "precomputed",
            MuMode::Running => "running",
        })
    }
}

impl FromStr for MuMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "precomputed" => Ok(Self::Precomputed),
            "running" => Ok(Self::Running),
            other => Err(Error::Config(format!("unknown mu mode {other:?}"))),
        }
    }
}

pub fn t_clamped(y: f64, mu: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::Value(format!("clamped transform needs mu > 0, got {mu}")));
    }
    Ok((y / (2.0 * mu)).min(1.0).max(0.0))
}

/// Only meaningful on `[0, 1]`; values that were clamped are not recovered.
pub fn t_clamped_inv(y_hat: f64, mu: f64) -> f64 {
    y_hat * 2.0 * mu
}

fn logistic(y: f64, mu: f64, k: f64) -> f64 {
    1.0 / (1.0 + (-k * (y - mu)).exp())
}

/// Logistic curve centred on `mu`, renormalized so that 0 maps to 0 and 1 to 1.
pub fn t_logistic(y: f64, mu: f64, k: f64) -> f64 {
    let s0 = logistic(0.0, mu, k);
    let s1 = logistic(1.0, mu, k);
    (logistic(y, mu, k) - s0) / (s1 - s0)
}

pub fn t_logistic_inv(y_hat: f64, mu: f64, k: f64) -> f64 {
    if y_hat <= 0.0 {
        return 0.0;
    }
    if y_hat >= 1.0 {
        return 1.0;
    }
    let s0 = logistic(0.0, mu, k);
    let s1 = logistic(1.0, mu, k);
    let s = s0 + y_hat * (s1 - s0);
    (mu + (s / (1.0 - s)).ln() / k).clamp(0.0, 1.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransformSpec {
    pub kind: TransformKind,
    /// Dataset mean of the targets. One entry for a global mean, or one per
    /// output channel.
    pub mu: Vec<f64>,
    pub k_logistic: f64,
    pub mu_mode: MuMode,
    pub ema_alpha: f64,
}

impl TransformSpec {
    pub fn new(kind: TransformKind, mu: f64) -> Result<Self> {
        let spec = Self {
            kind,
            mu: vec![mu],
            k_logistic: DEFAULT_K_LOGISTIC,
            mu_mode: MuMode::Precomputed,
            ema_alpha: DEFAULT_EMA_ALPHA,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn identity() -> Self {
        Self::new(TransformKind::Identity, 0.5).expect("0.5 is a valid mu")
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu.is_empty() {
            return Err(Error::Config("mu must have at least one entry".into()));
        }
        if let Some(bad) = self.mu.iter().find(|&&m| !(m > 0.0 && m < 1.0)) {
            return Err(Error::Config(format!("mu {bad} outside (0, 1)")));
        }
        if !(self.k_logistic > 0.0) {
            return Err(Error::Config(format!("k_logistic {} must be > 0", self.k_logistic)));
        }
        if !(self.ema_alpha > 0.0 && self.ema_alpha < 1.0) {
            return Err(Error::Config(format!("ema_alpha {} outside (0, 1)", self.ema_alpha)));
        }
        Ok(())
    }

    pub fn mu_for(&self, channel: usize) -> f64 {
        if self.mu.len() == 1 {
            self.mu[0]
        } else {
            self.mu[channel]
        }
    }

    pub fn forward(&self, y: f64, channel: usize) -> f64 {
        let mu = self.mu_for(channel);
        match self.kind {
            TransformKind::Clamped => (y / (2.0 * mu)).clamp(0.0, 1.0),
            TransformKind::Logistic => t_logistic(y, mu, self.k_logistic),
            TransformKind::Identity => y,
        }
    }

    pub fn inverse(&self, y_hat: f64, channel: usize) -> f64 {
        let mu = self.mu_for(channel);
        match self.kind {
            TransformKind::Clamped => t_clamped_inv(y_hat, mu),
            TransformKind::Logistic => t_logistic_inv(y_hat, mu, self.k_logistic),
            TransformKind::Identity => y_hat,
        }
    }

    fn check_channels(&self, t: &TensorBuffer) -> Result<()> {
        let (_, c, _, _) = t.nchw();
        if self.mu.len() != 1 && self.mu.len() != c {
            return Err(Error::Dims(format!(
                "per-channel mu has {} entries, tensor has {c} channels",
                self.mu.len()
            )));
        }
        Ok(())
    }

    fn map_tensor(&self, t: &TensorBuffer, f: impl Fn(f64, usize) -> f64) -> Result<TensorBuffer> {
        self.check_channels(t)?;
        let (n, c, _, _) = t.nchw();
        let mut out = t.clone();
        for b in 0..n {
            for ch in 0..c {
                for v in out.plane_mut(b, ch) {
                    *v = f(*v as f64, ch) as f32;
                }
            }
        }
        Ok(out)
    }

    /// Applies the transform channel-wise to an `(N, C, H, W)` tensor.
    pub fn forward_tensor(&self, t: &TensorBuffer) -> Result<TensorBuffer> {
        self.map_tensor(t, |v, c| self.forward(v, c))
    }

    pub fn inverse_tensor(&self, t: &TensorBuffer) -> Result<TensorBuffer> {
        self.map_tensor(t, |v, c| self.inverse(v, c))
    }

    /// Blends a batch mean into `mu`: `mu <- (1 - alpha) mu + alpha mean`,
    /// clamped to `[1e-4, 1 - 1e-4]`. Per-channel specs use per-channel means.
    pub fn update_mu(&mut self, batch_targets: &TensorBuffer) -> Result<()> {
        if self.mu_mode != MuMode::Running {
            return Err(Error::Config("update_mu requires the running mu mode".into()));
        }
        self.check_channels(batch_targets)?;
        let means = channel_means(batch_targets, self.mu.len() != 1);
        let alpha = self.ema_alpha;
        for (mu, mean) in self.mu.iter_mut().zip(means) {
            *mu = ((1.0 - alpha) * *mu + alpha * mean).clamp(MU_MIN, MU_MAX);
        }
        Ok(())
    }

    /// Sets `mu` to the mean of `targets` (globally or per channel).
    pub fn precompute_mu(&mut self, targets: &[&TensorBuffer]) -> Result<()> {
        if targets.is_empty() {
            return Err(Error::Value("cannot compute mu from an empty target set".into()));
        }
        let per_channel = self.mu.len() != 1;
        let channels = targets[0].nchw().1;
        let mut sums = vec![0.0f64; if per_channel { channels } else { 1 }];
        let mut count = vec![0usize; sums.len()];
        for t in targets {
            self.check_channels(t)?;
            let (n, c, _, _) = t.nchw();
            for b in 0..n {
                for ch in 0..c {
                    let slot = if per_channel { ch } else { 0 };
                    let plane = t.plane(b, ch);
                    sums[slot] += plane.iter().map(|&v| v as f64).sum::<f64>();
                    count[slot] += plane.len();
                }
            }
        }
        self.mu = sums
            .iter()
            .zip(&count)
            .map(|(s, &n)| (s / n as f64).clamp(MU_MIN, MU_MAX))
            .collect();
        Ok(())
    }

    pub fn to_meta(&self, meta: &mut BTreeMap<String, String>) {
        meta.insert("transform".into(), self.kind.to_string());
        meta.insert(
            "transform_mu".into(),
            self.mu.iter().map(|m| format!("{m:e}")).collect::<Vec<_>>().join(","),
        );
        meta.insert("transform_k".into(), format!("{:e}", self.k_logistic));
        meta.insert("transform_mu_mode".into(), self.mu_mode.to_string());
        meta.insert("transform_ema_alpha".into(), format!("{:e}", self.ema_alpha));
    }

    pub fn from_meta(meta: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| meta.get(k).ok_or_else(|| Error::Config(format!("weights metadata lacks {k}")));
        let num = |k: &str| -> Result<f64> {
            get(k)?.parse::<f64>().map_err(|e| Error::Config(format!("{k}: {e}")))
        };
        let mu = get("transform_mu")?
            .split(',')
            .map(|v| v.parse::<f64>().map_err(|e| Error::Config(format!("transform_mu: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let spec = Self {
            kind: get("transform")?.parse()?,
            mu,
            k_logistic: num("transform_k")?,
            mu_mode: get("transform_mu_mode")?.parse()?,
            ema_alpha: num("transform_ema_alpha")?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn channel_means(t: &TensorBuffer, per_channel: bool) -> Vec<f64> {
    let (n, c, _, _) = t.nchw();
    if !per_channel {
        return vec![t.data().iter().map(|&v| v as f64).sum::<f64>() / t.len() as f64];
    }
    (0..c)
        .map(|ch| {
            let (s, cnt) = (0..n).fold((0.0, 0usize), |(s, cnt), b| {
                let p = t.plane(b, ch);
                (s + p.iter().map(|&v| v as f64).sum::<f64>(), cnt + p.len())
            })
            ;
            s / cnt as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clamped_values() {
        assert_eq!(t_clamped(0.2, 0.2).unwrap(), 0.5);
        assert_eq!(t_clamped(0.0, 0.2).unwrap(), 0.0);
        assert_eq!(t_clamped(0.4, 0.2).unwrap(), 1.0);
        assert_eq!(t_clamped(0.9, 0.2).unwrap(), 1.0);
        assert_eq!(t_clamped(0.1, 0.2).unwrap(), 0.25);
        assert!(t_clamped(0.1, 0.0).is_err());
        assert!((t_clamped_inv(0.5, 0.2) - 0.2).abs() < 1e-15);
        // Beyond 2 mu the clamp discards information.
        assert!((t_clamped_inv(t_clamped(0.9, 0.2).unwrap(), 0.2) - 0.9).abs() > 0.1);
    }

    #[test]
    fn logistic_reference_value() {
        // S(0) = 1/(1+e^2.5), S(1) = 1/(1+e^-7.5), S(mu) = 0.5
        let s0 = 1.0 / (1.0 + 2.5f64.exp());
        let s1 = 1.0 / (1.0 + (-7.5f64).exp());
        let expect = (0.5 - s0) / (s1 - s0);
        let got = t_logistic(0.25, 0.25, 10.0);
        assert!((got - expect).abs() < 1e-12);
        assert!((got - 0.4592).abs() < 1e-4);
        assert!((t_logistic_inv(0.4592, 0.25, 10.0) - 0.25).abs() < 1e-4);
        assert_eq!(t_logistic(0.0, 0.25, 10.0), 0.0);
        assert!((t_logistic(1.0, 0.25, 10.0) - 1.0).abs() < 1e-15);
        assert_eq!(t_logistic_inv(0.0, 0.25, 10.0), 0.0);
        assert_eq!(t_logistic_inv(1.0, 0.25, 10.0), 1.0);
    }

    #[test]
    fn update_mu_examples() {
        let mut spec = TransformSpec::new(TransformKind::Clamped, 0.2).unwrap();
        spec.mu_mode = MuMode::Running;
        let batch = TensorBuffer::full(&[1, 1, 2, 2], 0.4).unwrap();
        spec.update_mu(&batch).unwrap();
        assert!((spec.mu[0] - 0.202).abs() < 1e-9);

        let mut fixed = TransformSpec::new(TransformKind::Clamped, 0.25).unwrap();
        fixed.mu_mode = MuMode::Running;
        fixed.update_mu(&TensorBuffer::full(&[2, 1, 1, 1], 0.25).unwrap()).unwrap();
        assert!((fixed.mu[0] - 0.25).abs() < 1e-12);

        let mut pre = TransformSpec::new(TransformKind::Clamped, 0.2).unwrap();
        assert!(pre.update_mu(&batch).is_err());
        assert!(pre.precompute_mu(&[]).is_err());
    }

    #[test]
    fn running_mu_converges_geometrically() {
        // Closed form: mu_n = m + (mu_0 - m)(1 - alpha)^n.
        let mut spec = TransformSpec::new(TransformKind::Logistic, 0.1).unwrap();
        spec.mu_mode = MuMode::Running;
        let batch = TensorBuffer::full(&[1, 1, 1, 4], 0.6).unwrap();
        for n in 1..=500 {
            spec.update_mu(&batch).unwrap();
            let m = 0.6f32 as f64;
            let expect = m + (0.1 - m) * (1.0 - DEFAULT_EMA_ALPHA).powi(n);
            assert!((spec.mu[0] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn per_channel_mu() {
        let mut spec = TransformSpec::new(TransformKind::Clamped, 0.5).unwrap();
        spec.mu = vec![0.5, 0.5];
        let t = TensorBuffer::from_vec(&[1, 2, 1, 2], vec![0.1, 0.3, 0.6, 0.8]).unwrap();
        spec.precompute_mu(&[&t]).unwrap();
        assert!((spec.mu[0] - 0.2).abs() < 1e-7 && (spec.mu[1] - 0.7).abs() < 1e-7);
        let fwd = spec.forward_tensor(&t).unwrap();
        assert!((fwd.data()[0] - 0.25).abs() < 1e-6);
        let three = TensorBuffer::zeros(&[1, 3, 1, 1]).unwrap();
        assert!(spec.forward_tensor(&three).is_err());
    }

    #[test]
    fn meta_round_trip() {
        let mut spec = TransformSpec::new(TransformKind::Logistic, 0.137).unwrap();
        spec.mu_mode = MuMode::Running;
        let mut meta = BTreeMap::new();
        spec.to_meta(&mut meta);
        assert_eq!(TransformSpec::from_meta(&meta).unwrap(), spec);
    }

    proptest! {
        #[test]
        fn transforms_are_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0, mu in 0.01f64..0.99) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(t_clamped(lo, mu).unwrap() <= t_clamped(hi, mu).unwrap());
            if lo < hi {
                prop_assert!(t_logistic(lo, mu, 10.0) < t_logistic(hi, mu, 10.0));
            }
            for v in [t_clamped(a, mu).unwrap(), t_logistic(a, mu, 10.0)] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn inverses_round_trip(y in 0.0f64..=1.0, mu in 0.01f64..0.99) {
            prop_assert!((t_logistic_inv(t_logistic(y, mu, 10.0), mu, 10.0) - y).abs() <= 1e-6);
            if y <= 2.0 * mu {
                prop_assert!((t_clamped_inv(t_clamped(y, mu).unwrap(), mu) - y).abs() <= 1e-7);
            }
        }
    }
}
