use crate::{Error, Result};

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r2_score(y: &[f32], y_hat: &[f32]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::Dims(format!("{} targets vs {} predictions", y.len(), y_hat.len())));
    }
    if y.len() < 2 {
        return Err(Error::Degenerate("need at least two samples".into()));
    }
    let mean = y.iter().map(|&v| v as f64).sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|&v| (v as f64 - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Degenerate("targets are constant".into()));
    }
    let ss_res: f64 = y.iter().zip(y_hat).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaeStats {
    pub total: f64,
    /// Mean of `Y - Y_hat` over underestimated values (`Y_hat < Y`).
    pub under: f64,
    /// Standard deviation of `|Y - Y_hat|`.
    pub sigma: f64,
    pub variance: f64,
    pub count: usize,
    pub under_count: usize,
}

impl MaeStats {
    /// `under * under_count <= total * count`, up to rounding.
    pub fn consistent(&self) -> bool {
        self.under * self.under_count as f64 <= self.total * self.count as f64 * (1.0 + 1e-12) + 1e-15
    }
}

pub fn mae_stats(y: &[f32], y_hat: &[f32]) -> Result<MaeStats> {
    if y.len() != y_hat.len() {
        return Err(Error::Dims(format!("{} targets vs {} predictions", y.len(), y_hat.len())));
    }
    if y.is_empty() {
        return Err(Error::Degenerate("no samples".into()));
    }
    let n = y.len() as f64;
    let (mut abs_sum, mut under_sum, mut under_count) = (0.0f64, 0.0f64, 0usize);
    for (&a, &b) in y.iter().zip(y_hat) {
        let d = a as f64 - b as f64;
        abs_sum += d.abs();
        if b < a {
            under_sum += d;
            under_count += 1;
        }
    }
    let total = abs_sum / n;
    let variance = y.iter().zip(y_hat).map(|(&a, &b)| ((a as f64 - b as f64).abs() - total).powi(2)).sum::<f64>() / n;
    Ok(MaeStats {
        total,
        under: if under_count == 0 { 0.0 } else { under_sum / under_count as f64 },
        sigma: variance.sqrt(),
        variance,
        count: y.len(),
        under_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r2_examples() {
        assert_eq!(r2_score(&[0.1, 0.5, 0.9], &[0.1, 0.5, 0.9]).unwrap(), 1.0);
        assert!(r2_score(&[0.2, 0.4], &[0.3, 0.3]).unwrap().abs() < 1e-12);
        assert!((r2_score(&[0.0, 1.0], &[0.25, 0.75]).unwrap() - 0.75).abs() < 1e-12);
        assert!(r2_score(&[0.3, 0.3], &[0.1, 0.2]).is_err());
        assert!(r2_score(&[0.3], &[0.3]).is_err());
        assert!(r2_score(&[0.3, 0.1], &[0.3]).is_err());
    }

    #[test]
    fn mae_examples() {
        let s = mae_stats(&[0.4, 0.2], &[0.1, 0.3]).unwrap();
        assert!((s.total - 0.2).abs() < 1e-7);
        assert!((s.under - 0.3).abs() < 1e-7);
        assert!((s.sigma - 0.1).abs() < 1e-7);
        assert_eq!(s.under_count, 1);
        assert!(s.consistent());
        let z = mae_stats(&[0.4, 0.2], &[0.4, 0.2]).unwrap();
        assert_eq!((z.total, z.under, z.sigma), (0.0, 0.0, 0.0));
        assert!(mae_stats(&[], &[]).is_err());
    }

    #[test]
    fn perfect_sample_lowers_total_only() {
        let a = mae_stats(&[0.4, 0.2], &[0.1, 0.3]).unwrap();
        let b = mae_stats(&[0.4, 0.2, 0.7], &[0.1, 0.3, 0.7]).unwrap();
        assert!(b.total < a.total);
        assert_eq!(b.under_count, a.under_count);
        assert_eq!(b.under, a.under);
    }
}
