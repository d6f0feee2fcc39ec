use crate::error::{Error, Result};

/// Softmax over unmasked scores; masked edges get exactly 0.
pub fn masked_distribution(scores: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if scores.len() != mask.len() {
        return Err(Error::Shape(format!("{} scores for a mask of {}", scores.len(), mask.len())));
    }
    let max = scores.iter().zip(mask).filter(|(_, &m)| m).map(|(&s, _)| s).fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::EmptyMask);
    }
    if !max.is_finite() {
        return Err(Error::Numerical("non-finite score".into()));
    }
    let mut p: Vec<f64> = scores.iter().zip(mask).map(|(&s, &m)| if m { (s - max).exp() } else { 0.0 }).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    Ok(p)
}

pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

pub fn log_prob(p: &[f64], action: usize) -> f64 {
    p[action].ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_and_single() {
        let p = masked_distribution(&[0.3; 4], &[true; 4]).unwrap();
        assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-15));
        let p = masked_distribution(&[5.0, 1.0, 2.0], &[false, true, false]).unwrap();
        assert_eq!(p, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn two_scores() {
        let p = masked_distribution(&[1.0, 2.0], &[true, true]).unwrap();
        let e = 1f64.exp() + 2f64.exp();
        assert!((p[0] - 1f64.exp() / e).abs() < 1e-15);
        assert!((p[0] - 0.2689).abs() < 1e-4 && (p[1] - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn empty_mask() {
        assert!(matches!(masked_distribution(&[1.0], &[false]), Err(Error::EmptyMask)));
    }

    #[test]
    fn uniform_entropy_is_log_m() {
        let p = masked_distribution(&[0.0; 6], &[true, true, false, true, true, true]).unwrap();
        assert!((entropy(&p) - 5f64.ln()).abs() < 1e-14);
    }
}
