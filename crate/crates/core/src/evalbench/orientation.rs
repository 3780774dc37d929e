use serde::Serialize;

use super::EvalError;

/// 5° bins covering `[0, 90]`; 90 itself falls in the last bin.
pub const HISTOGRAM_BINS: usize = 18;

/// Axial difference of two angles in `[0, 180)`, in `[0, 90]`.
pub fn orientation_error(est_deg: f64, gt_deg: f64) -> f64 {
    let d = (est_deg - gt_deg).abs() % 180.0;
    d.min(180.0 - d)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrientationStats {
    pub errors: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Sample (n-1) standard deviation; 0 for a single sample.
    pub std_sample: f64,
    pub histogram: [usize; HISTOGRAM_BINS],
    pub fraction_under_5: f64,
    pub max: f64,
}

pub fn aggregate_orientation(errors: &[f64]) -> Result<OrientationStats, EvalError> {
    if errors.is_empty() {
        return Err(EvalError::NoSamples);
    }
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let ss: f64 = errors.iter().map(|e| (e - mean) * (e - mean)).sum();
    let mut histogram = [0usize; HISTOGRAM_BINS];
    for &e in errors {
        histogram[((e / 5.0).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1)] += 1;
    }
    Ok(OrientationStats {
        errors: errors.to_vec(),
        mean,
        std: (ss / n).sqrt(),
        std_sample: if errors.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 },
        histogram,
        fraction_under_5: errors.iter().filter(|&&e| e < 5.0).count() as f64 / n,
        max: errors.iter().copied().fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_rule() {
        assert_eq!(orientation_error(175.0, 5.0), 10.0);
        assert_eq!(orientation_error(42.0, 42.0), 0.0);
        assert_eq!(orientation_error(95.0, 5.0), 90.0);
    }

    #[test]
    fn stats() {
        let s = aggregate_orientation(&[0.0, 10.0]).unwrap();
        assert_eq!((s.mean, s.std), (5.0, 5.0));
        assert_eq!(s.histogram[0], 1);
        assert_eq!(s.histogram[2], 1);
        let s = aggregate_orientation(&[3.0; 4]).unwrap();
        assert_eq!(s.fraction_under_5, 1.0);
        assert_eq!(aggregate_orientation(&[90.0]).unwrap().histogram[17], 1);
        assert!(aggregate_orientation(&[]).is_err());
    }
}
