use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Point-forecast accuracy over a set of scored periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub mae: f64,
    pub rmse: f64,
    /// Symmetric MAPE on a 0..200 scale; a 0/0 term counts as 0.
    pub smape: f64,
    pub n_points: usize,
}

/// Scores `predicted` against `actual`.
pub fn scores(actual: &[f64], predicted: &[f64]) -> Result<Scores> {
    if actual.len() != predicted.len() {
        return Err(Error::invalid(format!(
            "{} actual values but {} predictions",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::invalid("no values to score"));
    }
    if let Some(row) = actual
        .iter()
        .zip(predicted)
        .position(|(a, p)| !a.is_finite() || !p.is_finite())
    {
        return Err(Error::NonFinite { row });
    }
    let n = actual.len() as f64;
    let (mut abs, mut sq, mut sym) = (0.0, 0.0, 0.0);
    for (a, p) in actual.iter().zip(predicted) {
        let e = (a - p).abs();
        abs += e;
        sq += e * e;
        let denom = a.abs() + p.abs();
        if denom > 0.0 {
            sym += 200.0 * e / denom;
        }
    }
    Ok(Scores {
        mae: abs / n,
        rmse: (sq / n).sqrt(),
        smape: sym / n,
        n_points: actual.len(),
    })
}

/// Point-weighted combination of per-fold scores. MAE and sMAPE are weighted
/// means; RMSE is pooled over every point, so it stays at least the MAE.
pub fn pool(folds: &[Scores]) -> Option<Scores> {
    let n: usize = folds.iter().map(|f| f.n_points).sum();
    if n == 0 {
        return None;
    }
    let w = |f: &Scores| f.n_points as f64 / n as f64;
    Some(Scores {
        mae: folds.iter().map(|f| w(f) * f.mae).sum(),
        rmse: folds.iter().map(|f| w(f) * f.rmse * f.rmse).sum::<f64>().sqrt(),
        smape: folds.iter().map(|f| w(f) * f.smape).sum(),
        n_points: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed() {
        let s = scores(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap();
        assert!((s.mae - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.rmse - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        // 200 * (1/3 + 0 + 1/5) / 3
        assert!((s.smape - 200.0 * (1.0 / 3.0 + 0.2) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn identity_and_zero_over_zero() {
        let s = scores(&[4.0, 0.0], &[4.0, 0.0]).unwrap();
        assert_eq!((s.mae, s.rmse, s.smape), (0.0, 0.0, 0.0));
        assert_eq!(scores(&[0.0], &[0.0]).unwrap().smape, 0.0);
        assert_eq!(scores(&[0.0], &[3.0]).unwrap().smape, 200.0);
    }

    #[test]
    fn bad_inputs() {
        assert!(scores(&[], &[]).is_err());
        assert!(scores(&[1.0], &[1.0, 2.0]).is_err());
        assert!(matches!(scores(&[1.0, f64::NAN], &[1.0, 2.0]), Err(Error::NonFinite { row: 1 })));
    }

    #[test]
    fn pooling_matches_concatenation() {
        let (a1, p1) = ([1.0, 5.0, 2.0], [2.0, 3.0, 2.0]);
        let (a2, p2) = ([7.0], [1.0]);
        let pooled = pool(&[scores(&a1, &p1).unwrap(), scores(&a2, &p2).unwrap()]).unwrap();
        let all = scores(&[1.0, 5.0, 2.0, 7.0], &[2.0, 3.0, 2.0, 1.0]).unwrap();
        assert!((pooled.mae - all.mae).abs() < 1e-12);
        assert!((pooled.rmse - all.rmse).abs() < 1e-12);
        assert!((pooled.smape - all.smape).abs() < 1e-12);
        assert_eq!(pooled.n_points, 4);
        assert!(pool(&[]).is_none());
    }
}
