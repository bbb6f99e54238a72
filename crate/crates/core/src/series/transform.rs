use super::CountSeries;
use crate::error::{Error, Result};

/// `v -> ln(1 + v)`; the unit offset keeps zero-count periods finite.
pub fn log_transform(series: &CountSeries) -> Result<CountSeries> {
    if let Some((index, &value)) = series
        .values_internal()
        .iter()
        .enumerate()
        .find(|(_, v)| **v < 0.0)
    {
        return Err(Error::NegativeValue { index, value });
    }
    Ok(series.map_values(f64::ln_1p))
}

/// `v -> exp(v) - 1`, clamped at zero.
pub fn inverse_log_transform(series: &CountSeries) -> CountSeries {
    series.map_values(inverse_log)
}

pub(crate) fn inverse_log(v: f64) -> f64 {
    v.exp_m1().max(0.0)
}

/// `d`-th order finite difference; the result is `d` entries shorter.
pub fn difference(values: &[f64], d: usize) -> Result<Vec<f64>> {
    if d > 2 {
        return Err(Error::invalid(format!("differencing order {d} exceeds 2")));
    }
    if values.len() < d + 1 {
        return Err(Error::TooShort {
            needed: d + 1,
            available: values.len(),
        });
    }
    let mut out = values.to_vec();
    for _ in 0..d {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(out)
}

/// The values [`integrate`] needs to undo a `d`-th difference: the first
/// `d` entries of the original series.
pub fn anchors(values: &[f64], d: usize) -> Vec<f64> {
    values[..d.min(values.len())].to_vec()
}

/// Inverts [`difference`] given the original series' leading `anchors`.
pub fn integrate(diffs: &[f64], anchors: &[f64]) -> Result<Vec<f64>> {
    let d = anchors.len();
    if d > 2 {
        return Err(Error::invalid(format!("differencing order {d} exceeds 2")));
    }
    // leading element of each difference level, from the anchors
    let mut heads = Vec::with_capacity(d);
    let mut level = anchors.to_vec();
    for _ in 0..d {
        heads.push(level[0]);
        level = level.windows(2).map(|w| w[1] - w[0]).collect();
    }
    let mut cur = diffs.to_vec();
    for head in heads.into_iter().rev() {
        let mut next = Vec::with_capacity(cur.len() + 1);
        let mut acc = head;
        next.push(acc);
        for v in cur {
            acc += v;
            next.push(acc);
        }
        cur = next;
    }
    Ok(cur)
}
