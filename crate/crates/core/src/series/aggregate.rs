use chrono::NaiveDate;

use super::{CountSeries, Granularity};
use crate::error::{Error, Result};
use crate::ingest::{Category, LossRecord};

/// Counts matching records per period over `range` (inclusive). Periods with
/// no records are zeros and count as observed.
pub fn aggregate(
    records: &[LossRecord],
    granularity: Granularity,
    category_filter: Option<&[Category]>,
    range: (NaiveDate, NaiveDate),
) -> Result<CountSeries> {
    let (from, to) = range;
    if from > to {
        return Err(Error::DateRange {
            start: from,
            end: to,
        });
    }
    let start = granularity.period_start(from);
    let n = granularity.periods_between(start, to) as usize + 1;
    let mut values = vec![0.0; n];
    for r in records {
        if r.date < from || r.date > to {
            continue;
        }
        if let Some(filter) = category_filter {
            if !filter.contains(&r.category) {
                continue;
            }
        }
        let i = granularity.periods_between(start, r.date) as usize;
        values[i] += 1.0;
    }
    CountSeries::observed(granularity, start, values)
}
