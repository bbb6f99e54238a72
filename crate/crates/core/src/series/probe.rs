//! Thread-local read instrumentation for [`CountSeries`](super::CountSeries).
//!
//! While a probe is active on the current thread, every value handed out by
//! a series accessor is recorded by period date. Tests use this to show that
//! model fitting never touches an excluded period.

use std::cell::RefCell;
use std::collections::BTreeSet;

use chrono::NaiveDate;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProbeReport {
    /// Distinct observed periods whose values were read.
    pub observed: BTreeSet<NaiveDate>,
    /// Distinct masked periods whose values were read.
    pub masked: BTreeSet<NaiveDate>,
    /// Total value reads, counting repeats.
    pub reads: u64,
}

thread_local! {
    static PROBE: RefCell<Option<ProbeReport>> = const { RefCell::new(None) };
}

/// Starts recording on this thread, discarding any earlier session.
pub fn start() {
    PROBE.with(|p| *p.borrow_mut() = Some(ProbeReport::default()));
}

/// Stops recording and returns what was seen since [`start`].
pub fn finish() -> ProbeReport {
    PROBE.with(|p| p.borrow_mut().take()).unwrap_or_default()
}

pub(crate) fn record(date: NaiveDate, observed: bool) {
    PROBE.with(|p| {
        if let Some(report) = p.borrow_mut().as_mut() {
            report.reads += 1;
            if observed {
                report.observed.insert(date);
            } else {
                report.masked.insert(date);
            }
        }
    });
}
