use std::collections::{BTreeMap, BTreeSet};

use super::record::{normalize_key, LossRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum UnmatchedPolicy {
    #[default]
    LeaveBlank,
    Error,
}

/// Lookup from a raw location string to its (raion, oblast) pair.
#[derive(Debug, Clone, Default)]
pub struct GeoIndex {
    entries: BTreeMap<String, (String, String)>,
    pub unmatched_policy: UnmatchedPolicy,
}

impl GeoIndex {
    pub fn new(unmatched_policy: UnmatchedPolicy) -> Self {
        GeoIndex {
            entries: BTreeMap::new(),
            unmatched_policy,
        }
    }

    pub fn insert(&mut self, location: &str, raion: &str, oblast: &str) -> Result<()> {
        let (raion, oblast) = (raion.trim(), oblast.trim());
        if raion.is_empty() || oblast.is_empty() {
            return Err(Error::invalid(format!(
                "geo entry `{location}` needs both raion and oblast"
            )));
        }
        self.entries
            .insert(normalize_key(location), (raion.to_owned(), oblast.to_owned()));
        Ok(())
    }

    pub fn lookup(&self, location: &str) -> Option<(&str, &str)> {
        self.entries
            .get(&normalize_key(location))
            .map(|(r, o)| (r.as_str(), o.as_str()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Reads a two-column `location,raion/oblast` CSV with a header row.
    pub fn from_csv(text: &str, unmatched_policy: UnmatchedPolicy) -> Result<Self> {
        let mut index = GeoIndex::new(unmatched_policy);
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .from_reader(text.as_bytes());
        for row in reader.records() {
            let row = row?;
            let (Some(location), Some(pair)) = (row.get(0), row.get(1)) else {
                continue;
            };
            let Some((raion, oblast)) = pair.split_once('/') else {
                return Err(Error::invalid(format!(
                    "geo entry `{location}`: expected `raion/oblast`, got `{pair}`"
                )));
            };
            index.insert(location, raion, oblast)?;
        }
        Ok(index)
    }
}

/// Fills blank raion/oblast fields from the index. Records carrying both
/// levels already are left alone; order is preserved.
pub fn normalize_geo(records: Vec<LossRecord>, index: &GeoIndex) -> Result<Vec<LossRecord>> {
    let mut unmatched = BTreeSet::new();
    let mut out = Vec::with_capacity(records.len());
    for mut record in records {
        if record.raion.is_none() || record.oblast.is_none() {
            if let Some(location) = record.location_text.as_deref() {
                match index.lookup(location) {
                    Some((raion, oblast)) => {
                        record.raion.get_or_insert_with(|| raion.to_owned());
                        record.oblast.get_or_insert_with(|| oblast.to_owned());
                    }
                    None => {
                        unmatched.insert(location.to_owned());
                    }
                }
            }
        }
        out.push(record);
    }
    if index.unmatched_policy == UnmatchedPolicy::Error && !unmatched.is_empty() {
        return Err(Error::UnmatchedLocations(unmatched.into_iter().collect()));
    }
    Ok(out)
}
