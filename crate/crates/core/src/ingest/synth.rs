use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::record::{Category, LossRecord, Status, COVERAGE_END, COVERAGE_START};
use crate::error::{Error, Result};

/// A span of days with constant Poisson intensity per category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub name: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
    /// Mean daily losses per category; absent categories have mean zero.
    pub means: BTreeMap<Category, f64>,
}

impl Regime {
    pub fn mean(&self, category: Category) -> f64 {
        self.means.get(&category).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    #[serde(default = "default_coverage_start")]
    pub coverage_start: NaiveDate,
    #[serde(default = "default_coverage_end")]
    pub coverage_end: NaiveDate,
    pub regimes: Vec<Regime>,
}

fn default_coverage_start() -> NaiveDate {
    COVERAGE_START
}

fn default_coverage_end() -> NaiveDate {
    COVERAGE_END
}

/// Locations drawn by the generator, with their (raion, oblast).
pub const SYNTHETIC_LOCATIONS: [(&str, &str, &str); 8] = [
    ("Bakhmut", "Bakhmutskyi", "Donetska"),
    ("Avdiivka", "Pokrovskyi", "Donetska"),
    ("Vuhledar", "Voznesenskyi", "Donetska"),
    ("Robotyne", "Polohivskyi", "Zaporizka"),
    ("Kupiansk", "Kupianskyi", "Kharkivska"),
    ("Bucha", "Buchanskyi", "Kyivska"),
    ("Kreminna", "Sievierodonetskyi", "Luhanska"),
    ("Krynky", "Kakhovskyi", "Khersonska"),
];

fn d(y: i32, m: u32, day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, day).expect("valid literal date")
}

fn means(pairs: &[(Category, f64)]) -> BTreeMap<Category, f64> {
    pairs.iter().copied().collect()
}

impl Default for Profile {
    /// Spike through 2022, plateau over 2023-24, taper into 2025, and a
    /// two-month under-reporting gap at the end of the window.
    fn default() -> Self {
        use Category::*;
        Profile {
            coverage_start: COVERAGE_START,
            coverage_end: COVERAGE_END,
            regimes: vec![
                Regime {
                    name: "spike".into(),
                    start: d(2022, 2, 24),
                    end: d(2022, 12, 31),
                    means: means(&[
                        (Tank, 5.5), (Ifv, 6.5), (Apc, 1.5), (Artillery, 3.0), (AirDefense, 0.5),
                        (Aircraft, 0.2), (Helicopter, 0.2), (Truck, 6.0), (Engineering, 0.4),
                        (Other, 1.0),
                    ]),
                },
                Regime {
                    name: "plateau".into(),
                    start: d(2023, 1, 1),
                    end: d(2024, 12, 31),
                    means: means(&[
                        (Tank, 3.0), (Ifv, 4.5), (Apc, 1.0), (Artillery, 2.5), (AirDefense, 0.3),
                        (Aircraft, 0.05), (Helicopter, 0.05), (Truck, 4.0), (Engineering, 0.3),
                        (Other, 0.8),
                    ]),
                },
                Regime {
                    name: "taper".into(),
                    start: d(2025, 1, 1),
                    end: d(2025, 5, 31),
                    means: means(&[
                        (Tank, 2.8), (Ifv, 4.0), (Apc, 0.9), (Artillery, 2.2), (AirDefense, 0.3),
                        (Aircraft, 0.05), (Helicopter, 0.05), (Truck, 3.6), (Engineering, 0.3),
                        (Other, 0.7),
                    ]),
                },
                Regime {
                    name: "reporting_gap".into(),
                    start: d(2025, 6, 1),
                    end: d(2025, 7, 31),
                    means: means(&[
                        (Tank, 1.1), (Ifv, 1.6), (Apc, 0.4), (Artillery, 0.9), (AirDefense, 0.1),
                        (Truck, 1.4), (Engineering, 0.1), (Other, 0.3),
                    ]),
                },
            ],
        }
    }
}

impl Profile {
    /// Regime in effect on `date`, if any.
    pub fn regime_at(&self, date: NaiveDate) -> Option<&Regime> {
        self.regimes.iter().find(|r| r.contains(date))
    }

    pub fn validate(&self) -> Result<()> {
        if self.coverage_start > self.coverage_end {
            return Err(Error::Profile("coverage start after end".into()));
        }
        let mut sorted: Vec<&Regime> = self.regimes.iter().collect();
        sorted.sort_by_key(|r| r.start);
        for r in &sorted {
            if r.start > r.end {
                return Err(Error::Profile(format!("regime `{}` starts after it ends", r.name)));
            }
            if r.start < self.coverage_start || r.end > self.coverage_end {
                return Err(Error::Profile(format!(
                    "regime `{}` lies outside the coverage window",
                    r.name
                )));
            }
            for (cat, mean) in &r.means {
                if !mean.is_finite() || *mean < 0.0 {
                    return Err(Error::Profile(format!(
                        "regime `{}` has invalid mean {mean} for {cat}",
                        r.name
                    )));
                }
            }
        }
        for pair in sorted.windows(2) {
            if pair[1].start <= pair[0].end {
                return Err(Error::Profile(format!(
                    "regimes `{}` and `{}` overlap",
                    pair[0].name, pair[1].name
                )));
            }
        }
        Ok(())
    }
}

/// Draws Poisson daily counts per category from each regime and expands them
/// into individual records. Output is a pure function of `(seed, profile)`.
pub fn generate_synthetic(seed: u64, profile: &Profile) -> Result<Vec<LossRecord>> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut regimes: Vec<&Regime> = profile.regimes.iter().collect();
    regimes.sort_by_key(|r| r.start);

    let mut records = Vec::new();
    for regime in regimes {
        let samplers: Vec<(Category, Poisson<f64>)> = Category::ALL
            .iter()
            .filter(|c| regime.mean(**c) > 0.0)
            .map(|c| {
                let p = Poisson::new(regime.mean(*c))
                    .map_err(|e| Error::Profile(format!("regime `{}`: {e}", regime.name)))?;
                Ok((*c, p))
            })
            .collect::<Result<_>>()?;
        for date in regime.start.iter_days().take_while(|d| *d <= regime.end) {
            for (category, sampler) in &samplers {
                let count = sampler.sample(&mut rng) as u64;
                for k in 0..count {
                    let (location, _, _) =
                        SYNTHETIC_LOCATIONS[rng.random_range(0..SYNTHETIC_LOCATIONS.len())];
                    let status = match rng.random_range(0..10u32) {
                        0..=6 => Status::Destroyed,
                        7 => Status::Damaged,
                        8 => Status::Abandoned,
                        _ => Status::Captured,
                    };
                    let url = format!("synthetic://{seed}/{date}/{category}/{k}");
                    records.push(LossRecord::new(
                        date,
                        *category,
                        None,
                        status,
                        Some(location.to_owned()),
                        Some(url),
                    ));
                }
            }
        }
    }
    Ok(records)
}
