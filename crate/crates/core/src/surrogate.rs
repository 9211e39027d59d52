//! Synthetic run-to-failure data in C-MAPSS text format.
//!
//! The generator mimics the layout of the single-condition, single-fault
//! subset: 26 columns per line, the same seven constant columns (setting 3 and
//! sensors 1, 5, 10, 16, 18, 19), near-constant sensor 6, and fourteen sensors
//! that drift with an exponential wear curve under Gaussian noise. It exists so
//! the whole pipeline can be exercised where the NASA files are not available;
//! numbers produced on it are not results for the real dataset.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct SurrogateConfig {
    pub units: usize,
    pub min_life: u32,
    pub max_life: u32,
    pub seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            units: 100,
            min_life: 128,
            max_life: 362,
            seed: 2008,
        }
    }
}

#[derive(Clone, Copy)]
enum Sensor {
    Constant(f64),
    /// Two-level column that only rarely leaves its base value.
    Flicker {
        base: f64,
        alt: f64,
    },
    Drift {
        base: f64,
        drift: f64,
        noise: f64,
        /// Per-unit offset scale (manufacturing variation).
        unit_spread: f64,
    },
}

// Baselines and end-of-life drift follow the published column ranges of the
// single-condition subset; per-cycle noise sits below each column's overall
// spread, which also contains the drift.
const SENSORS: [Sensor; 21] = [
    Sensor::Constant(518.67),
    Sensor::Drift {
        base: 642.3,
        drift: 1.5,
        noise: 0.35,
        unit_spread: 0.1,
    },
    Sensor::Drift {
        base: 1585.0,
        drift: 20.0,
        noise: 4.5,
        unit_spread: 1.5,
    },
    Sensor::Drift {
        base: 1400.0,
        drift: 30.0,
        noise: 5.5,
        unit_spread: 2.0,
    },
    Sensor::Constant(14.62),
    Sensor::Flicker {
        base: 21.61,
        alt: 21.60,
    },
    Sensor::Drift {
        base: 554.0,
        drift: -4.0,
        noise: 0.6,
        unit_spread: 0.2,
    },
    Sensor::Drift {
        base: 2388.05,
        drift: 0.25,
        noise: 0.05,
        unit_spread: 0.02,
    },
    Sensor::Drift {
        base: 9050.0,
        drift: 50.0,
        noise: 6.0,
        unit_spread: 15.0,
    },
    Sensor::Constant(1.3),
    Sensor::Drift {
        base: 47.35,
        drift: 1.1,
        noise: 0.16,
        unit_spread: 0.05,
    },
    Sensor::Drift {
        base: 521.9,
        drift: -3.2,
        noise: 0.5,
        unit_spread: 0.15,
    },
    Sensor::Drift {
        base: 2388.05,
        drift: 0.25,
        noise: 0.05,
        unit_spread: 0.02,
    },
    Sensor::Drift {
        base: 8130.0,
        drift: 40.0,
        noise: 5.0,
        unit_spread: 15.0,
    },
    Sensor::Drift {
        base: 8.42,
        drift: 0.13,
        noise: 0.025,
        unit_spread: 0.008,
    },
    Sensor::Constant(0.03),
    Sensor::Drift {
        base: 392.0,
        drift: 5.0,
        noise: 1.2,
        unit_spread: 0.3,
    },
    Sensor::Constant(2388.0),
    Sensor::Constant(100.0),
    Sensor::Drift {
        base: 38.9,
        drift: -0.7,
        noise: 0.12,
        unit_spread: 0.04,
    },
    Sensor::Drift {
        base: 23.34,
        drift: -0.42,
        noise: 0.075,
        unit_spread: 0.025,
    },
];

const DECIMALS: [usize; 21] = [
    2, 2, 2, 2, 2, 2, 2, 2, 2, 2, 2, 2, 2, 2, 4, 2, 0, 0, 2, 2, 4,
];

/// Generates surrogate data as C-MAPSS text (one line per cycle).
pub fn generate(config: &SurrogateConfig) -> Result<String> {
    if config.units == 0 || config.min_life < 2 || config.max_life < config.min_life {
        return Err(Error::InvalidInput(format!(
            "invalid surrogate config {config:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let span = f64::from(config.max_life - config.min_life);
    let mut out = String::new();

    for unit in 1..=config.units {
        let u: f64 = rng.random();
        let life = config.min_life + (span * u.powf(1.5)).round() as u32;
        let sharpness: f64 = rng.random_range(3.0..5.5);
        let initial_wear: f64 = rng.random_range(0.0..0.06);
        let offsets: Vec<f64> = SENSORS
            .iter()
            .map(|s| match s {
                Sensor::Drift { unit_spread, .. } => unit_spread * std.sample(&mut rng),
                _ => 0.0,
            })
            .collect();

        for cycle in 1..=life {
            let t = f64::from(cycle) / f64::from(life);
            let wear = initial_wear
                + (1.0 - initial_wear) * ((sharpness * t).exp() - 1.0) / (sharpness.exp() - 1.0);
            let setting_1 = 0.0022 * std.sample(&mut rng);
            let setting_2 = 0.0003 * std.sample(&mut rng);
            write!(out, "{unit} {cycle} {setting_1:.4} {setting_2:.4} 100.0").unwrap();
            for (k, sensor) in SENSORS.iter().enumerate() {
                let v = match *sensor {
                    Sensor::Constant(v) => v,
                    Sensor::Flicker { base, alt } => {
                        if rng.random_bool(0.02) {
                            alt
                        } else {
                            base
                        }
                    }
                    Sensor::Drift {
                        base, drift, noise, ..
                    } => base + offsets[k] + drift * wear + noise * std.sample(&mut rng),
                };
                write!(out, " {v:.*}", DECIMALS[k]).unwrap();
            }
            out.push('\n');
        }
    }
    Ok(out)
}

/// Writes surrogate data to `path`.
pub fn write(config: &SurrogateConfig, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, generate(config)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmapss_io::{drop_constant_columns, parse_cmapss, IngestOptions};

    #[test]
    fn surrogate_parses_and_matches_constant_layout() {
        let cfg = SurrogateConfig {
            units: 5,
            ..Default::default()
        };
        let text = generate(&cfg).unwrap();
        let t = parse_cmapss(text.as_bytes(), "surrogate", IngestOptions::default()).unwrap();
        let kept = drop_constant_columns(&t).unwrap();
        assert_eq!(kept.n_features(), 17);
        for gone in [
            "setting_3",
            "sensor_1",
            "sensor_5",
            "sensor_10",
            "sensor_16",
            "sensor_18",
            "sensor_19",
        ] {
            assert!(!kept.feature_names().iter().any(|n| n == gone), "{gone}");
        }
    }

    #[test]
    fn surrogate_is_seeded() {
        let cfg = SurrogateConfig {
            units: 3,
            ..Default::default()
        };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = SurrogateConfig { seed: 1, ..cfg };
        assert_ne!(generate(&cfg).unwrap(), generate(&other).unwrap());
    }
}
