//! Shared plumbing for the acceptance runs: run sizes, the scoreboard and a
//! few comparison helpers.
//!
//! The statistical criteria are expensive. By default they run at a reduced
//! size that fits a small machine; set `ACCEPTANCE_FULL=1` for the full
//! protocol (20 replicas, 5·10⁴ steps per chain).

use std::collections::HashMap;

use closedform::exprtree::OpVocabulary;
use closedform::inference::FitOptions;
use closedform::phase::{benchmarks, NoiseGrid, SweepSpec, TrialSettings, DEFAULT_TOL_GAP};
use closedform::prior::PriorConfig;
use closedform::sampler::SamplerOptions;

/// Noise levels of the learnability sweep, as multiples of the exact
/// transition noise. The ends sit where the phases are unambiguous.
pub const NOISE_MULTIPLES: [f64; 8] = [1.0 / 30.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 5.0];

#[derive(Clone, Debug)]
pub struct Protocol {
    pub full: bool,
    pub replicas: usize,
    pub steps: usize,
    pub temperatures: Vec<f64>,
    pub n_values: Vec<usize>,
}

impl Protocol {
    pub fn from_env() -> Self {
        let full = std::env::var("ACCEPTANCE_FULL").is_ok_and(|v| v == "1");
        Self {
            full,
            replicas: if full { 20 } else { 3 },
            steps: if full { 50_000 } else { 8_000 },
            temperatures: vec![1.0, 3.0, 10.0, 30.0, 100.0],
            n_values: vec![25, 100, 400],
        }
    }

    pub fn sweep(&self) -> SweepSpec {
        SweepSpec {
            n_values: self.n_values.clone(),
            noise: NoiseGrid::Multiples {
                values: NOISE_MULTIPLES.to_vec(),
            },
            replicas: self.replicas,
            n_mc: 100_000,
        }
    }

    pub fn settings(&self) -> TrialSettings {
        let vocab: OpVocabulary = benchmarks::vocabulary();
        TrialSettings {
            prior: PriorConfig::default_for(&vocab),
            vocab,
            fit: FitOptions {
                ftol: 1e-6,
                agreement_tol: 1e-6,
                ..FitOptions::default()
            },
            sampler: SamplerOptions {
                steps: self.steps,
                thin: self.steps,
                max_nodes: 20,
                temperatures: self.temperatures.clone(),
                ..SamplerOptions::default()
            },
            tol_gap: DEFAULT_TOL_GAP,
        }
    }
}

/// Collects one verdict per criterion and prints it as it arrives.
#[derive(Default)]
pub struct Scoreboard {
    verdicts: Vec<(String, bool)>,
}

impl Scoreboard {
    pub fn record(&mut self, name: &str, pass: bool, detail: &str) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.verdicts.push((name.to_string(), pass));
    }

    pub fn failures(&self) -> Vec<&str> {
        self.verdicts
            .iter()
            .filter(|(_, ok)| !ok)
            .map(|(n, _)| n.as_str())
            .collect()
    }
}

/// `|a - b| / |b|`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Total variation distance between two distributions over labels; labels
/// missing from one side count as zero mass there.
pub fn total_variation(p: &HashMap<String, f64>, q: &HashMap<String, f64>) -> f64 {
    let mut tv: f64 = p
        .iter()
        .map(|(k, &pk)| (pk - q.get(k).copied().unwrap_or(0.0)).abs())
        .sum();
    tv += q
        .iter()
        .filter(|(k, _)| !p.contains_key(*k))
        .map(|(_, &qk)| qk.abs())
        .sum::<f64>();
    tv / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn total_variation_of_disjoint_and_equal_supports() {
        let p: HashMap<String, f64> = [("a".into(), 0.5), ("b".into(), 0.5)].into();
        let q: HashMap<String, f64> = [("c".into(), 1.0)].into();
        assert_eq!(total_variation(&p, &q), 1.0);
        assert_eq!(total_variation(&p, &p), 0.0);
        let r: HashMap<String, f64> = [("a".into(), 0.75), ("b".into(), 0.25)].into();
        assert!((total_variation(&p, &r) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn reduced_protocol_is_the_default() {
        let p = Protocol::from_env();
        if !p.full {
            assert!(p.replicas < 20);
        }
        p.sweep().validate().unwrap();
        p.settings().sampler.validate().unwrap();
    }
}
