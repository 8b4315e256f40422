//! Sampled simulation outputs: time traces, multi-observable traces, histograms.

use crate::{Error, Result};

/// A single sampled time series (counts/s or population fraction).
#[derive(Debug, Clone)]
pub struct TimeTrace {
    /// Sample times in seconds, strictly increasing.
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// RNG seed for stochastic traces, recorded for replay.
    pub seed: Option<u64>,
    /// Acquisition bin in seconds, when binned.
    pub bin: Option<f64>,
}

impl TimeTrace {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Dimension("times/values length mismatch".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid("times must be strictly increasing".into()));
        }
        Ok(Self { times, values, seed: None, bin: None })
    }
}

/// Several labelled observables sampled on a common time axis.
#[derive(Debug, Clone)]
pub struct MultiTrace {
    pub times: Vec<f64>,
    pub series: Vec<(String, Vec<f64>)>,
}

impl MultiTrace {
    pub fn get(&self, label: &str) -> Option<&[f64]> {
        self.series
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, v)| v.as_slice())
    }
}

/// Photon-counting histogram over integer count bins.
#[derive(Debug, Clone)]
pub struct Histogram {
    /// Left edge of each unit-width count bin (0, 1, 2, ...).
    pub bin_edges: Vec<u64>,
    pub frequencies: Vec<u64>,
    /// Acquisition window per measurement, seconds.
    pub acquisition_bin: f64,
    pub seed: Option<u64>,
}

impl Histogram {
    pub fn from_counts(counts: &[u64], acquisition_bin: f64) -> Self {
        let max = counts.iter().copied().max().unwrap_or(0);
        let mut frequencies = vec![0u64; max as usize + 1];
        for &c in counts {
            frequencies[c as usize] += 1;
        }
        Self {
            bin_edges: (0..=max).collect(),
            frequencies,
            acquisition_bin,
            seed: None,
        }
    }

    /// Total number of recorded measurements.
    pub fn total(&self) -> u64 {
        self.frequencies.iter().sum()
    }
}
