use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{Schedule, VmRequest};
use crate::error::{Error, Result};
use crate::offline::{self, PmgConfig, PrepartitionConfig};
use crate::online;

/// Every scheduler the runner knows about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[serde(rename = "rr")]
    RoundRobin,
    Lpt,
    Pmg,
    Prepartition,
    Random,
    #[serde(rename = "rr_on")]
    RoundRobinOnline,
    Olrsa,
    #[serde(rename = "prepartition_on")]
    PrepartitionOnline,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Algorithm::RoundRobin,
        Algorithm::Lpt,
        Algorithm::Pmg,
        Algorithm::Prepartition,
        Algorithm::Random,
        Algorithm::RoundRobinOnline,
        Algorithm::Olrsa,
        Algorithm::PrepartitionOnline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::RoundRobin => "rr",
            Algorithm::Lpt => "lpt",
            Algorithm::Pmg => "pmg",
            Algorithm::Prepartition => "prepartition",
            Algorithm::Random => "random",
            Algorithm::RoundRobinOnline => "rr_on",
            Algorithm::Olrsa => "olrsa",
            Algorithm::PrepartitionOnline => "prepartition_on",
        }
    }

    /// Whether the partition value `k` changes this algorithm's output.
    pub fn uses_k(self) -> bool {
        matches!(self, Algorithm::Prepartition | Algorithm::PrepartitionOnline)
    }

    pub fn is_online(self) -> bool {
        matches!(
            self,
            Algorithm::Random | Algorithm::RoundRobinOnline | Algorithm::Olrsa | Algorithm::PrepartitionOnline
        )
    }

    pub fn run(self, requests: &[VmRequest], params: &RunParams) -> Result<Schedule> {
        let m = params.m;
        match self {
            Algorithm::RoundRobin => offline::round_robin(requests, m),
            Algorithm::Lpt => offline::lpt(requests, m),
            Algorithm::Pmg => offline::pmg(requests, m, &params.pmg),
            Algorithm::Prepartition => offline::prepartition(requests, &PrepartitionConfig::new(params.k, m)),
            Algorithm::Random => online::random_online(requests, m, params.seed),
            Algorithm::RoundRobinOnline => online::round_robin_online(requests, m),
            Algorithm::Olrsa => online::olrsa(requests, m),
            Algorithm::PrepartitionOnline => online::prepartition_online(requests, m, params.k),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm {s:?}")))
    }
}

/// Inputs shared by all schedulers for one run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunParams {
    pub m: usize,
    pub k: u32,
    pub seed: u64,
    pub pmg: PmgConfig,
}

impl RunParams {
    pub fn new(m: usize, k: u32, seed: u64) -> Self {
        Self { m, k, seed, pmg: PmgConfig::default() }
    }
}
