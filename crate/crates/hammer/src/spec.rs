//! What one worker process does, and how the orchestrator arranges workers.

use serde::{Deserialize, Serialize};

use crate::error::{HammerError, Result};
use crate::ids::DatasetValues;
use crate::payload::MIN_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Archive,
    Retrieve,
    List,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Archive => "archive",
            Mode::Retrieve => "retrieve",
            Mode::List => "list",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSpec {
    pub mode: Mode,
    pub process: u32,
    pub nsteps: u32,
    pub nparams: u32,
    pub nlevels: u32,
    /// Ensemble member written (or read) by this process.
    pub member: u32,
    pub field_size: usize,
    pub first_step: u32,
    /// Written into every payload; readers accept any version.
    pub version: u64,
    /// Retrieve only: read each step across this many members, starting at
    /// `member`, instead of one member's whole run.
    pub transpose: u32,
    /// Retrieve only: how many times to read the whole sequence.
    pub passes: u32,
    pub dataset: DatasetValues,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            mode: Mode::Archive,
            process: 0,
            nsteps: 10,
            nparams: 10,
            nlevels: 20,
            member: 1,
            field_size: 4096,
            first_step: 0,
            version: 0,
            transpose: 0,
            passes: 1,
            dataset: DatasetValues::default(),
        }
    }
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nsteps == 0 || self.nparams == 0 || self.nlevels == 0 {
            return Err(HammerError::Usage("nsteps, nparams and nlevels must be positive".into()));
        }
        if self.field_size < MIN_LEN {
            return Err(HammerError::Usage(format!("field size must be at least {MIN_LEN} bytes")));
        }
        if self.passes == 0 {
            return Err(HammerError::Usage("passes must be positive".into()));
        }
        Ok(())
    }

    /// Fields touched per pass: `nsteps × nparams × nlevels`, times the
    /// member span when transposed.
    pub fn fields(&self) -> u64 {
        self.nsteps as u64 * self.nparams as u64 * self.nlevels as u64 * self.transpose.max(1) as u64
    }

    /// `(step, member, level, param)` in visiting order: step outermost, then
    /// member (transposed reads only), level, param.
    pub fn sequence(&self) -> impl Iterator<Item = (u32, u32, u32, u32)> + '_ {
        let steps = self.first_step..self.first_step + self.nsteps;
        let members = self.member..self.member + self.transpose.max(1);
        steps.flat_map(move |s| {
            members.clone().flat_map(move |m| {
                (1..=self.nlevels).flat_map(move |l| (0..self.nparams).map(move |p| (s, m, l, p)))
            })
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    /// Write phase to completion, then read phase.
    NoContention,
    /// Prepopulate, then writers and readers at the same time.
    Contention,
}

impl Pattern {
    pub fn as_str(self) -> &'static str {
        match self {
            Pattern::NoContention => "no_contention",
            Pattern::Contention => "contention",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternSpec {
    pub pattern: Pattern,
    pub writers: u32,
    pub readers: u32,
    /// Contention only: writers re-archive the identifiers readers are
    /// reading instead of fresh ones.
    pub overwrite: bool,
}

impl PatternSpec {
    pub fn validate(&self) -> Result<()> {
        if self.writers == 0 && self.readers == 0 {
            return Err(HammerError::Usage("no processes to run".into()));
        }
        if self.pattern == Pattern::NoContention && self.readers > 0 && self.writers == 0 {
            return Err(HammerError::Usage("readers need at least one writer to read from".into()));
        }
        if self.overwrite && (self.pattern != Pattern::Contention || self.readers == 0) {
            return Err(HammerError::Usage("overwrite needs the contention pattern with readers".into()));
        }
        Ok(())
    }
}
