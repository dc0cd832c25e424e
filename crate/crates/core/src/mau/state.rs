// SPDX-License-Identifier: Apache-2.0

//! Counters, registers and two-rate three-color meters.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::width_mask;

const NS_PER_SEC: u128 = 1_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StateError {
    #[error("no such stateful object {0:?}")]
    NoSuchObject(String),
    #[error("index {idx} out of range for {name:?} (size {size})")]
    IndexOutOfRange { name: String, idx: u128, size: usize },
    #[error("duplicate stateful object {0:?}")]
    Duplicate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Color {
    Green = 0,
    Yellow = 1,
    Red = 2,
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Color::Green => "green",
            Color::Yellow => "yellow",
            Color::Red => "red",
        })
    }
}

/// Rates in bytes per second, bursts in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeterConfig {
    pub cir: u64,
    pub cbs: u64,
    pub pir: u64,
    pub pbs: u64,
}

/// Color-blind trTCM. Token counts are kept in byte-nanoseconds-per-second
/// units (bytes * 1e9) so refills stay in integers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Meter {
    config: MeterConfig,
    tc: u128,
    tp: u128,
    last: Option<u64>,
}

impl Meter {
    pub fn new(config: MeterConfig) -> Self {
        Self {
            config,
            tc: config.cbs as u128 * NS_PER_SEC,
            tp: config.pbs as u128 * NS_PER_SEC,
            last: None,
        }
    }

    pub fn config(&self) -> MeterConfig {
        self.config
    }

    /// Tokens (bytes) in the committed and peak buckets.
    pub fn tokens(&self) -> (u64, u64) {
        ((self.tc / NS_PER_SEC) as u64, (self.tp / NS_PER_SEC) as u64)
    }

    fn refill(&mut self, now: u64) {
        if let Some(last) = self.last {
            let dt = now.saturating_sub(last) as u128;
            let c = &self.config;
            self.tc = (self.tc + c.cir as u128 * dt).min(c.cbs as u128 * NS_PER_SEC);
            self.tp = (self.tp + c.pir as u128 * dt).min(c.pbs as u128 * NS_PER_SEC);
        }
        self.last = Some(self.last.map_or(now, |l| l.max(now)));
    }

    pub fn mark(&mut self, bytes: u64, now: u64) -> Color {
        self.refill(now);
        let b = bytes as u128 * NS_PER_SEC;
        if self.tp < b {
            Color::Red
        } else if self.tc < b {
            self.tp -= b;
            Color::Yellow
        } else {
            self.tp -= b;
            self.tc -= b;
            Color::Green
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Register {
    width: usize,
    cells: Vec<u128>,
}

impl Register {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn cells(&self) -> &[u128] {
        &self.cells
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StatefulStore {
    counters: BTreeMap<String, u64>,
    registers: BTreeMap<String, Register>,
    meters: BTreeMap<String, Vec<Meter>>,
}

impl StatefulStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn ensure_new(&self, name: &str) -> Result<(), StateError> {
        if self.has_object(name) {
            Err(StateError::Duplicate(name.to_string()))
        } else {
            Ok(())
        }
    }

    pub fn has_object(&self, name: &str) -> bool {
        self.counters.contains_key(name) || self.registers.contains_key(name) || self.meters.contains_key(name)
    }

    pub fn declare_counter(&mut self, name: &str) -> Result<(), StateError> {
        self.ensure_new(name)?;
        self.counters.insert(name.to_string(), 0);
        Ok(())
    }

    pub fn declare_register(&mut self, name: &str, size: usize, width: usize) -> Result<(), StateError> {
        self.ensure_new(name)?;
        self.registers.insert(
            name.to_string(),
            Register {
                width: width.min(128),
                cells: vec![0; size],
            },
        );
        Ok(())
    }

    pub fn declare_meter(&mut self, name: &str, size: usize, config: MeterConfig) -> Result<(), StateError> {
        self.ensure_new(name)?;
        self.meters.insert(name.to_string(), vec![Meter::new(config); size]);
        Ok(())
    }

    pub fn has_counter(&self, name: &str) -> bool {
        self.counters.contains_key(name)
    }

    pub fn has_register(&self, name: &str) -> bool {
        self.registers.contains_key(name)
    }

    pub fn has_meter(&self, name: &str) -> bool {
        self.meters.contains_key(name)
    }

    pub fn counters(&self) -> &BTreeMap<String, u64> {
        &self.counters
    }

    pub fn registers(&self) -> &BTreeMap<String, Register> {
        &self.registers
    }

    pub fn counter(&self, name: &str) -> Result<u64, StateError> {
        self.counters
            .get(name)
            .copied()
            .ok_or_else(|| StateError::NoSuchObject(name.to_string()))
    }

    pub fn counter_inc(&mut self, name: &str, by: u64) -> Result<(), StateError> {
        let c = self
            .counters
            .get_mut(name)
            .ok_or_else(|| StateError::NoSuchObject(name.to_string()))?;
        *c = c.saturating_add(by);
        Ok(())
    }

    pub fn reset_counter(&mut self, name: &str) -> Result<(), StateError> {
        let c = self
            .counters
            .get_mut(name)
            .ok_or_else(|| StateError::NoSuchObject(name.to_string()))?;
        *c = 0;
        Ok(())
    }

    fn cell(&mut self, name: &str, idx: u128) -> Result<(&mut u128, usize), StateError> {
        let r = self
            .registers
            .get_mut(name)
            .ok_or_else(|| StateError::NoSuchObject(name.to_string()))?;
        let size = r.cells.len();
        let width = r.width;
        usize::try_from(idx)
            .ok()
            .and_then(|i| r.cells.get_mut(i))
            .map(|c| (c, width))
            .ok_or(StateError::IndexOutOfRange {
                name: name.to_string(),
                idx,
                size,
            })
    }

    pub fn register_read(&mut self, name: &str, idx: u128) -> Result<u128, StateError> {
        self.cell(name, idx).map(|(c, _)| *c)
    }

    /// Stores `value` truncated to the register width.
    pub fn register_write(&mut self, name: &str, idx: u128, value: u128) -> Result<(), StateError> {
        let (c, width) = self.cell(name, idx)?;
        *c = value & width_mask(width);
        Ok(())
    }

    fn meter(&mut self, name: &str, idx: u128) -> Result<&mut Meter, StateError> {
        let m = self
            .meters
            .get_mut(name)
            .ok_or_else(|| StateError::NoSuchObject(name.to_string()))?;
        let size = m.len();
        usize::try_from(idx)
            .ok()
            .and_then(|i| m.get_mut(i))
            .ok_or(StateError::IndexOutOfRange {
                name: name.to_string(),
                idx,
                size,
            })
    }

    pub fn meter_exec(&mut self, name: &str, idx: u128, bytes: u64, now: u64) -> Result<Color, StateError> {
        Ok(self.meter(name, idx)?.mark(bytes, now))
    }

    /// Replaces the meter configuration and refills both buckets.
    pub fn set_meter(&mut self, name: &str, idx: u128, config: MeterConfig) -> Result<(), StateError> {
        *self.meter(name, idx)? = Meter::new(config);
        Ok(())
    }

    pub fn meter_state(&mut self, name: &str, idx: u128) -> Result<(MeterConfig, (u64, u64)), StateError> {
        let m = self.meter(name, idx)?;
        Ok((m.config(), m.tokens()))
    }
}
