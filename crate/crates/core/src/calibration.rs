// SPDX-License-Identifier: Apache-2.0

//! Per-operation latency/DSP costs, device capacities, and functional-unit
//! budgets.

use crate::ir::OpKind;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("reading calibration file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing calibration file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("unknown operation `{0}` in calibration")]
    UnknownOp(String),
    #[error("operation `{0}` has latency 0; every operation needs latency >= 1")]
    ZeroLatency(OpKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCost {
    pub latency: u64,
    pub dsp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Calibration {
    pub ops: BTreeMap<OpKind, OpCost>,
    pub dsp_available: u64,
    pub onchip_bits: u64,
    pub burst_bits: u64,
    pub max_partition: u64,
}

impl Default for Calibration {
    fn default() -> Self {
        let mut ops = BTreeMap::new();
        ops.insert(OpKind::Add, OpCost { latency: 5, dsp: 2 });
        ops.insert(OpKind::Sub, OpCost { latency: 5, dsp: 2 });
        ops.insert(OpKind::Mul, OpCost { latency: 4, dsp: 3 });
        ops.insert(OpKind::Div, OpCost { latency: 15, dsp: 0 });
        Calibration {
            ops,
            dsp_available: 6840,
            onchip_bits: 35 * 1024 * 1024,
            burst_bits: 512,
            max_partition: 1024,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileOp {
    latency: Option<u64>,
    dsp: Option<u64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileDevice {
    dsp: Option<u64>,
    onchip_bits: Option<u64>,
    burst_bits: Option<u64>,
    max_partition: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationFile {
    #[serde(default)]
    ops: BTreeMap<String, FileOp>,
    #[serde(default)]
    device: FileDevice,
}

impl Calibration {
    /// Latency 1 and one DSP for every op kind. Handy in tests.
    pub fn unit() -> Self {
        let mut c = Calibration::default();
        for k in OpKind::ALL {
            c.ops.insert(k, OpCost { latency: 1, dsp: 1 });
        }
        c
    }

    pub fn with_latency(mut self, k: OpKind, latency: u64) -> Self {
        self.ops.entry(k).or_insert(OpCost { latency, dsp: 0 }).latency = latency;
        self
    }

    pub fn latency(&self, k: OpKind) -> u64 {
        self.ops[&k].latency
    }

    pub fn dsp(&self, k: OpKind) -> u64 {
        self.ops[&k].dsp
    }

    /// Parse TOML text; unspecified entries keep their defaults.
    ///
    /// ```toml
    /// [ops.add]
    /// latency = 5
    /// dsp = 2
    /// [device]
    /// dsp = 6840
    /// ```
    pub fn from_toml(text: &str) -> Result<Self, CalibrationError> {
        let f: CalibrationFile = toml::from_str(text)?;
        let mut c = Calibration::default();
        for (name, op) in f.ops {
            let k = OpKind::from_name(&name).ok_or_else(|| CalibrationError::UnknownOp(name.clone()))?;
            let e = c.ops.get_mut(&k).expect("defaults cover every op");
            if let Some(l) = op.latency {
                e.latency = l;
            }
            if let Some(d) = op.dsp {
                e.dsp = d;
            }
        }
        if let Some(v) = f.device.dsp {
            c.dsp_available = v;
        }
        if let Some(v) = f.device.onchip_bits {
            c.onchip_bits = v;
        }
        if let Some(v) = f.device.burst_bits {
            c.burst_bits = v.max(1);
        }
        if let Some(v) = f.device.max_partition {
            c.max_partition = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, CalibrationError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        for (k, c) in &self.ops {
            if c.latency == 0 {
                return Err(CalibrationError::ZeroLatency(*k));
            }
        }
        Ok(())
    }
}

/// Functional units available per op kind. Kinds not listed are unbounded.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resources {
    pub units: BTreeMap<OpKind, u64>,
}

impl Resources {
    pub fn unbounded() -> Self {
        Resources::default()
    }

    pub fn uniform(n: u64) -> Self {
        Resources { units: OpKind::ALL.into_iter().map(|k| (k, n)).collect() }
    }

    pub fn with(mut self, k: OpKind, n: u64) -> Self {
        self.units.insert(k, n);
        self
    }

    /// Derive unit counts from a DSP budget: each kind gets as many units as
    /// the whole budget could pay for. Zero-DSP kinds stay unbounded.
    pub fn from_dsp_budget(cal: &Calibration, budget: u64) -> Self {
        let mut units = BTreeMap::new();
        for (k, c) in &cal.ops {
            if c.dsp > 0 {
                units.insert(*k, budget / c.dsp);
            }
        }
        Resources { units }
    }

    /// `None` means unbounded.
    pub fn get(&self, k: OpKind) -> Option<u64> {
        self.units.get(&k).copied()
    }

    pub fn is_unbounded(&self) -> bool {
        self.units.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_overrides() {
        let c = Calibration::from_toml("[ops.add]\nlatency = 7\n[device]\ndsp = 100\n").unwrap();
        assert_eq!(c.latency(OpKind::Add), 7);
        assert_eq!(c.dsp(OpKind::Add), 2);
        assert_eq!(c.dsp_available, 100);
        assert_eq!(c.max_partition, 1024);
    }

    #[test]
    fn toml_rejects_bad_input() {
        assert!(matches!(
            Calibration::from_toml("[ops.sqrt]\nlatency = 7\n"),
            Err(CalibrationError::UnknownOp(_))
        ));
        assert!(matches!(
            Calibration::from_toml("[ops.mul]\nlatency = 0\n"),
            Err(CalibrationError::ZeroLatency(OpKind::Mul))
        ));
        assert!(Calibration::from_toml("[device]\nfoo = 1\n").is_err());
    }

    #[test]
    fn dsp_budget_units() {
        let c = Calibration::default();
        let r = Resources::from_dsp_budget(&c, 12);
        assert_eq!(r.get(OpKind::Mul), Some(4));
        assert_eq!(r.get(OpKind::Add), Some(6));
        assert_eq!(r.get(OpKind::Div), None);
    }
}
