// SPDX-License-Identifier: Apache-2.0

//! Pragma configurations: per-loop pipeline/unroll/tile choices plus the
//! set of (loop, array) cache points.

use crate::analysis::TripCountInfo;
use crate::ir::{ArrayIdx, KernelIr, LoopIdx};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LoopPragma {
    pub pip: bool,
    pub uf: u64,
    pub tile: u64,
}

impl Default for LoopPragma {
    fn default() -> Self {
        LoopPragma { pip: false, uf: 1, tile: 1 }
    }
}

/// Indexed by loop id. Arrays accessed outside every cache point are
/// transferred at program level.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PragmaConfig {
    pub loops: Vec<LoopPragma>,
    pub cache: BTreeSet<(LoopIdx, ArrayIdx)>,
}

impl PragmaConfig {
    /// No pragmas at all.
    pub fn default_for(k: &KernelIr) -> Self {
        PragmaConfig { loops: vec![LoopPragma::default(); k.loops.len()], cache: BTreeSet::new() }
    }

    pub fn pipelined(&self) -> impl Iterator<Item = LoopIdx> + '_ {
        self.loops.iter().enumerate().filter(|(_, p)| p.pip).map(|(l, _)| l)
    }

    /// Pipelined loop enclosing `l` (or `l` itself), if any.
    pub fn pipeline_over(&self, k: &KernelIr, l: LoopIdx) -> Option<LoopIdx> {
        let mut cur = Some(l);
        while let Some(c) = cur {
            if self.loops[c].pip {
                return Some(c);
            }
            cur = k.loops[c].parent;
        }
        None
    }

    /// Strictly below a pipelined loop.
    pub fn under_pipeline(&self, k: &KernelIr, l: LoopIdx) -> bool {
        k.loops[l].parent.is_some_and(|p| self.pipeline_over(k, p).is_some())
    }

    /// Loop `l` is completely unrolled: constant trip count covered by the
    /// unroll factor, no pipeline.
    pub fn is_fully_unrolled(&self, trip: &[TripCountInfo], l: LoopIdx) -> bool {
        let t = &trip[l];
        !self.loops[l].pip && t.is_constant() && (self.loops[l].uf == t.tc_max || t.tc_max == 0)
    }

    /// Every loop strictly below `l` is fully unrolled, so one (unrolled)
    /// iteration of `l` is straight-line code.
    pub fn straight_line_below(&self, k: &KernelIr, trip: &[TripCountInfo], l: LoopIdx) -> bool {
        k.loops_under(l).into_iter().all(|m| self.is_fully_unrolled(trip, m))
    }

    /// Flat key that orders configurations for tie-breaking and detects
    /// duplicates: `(pip, uf)` per loop in id order (loop ids are preorder,
    /// so each top-level nest is a contiguous block), then one cache bit per
    /// (array, loop) in array-major order, then the tile factors.
    pub fn key(&self, k: &KernelIr) -> Vec<u64> {
        let n = self.loops.len();
        let mut v = Vec::with_capacity(n * 3 + k.arrays.len() * n);
        for p in &self.loops {
            v.extend([p.pip as u64, p.uf]);
        }
        for a in 0..k.arrays.len() {
            v.extend((0..n).map(|l| self.cache.contains(&(l, a)) as u64));
        }
        v.extend(self.loops.iter().map(|p| p.tile));
        v
    }

    pub fn to_named(&self, k: &KernelIr) -> NamedConfig {
        NamedConfig {
            loops: self
                .loops
                .iter()
                .enumerate()
                .map(|(l, p)| (k.loops[l].iterator.clone(), NamedLoop { pipeline: p.pip, unroll: p.uf, tile: p.tile }))
                .collect(),
            cache: self
                .cache
                .iter()
                .map(|&(l, a)| NamedCache { r#loop: k.loops[l].iterator.clone(), array: k.arrays[a].name.clone() })
                .collect(),
        }
    }

    pub fn from_named(k: &KernelIr, n: &NamedConfig) -> Result<Self, ConfigError> {
        let mut c = PragmaConfig::default_for(k);
        for (name, p) in &n.loops {
            let l = k.loop_by_name(name).ok_or_else(|| ConfigError::UnknownLoop(name.clone()))?;
            c.loops[l] = LoopPragma { pip: p.pipeline, uf: p.unroll, tile: p.tile };
        }
        for e in &n.cache {
            let l = k.loop_by_name(&e.r#loop).ok_or_else(|| ConfigError::UnknownLoop(e.r#loop.clone()))?;
            let a = k.array_by_name(&e.array).ok_or_else(|| ConfigError::UnknownArray(e.array.clone()))?;
            c.cache.insert((l, a));
        }
        Ok(c)
    }

    pub fn from_json(k: &KernelIr, text: &str) -> Result<Self, ConfigError> {
        let n: NamedConfig = serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))?;
        Self::from_named(k, &n)
    }

    pub fn to_json(&self, k: &KernelIr) -> String {
        serde_json::to_string_pretty(&self.to_named(k)).expect("config serializes")
    }

    /// Compact one-line rendering, e.g. `j:pip k:uf4 | cache A@i`.
    pub fn display<'a>(&'a self, k: &'a KernelIr) -> ConfigDisplay<'a> {
        ConfigDisplay { c: self, k }
    }
}

pub struct ConfigDisplay<'a> {
    c: &'a PragmaConfig,
    k: &'a KernelIr,
}

impl fmt::Display for ConfigDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for (l, p) in self.c.loops.iter().enumerate() {
            let mut s = Vec::new();
            if p.pip {
                s.push("pip".to_string());
            }
            if p.uf != 1 {
                s.push(format!("uf{}", p.uf));
            }
            if p.tile != 1 {
                s.push(format!("tile{}", p.tile));
            }
            if !s.is_empty() {
                parts.push(format!("{}:{}", self.k.loops[l].iterator, s.join(",")));
            }
        }
        if parts.is_empty() {
            parts.push("default".into());
        }
        write!(f, "{}", parts.join(" "))?;
        if !self.c.cache.is_empty() {
            let caches: Vec<String> = self
                .c
                .cache
                .iter()
                .map(|&(l, a)| format!("{}@{}", self.k.arrays[a].name, self.k.loops[l].iterator))
                .collect();
            write!(f, " | cache {}", caches.join(" "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("unknown loop `{0}` in config")]
    UnknownLoop(String),
    #[error("unknown array `{0}` in config")]
    UnknownArray(String),
    #[error("malformed config: {0}")]
    Json(String),
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedLoop {
    #[serde(default)]
    pub pipeline: bool,
    #[serde(default = "one")]
    pub unroll: u64,
    #[serde(default = "one")]
    pub tile: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedCache {
    pub r#loop: String,
    pub array: String,
}

/// Config file form, keyed by loop iterator and array names.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedConfig {
    #[serde(default)]
    pub loops: BTreeMap<String, NamedLoop>,
    #[serde(default)]
    pub cache: Vec<NamedCache>,
}

/// Which rule of the pragma-selection problem a violation breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConstraintTag {
    UnrollBounds,
    TileBounds,
    FullUnrollUnderPipeline,
    OnePipelinePerStatement,
    NoCacheUnderPipeline,
    DependenceDistance,
    PartitionLimit,
    UnrollDivides,
    TileDivides,
    FineGrainedOnly,
    DspBudget,
    OnChipCapacity,
    /// Cache point on a loop that does not access the array, or two cache
    /// points for one array on the same path.
    CachePath,
}

impl ConstraintTag {
    pub const ALL: [ConstraintTag; 13] = [
        ConstraintTag::UnrollBounds,
        ConstraintTag::TileBounds,
        ConstraintTag::FullUnrollUnderPipeline,
        ConstraintTag::OnePipelinePerStatement,
        ConstraintTag::NoCacheUnderPipeline,
        ConstraintTag::DependenceDistance,
        ConstraintTag::PartitionLimit,
        ConstraintTag::UnrollDivides,
        ConstraintTag::TileDivides,
        ConstraintTag::FineGrainedOnly,
        ConstraintTag::DspBudget,
        ConstraintTag::OnChipCapacity,
        ConstraintTag::CachePath,
    ];

    /// Stable rule label used in reports and exported models.
    pub fn label(self) -> &'static str {
        match self {
            ConstraintTag::UnrollBounds => "unroll-bounds",
            ConstraintTag::TileBounds => "tile-bounds",
            ConstraintTag::FullUnrollUnderPipeline => "full-unroll-under-pipeline",
            ConstraintTag::OnePipelinePerStatement => "one-pipeline-per-statement",
            ConstraintTag::NoCacheUnderPipeline => "no-cache-under-pipeline",
            ConstraintTag::DependenceDistance => "dependence-distance",
            ConstraintTag::PartitionLimit => "partition-limit",
            ConstraintTag::UnrollDivides => "unroll-divides",
            ConstraintTag::TileDivides => "tile-divides",
            ConstraintTag::FineGrainedOnly => "fine-grained-only",
            ConstraintTag::DspBudget => "dsp-budget",
            ConstraintTag::OnChipCapacity => "onchip-capacity",
            ConstraintTag::CachePath => "cache-path",
        }
    }

    pub fn from_label(s: &str) -> Option<ConstraintTag> {
        Self::ALL.into_iter().find(|t| t.label() == s)
    }
}

impl fmt::Display for ConstraintTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub tag: ConstraintTag,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.tag.label(), self.message)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_kernel;

    #[test]
    fn named_round_trip() {
        let k = parse_kernel(
            "kernel k { array A[4][4]: f32 inout; loop i 0 4 { loop j 0 4 { S: A[i][j] = A[i][j] * 2; } } }",
        )
        .unwrap();
        let mut c = PragmaConfig::default_for(&k);
        c.loops[1] = LoopPragma { pip: true, uf: 4, tile: 1 };
        c.cache.insert((0, 0));
        let back = PragmaConfig::from_json(&k, &c.to_json(&k)).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.display(&k).to_string(), "j:pip,uf4 | cache A@i");
        assert!(!c.under_pipeline(&k, 1));
        assert_eq!(c.pipeline_over(&k, 1), Some(1));
        assert!(matches!(
            PragmaConfig::from_json(&k, r#"{"loops":{"q":{}}}"#),
            Err(ConfigError::UnknownLoop(_))
        ));
        assert!(PragmaConfig::from_json(&k, r#"{"loops":{"i":{"unrol":2}}}"#).is_err());
    }
}
