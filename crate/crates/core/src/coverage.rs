//! Edge coverage bookkeeping.
//!
//! Every instrumentation site carries a block identifier. A transition from
//! block `prev` to block `cur` lands in cell `((prev >> 1) ^ cur) % map_size`.
//! Per execution we keep raw hit counts (saturating at 255); the global map
//! keeps, for every cell, the OR of all hit-count bucket flags seen so far.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::Fnv64;

pub const DEFAULT_MAP_SIZE: usize = 1 << 16;

/// Index of the edge `prev -> cur` in a map of `map_size` cells.
///
/// `map_size` must be a power of two.
#[inline]
pub fn edge_index(prev: u64, cur: u64, map_size: usize) -> usize {
    debug_assert!(map_size.is_power_of_two());
    (((prev >> 1) ^ cur) & (map_size as u64 - 1)) as usize
}

/// One-hot bucket flag for a raw hit count.
///
/// Ranges `{1}, {2}, {3}, {4..=7}, {8..=15}, {16..=31}, {32..=127}, {128..}`
/// map to bits 0 through 7. A count of zero is not a hit and has no bucket.
#[inline]
pub fn bucket(count: u32) -> u8 {
    assert!(count > 0, "hit count must be positive");
    match count {
        1 => 1 << 0,
        2 => 1 << 1,
        3 => 1 << 2,
        4..=7 => 1 << 3,
        8..=15 => 1 << 4,
        16..=31 => 1 << 5,
        32..=127 => 1 << 6,
        _ => 1 << 7,
    }
}

/// Raw per-execution hit counts, sorted by edge index.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceObservation {
    hits: Vec<(u32, u8)>,
}

impl TraceObservation {
    /// Builds a trace from `(edge, count)` pairs. Zero counts are dropped,
    /// counts above 255 saturate and repeated edges are summed.
    pub fn from_counts<I>(counts: I) -> Self
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        let mut merged = std::collections::BTreeMap::<u32, u32>::new();
        for (edge, count) in counts {
            *merged.entry(edge).or_default() += count;
        }
        let hits = merged
            .into_iter()
            .filter(|&(_, c)| c > 0)
            .map(|(e, c)| (e, c.min(255) as u8))
            .collect();
        TraceObservation { hits }
    }

    /// Takes hits that are already sorted, deduplicated and non-zero.
    pub(crate) fn from_sorted(hits: Vec<(u32, u8)>) -> Self {
        debug_assert!(hits.windows(2).all(|w| w[0].0 < w[1].0));
        debug_assert!(hits.iter().all(|&(_, c)| c > 0));
        TraceObservation { hits }
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u8)> + '_ {
        self.hits.iter().copied()
    }

    pub fn count(&self, edge: u32) -> Option<u8> {
        self.hits
            .binary_search_by_key(&edge, |&(e, _)| e)
            .ok()
            .map(|i| self.hits[i].1)
    }

    /// Number of distinct edges touched.
    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    /// Stable hash of the sorted `(edge, bucket)` set.
    pub fn path_signature(&self) -> u64 {
        let mut h = Fnv64::default();
        for &(edge, count) in &self.hits {
            h.write(&edge.to_le_bytes());
            h.write(&[bucket(count as u32)]);
        }
        h.finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Novelty {
    Nothing,
    NewBucket,
    NewEdge,
}

/// Which novelty verdicts make an input worth keeping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoveltyRule {
    /// New edges and new hit-count buckets both count.
    #[default]
    EdgeOrBucket,
    EdgeOnly,
}

impl Novelty {
    pub fn is_interesting(self, rule: NoveltyRule) -> bool {
        match rule {
            NoveltyRule::EdgeOrBucket => self != Novelty::Nothing,
            NoveltyRule::EdgeOnly => self == Novelty::NewEdge,
        }
    }
}

/// Accumulated bucket flags for every edge observed during a campaign.
#[derive(Clone, PartialEq, Eq)]
pub struct CoverageMap {
    cells: Vec<u8>,
}

impl std::fmt::Debug for CoverageMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoverageMap")
            .field("map_size", &self.cells.len())
            .field("edges", &self.edge_count())
            .finish()
    }
}

impl Default for CoverageMap {
    fn default() -> Self {
        CoverageMap {
            cells: vec![0; DEFAULT_MAP_SIZE],
        }
    }
}

impl CoverageMap {
    pub fn new(map_size: usize) -> Result<Self> {
        if map_size == 0 || !map_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "map size {map_size} is not a power of two"
            )));
        }
        if map_size > u32::MAX as usize {
            return Err(Error::Config(format!("map size {map_size} is too large")));
        }
        Ok(CoverageMap {
            cells: vec![0; map_size],
        })
    }

    pub fn map_size(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, index: usize) -> u8 {
        self.cells[index]
    }

    /// Number of cells with at least one observed bucket.
    pub fn edge_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c != 0).count()
    }

    /// Folds `trace` into the map and reports what was new about it.
    ///
    /// Edges outside the map are reduced modulo the map size.
    pub fn has_new_bits(&mut self, trace: &TraceObservation) -> Novelty {
        let mask = self.cells.len() - 1;
        let mut verdict = Novelty::Nothing;
        for (edge, count) in trace.iter() {
            let cell = &mut self.cells[edge as usize & mask];
            let flag = bucket(count as u32);
            if *cell & flag == 0 {
                verdict = verdict.max(if *cell == 0 {
                    Novelty::NewEdge
                } else {
                    Novelty::NewBucket
                });
                *cell |= flag;
            }
        }
        verdict
    }

    /// Non-zero cells as `(index, flags)`, for checkpointing.
    pub fn nonzero_cells(&self) -> Vec<(u32, u8)> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0)
            .map(|(i, &c)| (i as u32, c))
            .collect()
    }

    pub fn from_cells(map_size: usize, cells: &[(u32, u8)]) -> Result<Self> {
        let mut map = CoverageMap::new(map_size)?;
        for &(i, c) in cells {
            let slot = map.cells.get_mut(i as usize).ok_or_else(|| {
                Error::Config(format!("cell {i} outside map of size {map_size}"))
            })?;
            *slot = c;
        }
        Ok(map)
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use proptest::prelude::*;

    use super::*;

    #[test]
    fn edge_index_examples() {
        assert_eq!(edge_index(0, 0, DEFAULT_MAP_SIZE), 0);
        assert_eq!(edge_index(2, 0, 65536), 1);
        assert_eq!(edge_index(5, 3, 16), 1);
        assert_eq!(edge_index(u64::MAX, 0, 16), 15);
    }

    #[test]
    fn bucket_table() {
        assert_eq!(bucket(1), 0b0000_0001);
        assert_eq!(bucket(7), 0b0000_1000);
        assert_eq!(bucket(200), 0b1000_0000);
        let expected = [
            (2, 1), (3, 2), (4, 3), (8, 4), (15, 4), (16, 5), (31, 5), (32, 6), (127, 6), (128, 7),
            (255, 7),
        ];
        for (count, bit) in expected {
            assert_eq!(bucket(count), 1 << bit, "count {count}");
        }
    }

    #[test]
    #[should_panic]
    fn bucket_of_zero_is_rejected() {
        bucket(0);
    }

    #[test]
    fn map_size_must_be_power_of_two() {
        assert!(CoverageMap::new(0).is_err());
        assert!(CoverageMap::new(100).is_err());
        assert!(CoverageMap::new(16).is_ok());
    }

    #[test]
    fn novelty_examples() {
        let mut map = CoverageMap::default();
        let one_hit = TraceObservation::from_counts([(5, 1)]);
        assert_eq!(map.has_new_bits(&one_hit), Novelty::NewEdge);
        assert_eq!(map.has_new_bits(&one_hit), Novelty::Nothing);
        let nine_hits = TraceObservation::from_counts([(5, 9)]);
        assert_eq!(map.has_new_bits(&nine_hits), Novelty::NewBucket);
        assert_eq!(map.cell(5), 0b1_0001);
    }

    #[test]
    fn novelty_rule_filters_buckets() {
        assert!(Novelty::NewBucket.is_interesting(NoveltyRule::EdgeOrBucket));
        assert!(!Novelty::NewBucket.is_interesting(NoveltyRule::EdgeOnly));
        assert!(Novelty::NewEdge.is_interesting(NoveltyRule::EdgeOnly));
        assert!(!Novelty::Nothing.is_interesting(NoveltyRule::EdgeOrBucket));
    }

    #[test]
    fn trace_saturates_and_merges() {
        let t = TraceObservation::from_counts([(3, 200), (3, 100), (1, 0), (2, 4)]);
        assert_eq!(t.iter().collect::<Vec<_>>(), vec![(2, 4), (3, 255)]);
        assert_eq!(t.count(1), None);
    }

    #[test]
    fn signature_depends_on_buckets_not_raw_counts() {
        let a = TraceObservation::from_counts([(1, 4), (9, 1)]);
        let b = TraceObservation::from_counts([(1, 7), (9, 1)]);
        let c = TraceObservation::from_counts([(1, 8), (9, 1)]);
        assert_eq!(a.path_signature(), b.path_signature());
        assert_ne!(a.path_signature(), c.path_signature());
    }

    #[test]
    fn checkpoint_cells_round_trip() {
        let mut map = CoverageMap::new(64).unwrap();
        map.has_new_bits(&TraceObservation::from_counts([(3, 1), (40, 9)]));
        let restored = CoverageMap::from_cells(64, &map.nonzero_cells()).unwrap();
        assert_eq!(restored, map);
        assert!(CoverageMap::from_cells(16, &[(20, 1)]).is_err());
    }

    /// Reference model: the set of `(edge, bucket)` pairs seen so far.
    fn oracle_verdict(seen: &mut HashSet<(usize, u8)>, trace: &[(u32, u32)], size: usize) -> Novelty {
        let edges_before: HashSet<usize> = seen.iter().map(|&(e, _)| e).collect();
        let mut verdict = Novelty::Nothing;
        for &(edge, count) in trace {
            let e = edge as usize % size;
            let b = bucket(count.min(255));
            if seen.insert((e, b)) {
                let v = if edges_before.contains(&e) {
                    Novelty::NewBucket
                } else {
                    Novelty::NewEdge
                };
                verdict = verdict.max(v);
            }
        }
        verdict
    }

    fn trace_strategy(max_edge: u32) -> impl Strategy<Value = Vec<(u32, u32)>> {
        proptest::collection::btree_map(0..max_edge, 1u32..300, 0..6)
            .prop_map(|m| m.into_iter().collect())
    }

    proptest! {
        #[test]
        fn matches_pair_set_oracle(traces in proptest::collection::vec(trace_strategy(16), 1..40)) {
            let mut map = CoverageMap::new(16).unwrap();
            let mut seen = HashSet::new();
            for t in &traces {
                let expected = oracle_verdict(&mut seen, t, 16);
                let got = map.has_new_bits(&TraceObservation::from_counts(t.iter().copied()));
                prop_assert_eq!(got, expected);
            }
        }

        #[test]
        fn resubmission_is_never_new(t in trace_strategy(1 << 16)) {
            let mut map = CoverageMap::default();
            let trace = TraceObservation::from_counts(t);
            map.has_new_bits(&trace);
            prop_assert_eq!(map.has_new_bits(&trace), Novelty::Nothing);
        }

        #[test]
        fn cells_only_gain_bits(traces in proptest::collection::vec(trace_strategy(32), 1..20)) {
            let mut map = CoverageMap::new(32).unwrap();
            for t in traces {
                let before = map.clone();
                map.has_new_bits(&TraceObservation::from_counts(t));
                for i in 0..32 {
                    prop_assert_eq!(map.cell(i) & before.cell(i), before.cell(i));
                }
            }
        }
    }
}
