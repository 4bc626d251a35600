//! Choosing the measured pair set `S`.
//!
//! Every successful sample covers all nodes: each node is an endpoint of at
//! least one measured pair. Uniform draws that miss a node are repaired by
//! swapping one of its pairs in for a redundant measured pair.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::pairs::{all_pairs, pair_count, Pair};
use crate::routing::GroundTruthTable;
use crate::seeds::StageRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMethod {
    Random,
    /// Every measured pair contains at least one monitor.
    Monitor,
}

impl SamplingMethod {
    pub fn short_name(self) -> &'static str {
        match self {
            SamplingMethod::Random => "random",
            SamplingMethod::Monitor => "monitor",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub node_count: usize,
    /// Measured pairs with their metrics, ascending by pair.
    pub measured: Vec<(Pair, f64)>,
    /// All remaining pairs, ascending by pair.
    pub heldout: Vec<(Pair, f64)>,
    pub method: SamplingMethod,
    pub ratio: f64,
    /// Monitor nodes (empty under random sampling).
    pub monitors: Vec<usize>,
}

impl MeasurementSet {
    /// Assembles a set from explicit measured pairs; everything else is held out.
    pub fn from_measured(gt: &GroundTruthTable, measured: &[Pair]) -> Result<Self> {
        let n = gt.node_count();
        let mut flags = vec![false; pair_count(n)];
        for p in measured {
            flags[p.index(n)] = true;
        }
        let set = Self::from_flags(gt, &flags, SamplingMethod::Random, Vec::new());
        check_coverage(n, set.measured.iter().map(|(p, _)| *p))?;
        Ok(set)
    }

    fn from_flags(gt: &GroundTruthTable, flags: &[bool], method: SamplingMethod, monitors: Vec<usize>) -> Self {
        let n = gt.node_count();
        let (mut measured, mut heldout) = (Vec::new(), Vec::new());
        for (pair, &m) in gt.metrics.iter() {
            if flags[pair.index(n)] {
                measured.push((pair, m));
            } else {
                heldout.push((pair, m));
            }
        }
        let ratio = measured.len() as f64 / gt.len() as f64;
        Self {
            node_count: n,
            measured,
            heldout,
            method,
            ratio,
            monitors,
        }
    }

    pub fn measured_pairs(&self) -> Vec<Pair> {
        self.measured.iter().map(|(p, _)| *p).collect()
    }

    pub fn heldout_pairs(&self) -> Vec<Pair> {
        self.heldout.iter().map(|(p, _)| *p).collect()
    }

    /// Writes `measured.csv` and `heldout.csv` (`u,v,metric`) into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        io::save_pair_values(dir.join("measured.csv"), "metric", &self.measured)?;
        io::save_pair_values(dir.join("heldout.csv"), "metric", &self.heldout)?;
        Ok(())
    }

    /// Reads back the two CSVs; monitors are recovered as nodes present in
    /// every measured pair only when `method` is [`SamplingMethod::Monitor`].
    pub fn load(dir: impl AsRef<Path>, method: SamplingMethod) -> Result<Self> {
        let dir = dir.as_ref();
        let mut measured = io::load_pair_values(dir.join("measured.csv"))?;
        let mut heldout = io::load_pair_values(dir.join("heldout.csv"))?;
        measured.sort_by_key(|(p, _)| *p);
        heldout.sort_by_key(|(p, _)| *p);
        let n = io::implied_node_count(measured.iter().chain(&heldout));
        if measured.len() + heldout.len() != pair_count(n) {
            return Err(Error::invalid(format!(
                "measured + heldout list {} pairs, expected {} for {n} nodes",
                measured.len() + heldout.len(),
                pair_count(n)
            )));
        }
        let monitors = Vec::new();
        Ok(Self {
            node_count: n,
            ratio: measured.len() as f64 / pair_count(n) as f64,
            measured,
            heldout,
            method,
            monitors,
        })
    }
}

fn check_coverage(n: usize, pairs: impl Iterator<Item = Pair>) -> Result<()> {
    let mut covered = vec![false; n];
    for p in pairs {
        covered[p.lo()] = true;
        covered[p.hi()] = true;
    }
    match covered.iter().position(|c| !c) {
        Some(v) => Err(Error::Coverage(format!("node {v} appears in no measured pair"))),
        None => Ok(()),
    }
}

fn target_size(total: usize, ratio: f64) -> Result<usize> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("sampling ratio must lie in (0,1), got {ratio}")));
    }
    Ok(((ratio * total as f64).round() as usize).max(1))
}

/// Makes every node an endpoint of some selected pair, drawing replacements
/// from `pool`. Selected pairs must belong to `pool`.
fn repair_coverage(n: usize, selected: &mut Vec<Pair>, pool: &[Pair], rng: &mut StageRng) -> Result<()> {
    let mut count = vec![0usize; n];
    for p in selected.iter() {
        count[p.lo()] += 1;
        count[p.hi()] += 1;
    }
    for node in 0..n {
        if count[node] > 0 {
            continue;
        }
        let options: Vec<Pair> = pool.iter().copied().filter(|p| p.contains(node)).collect();
        if options.is_empty() {
            return Err(Error::Coverage(format!("node {node} has no candidate pair")));
        }
        // An option is usable only if, once added, some selected pair becomes redundant.
        let redundant_after = |pick: Pair, count: &[usize]| -> Vec<usize> {
            let c = |v: usize| count[v] + usize::from(pick.contains(v));
            selected
                .iter()
                .enumerate()
                .filter(|(_, p)| c(p.lo()) >= 2 && c(p.hi()) >= 2)
                .map(|(i, _)| i)
                .collect()
        };
        let usable: Vec<Pair> = options
            .iter()
            .copied()
            .filter(|&p| !redundant_after(p, &count).is_empty())
            .collect();
        let fresh: Vec<Pair> = usable
            .iter()
            .copied()
            .filter(|p| count[p.other(node).unwrap()] == 0)
            .collect();
        let Some(&pick) = fresh.choose(rng).or_else(|| usable.choose(rng)) else {
            return Err(Error::Coverage(format!(
                "no redundant pair to trade for a pair covering node {node}"
            )));
        };
        let redundant = redundant_after(pick, &count);
        let drop = *redundant.choose(rng).unwrap();
        count[pick.lo()] += 1;
        count[pick.hi()] += 1;
        let old = selected.swap_remove(drop);
        count[old.lo()] -= 1;
        count[old.hi()] -= 1;
        selected.push(pick);
    }
    Ok(())
}

fn finish(
    gt: &GroundTruthTable,
    selected: &[Pair],
    method: SamplingMethod,
    monitors: Vec<usize>,
    requested: f64,
) -> MeasurementSet {
    let n = gt.node_count();
    let mut flags = vec![false; gt.len()];
    for p in selected {
        flags[p.index(n)] = true;
    }
    let mut set = MeasurementSet::from_flags(gt, &flags, method, monitors);
    set.ratio = requested;
    set
}

/// Uniform sample of `round(ratio·|T|)` pairs, repaired for coverage.
pub fn sample_random(gt: &GroundTruthTable, ratio: f64, rng: &mut StageRng) -> Result<MeasurementSet> {
    let n = gt.node_count();
    let target = target_size(gt.len(), ratio)?;
    if 2 * target < n {
        return Err(Error::Coverage(format!("{target} pairs cannot cover {n} nodes")));
    }
    let mut pool: Vec<Pair> = all_pairs(n).collect();
    pool.shuffle(rng);
    let mut selected = pool[..target].to_vec();
    repair_coverage(n, &mut selected, &pool, rng)?;
    Ok(finish(gt, &selected, SamplingMethod::Random, Vec::new(), ratio))
}

/// Smallest `ρ` whose monitor-involving pairs, `ρn − ρ(ρ+1)/2`, reach `target`.
pub fn min_monitor_count(n: usize, target: usize) -> Option<usize> {
    (1..=n).find(|&rho| rho * n - rho * (rho + 1) / 2 >= target)
}

/// Fewest pairs (each containing a monitor) that can cover all `n` nodes.
fn min_covering_pairs(n: usize, monitors: usize) -> usize {
    let others = n - monitors;
    let spare_monitors = monitors.saturating_sub(others);
    others + spare_monitors.div_ceil(2)
}

/// Monitor count used by [`sample_monitor_based`]: the smallest `ρ` that
/// reaches the target size and also admits a covering sample of that size.
pub fn monitor_count(n: usize, target: usize) -> Option<usize> {
    let start = min_monitor_count(n, target)?;
    (start..=n).find(|&rho| min_covering_pairs(n, rho) <= target)
}

/// Picks `ρ` monitors uniformly, then subsamples their pairs to the target size
/// while keeping every node covered.
pub fn sample_monitor_based(gt: &GroundTruthTable, ratio: f64, rng: &mut StageRng) -> Result<MeasurementSet> {
    let n = gt.node_count();
    let target = target_size(gt.len(), ratio)?;
    let rho = monitor_count(n, target)
        .ok_or_else(|| Error::Coverage(format!("no monitor count covers {n} nodes with {target} pairs")))?;
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(rng);
    let mut monitors = nodes[..rho].to_vec();
    monitors.sort_unstable();
    let mut is_monitor = vec![false; n];
    for &m in &monitors {
        is_monitor[m] = true;
    }

    let mut pool: Vec<Pair> = all_pairs(n)
        .filter(|p| is_monitor[p.lo()] || is_monitor[p.hi()])
        .collect();
    pool.shuffle(rng);
    let mut selected = pool[..target.min(pool.len())].to_vec();
    repair_coverage(n, &mut selected, &pool, rng)?;
    Ok(finish(gt, &selected, SamplingMethod::Monitor, monitors, ratio))
}

pub fn sample(gt: &GroundTruthTable, method: SamplingMethod, ratio: f64, rng: &mut StageRng) -> Result<MeasurementSet> {
    match method {
        SamplingMethod::Random => sample_random(gt, ratio, rng),
        SamplingMethod::Monitor => sample_monitor_based(gt, ratio, rng),
    }
}

/// Draws `k` distinct elements of `items` uniformly (partial Fisher–Yates).
pub(crate) fn choose_distinct<T: Copy>(items: &[T], k: usize, rng: &mut StageRng) -> Vec<T> {
    let mut idx: Vec<usize> = (0..items.len()).collect();
    let k = k.min(items.len());
    for i in 0..k {
        let j = rng.gen_range(i..idx.len());
        idx.swap(i, j);
    }
    idx[..k].iter().map(|&i| items[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{generate_topology, MetricSemantics};
    use crate::routing::{route_all_pairs, RoutingStrategy};
    use rand::SeedableRng;

    fn ground_truth(n: usize, deg: f64, seed: u64) -> GroundTruthTable {
        let t = generate_topology(n, deg, seed).unwrap();
        route_all_pairs(&t, RoutingStrategy::Mhr, MetricSemantics::Additive).unwrap()
    }

    fn rng(seed: u64) -> StageRng {
        StageRng::seed_from_u64(seed)
    }

    fn covered(set: &MeasurementSet) -> bool {
        check_coverage(set.node_count, set.measured.iter().map(|(p, _)| *p)).is_ok()
    }

    #[test]
    fn random_five_nodes() {
        let gt = ground_truth(5, 2.0, 3);
        for seed in 0..50 {
            let s = sample_random(&gt, 0.3, &mut rng(seed)).unwrap();
            assert_eq!(s.measured.len(), 3);
            assert_eq!(s.heldout.len(), 7);
            assert!(covered(&s));
        }
    }

    #[test]
    fn random_is_deterministic_and_partitions() {
        let gt = ground_truth(30, 3.0, 1);
        let a = sample_random(&gt, 0.25, &mut rng(9)).unwrap();
        let b = sample_random(&gt, 0.25, &mut rng(9)).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<Pair> = a.measured_pairs();
        all.extend(a.heldout_pairs());
        all.sort();
        assert_eq!(all, all_pairs(30).collect::<Vec<_>>());
        assert_eq!(a.measured.len(), (0.25f64 * 435.0).round() as usize);
    }

    #[test]
    fn near_full_ratio() {
        let gt = ground_truth(6, 2.0, 2);
        let s = sample_random(&gt, 0.999, &mut rng(1)).unwrap();
        assert_eq!(s.measured.len(), 15);
        assert!(s.heldout.is_empty());
    }

    #[test]
    fn infeasible_coverage_is_an_error() {
        let gt = ground_truth(10, 2.0, 2);
        // round(0.05 * 45) = 2 pairs for 10 nodes
        assert!(matches!(sample_random(&gt, 0.05, &mut rng(0)), Err(Error::Coverage(_))));
        assert!(sample_random(&gt, 0.0, &mut rng(0)).is_err());
        assert!(sample_random(&gt, 1.0, &mut rng(0)).is_err());
    }

    #[test]
    fn monitor_formula() {
        assert_eq!(5 * 2 - 2 * 3 / 2, 7);
        assert_eq!(min_monitor_count(5, 7), Some(2));
        assert_eq!(min_monitor_count(5, 3), Some(1));
        // one monitor cannot cover 4 other nodes with 3 pairs
        assert_eq!(monitor_count(5, 3), Some(2));
        assert_eq!(monitor_count(100, 990), Some(11));
    }

    #[test]
    fn monitor_five_nodes() {
        let gt = ground_truth(5, 2.0, 3);
        for seed in 0..50 {
            let s = sample_monitor_based(&gt, 0.3, &mut rng(seed)).unwrap();
            assert_eq!(s.measured.len(), 3);
            assert_eq!(s.monitors.len(), 2);
            assert!(covered(&s));
            for (p, _) in &s.measured {
                assert!(s.monitors.iter().any(|&m| p.contains(m)));
            }
        }
    }

    #[test]
    fn monitor_larger_network() {
        let gt = ground_truth(60, 4.0, 5);
        let s = sample_monitor_based(&gt, 0.2, &mut rng(4)).unwrap();
        assert_eq!(s.measured.len(), (0.2f64 * 1770.0).round() as usize);
        assert_eq!(s.monitors.len(), monitor_count(60, 354).unwrap());
        assert!(covered(&s));
        assert!(s
            .measured
            .iter()
            .all(|(p, _)| s.monitors.contains(&p.lo()) || s.monitors.contains(&p.hi())));
    }

    #[test]
    fn csv_round_trip() {
        let gt = ground_truth(12, 3.0, 5);
        let s = sample_random(&gt, 0.3, &mut rng(2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        s.save(dir.path()).unwrap();
        let back = MeasurementSet::load(dir.path(), SamplingMethod::Random).unwrap();
        assert_eq!(back.measured, s.measured);
        assert_eq!(back.heldout, s.heldout);
    }
}
