//! Partitions, exclusion sets and the index set `[P, S, t]`.

use crate::error::{domain, Result};
use crate::path_model::SamplePath;

/// Realized cut times `0 = τ_0 <= τ_1 <= ...` of a (possibly path-dependent) partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    cut_times: Vec<f64>,
    mesh: f64,
}

impl Partition {
    pub fn new(cut_times: Vec<f64>) -> Result<Self> {
        if cut_times.len() < 2 {
            return domain("a partition needs at least two cut times");
        }
        if cut_times[0] != 0.0 {
            return domain("a partition must start at 0");
        }
        if cut_times.windows(2).any(|w| w[1] < w[0]) {
            return domain("cut times must be nondecreasing");
        }
        let mesh = cut_times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max);
        Ok(Self { cut_times, mesh })
    }

    pub fn cut_times(&self) -> &[f64] {
        &self.cut_times
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    /// Number of cells `(τ_{k-1}, τ_k]`.
    pub fn n_cells(&self) -> usize {
        self.cut_times.len() - 1
    }

    pub fn last(&self) -> f64 {
        *self.cut_times.last().unwrap()
    }

    /// Replaces every cut by the grid time at or below it, so each cut is a
    /// grid time of `path`. The final cut is pinned to the path horizon.
    pub fn snapped(&self, path: &SamplePath) -> Partition {
        let grid = path.times();
        let mut cuts: Vec<f64> = self
            .cut_times
            .iter()
            .map(|&c| grid[path.index_at(c.min(path.horizon()))])
            .collect();
        let n = cuts.len();
        cuts[n - 1] = path.horizon();
        Partition::new(cuts).expect("snapping preserves order")
    }

    /// All cut times are grid times of `path`.
    pub fn is_grid_aligned(&self, path: &SamplePath) -> bool {
        self.cut_times
            .iter()
            .all(|&c| path.times().binary_search_by(|s| s.total_cmp(&c)).is_ok())
    }
}

/// Cut times `j * horizon * 2^-level`, `j = 0..=2^level`.
pub fn dyadic_partition(horizon: f64, level: u32) -> Partition {
    let n = 1usize << level;
    let cuts = (0..=n)
        .map(|j| horizon * j as f64 / n as f64)
        .collect();
    Partition::new(cuts).expect("dyadic cuts are ordered")
}

/// Level-crossing partition: the next cut is the first later grid time at
/// which the path has moved at least `eps` from its value at the current cut.
pub fn hitting_partition(path: &SamplePath, eps: f64) -> Result<Partition> {
    if !(eps > 0.0) {
        return domain(format!("hitting level must be positive, got {eps}"));
    }
    let (times, values) = (path.times(), path.values());
    let mut cuts = vec![0.0];
    let mut anchor = values[0];
    for i in 1..times.len() {
        if (values[i] - anchor).abs() >= eps {
            cuts.push(times[i]);
            anchor = values[i];
        }
    }
    if *cuts.last().unwrap() < path.horizon() {
        cuts.push(path.horizon());
    }
    if cuts.len() == 1 {
        cuts.push(path.horizon());
    }
    Partition::new(cuts)
}

/// Finite sorted set of times removed from partition sums.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExclusionSet {
    times: Vec<f64>,
}

impl ExclusionSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(mut times: Vec<f64>) -> Result<Self> {
        if times.iter().any(|t| !t.is_finite()) {
            return domain("exclusion times must be finite");
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn union(&self, other: &ExclusionSet) -> ExclusionSet {
        let mut times = self.times.clone();
        times.extend_from_slice(&other.times);
        ExclusionSet::new(times).expect("finite inputs")
    }

    /// Jump times of the given paths plus extra declared times (e.g. time
    /// discontinuities of a path function).
    pub fn from_jumps(paths: &[&SamplePath], threshold: f64, extra: &[f64]) -> ExclusionSet {
        let mut times: Vec<f64> = paths
            .iter()
            .flat_map(|p| p.jump_times(threshold))
            .collect();
        times.extend_from_slice(extra);
        ExclusionSet::new(times).expect("finite inputs")
    }

    /// Some `s` in the set with `a < s <= b`.
    pub fn meets(&self, a: f64, b: f64) -> bool {
        let i = self.times.partition_point(|&s| s <= a);
        i < self.times.len() && self.times[i] <= b
    }
}

/// Indices `k >= 1` with `τ_k < t` whose cell `(τ_{k-1}, τ_k]` contains no
/// time of `s`.
pub fn index_set(p: &Partition, s: &ExclusionSet, t: f64) -> Vec<usize> {
    let cuts = p.cut_times();
    let ex = s.times();
    let mut out = Vec::new();
    let mut j = 0;
    for k in 1..cuts.len() {
        if !(cuts[k] < t) {
            break;
        }
        while j < ex.len() && ex[j] <= cuts[k - 1] {
            j += 1;
        }
        let hit = j < ex.len() && ex[j] <= cuts[k];
        if !hit {
            out.push(k);
        }
    }
    out
}

/// Partitions of strictly decreasing mesh.
#[derive(Debug, Clone)]
pub struct RefinementLadder {
    levels: Vec<u32>,
    partitions: Vec<Partition>,
}

impl RefinementLadder {
    pub fn dyadic(horizon: f64, l_min: u32, l_max: u32) -> Result<Self> {
        if l_min > l_max {
            return domain(format!("ladder levels must satisfy l_min <= l_max ({l_min} > {l_max})"));
        }
        if l_max > 30 {
            return domain("ladder level above 30 is not supported");
        }
        let levels: Vec<u32> = (l_min..=l_max).collect();
        let partitions = levels.iter().map(|&l| dyadic_partition(horizon, l)).collect();
        Ok(Self { levels, partitions })
    }

    pub fn from_partitions(levels: Vec<u32>, partitions: Vec<Partition>) -> Result<Self> {
        if levels.len() != partitions.len() || partitions.is_empty() {
            return domain("ladder needs one label per partition");
        }
        if partitions.windows(2).any(|w| !(w[1].mesh() < w[0].mesh())) {
            return domain("ladder meshes must be strictly decreasing");
        }
        Ok(Self { levels, partitions })
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn len(&self) -> usize {
        self.partitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &Partition)> {
        self.levels.iter().copied().zip(self.partitions.iter())
    }

    /// Every level is grid aligned with `path`.
    pub fn is_grid_aligned(&self, path: &SamplePath) -> bool {
        self.partitions.iter().all(|p| p.is_grid_aligned(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dyadic_examples() {
        let p = dyadic_partition(1.0, 0);
        assert_eq!(p.cut_times(), &[0.0, 1.0]);
        assert_eq!(p.mesh(), 1.0);
        let p = dyadic_partition(1.0, 2);
        assert_eq!(p.cut_times(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(p.mesh(), 0.25);
        let p = dyadic_partition(2.0, 1);
        assert_eq!(p.cut_times(), &[0.0, 1.0, 2.0]);
        assert_eq!(p.mesh(), 1.0);
    }

    #[test]
    fn dyadic_meshes_halve() {
        let ladder = RefinementLadder::dyadic(3.0, 0, 12).unwrap();
        for w in ladder.partitions().windows(2) {
            assert_eq!(w[1].mesh() * 2.0, w[0].mesh());
        }
    }

    #[test]
    fn dyadic_cuts_align_with_uniform_grid() {
        let grid = SamplePath::uniform_grid(1.7, 1 << 10);
        let path = SamplePath::constant(grid, 0.0).unwrap();
        let ladder = RefinementLadder::dyadic(1.7, 3, 10).unwrap();
        assert!(ladder.is_grid_aligned(&path));
    }

    #[test]
    fn hitting_partition_examples() {
        let flat = SamplePath::constant(vec![0.0, 0.5, 1.0, 2.0], 1.0).unwrap();
        assert_eq!(hitting_partition(&flat, 0.1).unwrap().cut_times(), &[0.0, 2.0]);

        let stairs = SamplePath::unmarked(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(hitting_partition(&stairs, 1.0).unwrap().cut_times(), &[0.0, 1.0, 2.0]);

        assert!(hitting_partition(&stairs, 0.0).is_err());
    }

    #[test]
    fn index_set_examples() {
        let p = dyadic_partition(1.0, 2);
        assert_eq!(index_set(&p, &ExclusionSet::empty(), 1.0), vec![1, 2, 3]);
        let s = ExclusionSet::new(vec![0.5]).unwrap();
        assert_eq!(index_set(&p, &s, 1.0), vec![1, 3]);
        let all = ExclusionSet::new(vec![0.1, 0.3, 0.6, 0.8]).unwrap();
        assert!(index_set(&p, &all, 1.0).is_empty());
    }

    #[test]
    fn exclusion_at_left_cut_belongs_to_previous_cell() {
        let p = dyadic_partition(1.0, 2);
        let s = ExclusionSet::new(vec![0.25]).unwrap();
        assert_eq!(index_set(&p, &s, 1.0), vec![2, 3]);
    }

    fn arb_partition() -> impl Strategy<Value = Partition> {
        prop::collection::vec(0.0f64..0.3, 1..30).prop_map(|gaps| {
            let mut cuts = vec![0.0];
            for g in gaps {
                cuts.push(cuts.last().unwrap() + g);
            }
            Partition::new(cuts).unwrap()
        })
    }

    proptest! {
        #[test]
        fn index_set_is_antitone(
            p in arb_partition(),
            a in prop::collection::vec(0.0f64..8.0, 0..6),
            b in prop::collection::vec(0.0f64..8.0, 0..6),
            t in 0.0f64..8.0,
        ) {
            let small = ExclusionSet::new(a).unwrap();
            let big = small.union(&ExclusionSet::new(b).unwrap());
            let with_big = index_set(&p, &big, t);
            let with_small = index_set(&p, &small, t);
            prop_assert!(with_big.iter().all(|k| with_small.contains(k)));
        }

        #[test]
        fn excluded_cells_contain_an_exclusion_time(
            p in arb_partition(),
            a in prop::collection::vec(0.0f64..8.0, 0..6),
            t in 0.0f64..8.0,
        ) {
            let s = ExclusionSet::new(a).unwrap();
            let kept = index_set(&p, &s, t);
            let all = index_set(&p, &ExclusionSet::empty(), t);
            let cuts = p.cut_times();
            for k in all.iter().filter(|k| !kept.contains(k)) {
                prop_assert!(s.times().iter().any(|&x| cuts[k - 1] < x && x <= cuts[*k]));
            }
            let expected: Vec<usize> = (1..cuts.len()).filter(|&k| cuts[k] < t).collect();
            prop_assert_eq!(all, expected);
        }
    }
}
