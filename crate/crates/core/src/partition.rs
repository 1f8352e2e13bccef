//! Finite partitions `{A_1, …, A_K}` of a mark space.
//!
//! Every constructor enforces that the cells are finite in number, pairwise
//! disjoint, cover the space and each carry positive measure. Continuous cells
//! are half-open `[a, b)` except the last, which is closed at the upper end of
//! the space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::EventStream;
use crate::space::MarkSpace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Cell {
    Interval { lower: f64, upper: f64, closed: bool },
    Labels { labels: Vec<i64> },
}

impl Cell {
    pub fn contains(&self, mark: f64) -> bool {
        match self {
            Cell::Interval {
                lower,
                upper,
                closed,
            } => mark >= *lower && (mark < *upper || (*closed && mark == *upper)),
            Cell::Labels { labels } => {
                mark.fract() == 0.0 && labels.binary_search(&(mark as i64)).is_ok()
            }
        }
    }

    pub fn measure(&self) -> f64 {
        match self {
            Cell::Interval { lower, upper, .. } => upper - lower,
            Cell::Labels { labels } => labels.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PartitionRepr", into = "PartitionRepr")]
pub struct MarkPartition {
    space: MarkSpace,
    cells: Vec<Cell>,
    measures: Vec<f64>,
    /// Continuous: the K+1 cell boundaries. Discrete: unused.
    breaks: Vec<f64>,
    /// Discrete: cell index of each label of the space, in label order.
    label_cells: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct PartitionRepr {
    space: MarkSpace,
    cells: Vec<Cell>,
}

impl From<MarkPartition> for PartitionRepr {
    fn from(p: MarkPartition) -> Self {
        PartitionRepr {
            space: p.space,
            cells: p.cells,
        }
    }
}

impl TryFrom<PartitionRepr> for MarkPartition {
    type Error = Error;

    fn try_from(repr: PartitionRepr) -> Result<Self> {
        repr.space.validate()?;
        match &repr.space {
            MarkSpace::Continuous { lower, .. } => {
                let mut breaks = vec![*lower];
                for cell in &repr.cells {
                    match cell {
                        Cell::Interval { lower, upper, .. } => {
                            if *lower != *breaks.last().unwrap() {
                                return Err(Error::invalid("interval cells must be contiguous"));
                            }
                            breaks.push(*upper);
                        }
                        Cell::Labels { .. } => {
                            return Err(Error::invalid(
                                "label cells are not valid on a continuous space",
                            ))
                        }
                    }
                }
                Self::from_breaks(&repr.space, breaks)
            }
            MarkSpace::Discrete { .. } => {
                let groups = repr
                    .cells
                    .into_iter()
                    .map(|c| match c {
                        Cell::Labels { labels } => Ok(labels),
                        Cell::Interval { .. } => Err(Error::invalid(
                            "interval cells are not valid on a discrete space",
                        )),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Self::from_label_groups(&repr.space, groups)
            }
        }
    }
}

/// Smallest `K` with `K³ ≥ n`, i.e. `⌈n^{1/3}⌉` computed without rounding error.
///
/// Histogram bins of width `O(n^{-1/3})` minimise the MISE of the mark density
/// estimate, so this is the default number of cells for `n` observed marks.
pub fn select_bin_count(n_events: u64) -> u64 {
    let n = n_events.max(1);
    let mut k = (n as f64).cbrt().floor() as u64;
    while k.saturating_pow(3) >= n && k > 0 {
        k -= 1;
    }
    while k.saturating_pow(3) < n {
        k += 1;
    }
    k
}

impl MarkPartition {
    /// `K` equal-measure cells. On a discrete space with `K` equal to the label
    /// count the cells are singletons; a smaller `K` groups consecutive labels
    /// into blocks whose sizes differ by at most one.
    pub fn uniform(space: &MarkSpace, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("partition needs at least one cell"));
        }
        match space {
            MarkSpace::Continuous { lower, upper } => {
                let width = upper - lower;
                let breaks = (0..=k)
                    .map(|i| {
                        if i == k {
                            *upper
                        } else {
                            lower + width * i as f64 / k as f64
                        }
                    })
                    .collect();
                Self::from_breaks(space, breaks)
            }
            MarkSpace::Discrete { labels } => {
                if k > labels.len() {
                    return Err(Error::invalid(format!(
                        "cannot split {} labels into {k} non-empty cells",
                        labels.len()
                    )));
                }
                let n = labels.len();
                let groups = (0..k)
                    .map(|i| labels[i * n / k..(i + 1) * n / k].to_vec())
                    .collect();
                Self::from_label_groups(space, groups)
            }
        }
    }

    /// Intervals between consecutive `breaks`, which must start at the lower
    /// and end at the upper bound of the space.
    pub fn from_breaks(space: &MarkSpace, breaks: Vec<f64>) -> Result<Self> {
        let MarkSpace::Continuous { lower, upper } = space else {
            return Err(Error::invalid("break points need a continuous mark space"));
        };
        if breaks.len() < 2 {
            return Err(Error::invalid("need at least two break points"));
        }
        if breaks[0] != *lower || *breaks.last().unwrap() != *upper {
            return Err(Error::invalid("break points must span the whole mark space"));
        }
        if breaks.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
            return Err(Error::invalid(
                "break points must be strictly increasing (every cell needs positive measure)",
            ));
        }
        let k = breaks.len() - 1;
        let cells: Vec<Cell> = breaks
            .windows(2)
            .enumerate()
            .map(|(i, w)| Cell::Interval {
                lower: w[0],
                upper: w[1],
                closed: i + 1 == k,
            })
            .collect();
        let measures = cells.iter().map(Cell::measure).collect();
        Ok(MarkPartition {
            space: space.clone(),
            cells,
            measures,
            breaks,
            label_cells: Vec::new(),
        })
    }

    /// Explicit grouping of the labels of a discrete space.
    pub fn from_label_groups(space: &MarkSpace, groups: Vec<Vec<i64>>) -> Result<Self> {
        let MarkSpace::Discrete { labels } = space else {
            return Err(Error::invalid("label groups need a discrete mark space"));
        };
        let mut groups: Vec<Vec<i64>> = groups
            .into_iter()
            .map(|mut g| {
                g.sort_unstable();
                g
            })
            .collect();
        if groups.iter().any(Vec::is_empty) {
            return Err(Error::invalid("every cell must contain at least one label"));
        }
        groups.sort_by_key(|g| g[0]);
        let mut label_cells = vec![usize::MAX; labels.len()];
        for (ci, g) in groups.iter().enumerate() {
            for label in g {
                let idx = labels
                    .binary_search(label)
                    .map_err(|_| Error::invalid(format!("label {label} is not in the space")))?;
                if label_cells[idx] != usize::MAX {
                    return Err(Error::invalid(format!("label {label} appears in two cells")));
                }
                label_cells[idx] = ci;
            }
        }
        if let Some(idx) = label_cells.iter().position(|&c| c == usize::MAX) {
            return Err(Error::invalid(format!(
                "label {} is not covered by any cell",
                labels[idx]
            )));
        }
        let cells: Vec<Cell> = groups
            .into_iter()
            .map(|labels| Cell::Labels { labels })
            .collect();
        let measures = cells.iter().map(Cell::measure).collect();
        Ok(MarkPartition {
            space: space.clone(),
            cells,
            measures,
            breaks: Vec::new(),
            label_cells,
        })
    }

    pub fn space(&self) -> &MarkSpace {
        &self.space
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// μ(A_i) for each cell.
    pub fn measures(&self) -> &[f64] {
        &self.measures
    }

    /// Zero-based index of the unique cell holding `mark`.
    pub fn locate(&self, mark: f64) -> Result<usize> {
        self.space.check(mark)?;
        match &self.space {
            MarkSpace::Continuous { .. } => {
                let k = self.cells.len();
                let pos = self.breaks.partition_point(|&b| b <= mark);
                Ok(pos.saturating_sub(1).min(k - 1))
            }
            MarkSpace::Discrete { labels } => {
                let idx = labels
                    .binary_search(&(mark as i64))
                    .map_err(|_| Error::MarkOutOfSpace(mark))?;
                Ok(self.label_cells[idx])
            }
        }
    }

    /// Cell index of every event in the stream.
    pub fn classify(&self, stream: &EventStream) -> Result<Vec<usize>> {
        stream.events().iter().map(|e| self.locate(e.mark)).collect()
    }

    /// Number of events falling in each cell.
    pub fn counts(&self, stream: &EventStream) -> Result<Vec<usize>> {
        let mut counts = vec![0; self.len()];
        for c in self.classify(stream)? {
            counts[c] += 1;
        }
        Ok(counts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_unit_interval_two_cells() {
        let p = MarkPartition::uniform(&MarkSpace::unit_interval(), 2).unwrap();
        assert_eq!(p.measures(), &[0.5, 0.5]);
        assert_eq!(
            p.cells()[0],
            Cell::Interval {
                lower: 0.0,
                upper: 0.5,
                closed: false
            }
        );
        assert_eq!(
            p.cells()[1],
            Cell::Interval {
                lower: 0.5,
                upper: 1.0,
                closed: true
            }
        );
    }

    #[test]
    fn uniform_single_cell_is_whole_space() {
        let p = MarkPartition::uniform(&MarkSpace::unit_interval(), 1).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.measures(), &[1.0]);
        assert_eq!(p.locate(1.0).unwrap(), 0);
    }

    #[test]
    fn six_labels_give_singletons() {
        let space = MarkSpace::label_range(6).unwrap();
        let p = MarkPartition::uniform(&space, 6).unwrap();
        assert_eq!(p.measures(), &[1.0; 6]);
        for (i, c) in p.cells().iter().enumerate() {
            assert_eq!(
                *c,
                Cell::Labels {
                    labels: vec![i as i64 + 1]
                }
            );
        }
        assert_eq!(p.locate(4.0).unwrap(), 3);
    }

    #[test]
    fn uniform_errors() {
        let space = MarkSpace::label_range(3).unwrap();
        assert!(MarkPartition::uniform(&space, 4).is_err());
        assert!(MarkPartition::uniform(&space, 0).is_err());
        assert!(MarkPartition::uniform(&MarkSpace::unit_interval(), 0).is_err());
    }

    #[test]
    fn coarse_label_grouping() {
        let space = MarkSpace::label_range(5).unwrap();
        let p = MarkPartition::uniform(&space, 2).unwrap();
        assert_eq!(p.measures(), &[2.0, 3.0]);
        assert_eq!(p.locate(2.0).unwrap(), 0);
        assert_eq!(p.locate(3.0).unwrap(), 1);
    }

    #[test]
    fn half_open_boundaries() {
        let p = MarkPartition::uniform(&MarkSpace::unit_interval(), 2).unwrap();
        assert_eq!(p.locate(0.25).unwrap(), 0);
        assert_eq!(p.locate(0.5).unwrap(), 1);
        assert_eq!(p.locate(0.0).unwrap(), 0);
        assert!(matches!(p.locate(1.5), Err(Error::MarkOutOfSpace(_))));
    }

    #[test]
    fn label_groups_validation() {
        let space = MarkSpace::label_range(4).unwrap();
        assert!(MarkPartition::from_label_groups(&space, vec![vec![1, 2], vec![2, 3, 4]]).is_err());
        assert!(MarkPartition::from_label_groups(&space, vec![vec![1, 2], vec![3]]).is_err());
        assert!(MarkPartition::from_label_groups(&space, vec![vec![1, 9], vec![2, 3, 4]]).is_err());
        let p = MarkPartition::from_label_groups(&space, vec![vec![4, 2], vec![3, 1]]).unwrap();
        // sorted by smallest label
        assert_eq!(p.cells()[0], Cell::Labels { labels: vec![1, 3] });
        assert_eq!(p.locate(4.0).unwrap(), 1);
    }

    #[test]
    fn breaks_validation() {
        let s = MarkSpace::unit_interval();
        assert!(MarkPartition::from_breaks(&s, vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(MarkPartition::from_breaks(&s, vec![0.0, 0.5]).is_err());
        assert!(MarkPartition::from_breaks(&s, vec![0.1, 1.0]).is_err());
    }

    #[test]
    fn bin_count() {
        assert_eq!(select_bin_count(1000), 10);
        assert_eq!(select_bin_count(1), 1);
        assert_eq!(select_bin_count(100), 5);
        assert_eq!(select_bin_count(1001), 11);
        assert_eq!(select_bin_count(999), 10);
        assert_eq!(select_bin_count(8), 2);
        assert_eq!(select_bin_count(9), 3);
    }

    #[test]
    fn serde_roundtrip_rebuilds_lookup() {
        let p = MarkPartition::from_breaks(&MarkSpace::unit_interval(), vec![0.0, 0.2, 1.0]).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        let q: MarkPartition = serde_json::from_str(&json).unwrap();
        assert_eq!(p, q);
        let bad = r#"{"space":{"kind":"continuous","lower":0.0,"upper":1.0},
            "cells":[{"kind":"interval","lower":0.0,"upper":0.4,"closed":false},
                     {"kind":"interval","lower":0.5,"upper":1.0,"closed":true}]}"#;
        assert!(serde_json::from_str::<MarkPartition>(bad).is_err());
    }

    proptest! {
        #[test]
        fn continuous_partition_invariants(
            lower in -10.0f64..10.0,
            width in 0.01f64..20.0,
            k in 1usize..64,
            u in 0.0f64..=1.0,
        ) {
            let space = MarkSpace::interval(lower, lower + width).unwrap();
            let p = MarkPartition::uniform(&space, k).unwrap();
            let total: f64 = p.measures().iter().sum();
            prop_assert!((total - space.measure()).abs() <= 1e-12 * space.measure().max(1.0));
            prop_assert!(p.measures().iter().all(|&m| m > 0.0));
            let mark = (lower + u * width).min(lower + width);
            let i = p.locate(mark).unwrap();
            prop_assert!(p.cells()[i].contains(mark));
            // exactly one cell holds the mark
            prop_assert_eq!(p.cells().iter().filter(|c| c.contains(mark)).count(), 1);
        }

        #[test]
        fn discrete_partition_invariants(n in 1usize..40, k_frac in 0.0f64..1.0, label in 0usize..40) {
            let k = 1 + ((n - 1) as f64 * k_frac) as usize;
            let space = MarkSpace::label_range(n).unwrap();
            let p = MarkPartition::uniform(&space, k).unwrap();
            prop_assert_eq!(p.len(), k);
            prop_assert_eq!(p.measures().iter().sum::<f64>(), n as f64);
            let mark = (label % n + 1) as f64;
            let i = p.locate(mark).unwrap();
            prop_assert!(p.cells()[i].contains(mark));
            prop_assert_eq!(p.cells().iter().filter(|c| c.contains(mark)).count(), 1);
        }
    }
}
