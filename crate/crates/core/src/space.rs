//! Mark spaces: a compact real interval with Lebesgue measure, or a finite
//! set of integer labels with counting measure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarkSpace {
    /// `[lower, upper]` with Lebesgue measure.
    Continuous { lower: f64, upper: f64 },
    /// Finite label set with counting measure. Labels are kept sorted.
    Discrete { labels: Vec<i64> },
}

impl MarkSpace {
    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
            return Err(Error::invalid(format!(
                "continuous mark space needs finite lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(MarkSpace::Continuous { lower, upper })
    }

    pub fn unit_interval() -> Self {
        MarkSpace::Continuous {
            lower: 0.0,
            upper: 1.0,
        }
    }

    pub fn labels(labels: impl IntoIterator<Item = i64>) -> Result<Self> {
        let mut labels: Vec<i64> = labels.into_iter().collect();
        if labels.is_empty() {
            return Err(Error::invalid("discrete mark space needs at least one label"));
        }
        let n = labels.len();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() != n {
            return Err(Error::invalid("discrete mark space labels must be distinct"));
        }
        Ok(MarkSpace::Discrete { labels })
    }

    /// Labels `1..=k`.
    pub fn label_range(k: usize) -> Result<Self> {
        Self::labels(1..=k as i64)
    }

    /// Re-checks the invariants; useful after deserialization.
    pub fn validate(&self) -> Result<()> {
        match self {
            MarkSpace::Continuous { lower, upper } => Self::interval(*lower, *upper).map(|_| ()),
            MarkSpace::Discrete { labels } => {
                if labels.is_empty() {
                    return Err(Error::invalid("discrete mark space needs at least one label"));
                }
                if labels.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::invalid(
                        "discrete mark space labels must be distinct and sorted",
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, MarkSpace::Discrete { .. })
    }

    /// μ(M).
    pub fn measure(&self) -> f64 {
        match self {
            MarkSpace::Continuous { lower, upper } => upper - lower,
            MarkSpace::Discrete { labels } => labels.len() as f64,
        }
    }

    pub fn contains(&self, mark: f64) -> bool {
        match self {
            MarkSpace::Continuous { lower, upper } => mark >= *lower && mark <= *upper,
            MarkSpace::Discrete { labels } => {
                mark.fract() == 0.0 && labels.binary_search(&(mark as i64)).is_ok()
            }
        }
    }

    pub(crate) fn check(&self, mark: f64) -> Result<()> {
        if mark.is_finite() && self.contains(mark) {
            Ok(())
        } else {
            Err(Error::MarkOutOfSpace(mark))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_rejects_empty_or_reversed() {
        assert!(MarkSpace::interval(1.0, 1.0).is_err());
        assert!(MarkSpace::interval(2.0, 1.0).is_err());
        assert!(MarkSpace::interval(0.0, f64::INFINITY).is_err());
        assert_eq!(MarkSpace::interval(-1.0, 3.0).unwrap().measure(), 4.0);
    }

    #[test]
    fn labels_reject_duplicates_and_empty() {
        assert!(MarkSpace::labels([1, 2, 2]).is_err());
        assert!(MarkSpace::labels(Vec::<i64>::new()).is_err());
        let s = MarkSpace::labels([3, 1, 2]).unwrap();
        assert_eq!(s, MarkSpace::Discrete { labels: vec![1, 2, 3] });
        assert_eq!(s.measure(), 3.0);
    }

    #[test]
    fn membership() {
        let c = MarkSpace::unit_interval();
        assert!(c.contains(0.0) && c.contains(1.0) && !c.contains(1.0 + 1e-12));
        let d = MarkSpace::label_range(6).unwrap();
        assert!(d.contains(4.0));
        assert!(!d.contains(4.5));
        assert!(!d.contains(0.0));
        assert!(d.check(f64::NAN).is_err());
    }
}
