//! Small-cell suppression for stratified aggregates.

use serde::{Deserialize, Serialize};

/// A stratified aggregate cell with a member count.
pub trait Stratum {
    fn key(&self) -> String;
    fn count(&self) -> usize;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Cell<T> {
    Retained(T),
    Suppressed { key: String },
}

impl<T> Cell<T> {
    pub fn retained(&self) -> Option<&T> {
        match self {
            Cell::Retained(t) => Some(t),
            Cell::Suppressed { .. } => None,
        }
    }

    pub fn is_suppressed(&self) -> bool {
        matches!(self, Cell::Suppressed { .. })
    }
}

/// Replaces every cell with fewer than `k_min` members by a suppression
/// marker. Cells at exactly `k_min` are kept. Retained cells are passed
/// through untouched.
pub fn suppress_small_cells<T: Stratum + Clone>(cells: &[T], k_min: usize) -> Vec<Cell<T>> {
    cells
        .iter()
        .map(|c| {
            if c.count() < k_min {
                Cell::Suppressed { key: c.key() }
            } else {
                Cell::Retained(c.clone())
            }
        })
        .collect()
}

/// A count-only cross-tabulation cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountCell {
    pub keys: Vec<String>,
    pub count: usize,
}

impl Stratum for CountCell {
    fn key(&self) -> String {
        self.keys.join("/")
    }

    fn count(&self) -> usize {
        self.count
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cell(name: &str, count: usize) -> CountCell {
        CountCell {
            keys: vec![name.to_string()],
            count,
        }
    }

    #[test]
    fn boundary_examples() {
        let cells = [cell("a", 4), cell("b", 5)];
        let out = suppress_small_cells(&cells, 5);
        assert_eq!(out[0], Cell::Suppressed { key: "a".into() });
        assert_eq!(out[1], Cell::Retained(cell("b", 5)));
    }

    #[test]
    fn k_min_one_is_identity() {
        let cells = [cell("a", 1), cell("b", 9)];
        let out = suppress_small_cells(&cells, 1);
        let kept: Vec<_> = out.iter().filter_map(|c| c.retained().cloned()).collect();
        assert_eq!(kept, cells.to_vec());
    }

    proptest! {
        #[test]
        fn suppression_only_hides(counts in prop::collection::vec(0usize..20, 0..30), k_min in 1usize..10) {
            let cells: Vec<CountCell> = counts.iter().enumerate().map(|(i, &c)| cell(&i.to_string(), c)).collect();
            let out = suppress_small_cells(&cells, k_min);
            prop_assert_eq!(out.len(), cells.len());
            for (orig, c) in cells.iter().zip(&out) {
                match c {
                    Cell::Retained(kept) => {
                        prop_assert!(orig.count >= k_min);
                        prop_assert_eq!(kept, orig);
                    }
                    Cell::Suppressed { key } => {
                        prop_assert!(orig.count < k_min);
                        prop_assert_eq!(key, &orig.key());
                    }
                }
            }
        }
    }
}
