//! Link occupancy: first-fit reservation of bandwidth windows on a directed
//! DC link. Queuing on a busy link falls out of the reservation rule: a
//! message placed behind pending traffic starts only when a large enough gap
//! opens.

use crate::problem::TIME_EPS;

/// Sorted, pairwise disjoint reserved intervals `[start, end)` on one link.
#[derive(Debug, Clone, Default)]
pub struct LinkOccupancy {
    intervals: Vec<(f64, f64)>,
}

impl LinkOccupancy {
    pub fn new() -> Self {
        LinkOccupancy::default()
    }

    /// Reserves the earliest window of length `width` starting at or after
    /// `t_ready` and returns it. Zero-width messages occupy nothing and are
    /// transmitted at `t_ready`.
    pub fn reserve_window(&mut self, t_ready: f64, width: f64) -> (f64, f64) {
        debug_assert!(t_ready >= 0.0 && width >= 0.0);
        if width <= 0.0 {
            return (t_ready, t_ready);
        }
        let mut candidate = t_ready;
        let mut insert_at = self.intervals.len();
        for (i, &(s, e)) in self.intervals.iter().enumerate() {
            if e <= candidate + TIME_EPS {
                continue;
            }
            if s >= candidate + width - TIME_EPS {
                insert_at = i;
                break;
            }
            candidate = candidate.max(e);
        }
        let window = (candidate, candidate + width);
        self.intervals.insert(insert_at, window);
        window
    }

    pub fn windows(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    /// Total reserved time.
    pub fn busy(&self) -> f64 {
        self.intervals.iter().map(|(s, e)| e - s).sum()
    }
}
