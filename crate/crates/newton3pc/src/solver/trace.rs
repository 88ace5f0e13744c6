//! Per-iteration run records shared by every solver.

use crate::linalg::Vector;

/// The comparison point all gap metrics are computed against, produced by a
/// damped exact Newton run on the same problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub x_star: Vector,
    pub f_star: f64,
}

impl Reference {
    pub fn new(x_star: Vector, f_star: f64) -> Self {
        Self { x_star, f_star }
    }
}

/// One recorded iteration. The byte and computation columns are cumulative
/// from the start of the run (initialization round included).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: u64,
    pub f_gap: f64,
    pub dist_sq: f64,
    pub bytes_up_cum: u64,
    pub bytes_down_cum: u64,
    pub hessians_computed_cum: u64,
    pub grads_computed_cum: u64,
    pub participated: u64,
}

/// The full record of one solver run: one row per iteration (row 0 is the
/// state right after initialization), the iterate at each row, and an error
/// mark when the solver aborted early.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub iterates: Vec<Vector>,
    pub failure: Option<String>,
    /// Largest observed violation of the partial-participation gradient
    /// bookkeeping identity, when the run was asked to track it.
    pub key_relation_residual: Option<f64>,
}

impl RunTrace {
    pub fn push(&mut self, row: TraceRow, x: &Vector) {
        if let Some(last) = self.rows.last() {
            assert!(row.iter > last.iter, "iteration numbers must increase");
            assert!(
                row.bytes_up_cum >= last.bytes_up_cum
                    && row.bytes_down_cum >= last.bytes_down_cum
                    && row.hessians_computed_cum >= last.hessians_computed_cum
                    && row.grads_computed_cum >= last.grads_computed_cum,
                "cumulative columns must be non-decreasing"
            );
        }
        self.rows.push(row);
        self.iterates.push(x.clone());
    }

    pub fn last_row(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn final_gap(&self) -> Option<f64> {
        self.rows.last().map(|r| r.f_gap)
    }

    /// Whether any recorded row reached the given optimality gap.
    pub fn reached(&self, gap: f64) -> bool {
        self.rows.iter().any(|r| r.f_gap <= gap)
    }

    /// Cumulative (uplink, downlink) bytes at the first row whose gap is at
    /// or below `gap`, if any row got there.
    pub fn bytes_to_gap(&self, gap: f64) -> Option<(u64, u64)> {
        self.rows.iter().find(|r| r.f_gap <= gap).map(|r| (r.bytes_up_cum, r.bytes_down_cum))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(iter: u64, f_gap: f64, up: u64) -> TraceRow {
        TraceRow {
            iter,
            f_gap,
            dist_sq: f_gap,
            bytes_up_cum: up,
            bytes_down_cum: up,
            hessians_computed_cum: iter,
            grads_computed_cum: iter,
            participated: 4,
        }
    }

    #[test]
    fn bytes_to_gap_finds_first_crossing() {
        let mut t = RunTrace::default();
        let x = Vector::zeros(2);
        t.push(row(0, 1.0, 10), &x);
        t.push(row(1, 1e-5, 20), &x);
        t.push(row(2, 1e-9, 30), &x);
        assert_eq!(t.bytes_to_gap(1e-4), Some((20, 20)));
        assert_eq!(t.bytes_to_gap(1e-9), Some((30, 30)));
        assert_eq!(t.bytes_to_gap(1e-12), None);
        assert!(t.reached(1e-8));
        assert!(!t.reached(1e-10));
        assert_eq!(t.final_gap(), Some(1e-9));
    }

    #[test]
    #[should_panic(expected = "non-decreasing")]
    fn decreasing_cumulative_bytes_are_rejected() {
        let mut t = RunTrace::default();
        let x = Vector::zeros(1);
        t.push(row(0, 1.0, 10), &x);
        t.push(row(1, 0.5, 5), &x);
    }

    #[test]
    #[should_panic(expected = "must increase")]
    fn repeated_iteration_numbers_are_rejected() {
        let mut t = RunTrace::default();
        let x = Vector::zeros(1);
        t.push(row(3, 1.0, 10), &x);
        t.push(row(3, 0.5, 20), &x);
    }
}
