use crate::error::{Error, Result};

/// Running estimate of a posterior expectation against the cumulative
/// cubic-operation count.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceTrace {
    points: Vec<(u64, f64)>,
    /// Counter value at the end of tuning; 0 when there is no tuning phase.
    pub eot: u64,
}

impl ConvergenceTrace {
    pub fn new(eot: u64) -> Self {
        ConvergenceTrace {
            points: Vec::new(),
            eot,
        }
    }

    /// Appends an observation. An observation at the same op count as the
    /// previous one replaces it, so op counts stay strictly increasing.
    pub fn push(&mut self, ops: u64, estimate: f64) -> Result<()> {
        match self.points.last_mut() {
            Some(last) if last.0 == ops => last.1 = estimate,
            Some(last) if last.0 > ops => {
                return Err(Error::InvalidArgument(format!(
                    "trace op count went backwards ({} after {})",
                    ops, last.0
                )))
            }
            _ => self.points.push((ops, estimate)),
        }
        Ok(())
    }

    pub fn points(&self) -> &[(u64, f64)] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first_ops(&self) -> Option<u64> {
        self.points.first().map(|p| p.0)
    }

    pub fn last(&self) -> Option<(u64, f64)> {
        self.points.last().copied()
    }

    /// Last observation at or before `ops`.
    pub fn value_at(&self, ops: u64) -> Option<f64> {
        let idx = self.points.partition_point(|p| p.0 <= ops);
        (idx > 0).then(|| self.points[idx - 1].1)
    }
}

/// Incremental mean, used for MCMC running estimates.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunningMean {
    sum: f64,
    count: u64,
}

impl RunningMean {
    pub fn push(&mut self, x: f64) -> f64 {
        self.sum += x;
        self.count += 1;
        self.mean()
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    pub fn count(&self) -> u64 {
        self.count
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IqrPoint {
    pub ops: u64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IqrCurve {
    pub points: Vec<IqrPoint>,
}

impl IqrCurve {
    pub fn last(&self) -> Option<IqrPoint> {
        self.points.last().copied()
    }

    /// Point at the largest grid op count not exceeding `ops`.
    pub fn at(&self, ops: u64) -> Option<IqrPoint> {
        let idx = self.points.partition_point(|p| p.ops <= ops);
        (idx > 0).then(|| self.points[idx - 1])
    }
}

/// Linear-interpolation quantile of sorted data (`h = (n-1)p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quartiles across traces at each grid point, carrying each trace's last
/// observation forward.
pub fn iqr_aggregate(traces: &[ConvergenceTrace], grid: &[u64]) -> Result<IqrCurve> {
    if traces.is_empty() {
        return Err(Error::InvalidArgument("no traces to aggregate".into()));
    }
    let mut points = Vec::with_capacity(grid.len());
    let mut values = Vec::with_capacity(traces.len());
    for &g in grid {
        values.clear();
        for t in traces {
            values.push(t.value_at(g).ok_or(Error::GridBeforeFirstObservation(g))?);
        }
        values.sort_by(f64::total_cmp);
        points.push(IqrPoint {
            ops: g,
            q1: quantile_sorted(&values, 0.25),
            median: quantile_sorted(&values, 0.5),
            q3: quantile_sorted(&values, 0.75),
        });
    }
    Ok(IqrCurve { points })
}

/// Up to `points` logarithmically spaced integer op counts from `start` to
/// `end` inclusive, deduplicated after rounding.
pub fn log_grid(start: u64, end: u64, points: usize) -> Vec<u64> {
    let start = start.max(1);
    if end <= start || points < 2 {
        return vec![end.max(start)];
    }
    let (a, b) = ((start as f64).ln(), (end as f64).ln());
    let mut grid: Vec<u64> = (0..points)
        .map(|i| {
            let x = a + (b - a) * i as f64 / (points - 1) as f64;
            (x.exp().round() as u64).clamp(start, end)
        })
        .collect();
    grid[0] = start;
    *grid.last_mut().unwrap() = end;
    grid.dedup();
    grid
}

/// Grid for a set of traces: from the latest first observation (never
/// before the latest EOT) to `budget`.
pub fn trace_grid(traces: &[ConvergenceTrace], budget: u64, points: usize) -> Result<Vec<u64>> {
    let start = traces
        .iter()
        .map(|t| {
            t.first_ops()
                .map(|f| f.max(t.eot))
                .ok_or_else(|| Error::InvalidArgument("empty trace".into()))
        })
        .collect::<Result<Vec<u64>>>()?
        .into_iter()
        .max()
        .ok_or_else(|| Error::InvalidArgument("no traces".into()))?;
    Ok(log_grid(start, budget.max(start), points))
}

/// First grid op count from which the quartile band stays within
/// `±rel_tol·|final median|` of the final median up to the end of the curve.
pub fn stabilization_point(curve: &IqrCurve, rel_tol: f64) -> Option<u64> {
    let m = curve.last()?.median;
    let band = rel_tol * m.abs();
    let inside = |p: &IqrPoint| (p.q1 - m).abs() <= band && (p.q3 - m).abs() <= band;
    let outside_from_end = curve.points.iter().rev().take_while(|p| inside(p)).count();
    (outside_from_end > 0).then(|| curve.points[curve.points.len() - outside_from_end].ops)
}
