//! Per-iteration solver records, run control (time budget, target RMSE) and
//! CSV export.

use std::io::{self, Write};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::operators::Vector;

/// Map from an iterate to a scalar such as an objective value.
pub type ScalarFn = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
/// Map from an iterate to the estimate that is reported (e.g. a projection).
pub type VectorFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;

/// One sampled iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub time_s: f64,
    pub residual: f64,
    pub objective: Option<f64>,
    pub rmse: Option<f64>,
    pub active_set_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIterations,
    TimeBudget,
    TargetRmse,
}

/// Which iterations are written to the trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampling {
    Every,
    /// Roughly `per_decade` records per decade of iteration count.
    LogSpaced { per_decade: usize },
}

impl Sampling {
    fn keeps(&self, k: usize) -> bool {
        match *self {
            Sampling::Every => true,
            Sampling::LogSpaced { per_decade } => {
                let per_decade = per_decade.max(1);
                if k < 2 * per_decade {
                    return true;
                }
                let stride = 10f64.powf(((k as f64).log10() - (per_decade as f64).log10()).floor());
                k % (stride as usize).max(1) == 0
            }
        }
    }
}

/// Recording and stopping options shared by every solver.
#[derive(Clone)]
pub struct TraceOptions {
    pub record: bool,
    pub record_iterates: bool,
    pub sampling: Sampling,
    /// Reference point for the RMSE column.
    pub reference: Option<Vector>,
    pub objective: Option<ScalarFn>,
    /// Applied to the iterate before objective/RMSE evaluation and on return.
    pub estimate: Option<VectorFn>,
    pub time_budget: Option<Duration>,
    /// Stop as soon as the RMSE against `reference` reaches this value.
    pub target_rmse: Option<f64>,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            record: true,
            record_iterates: false,
            sampling: Sampling::Every,
            reference: None,
            objective: None,
            estimate: None,
            time_budget: None,
            target_rmse: None,
        }
    }
}

impl std::fmt::Debug for TraceOptions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TraceOptions")
            .field("record", &self.record)
            .field("record_iterates", &self.record_iterates)
            .field("sampling", &self.sampling)
            .field("has_reference", &self.reference.is_some())
            .field("time_budget", &self.time_budget)
            .field("target_rmse", &self.target_rmse)
            .finish_non_exhaustive()
    }
}

/// The history of one solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    pub records: Vec<TraceRecord>,
    /// Iterates `x^0, x^1, …` when `record_iterates` is set.
    pub iterates: Vec<Vector>,
    pub warnings: Vec<String>,
    /// Number of completed updates.
    pub iterations: usize,
    pub stop_reason: StopReason,
    /// Wall-clock seconds, excluding paused diagnostics.
    pub elapsed_s: f64,
}

impl SolverTrace {
    pub fn converged(&self) -> bool {
        self.stop_reason == StopReason::Converged
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Time of the first record whose RMSE is at most `level`.
    pub fn time_to_rmse(&self, level: f64) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.rmse.is_some_and(|e| e <= level))
            .map(|r| r.time_s)
    }

    /// `k,time_s,residual,objective`
    pub fn write_fixed_point_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "k,time_s,residual,objective")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{:.9},{:e},{}",
                r.k,
                r.time_s,
                r.residual,
                opt(r.objective)
            )?;
        }
        Ok(())
    }

    /// `k,time_s,residual,primal_objective,rmse_vs_reference`
    pub fn write_primal_dual_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "k,time_s,residual,primal_objective,rmse_vs_reference")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{:.9},{:e},{},{}",
                r.k,
                r.time_s,
                r.residual,
                opt(r.objective),
                opt(r.rmse)
            )?;
        }
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// Drives a [`SolverTrace`] from inside a solver loop.
pub struct Recorder {
    opts: TraceOptions,
    start: Instant,
    paused: Duration,
    pause_started: Option<Instant>,
    last_observed: Option<usize>,
    trace: SolverTrace,
}

impl Recorder {
    pub fn new(opts: TraceOptions) -> Self {
        Self {
            opts,
            start: Instant::now(),
            paused: Duration::ZERO,
            pause_started: None,
            last_observed: None,
            trace: SolverTrace {
                records: Vec::new(),
                iterates: Vec::new(),
                warnings: Vec::new(),
                iterations: 0,
                stop_reason: StopReason::MaxIterations,
                elapsed_s: 0.0,
            },
        }
    }

    pub fn elapsed(&self) -> Duration {
        let now = self.pause_started.unwrap_or_else(Instant::now);
        now.duration_since(self.start).saturating_sub(self.paused)
    }

    /// Stops the clock, e.g. while logging diagnostics.
    pub fn pause(&mut self) {
        if self.pause_started.is_none() {
            self.pause_started = Some(Instant::now());
        }
    }

    pub fn resume(&mut self) {
        if let Some(t) = self.pause_started.take() {
            self.paused += t.elapsed();
        }
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.trace.warnings.push(msg);
    }

    pub fn estimate(&self, x: &Vector) -> Vector {
        match &self.opts.estimate {
            Some(f) => f(x),
            None => x.clone(),
        }
    }

    /// Records iterate `x^k` and returns a stop reason when the time budget
    /// or target RMSE is reached. The clock is stopped while the row is
    /// evaluated.
    pub fn observe(
        &mut self,
        k: usize,
        x: &Vector,
        residual: f64,
        active_set_size: Option<usize>,
    ) -> Option<StopReason> {
        let time_s = self.elapsed().as_secs_f64();
        let was_paused = self.pause_started.is_some();
        self.pause();
        let stop = self.observe_paused(k, x, residual, active_set_size, time_s);
        if !was_paused {
            self.resume();
        }
        if stop.is_some() {
            return stop;
        }
        match self.opts.time_budget {
            Some(b) if self.elapsed() >= b => Some(StopReason::TimeBudget),
            _ => None,
        }
    }

    fn observe_paused(
        &mut self,
        k: usize,
        x: &Vector,
        residual: f64,
        active_set_size: Option<usize>,
        time_s: f64,
    ) -> Option<StopReason> {
        self.last_observed = Some(k);
        if self.opts.record_iterates {
            self.trace.iterates.push(x.clone());
        }
        let wants_row = self.opts.record && self.opts.sampling.keeps(k);
        let needs_rmse = self.opts.target_rmse.is_some() || wants_row;
        let mut rmse = None;
        let mut est = None;
        if needs_rmse {
            if let Some(r) = &self.opts.reference {
                let e = self.estimate(x);
                rmse = Some((&e - r).norm() / (r.len() as f64).sqrt());
                est = Some(e);
            }
        }
        let reached = matches!((self.opts.target_rmse, rmse), (Some(t), Some(e)) if e <= t);
        if wants_row || reached {
            let objective = self.opts.objective.as_ref().map(|f| match &est {
                Some(e) => f(e),
                None => f(&self.estimate(x)),
            });
            self.trace.records.push(TraceRecord {
                k,
                time_s,
                residual,
                objective,
                rmse,
                active_set_size,
            });
        }
        reached.then_some(StopReason::TargetRmse)
    }

    /// Makes sure the final iterate is on record, then returns the trace.
    pub fn finish(
        mut self,
        k: usize,
        x: &Vector,
        residual: f64,
        active_set_size: Option<usize>,
        reason: StopReason,
    ) -> SolverTrace {
        let elapsed = self.elapsed();
        if self.last_observed != Some(k) {
            self.opts.target_rmse = None;
            self.opts.time_budget = None;
            self.opts.sampling = Sampling::Every;
            self.observe(k, x, residual, active_set_size);
        } else if self.opts.record && self.trace.records.last().map(|r| r.k) != Some(k) {
            // observed but thinned out by the sampling rule
            self.opts.target_rmse = None;
            self.opts.sampling = Sampling::Every;
            self.opts.record_iterates = false;
            self.observe(k, x, residual, active_set_size);
        }
        self.trace.iterations = k;
        self.trace.stop_reason = reason;
        self.trace.elapsed_s = elapsed.as_secs_f64();
        self.trace
    }
}

/// Flags runs whose residual stays 10× above its first value for 100
/// consecutive iterations.
#[derive(Debug, Clone, Default)]
pub struct DivergenceGuard {
    initial: Option<f64>,
    streak: usize,
}

impl DivergenceGuard {
    pub const FACTOR: f64 = 10.0;
    pub const PATIENCE: usize = 100;

    /// Returns `true` when the run should be declared divergent.
    pub fn update(&mut self, residual: f64) -> bool {
        if !residual.is_finite() {
            return true;
        }
        let init = *self.initial.get_or_insert(residual);
        if residual > Self::FACTOR * init {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        self.streak >= Self::PATIENCE
    }
}
