//! Finite-difference gradient oracle.
//!
//! Compares analytic gradients against central differences
//! `(f(theta + h) - f(theta - h)) / 2h`, one parameter entry at a time. The
//! numeric side only ever calls the loss closure, so it stays independent of
//! whatever backward pass produced the analytic side.

use crate::error::{Error, Result};
use crate::par::{self, ExecMode};
use crate::params::ParamSet;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Maximum tolerated relative error.
    pub tolerance: f64,
    pub mode: ExecMode,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-4,
            tolerance: 1e-3,
            mode: ExecMode::default(),
        }
    }
}

/// Worst entry of one parameter group.
#[derive(Clone, Debug)]
pub struct GroupReport {
    pub name: String,
    pub entries: usize,
    pub max_rel_err: f64,
    pub worst_entry: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub groups: Vec<GroupReport>,
    pub max_rel_err: f64,
    pub entries_checked: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

/// Relative error with an absolute floor so near-zero gradients compare
/// sanely: |a - n| / max(|a|, |n|, 1e-8).
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Checks every entry of `params` against central differences.
///
/// `analytic` must compute the scalar loss and accumulate gradients into the
/// parameter set (which arrives with zeroed gradients); `loss` must compute
/// the same scalar without touching gradients.
pub fn grad_check<P, A, L>(
    params: &P,
    analytic: A,
    loss: L,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    P: ParamSet + Clone + Send + Sync,
    A: FnOnce(&mut P) -> Result<f64>,
    L: Fn(&P) -> Result<f64> + Sync,
{
    let mut work = params.clone();
    work.zero_grads();
    let base = analytic(&mut work)?;
    if !base.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    let grads = work.collect_grads();
    let sizes = params.group_sizes();

    // Flat entry index -> (group, element) addressing.
    let mut offsets = Vec::with_capacity(sizes.len());
    let mut total = 0usize;
    for (_, n) in &sizes {
        offsets.push(total);
        total += n;
    }
    let locate = |flat: usize| -> (usize, usize) {
        let group = match offsets.binary_search(&flat) {
            Ok(g) => g,
            Err(g) => g - 1,
        };
        (group, flat - offsets[group])
    };

    let h = opts.step;
    let numeric = par::map_chunked(opts.mode, total, 64, |start, len| {
        let mut scratch = params.clone();
        let mut out = Vec::with_capacity(len);
        for flat in start..start + len {
            let (group, elem) = locate(flat);
            scratch.nudge(group, elem, h);
            let plus = loss(&scratch);
            scratch.nudge(group, elem, -2.0 * h);
            let minus = loss(&scratch);
            scratch.nudge(group, elem, h);
            out.push(match (plus, minus) {
                (Ok(p), Ok(m)) if p.is_finite() && m.is_finite() => Ok((p - m) / (2.0 * h)),
                (Err(e), _) | (_, Err(e)) => Err(e),
                _ => Err(Error::NonFiniteLoss),
            });
        }
        out
    });

    let mut groups = Vec::with_capacity(sizes.len());
    let mut max_rel_err = 0.0_f64;
    for (g, (name, n)) in sizes.into_iter().enumerate() {
        let mut report = GroupReport {
            name,
            entries: n,
            max_rel_err: 0.0,
            worst_entry: 0,
            analytic_at_worst: 0.0,
            numeric_at_worst: 0.0,
        };
        for e in 0..n {
            let num = match &numeric[offsets[g] + e] {
                Ok(v) => *v,
                Err(_) => return Err(Error::NonFiniteLoss),
            };
            let ana = grads[g][e];
            let rel = relative_error(ana, num);
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_entry = e;
                report.analytic_at_worst = ana;
                report.numeric_at_worst = num;
            }
        }
        max_rel_err = max_rel_err.max(report.max_rel_err);
        groups.push(report);
    }

    Ok(GradCheckReport {
        groups,
        max_rel_err,
        entries_checked: total,
        tolerance: opts.tolerance,
    })
}
