use std::fmt::Write as _;

use ndarray::ArrayView2;

use crate::nn::{ConvMode, Gradients, ModelState, ParamGroup, PassOptions};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub h: f64,
    /// Pass iff every relative error is at most this.
    pub threshold: f64,
    /// Pin every match set to the unperturbed pass for both perturbed evaluations.
    pub freeze_alignment: bool,
    /// Lower bound of the relative-error denominator.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            h: 1e-5,
            threshold: 1e-4,
            freeze_alignment: true,
            floor: 1e-6,
        }
    }
}

/// `|a - f| / max(|a|, |f|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub group: ParamGroup,
    pub parameters: usize,
    pub max_relative: f64,
    pub max_absolute: f64,
    /// Index (within the group) of the largest relative error.
    pub worst_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub groups: Vec<GroupReport>,
    pub threshold: f64,
    pub passed: bool,
}

impl GradReport {
    pub fn max_relative(&self) -> f64 {
        self.groups.iter().map(|g| g.max_relative).fold(0.0, f64::max)
    }

    /// Tab-separated table with a header row.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("group\tparams\tmax_rel\tmax_abs\tworst_index\tpass\n");
        for g in &self.groups {
            let _ = writeln!(
                s,
                "{}\t{}\t{:.3e}\t{:.3e}\t{}\t{}",
                g.group.name(),
                g.parameters,
                g.max_relative,
                g.max_absolute,
                g.worst_index,
                g.max_relative <= self.threshold
            );
        }
        s
    }
}

/// Compares [`ModelState::backward`] with central differences of the batch
/// loss for every parameter, in training mode.
pub fn finite_diff_check(
    model: &ModelState,
    batch: &[ArrayView2<f64>],
    labels: &[usize],
    opts: &GradCheckOptions,
) -> Result<GradReport> {
    finite_diff_check_with(model, batch, labels, opts, |_| {})
}

/// As [`finite_diff_check`], with a hook that may alter the analytic
/// gradients before comparison (used to confirm the check can fail).
pub fn finite_diff_check_with<F>(
    model: &ModelState,
    batch: &[ArrayView2<f64>],
    labels: &[usize],
    opts: &GradCheckOptions,
    tamper: F,
) -> Result<GradReport>
where
    F: FnOnce(&mut Gradients),
{
    if !(1e-7..=1e-3).contains(&opts.h) {
        return Err(Error::Invalid(format!("finite-difference step {} (allowed 1e-7..=1e-3)", opts.h)));
    }
    let trace = model.forward(batch, PassOptions::train())?;
    let (_, mut analytic) = model.backward(&trace, labels)?;
    tamper(&mut analytic);

    let freeze = opts.freeze_alignment && model.mode() == ConvMode::Dwa;
    let pass = if freeze {
        PassOptions::train().frozen(trace.alignments())
    } else {
        PassOptions::train()
    };

    let mut probe = model.clone();
    let mut groups = Vec::with_capacity(ParamGroup::ALL.len());
    for group in ParamGroup::ALL {
        let count = probe.group(group).len();
        let mut report = GroupReport {
            group,
            parameters: count,
            max_relative: 0.0,
            max_absolute: 0.0,
            worst_index: 0,
        };
        for idx in 0..count {
            let original = probe.group(group)[idx];
            probe.group_mut(group)[idx] = original + opts.h;
            let plus = probe.loss(batch, labels, pass)?;
            probe.group_mut(group)[idx] = original - opts.h;
            let minus = probe.loss(batch, labels, pass)?;
            probe.group_mut(group)[idx] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!("loss while perturbing {}[{idx}]", group.name())));
            }
            let numeric = (plus - minus) / (2.0 * opts.h);
            let a = analytic.group(group)[idx];
            let rel = relative_error(a, numeric, opts.floor);
            let abs = (a - numeric).abs();
            if rel > report.max_relative {
                report.max_relative = rel;
                report.worst_index = idx;
            }
            report.max_absolute = report.max_absolute.max(abs);
        }
        groups.push(report);
    }
    let passed = groups.iter().all(|g| g.max_relative <= opts.threshold);
    Ok(GradReport {
        groups,
        threshold: opts.threshold,
        passed,
    })
}
