//! Central finite-difference verification of reverse-mode gradients.

use crate::graph::{Graph, Mode, NodeId};
use crate::tensor::ParamStore;
use crate::Result;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Perturbation applied on each side of a parameter value.
    pub step: f64,
    /// Denominator floor for the relative error, so that gradients that are
    /// zero up to rounding do not inflate the ratio.
    pub floor: f64,
    /// Upper bound on entries checked per parameter tensor; entries are
    /// spread evenly over the tensor. `None` checks every entry.
    pub max_entries_per_param: Option<usize>,
    /// Graph mode for every evaluation. A training mode with a fixed seed
    /// draws the same dropout masks each time.
    pub mode: Mode,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-4,
            floor: 1e-6,
            max_entries_per_param: None,
            mode: Mode::Eval,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub params_checked: usize,
    pub max_relative_error: f64,
    pub worst: Option<GradCheckEntry>,
}

/// Compares the gradient from [`Graph::backward`] with central differences
/// of the loss built by `build`, for every parameter in `store`.
pub fn check_gradients<F>(store: &ParamStore<f64>, build: F, options: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>) -> NodeId,
{
    let mut graph = Graph::new(store, options.mode);
    let loss = build(&mut graph);
    let grads = graph.backward(loss)?;

    let eval = |params: &ParamStore<f64>| {
        let mut g = Graph::new(params, options.mode);
        let loss = build(&mut g);
        g.value(loss).item()
    };

    let mut probe = store.clone();
    let mut report = GradCheckReport {
        checked: 0,
        params_checked: 0,
        max_relative_error: 0.0,
        worst: None,
    };
    for id in store.ids() {
        let len = store.get(id).len();
        let picks: Vec<usize> = match options.max_entries_per_param {
            Some(cap) if cap < len => (0..cap).map(|i| i * len / cap).collect(),
            _ => (0..len).collect(),
        };
        report.params_checked += 1;
        for index in picks {
            let original = store.get(id).data()[index];
            probe.get_mut(id).data_mut()[index] = original + options.step;
            let up = eval(&probe);
            probe.get_mut(id).data_mut()[index] = original - options.step;
            let down = eval(&probe);
            probe.get_mut(id).data_mut()[index] = original;

            let numeric = (up - down) / (2.0 * options.step);
            let analytic = grads.get(id).map_or(0.0, |g| g.data()[index]);
            let denom = analytic.abs().max(numeric.abs()).max(options.floor);
            let relative_error = (analytic - numeric).abs() / denom;
            report.checked += 1;
            if relative_error > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = report.max_relative_error.max(relative_error);
                report.worst = Some(GradCheckEntry {
                    param: store.name(id).to_string(),
                    index,
                    analytic,
                    numeric,
                    relative_error,
                });
            }
        }
    }
    Ok(report)
}
