//! Finite-difference verification of analytic gradients.
//!
//! For every element of every parameter, the checker compares the tape's
//! gradient against a central difference `(f(θ+h) - f(θ-h)) / 2h` of the
//! full forward computation. The forward closure is rebuilt on a tape
//! with the same seed each time, so stochastic ops (dropout) replay the
//! same masks and the function being differenced is genuinely the one
//! that was differentiated.

use super::{Graph, Params, TensorId};
use crate::error::{Error, Result};

pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Maximum allowed relative error per element.
    pub tolerance: f64,
    /// Differences below this are treated as zero; filters f64 noise on
    /// elements whose true gradient is (near) zero.
    pub absolute_floor: f64,
    /// Seed for every tape built during the check.
    pub tape_seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tolerance: 1e-4,
            absolute_floor: 1e-8,
            tape_seed: 0,
        }
    }
}

/// Result for one parameter tensor (a "group" of scalar elements).
pub struct GroupReport {
    pub name: String,
    pub elements: usize,
    pub max_rel_err: f64,
    /// Flat index of the worst element.
    pub worst_index: usize,
    pub pass: bool,
}

pub struct GradCheckReport {
    pub groups: Vec<GroupReport>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn pass(&self) -> bool {
        self.groups.iter().all(|g| g.pass)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| g.max_rel_err)
            .fold(0.0, f64::max)
    }

    /// Names of the failing parameter groups, worst first.
    pub fn failures(&self) -> Vec<&str> {
        let mut failing: Vec<&GroupReport> = self.groups.iter().filter(|g| !g.pass).collect();
        failing.sort_by(|a, b| b.max_rel_err.total_cmp(&a.max_rel_err));
        failing.iter().map(|g| g.name.as_str()).collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let width = self.groups.iter().map(|g| g.name.len()).max().unwrap_or(0);
        for g in &self.groups {
            out.push_str(&format!(
                "{:<width$}  {:>6} elems  max rel err {:.3e}  {}\n",
                g.name,
                g.elements,
                g.max_rel_err,
                if g.pass { "ok" } else { "FAIL" },
            ));
        }
        out.push_str(&format!(
            "gradient check {} (tolerance {:.1e}, worst {:.3e})\n",
            if self.pass() { "PASSED" } else { "FAILED" },
            self.tolerance,
            self.max_rel_err()
        ));
        out
    }
}

/// Checks every parameter of `params` against central differences of the
/// scalar loss produced by `forward`. The closure must be deterministic
/// given the tape seed; it runs once for the analytic pass and twice per
/// parameter element for the numeric one.
pub fn check_gradients<F>(
    params: &mut Params,
    mut forward: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &Params) -> Result<TensorId>,
{
    // Analytic gradients from one taped forward/backward.
    let mut graph = Graph::new(opts.tape_seed);
    let loss = forward(&mut graph, params)?;
    if graph.value(loss).len() != 1 {
        return Err(Error::contract(
            "check_gradients",
            "forward must produce a scalar loss",
        ));
    }
    graph.backward(loss)?;
    graph.write_grads(params)?;
    let analytic: Vec<Vec<f64>> = params
        .ids()
        .map(|id| {
            params
                .get(id)
                .grad()
                .expect("write_grads filled every parameter")
                .to_vec()
        })
        .collect();

    let mut eval = |params: &Params| -> Result<f64> {
        let mut graph = Graph::new(opts.tape_seed);
        let loss = forward(&mut graph, params)?;
        Ok(graph.value(loss)[0])
    };

    let mut groups = Vec::new();
    for id in params.ids().collect::<Vec<_>>() {
        let n = params.get(id).numel();
        let mut max_rel = 0.0f64;
        let mut worst = 0;
        for (i, &a) in analytic[id.0].iter().enumerate() {
            let original = params.get(id).data()[i];
            params.get_mut(id).data_mut()[i] = original + opts.step;
            let plus = eval(params)?;
            params.get_mut(id).data_mut()[i] = original - opts.step;
            let minus = eval(params)?;
            params.get_mut(id).data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * opts.step);
            let diff = (a - numeric).abs();
            let rel = if diff < opts.absolute_floor {
                0.0
            } else {
                diff / a.abs().max(numeric.abs())
            };
            if rel > max_rel {
                max_rel = rel;
                worst = i;
            }
        }
        groups.push(GroupReport {
            name: params.name(id).to_string(),
            elements: n,
            max_rel_err: max_rel,
            worst_index: worst,
            pass: max_rel < opts.tolerance,
        });
    }
    Ok(GradCheckReport {
        groups,
        tolerance: opts.tolerance,
    })
}
