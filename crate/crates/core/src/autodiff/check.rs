//! Central finite-difference gradient checker.

use crate::autodiff::matrix::Matrix;
use crate::autodiff::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Pre-activations closer to zero than this are treated as sitting on a relu kink.
pub const RELU_KINK_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct CoordinateCheck {
    pub param: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates dropped because a perturbation crossed a relu kink.
    pub skipped: usize,
    pub coordinates: Vec<CoordinateCheck>,
}

impl GradCheckReport {
    pub fn analytic(&self, param: usize) -> Vec<f64> {
        self.coordinates
            .iter()
            .filter(|c| c.param == param)
            .map(|c| c.analytic)
            .collect()
    }

    pub fn numeric(&self, param: usize) -> Vec<f64> {
        self.coordinates
            .iter()
            .filter(|c| c.param == param)
            .map(|c| c.numeric)
            .collect()
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + 1e-12)
}

/// Compares backward-mode gradients of the scalar built by `build` against
/// central differences with step `eps`.
///
/// `build` receives a fresh tape and one leaf per entry of `params`. During
/// the perturbed evaluations every stop-gradient node replays its value from
/// the unperturbed pass, so the numeric side differentiates the same function
/// the backward pass does: stopped branches are constants.
pub fn grad_check<F>(build: F, params: &[Matrix], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(Error::Argument(format!("finite-difference step {eps} not in (0, 1e-2]")));
    }
    let eval = |ps: &[Matrix], frozen: Vec<Matrix>| -> Result<(Tape, Vec<Var>, Var)> {
        let mut tape = Tape::with_frozen_stops(frozen);
        let vars: Vec<Var> = ps.iter().map(|p| tape.leaf(p.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        Ok((tape, vars, loss))
    };

    let (mut tape, vars, loss) = eval(params, Vec::new())?;
    let frozen = tape.stopped_values();
    tape.backward(loss)?;
    let analytic: Vec<Matrix> = vars.iter().map(|v| tape.grad(*v).clone()).collect();

    let mut report = GradCheckReport::default();
    let mut work = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        for idx in 0..p.len() {
            let orig = p.as_slice()[idx];
            work[pi].as_mut_slice()[idx] = orig + eps;
            let (tp, _, lp) = eval(&work, frozen.clone())?;
            work[pi].as_mut_slice()[idx] = orig - eps;
            let (tm, _, lm) = eval(&work, frozen.clone())?;
            work[pi].as_mut_slice()[idx] = orig;

            if tp.relu_pattern() != tm.relu_pattern() || kinked(&tp) || kinked(&tm) {
                report.skipped += 1;
                continue;
            }
            let numeric = (tp.scalar(lp) - tm.scalar(lm)) / (2.0 * eps);
            let a = analytic[pi].as_slice()[idx];
            let rel = relative_error(a, numeric);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.checked += 1;
            report.coordinates.push(CoordinateCheck {
                param: pi,
                index: idx,
                analytic: a,
                numeric,
                rel_error: rel,
            });
        }
    }
    Ok(report)
}

fn kinked(tape: &Tape) -> bool {
    tape.min_relu_margin() < RELU_KINK_TOL
}
