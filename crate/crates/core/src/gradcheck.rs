//! Central finite-difference checks of activation kernels and of whole
//! networks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activations::{Activation, ActivationFamily, ActivationKind, GradientMode};
use crate::nn::{Network, Tensor};
use crate::{Error, Result};

/// Default relative-error tolerance for kernel checks.
pub const KERNEL_TOLERANCE: f64 = 1e-6;
/// Smallest distance from a kink at which a point is checked.
pub const MIN_KINK_DISTANCE: f64 = 1e-3;

/// `|a - n| / max(1, |a|, |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Step used around `x`: `1e-5 * max(1, |x|)`.
pub fn fd_step(x: f64) -> f64 {
    1e-5 * x.abs().max(1.0)
}

pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// The families and scales exercised by a default run.
pub fn default_families() -> Vec<ActivationFamily> {
    let mut out = Vec::new();
    for m in [1.0, 255.0, 256.0] {
        for kind in [
            ActivationKind::Relu,
            ActivationKind::LeakyRelu,
            ActivationKind::Elu,
            ActivationKind::Selu,
            ActivationKind::Prelu,
            ActivationKind::Srelu,
        ] {
            out.push(ActivationFamily::new(kind, m));
        }
        out.push(ActivationFamily::aplu(5, m));
        out.push(ActivationFamily::melu(4, m));
        out.push(ActivationFamily::melu(8, m));
    }
    out
}

/// One finite-difference mismatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub x: f64,
    pub params: Vec<f64>,
    /// `None` for the input derivative.
    pub param_index: Option<usize>,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyReport {
    pub family: ActivationFamily,
    pub checked: usize,
    /// Samples dropped for lying too close to a kink.
    pub rejected: usize,
    pub max_rel_error: f64,
    /// Parameter partials not compared, with the reason.
    pub skipped: Vec<String>,
    /// At most [`FamilyReport::MAX_FAILURES`] worst-first mismatches.
    pub failures: Vec<Failure>,
}

impl FamilyReport {
    pub const MAX_FAILURES: usize = 10;

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Random parameters in the region the family is used in.
fn sample_params(act: &Activation, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let fam = act.family();
    let m = fam.max_input;
    match fam.kind {
        ActivationKind::Prelu => vec![rng.random_range(-1.0..1.0)],
        ActivationKind::Srelu => vec![
            rng.random_range(-m..0.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(0.0..2.0 * m),
            rng.random_range(0.0..2.0),
        ],
        ActivationKind::Aplu => {
            let n = fam.aplu_hinge_count;
            let mut p: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            p.extend((0..n).map(|_| rng.random_range(0.0..m)));
            p
        }
        ActivationKind::Melu => (0..fam.melu_total_params).map(|_| rng.random_range(-1.0..1.0)).collect(),
        _ => Vec::new(),
    }
}

/// Indices whose analytic partial intentionally differs from the forward
/// formula in the family's gradient mode.
fn skipped_indices(fam: &ActivationFamily) -> Vec<(usize, String)> {
    if fam.gradient_mode != GradientMode::Published {
        return Vec::new();
    }
    match fam.kind {
        ActivationKind::Srelu => vec![
            (0, "d/dt_l uses the published -a_l".to_string()),
            (2, "d/dt_r uses -a_r".to_string()),
        ],
        ActivationKind::Aplu => {
            let n = fam.aplu_hinge_count;
            (0..n).map(|c| (n + c, format!("d/db_{} uses the published -a_{}", c + 1, c + 1))).collect()
        }
        _ => Vec::new(),
    }
}

/// Checks the input derivative and every parameter partial of `family` at
/// `points` accepted samples drawn from `seed`.
///
/// Inputs are drawn from `[-2 m, 5 m]` (`m` = `max_input`). A sample is
/// rejected when any kink is closer than
/// `max(MIN_KINK_DISTANCE, 4 * step)`, where `step` is the largest
/// finite-difference step used at that sample.
pub fn check_family(
    family: &ActivationFamily,
    points: usize,
    seed: u64,
    tolerance: f64,
) -> Result<FamilyReport> {
    let act = Activation::new(family.clone())?;
    let m = family.max_input;
    let skipped = skipped_indices(family);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = FamilyReport {
        family: family.clone(),
        checked: 0,
        rejected: 0,
        max_rel_error: 0.0,
        skipped: skipped.iter().map(|(_, why)| why.clone()).collect(),
        failures: Vec::new(),
    };
    let max_attempts = points.saturating_mul(100).max(1000);
    let mut attempts = 0;
    while report.checked < points {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::validation(format!(
                "{}: only {} of {points} samples cleared the kink margin",
                family.label(),
                report.checked
            )));
        }
        let params = sample_params(&act, &mut rng);
        let x = rng.random_range(-2.0 * m..5.0 * m);
        let hx = fd_step(x);
        let hp = params.iter().map(|p| fd_step(*p)).fold(0.0, f64::max);
        let margin = MIN_KINK_DISTANCE.max(4.0 * hx.max(hp));
        if act.kinks(&params).iter().any(|k| (x - k).abs() <= margin) {
            report.rejected += 1;
            continue;
        }
        report.checked += 1;
        let eval = act.evaluate(x, &params)?;

        let numeric = central_difference(|t| act.forward(t, &params), x, hx);
        record(&mut report, x, &params, None, eval.dx, numeric, tolerance);

        for (i, &analytic) in eval.dparams.iter().enumerate() {
            if skipped.iter().any(|(j, _)| *j == i) {
                continue;
            }
            let numeric = central_difference(
                |t| {
                    let mut p = params.clone();
                    p[i] = t;
                    act.forward(x, &p)
                },
                params[i],
                fd_step(params[i]),
            );
            record(&mut report, x, &params, Some(i), analytic, numeric, tolerance);
        }
    }
    report
        .failures
        .sort_by(|a, b| b.rel_error.total_cmp(&a.rel_error));
    report.failures.truncate(FamilyReport::MAX_FAILURES);
    Ok(report)
}

fn record(
    report: &mut FamilyReport,
    x: f64,
    params: &[f64],
    param_index: Option<usize>,
    analytic: f64,
    numeric: f64,
    tolerance: f64,
) {
    let err = relative_error(analytic, numeric);
    let err = if err.is_nan() { f64::INFINITY } else { err };
    report.max_rel_error = report.max_rel_error.max(err);
    if err > tolerance {
        report.failures.push(Failure {
            x,
            params: params.to_vec(),
            param_index,
            analytic,
            numeric,
            rel_error: err,
        });
        // keep memory bounded on a badly broken kernel
        if report.failures.len() > 4 * FamilyReport::MAX_FAILURES {
            report.failures.sort_by(|a, b| b.rel_error.total_cmp(&a.rel_error));
            report.failures.truncate(FamilyReport::MAX_FAILURES);
        }
    }
}

/// Runs [`check_family`] over `families`, seeding each from `seed` and its
/// position.
pub fn run_suite(
    families: &[ActivationFamily],
    points: usize,
    seed: u64,
    tolerance: f64,
) -> Result<Vec<FamilyReport>> {
    families
        .iter()
        .enumerate()
        .map(|(i, f)| check_family(f, points, crate::seed::mix64(seed ^ i as u64), tolerance))
        .collect()
}

/// Worst backprop-vs-finite-difference error within one parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupCheck {
    pub name: String,
    pub max_rel_error: f64,
    /// Index of the worst entry and its analytic and numeric gradients.
    pub worst: (usize, f64, f64),
}

/// Compares every parameter gradient of `loss_and_backward` with a central
/// difference of the total loss (cross-entropy plus penalties).
///
/// The relative error is `|a - n| / max(|a|, |n|, floor)`.
pub fn check_network(
    net: &Network,
    batch: &Tensor,
    labels: &[usize],
    step: f64,
    floor: f64,
) -> Result<Vec<GroupCheck>> {
    let mut work = net.clone();
    work.loss_and_backward(batch, labels)?;
    let analytic: Vec<Vec<f64>> = work.param_groups().iter().map(|g| g.grads.clone()).collect();
    let mut out = Vec::with_capacity(analytic.len());
    for (gi, grads) in analytic.iter().enumerate() {
        let mut check = GroupCheck {
            name: work.param_groups()[gi].name.clone(),
            max_rel_error: 0.0,
            worst: (0, 0.0, 0.0),
        };
        for (j, &a) in grads.iter().enumerate() {
            let orig = work.param_groups()[gi].values[j];
            let h = step * orig.abs().max(1.0);
            work.param_groups_mut()[gi].values[j] = orig + h;
            let up = work.loss(batch, labels)?;
            work.param_groups_mut()[gi].values[j] = orig - h;
            let down = work.loss(batch, labels)?;
            work.param_groups_mut()[gi].values[j] = orig;
            let n = (up - down) / (2.0 * h);
            let err = (a - n).abs() / a.abs().max(n.abs()).max(floor);
            if err > check.max_rel_error || err.is_nan() {
                check.max_rel_error = if err.is_nan() { f64::INFINITY } else { err };
                check.worst = (j, a, n);
            }
        }
        out.push(check);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1e-9, 0.0), 1e-9);
        assert_eq!(relative_error(200.0, 100.0), 0.5);
    }

    #[test]
    fn prelu_passes() {
        let r = check_family(&ActivationFamily::new(ActivationKind::Prelu, 1.0), 200, 1, 1e-6).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.checked, 200);
    }

    #[test]
    fn published_mode_skips_breakpoints() {
        let fam = ActivationFamily::aplu(3, 1.0).with_gradient_mode(GradientMode::Published);
        let r = check_family(&fam, 100, 2, 1e-6).unwrap();
        assert_eq!(r.skipped.len(), 3);
        assert!(r.passed());
    }

    #[test]
    fn default_family_list() {
        let f = default_families();
        assert_eq!(f.len(), 27);
        assert!(f.iter().any(|f| f.kind == ActivationKind::Melu && f.melu_total_params == 4));
    }
}
