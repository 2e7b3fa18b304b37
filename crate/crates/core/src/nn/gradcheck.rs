//! Central-difference gradient checker.

use super::params::{GradientSet, ParameterSet};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params.iter().filter(|p| !p.passed)
    }
}

/// Compares the analytic gradient returned by `loss_fn` at `params` against
/// central differences of its loss, scalar by scalar.
pub fn gradient_check<F>(loss_fn: F, params: &ParameterSet, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&ParameterSet) -> Result<(f64, GradientSet)>,
{
    let (_, analytic) = loss_fn(params)?;
    analytic.check_congruent(params)?;
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(params.len());
    let names: Vec<String> = params.names().map(str::to_owned).collect();
    for name in names {
        let len = params.get(&name)?.len();
        let grad = analytic.get(&name)?.data().to_vec();
        let mut worst = ParamCheck {
            name: name.clone(),
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: grad.first().copied().unwrap_or(0.0),
            numeric: grad.first().copied().unwrap_or(0.0),
            passed: true,
        };
        for i in 0..len {
            let orig = params.get(&name)?.data()[i];
            probe.get_mut(&name)?.data_mut()[i] = orig + FD_STEP;
            let (plus, _) = loss_fn(&probe)?;
            probe.get_mut(&name)?.data_mut()[i] = orig - FD_STEP;
            let (minus, _) = loss_fn(&probe)?;
            probe.get_mut(&name)?.data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let err = relative_error(grad[i], numeric);
            if err > worst.max_rel_error {
                worst.max_rel_error = err;
                worst.worst_index = i;
                worst.analytic = grad[i];
                worst.numeric = numeric;
            }
        }
        worst.passed = worst.max_rel_error < tolerance;
        out.push(worst);
    }
    Ok(GradCheckReport {
        tolerance,
        params: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Tensor;

    fn quadratic(p: &ParameterSet) -> Result<(f64, GradientSet)> {
        let x = p.get("x")?.data();
        let loss = x.iter().map(|v| v * v * v).sum();
        let mut g = GradientSet::zeros_like(p);
        let d: Vec<f64> = x.iter().map(|v| 3.0 * v * v).collect();
        g.accumulate_slice("x", &d)?;
        Ok((loss, g))
    }

    #[test]
    fn correct_gradient_passes() {
        let mut p = ParameterSet::new();
        p.insert("x", Tensor::vector(vec![0.5, -1.5, 2.0])).unwrap();
        let report = gradient_check(quadratic, &p, 1e-6).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn wrong_gradient_is_flagged() {
        let mut p = ParameterSet::new();
        p.insert("x", Tensor::vector(vec![0.5, -1.5])).unwrap();
        let broken = |p: &ParameterSet| {
            let (l, mut g) = quadratic(p)?;
            g.accumulate_slice("x", &[0.0, 0.1])?;
            Ok((l, g))
        };
        let report = gradient_check(broken, &p, 1e-6).unwrap();
        assert!(!report.passed());
        assert_eq!(report.failures().next().unwrap().worst_index, 1);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-10, 0.0) - 1e-2).abs() < 1e-15);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }
}
