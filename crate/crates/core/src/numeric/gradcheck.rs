use super::{ParamSet, Tensor};

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub failures: usize,
    pub max_rel_error: f64,
    /// parameter name and flat index of the worst entry
    pub worst: Option<(String, usize)>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Error between an analytic and a numeric derivative: absolute below the
/// floor, relative above it.
pub fn gradient_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff <= ABS_FLOOR {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs())
}

/// Compares `analytic` against central differences of `loss` for every
/// scalar in `params`.
pub fn check_gradients(
    params: &ParamSet,
    analytic: &[Tensor],
    mut loss: impl FnMut(&ParamSet) -> f64,
) -> GradCheckReport {
    assert_eq!(analytic.len(), params.len());
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        checked: 0,
        failures: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    for id in params.ids() {
        for k in 0..params.get(id).len() {
            let orig = params.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = orig + FD_STEP;
            let up = loss(&probe);
            probe.get_mut(id).data_mut()[k] = orig - FD_STEP;
            let down = loss(&probe);
            probe.get_mut(id).data_mut()[k] = orig;

            let numeric = (up - down) / (2.0 * FD_STEP);
            let err = gradient_error(analytic[id.index()].data()[k], numeric);
            report.checked += 1;
            if err > REL_TOL {
                report.failures += 1;
            }
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((params.name(id).to_string(), k));
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_wrong_gradient() {
        let mut ps = ParamSet::new();
        ps.add("x", Tensor::vector(vec![1.0, 2.0]));
        let f = |p: &ParamSet| p.tensors()[0].data().iter().map(|v| v * v).sum::<f64>();
        let good = [Tensor::vector(vec![2.0, 4.0])];
        assert!(check_gradients(&ps, &good, f).passed());
        let bad = [Tensor::vector(vec![2.0, 4.1])];
        let r = check_gradients(&ps, &bad, f);
        assert_eq!(r.failures, 1);
        assert_eq!(r.worst, Some(("x".to_string(), 1)));
    }
}
