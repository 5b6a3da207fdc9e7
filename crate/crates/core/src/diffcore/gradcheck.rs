use super::graph::{Graph, NodeId};
use super::param::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Denominator floor for the relative error, so entries whose true
/// gradient is ~0 are judged on absolute error instead.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst_entry: Option<(String, usize)>,
    pub entries_checked: usize,
    /// Entries whose ±step perturbation crossed a kink of a piecewise op.
    pub entries_skipped: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.entries_checked > 0 && self.max_relative_error < self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Compares backward-pass gradients of `build`'s scalar output against
/// central differences for every entry of every parameter in `ids`.
///
/// `build` must be a pure function of the parameter values. `configure`
/// runs on each fresh graph before building (used to inject faults).
pub fn gradient_check_with<F, C>(
    store: &mut ParamStore,
    ids: &[ParamId],
    build: F,
    configure: C,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<NodeId>,
    C: Fn(&mut Graph),
{
    if ids.is_empty() {
        return Err(Error::NoParameters);
    }
    if !(step > 0.0) {
        return Err(Error::invalid("step", "must be positive"));
    }
    let eval = |store: &ParamStore| -> Result<(f64, u64)> {
        let mut g = Graph::with_kink_tracking();
        configure(&mut g);
        let out = build(&mut g, store)?;
        Ok((g.scalar(out), g.kink_signature()))
    };

    store.zero_grads(ids);
    let mut g = Graph::with_kink_tracking();
    configure(&mut g);
    let out = build(&mut g, store)?;
    let base_signature = g.kink_signature();
    g.backward(out, store)?;

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_entry: None,
        entries_checked: 0,
        entries_skipped: 0,
        tolerance,
    };
    for &id in ids {
        let analytic = store
            .get(id)
            .grad()
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; store.value(id).len()]);
        for (i, &a) in analytic.iter().enumerate() {
            let original = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = original + step;
            let plus = eval(store);
            store.value_mut(id).data_mut()[i] = original - step;
            let minus = eval(store);
            store.value_mut(id).data_mut()[i] = original;
            let ((fp, sp), (fm, sm)) = (plus?, minus?);
            if sp != base_signature || sm != base_signature {
                report.entries_skipped += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * step);
            let err = relative_error(a, numeric);
            report.entries_checked += 1;
            if err > report.max_relative_error || report.worst_entry.is_none() {
                report.max_relative_error = err;
                report.worst_entry = Some((store.get(id).name.clone(), i));
            }
        }
    }
    store.zero_grads(ids);
    Ok(report)
}

pub fn gradient_check<F>(
    store: &mut ParamStore,
    ids: &[ParamId],
    build: F,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<NodeId>,
{
    gradient_check_with(store, ids, build, |_| {}, step, tolerance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Tensor;

    #[test]
    fn identity_is_exact() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::scalar(0.5));
        let report = gradient_check(
            &mut store,
            &[w],
            |g, s| {
                let p = g.param(s, w)?;
                g.mean(p)
            },
            2f64.powi(-17),
            1e-12,
        )
        .unwrap();
        assert_eq!(report.max_relative_error, 0.0);
        assert!(report.passed());
    }

    #[test]
    fn quadratic_at_three() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::scalar(3.0));
        let report = gradient_check(
            &mut store,
            &[w],
            |g, s| {
                let p = g.param(s, w)?;
                let sq = g.mul(p, p)?;
                g.mean(sq)
            },
            2f64.powi(-10),
            1e-12,
        )
        .unwrap();
        assert_eq!(report.max_relative_error, 0.0);
    }

    #[test]
    fn rejects_empty_parameter_set() {
        let mut store = ParamStore::new();
        let err = gradient_check(
            &mut store,
            &[],
            |g, _| g.constant(Tensor::scalar(1.0)),
            1e-5,
            1e-4,
        );
        assert!(matches!(err, Err(Error::NoParameters)));
    }

    #[test]
    fn kink_crossings_are_skipped() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::scalar(1e-7));
        let report = gradient_check(
            &mut store,
            &[w],
            |g, s| {
                let p = g.param(s, w)?;
                let r = g.leaky_relu(p, 0.2)?;
                g.mean(r)
            },
            1e-5,
            1e-4,
        )
        .unwrap();
        assert_eq!(report.entries_skipped, 1);
        assert_eq!(report.entries_checked, 0);
        assert!(!report.passed());
    }
}
