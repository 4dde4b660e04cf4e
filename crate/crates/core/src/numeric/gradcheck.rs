//! Central finite-difference verification of analytic gradients.

use std::fmt;

/// Where the largest disagreement (or a non-finite probe) occurred.
#[derive(Clone, Debug, PartialEq)]
pub struct GradLocation {
    pub group: String,
    pub index: usize,
}

impl fmt::Display for GradLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.group, self.index)
    }
}

#[derive(Clone, Debug)]
pub struct GroupError {
    pub name: String,
    pub max_rel_err: f64,
    pub worst_index: usize,
}

#[derive(Clone, Debug)]
pub struct GradReport {
    pub groups: Vec<GroupError>,
    pub max_rel_err: f64,
    pub worst: Option<GradLocation>,
    pub tolerance: f64,
    pub passed: bool,
    /// Set when the loss was non-finite at some probe point.
    pub non_finite_at: Option<GradLocation>,
}

impl fmt::Display for GradReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(loc) = &self.non_finite_at {
            return write!(f, "FAIL: loss non-finite when probing {loc}");
        }
        let verdict = if self.passed { "pass" } else { "FAIL" };
        write!(f, "{verdict}: max rel err {:.3e} (tol {:.0e})", self.max_rel_err, self.tolerance)?;
        if let Some(loc) = &self.worst {
            write!(f, " at {loc}")?;
        }
        Ok(())
    }
}

/// `|a − b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Checks `analytic` against central differences of `loss` around `point`.
pub fn grad_check<F>(loss: F, point: &[f64], analytic: &[f64], h: f64, tolerance: f64) -> GradReport
where
    F: FnMut(&[f64]) -> f64,
{
    grad_check_grouped(loss, point, analytic, &[("x".to_string(), point.len())], h, tolerance)
}

/// Like [`grad_check`] with the flat coordinate vector split into named groups
/// (one per parameter tensor), each reported separately.
pub fn grad_check_grouped<F>(
    mut loss: F,
    point: &[f64],
    analytic: &[f64],
    groups: &[(String, usize)],
    h: f64,
    tolerance: f64,
) -> GradReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(point.len(), analytic.len(), "gradient length must match the point");
    assert_eq!(
        groups.iter().map(|g| g.1).sum::<usize>(),
        point.len(),
        "groups must cover the point"
    );
    let mut x = point.to_vec();
    let mut reports = Vec::with_capacity(groups.len());
    let mut worst: Option<(f64, GradLocation)> = None;
    let mut offset = 0;
    for (name, len) in groups {
        let mut group = GroupError {
            name: name.clone(),
            max_rel_err: 0.0,
            worst_index: 0,
        };
        for local in 0..*len {
            let i = offset + local;
            let orig = x[i];
            x[i] = orig + h;
            let up = loss(&x);
            x[i] = orig - h;
            let down = loss(&x);
            x[i] = orig;
            let loc = GradLocation {
                group: name.clone(),
                index: local,
            };
            if !up.is_finite() || !down.is_finite() {
                return GradReport {
                    groups: reports,
                    max_rel_err: f64::INFINITY,
                    worst: Some(loc.clone()),
                    tolerance,
                    passed: false,
                    non_finite_at: Some(loc),
                };
            }
            let numeric = (up - down) / (2.0 * h);
            let err = relative_error(analytic[i], numeric);
            if err > group.max_rel_err {
                group.max_rel_err = err;
                group.worst_index = local;
            }
            if worst.as_ref().map_or(true, |(e, _)| err > *e) {
                worst = Some((err, loc));
            }
        }
        offset += len;
        reports.push(group);
    }
    let (max_rel_err, worst) = match worst {
        Some((e, loc)) => (e, Some(loc)),
        None => (0.0, None),
    };
    GradReport {
        groups: reports,
        max_rel_err,
        worst,
        tolerance,
        passed: max_rel_err <= tolerance,
        non_finite_at: None,
    }
}
