/// Outcome of comparing analytic gradients against central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// Coordinate where the worst error occurred.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Checks every coordinate of `params`. `loss_fn` returns the loss and its analytic gradient.
pub fn finite_diff_check<F>(loss_fn: F, params: &[f64], h: f64) -> GradCheck
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let coords: Vec<usize> = (0..params.len()).collect();
    finite_diff_check_coords(loss_fn, params, h, &coords)
}

/// Like [`finite_diff_check`] restricted to the given coordinates.
pub fn finite_diff_check_coords<F>(mut loss_fn: F, params: &[f64], h: f64, coords: &[usize]) -> GradCheck
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let (_, analytic) = loss_fn(params);
    assert_eq!(analytic.len(), params.len(), "gradient length mismatch");

    let mut report = GradCheck {
        max_relative_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: coords.len(),
    };
    let mut probe = params.to_vec();
    for &i in coords {
        let original = probe[i];
        probe[i] = original + h;
        let up = loss_fn(&probe).0;
        probe[i] = original - h;
        let down = loss_fn(&probe).0;
        probe[i] = original;

        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
        if err > report.max_relative_error {
            report = GradCheck {
                max_relative_error: err,
                worst_index: i,
                analytic: a,
                numeric,
                checked: coords.len(),
            };
        }
    }
    report
}
