use super::params::Parameterized;
use crate::Scalar;

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error<T: Scalar>(a: T, b: T) -> f64 {
    let (a, b) = (a.as_f64(), b.as_f64());
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockError {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockError>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error() < tol
    }
}

/// Central differences of `f` at `x`.
pub fn central_difference<T: Scalar>(f: impl Fn(&[T]) -> T, x: &[T], h: f64) -> Vec<T> {
    let mut x = x.to_vec();
    let h = T::lit(h);
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (h + h)
        })
        .collect()
}

/// Compares `analytic` against central differences of `loss` around
/// `params`, entry by entry, and reports the worst error per block.
pub fn grad_check<T, P>(params: &P, analytic: &P, loss: impl Fn(&P) -> T, h: f64) -> GradCheckReport
where
    T: Scalar,
    P: Parameterized<T> + Clone,
{
    let mut probe = params.clone();
    let hv = T::lit(h);
    let analytic = analytic.param_views();
    let mut blocks = Vec::with_capacity(analytic.len());
    for (b, view) in analytic.iter().enumerate() {
        let (mut rel, mut abs) = (0.0f64, 0.0f64);
        for e in 0..view.data.len() {
            let orig = probe.param_slices_mut()[b][e];
            probe.param_slices_mut()[b][e] = orig + hv;
            let up = loss(&probe);
            probe.param_slices_mut()[b][e] = orig - hv;
            let down = loss(&probe);
            probe.param_slices_mut()[b][e] = orig;
            let numeric = (up - down) / (hv + hv);
            rel = rel.max(relative_error(view.data[e], numeric));
            abs = abs.max((view.data[e] - numeric).abs().as_f64());
        }
        blocks.push(BlockError {
            name: view.name.clone(),
            max_rel_error: rel,
            max_abs_error: abs,
        });
    }
    GradCheckReport { blocks }
}
