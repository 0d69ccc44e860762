use crate::Scalar;

/// Read-only view of one named parameter tensor.
pub struct ParamView<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [T],
}

pub trait Parameterized<T: Scalar> {
    /// Named tensors in a fixed order.
    fn param_views(&self) -> Vec<ParamView<'_, T>>;

    /// Mutable tensors in the same order as [`Parameterized::param_views`].
    fn param_slices_mut(&mut self) -> Vec<&mut [T]>;

    fn num_params(&self) -> usize {
        self.param_views().iter().map(|v| v.data.len()).sum()
    }

    fn zero_params(&mut self) {
        for s in self.param_slices_mut() {
            s.fill(T::zero());
        }
    }

    /// All parameters concatenated in block order.
    fn flat_params(&self) -> Vec<T> {
        self.param_views()
            .iter()
            .flat_map(|v| v.data.iter().copied())
            .collect()
    }

    fn all_finite(&self) -> bool {
        self.param_views()
            .iter()
            .all(|v| v.data.iter().all(|x| x.is_finite()))
    }
}

pub(crate) fn prefixed<'a, T>(prefix: &str, views: Vec<ParamView<'a, T>>) -> Vec<ParamView<'a, T>> {
    views
        .into_iter()
        .map(|v| ParamView {
            name: format!("{prefix}.{}", v.name),
            ..v
        })
        .collect()
}
