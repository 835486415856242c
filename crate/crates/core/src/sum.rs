//! Compensated summation in fixed iteration order.

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = NeumaierSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Compensated sum of an iterator.
pub fn sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<NeumaierSum>().total()
}

/// Compensated mean; `NaN` for an empty iterator.
pub fn mean<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = NeumaierSum::new();
    let mut count = 0usize;
    for v in values {
        acc.add(v);
        count += 1;
    }
    acc.total() / count as f64
}

/// Componentwise compensated accumulator for gradient vectors.
#[derive(Debug, Clone)]
pub struct VecSum {
    parts: Vec<NeumaierSum>,
}

impl VecSum {
    pub fn zeros(len: usize) -> Self {
        Self {
            parts: vec![NeumaierSum::new(); len],
        }
    }

    /// Adds `scale * values`.
    #[inline]
    pub fn add_scaled(&mut self, scale: f64, values: &[f64]) {
        debug_assert_eq!(values.len(), self.parts.len());
        for (acc, v) in self.parts.iter_mut().zip(values) {
            acc.add(scale * v);
        }
    }

    /// Adds `scale * [1, x_1, .., x_{len-1}]`.
    #[inline]
    pub fn add_affine(&mut self, scale: f64, x: &[f64]) {
        let (first, rest) = self.parts.split_first_mut().expect("non-empty accumulator");
        first.add(scale);
        for (acc, v) in rest.iter_mut().zip(x) {
            acc.add(scale * v);
        }
    }

    pub fn totals(&self) -> Vec<f64> {
        self.parts.iter().map(NeumaierSum::total).collect()
    }
}
