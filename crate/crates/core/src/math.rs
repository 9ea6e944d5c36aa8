//! Float helpers that `core` lacks.

pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

/// Responses longer than this are reduced with Neumaier summation.
pub(crate) const COMPENSATED_THRESHOLD: usize = 10_000;

/// Ordered accumulator; switches to compensated summation for long inputs.
pub(crate) struct Accumulator {
    sum: f64,
    compensation: f64,
    compensated: bool,
}

impl Accumulator {
    pub(crate) fn for_len(len: usize) -> Self {
        Self {
            sum: 0.0,
            compensation: 0.0,
            compensated: len > COMPENSATED_THRESHOLD,
        }
    }

    pub(crate) fn add(&mut self, x: f64) {
        if !self.compensated {
            self.sum += x;
            return;
        }
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    let mut acc = Accumulator::for_len(values.len());
    for &v in values {
        acc.add(v);
    }
    acc.total() / values.len() as f64
}
