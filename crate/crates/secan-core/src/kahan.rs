//! Compensated summation.
//!
//! All likelihood accumulations in this crate run through [`KahanSum`] so
//! that results are reproducible to ~1e-13 regardless of stratum size and so
//! that permuting subjects within a stratum perturbs sums only at the level
//! of the compensation term.

/// Neumaier-variant compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `v`, tracking the low-order bits lost by the running sum.
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    /// The compensated total.
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Sums an iterator with compensation.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    let mut acc = KahanSum::new();
    for v in iter {
        acc.add(v);
    }
    acc.value()
}
