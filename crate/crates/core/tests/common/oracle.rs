//! Slow reference evaluations used only by tests.
//!
//! Digamma and trigamma by direct summation of the first `N` terms of their
//! series plus an Euler-Maclaurin tail at `x + N`. The shift is large (the
//! tail starts at 60 or above) and the tail keeps more terms than the library
//! does, so truncation errors of the two are unrelated. Partial sums are
//! compensated.

#![allow(clippy::excessive_precision)]

#![allow(dead_code)]

/// Start of the Euler-Maclaurin tail.
const TAIL_START: f64 = 60.0;

/// `B_2k` for k = 1..=10.
const BERNOULLI: [f64; 10] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
];

/// Neumaier-compensated running sum.
#[derive(Default)]
struct Sum {
    total: f64,
    carry: f64,
}

impl Sum {
    fn add(&mut self, v: f64) {
        let t = self.total + v;
        if self.total.abs() >= v.abs() {
            self.carry += (self.total - t) + v;
        } else {
            self.carry += (v - t) + self.total;
        }
        self.total = t;
    }

    fn value(&self) -> f64 {
        self.total + self.carry
    }
}

fn shift_count(x: f64) -> usize {
    if x >= TAIL_START {
        0
    } else {
        (TAIL_START - x).ceil() as usize
    }
}

/// ψ(x) = ln z - 1/(2z) - Σ B_2k / (2k z^2k) - Σ_{j<N} 1/(x+j), z = x + N.
pub fn digamma(x: f64) -> f64 {
    let n = shift_count(x);
    let z = x + n as f64;
    let mut s = Sum::default();
    s.add(z.ln());
    s.add(-0.5 / z);
    let z2 = z * z;
    let mut zp = z2;
    for (k, b) in BERNOULLI.iter().enumerate() {
        s.add(-b / (2.0 * (k + 1) as f64 * zp));
        zp *= z2;
    }
    for j in (0..n).rev() {
        // reciprocal plus its exact rounding residual
        let v = x + j as f64;
        let r = 1.0 / v;
        s.add(-r);
        s.add(-(-r).mul_add(v, 1.0) / v);
    }
    s.value()
}

/// ψ₁(x) = 1/z + 1/(2z²) + Σ B_2k / z^(2k+1) + Σ_{j<N} 1/(x+j)², z = x + N.
pub fn trigamma(x: f64) -> f64 {
    let n = shift_count(x);
    let z = x + n as f64;
    let mut s = Sum::default();
    s.add(1.0 / z);
    s.add(0.5 / (z * z));
    let z2 = z * z;
    let mut zp = z2 * z;
    for b in BERNOULLI {
        s.add(b / zp);
        zp *= z2;
    }
    for j in (0..n).rev() {
        let v = x + j as f64;
        s.add(1.0 / (v * v));
    }
    s.value()
}

/// Values computed with mpmath at 30 significant digits: (x, ψ(x), ψ₁(x)).
pub const MPMATH: [(f64, f64, f64); 14] = [
    (1e-6, -1000000.577214020013919956, 1000000000001.645022166514),
    (0.001, -1000.575571931810279654757, 1000001.64253319582734467),
    (0.1, -10.4237549404110762321003, 101.433299150792747704652),
    (0.5, -1.963510026021423479440976, 4.934802200544679309417245),
    (1.0, -0.5772156649015328606065121, 1.644934066848226436472415),
    (1.4616321449683622, -9.24e-17, 0.9676722454476212549951696),
    (2.0, 0.4227843350984671393934879, 0.6449340668482264364724152),
    (3.7, 1.167153539361511440947651, 0.3100378576700383021582484),
    (9.99, 2.25070037283120112197865, 0.1052769501482417843854417),
    (10.0, 2.251752589066721107647456, 0.105166335681685746122201),
    (25.5, 3.218942472883919766545154, 0.03999466964956292403652086),
    (1000.0, 6.907255195648812052050006, 0.001000500166666633333357143),
    (1e5, 11.51292046496189508675671, 0.00001000005000016666666666333),
    (1e8, 18.4206807389523654638106, 1.000000005000000016666667e-8),
];

/// Trigamma tolerance: 1e-10 absolute, widened to a few units in the last
/// place once the value is too large for 1e-10 to be representable
/// (ψ₁(x) > ~1e5, i.e. x below ~3e-3).
pub fn tolerance(value: f64) -> f64 {
    1e-10_f64.max(4.0 * f64::EPSILON * value.abs())
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}
