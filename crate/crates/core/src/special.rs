//! Special functions backing the regression error bound: log-gamma, the regularized incomplete
//! beta function, and the Student-t distribution.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    if x < half {
        // reflection: Γ(x)Γ(1-x) = π / sin(πx)
        let pi = T::PI();
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::lit(LANCZOS[0]);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += T::lit(c) / (x + T::from_usize_lossy(i));
    }
    let t = x + T::lit(LANCZOS_G) + half;
    half * (T::lit(2.0) * T::PI()).ln() + (x + half) * t.ln() - t + acc.ln()
}

/// `ln B(a, b)`.
pub fn ln_beta<T: Scalar>(a: T, b: T) -> T {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn beta_inc<T: Scalar>(a: T, b: T, x: T) -> Result<T> {
    if !(a > T::zero() && b > T::zero()) {
        return Err(Error::Domain(format!("beta_inc requires a, b > 0 (got {a}, {b})")));
    }
    if !(x >= T::zero() && x <= T::one()) {
        return Err(Error::Domain(format!("beta_inc requires x in [0, 1] (got {x})")));
    }
    Ok(beta_inc_unchecked(a, b, x, ln_beta(a, b)))
}

/// `I_x(a, b)` with a precomputed `ln B(a, b)`; arguments assumed valid.
pub(crate) fn beta_inc_unchecked<T: Scalar>(a: T, b: T, x: T, ln_b: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    if x >= T::one() {
        return T::one();
    }
    let front = (a * x.ln() + b * (T::one() - x).ln() - ln_b).exp();
    let two = T::lit(2.0);
    if x < (a + T::one()) / (a + b + two) {
        front * beta_cf(a, b, x) / a
    } else {
        T::one() - front * beta_cf(b, a, T::one() - x) / b
    }
}

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
fn beta_cf<T: Scalar>(a: T, b: T, x: T) -> T {
    let tiny = T::min_positive_value() / T::epsilon();
    let eps = T::epsilon();
    let one = T::one();
    let two = T::lit(2.0);
    let qab = a + b;
    let qap = a + one;
    let qam = a - one;
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = one / d;
    let mut h = d;
    let max_iter = 10_000;
    for m in 1..max_iter {
        let m = T::from_usize_lossy(m);
        let m2 = two * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        let del = d * c;
        h *= del;
        if (del - one).abs() <= eps {
            break;
        }
    }
    h
}

/// Student-t distribution with integer degrees of freedom.
#[derive(Debug, Clone, Copy)]
pub struct StudentT<T> {
    df: T,
    ln_b: T,
}

impl<T: Scalar> StudentT<T> {
    pub fn new(df: usize) -> Result<Self> {
        if df < 1 {
            return Err(Error::Domain("Student-t needs at least one degree of freedom".into()));
        }
        let df = T::from_usize_lossy(df);
        Ok(Self {
            df,
            ln_b: ln_beta(df / T::lit(2.0), T::lit(0.5)),
        })
    }

    /// `P(|T| > t)`, computed directly so tiny tails keep full relative precision.
    pub fn two_sided_tail(&self, t: T) -> T {
        if t.is_infinite() {
            return T::zero();
        }
        let t2 = t * t;
        let x = self.df / (self.df + t2);
        beta_inc_unchecked(self.df / T::lit(2.0), T::lit(0.5), x, self.ln_b)
    }

    pub fn df(&self) -> T {
        self.df
    }

    /// Natural log of the density at `t`.
    pub fn ln_density(&self, t: T) -> T {
        let half = T::lit(0.5);
        -(self.df + T::one()) * half * (t * t / self.df).ln_1p() - half * self.df.ln() - self.ln_b
    }

    pub fn cdf(&self, t: T) -> T {
        let half_tail = self.two_sided_tail(t) / T::lit(2.0);
        if t >= T::zero() {
            T::one() - half_tail
        } else {
            half_tail
        }
    }
}

/// Cumulative distribution function of Student's t with `df` degrees of freedom.
pub fn student_t_cdf<T: Scalar>(t: T, df: usize) -> Result<T> {
    if !t.is_finite() {
        return Err(Error::Domain(format!("t must be finite (got {t})")));
    }
    Ok(StudentT::new(df)?.cdf(t))
}
