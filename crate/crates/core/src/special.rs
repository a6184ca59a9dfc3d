//! Scalar special functions used across the crate.

use std::f64::consts::{LN_2, PI, SQRT_2};

pub use statrs::function::gamma::{digamma, ln_gamma};

/// `ln(2π)`.
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Numerically stable `ln Σ exp(v_i)`. Returns `-inf` for an empty slice or
/// when every entry is `-inf`.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `ln(exp(a) + exp(b))`.
pub fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Standard normal log-density.
pub fn ln_std_normal_pdf(z: f64) -> f64 {
    -0.5 * z * z - 0.5 * LN_2PI
}

/// `ln Φ(z)` for the standard normal CDF, accurate far into the lower tail.
pub fn ln_ndtr(z: f64) -> f64 {
    if z < -20.0 {
        // asymptotic series for the Mills ratio
        let z2 = z * z;
        let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2) + 105.0 / (z2 * z2 * z2 * z2);
        -0.5 * z2 - (-z).ln() - 0.5 * LN_2PI + series.ln()
    } else if z > 5.0 {
        (-0.5 * statrs::function::erf::erfc(z / SQRT_2)).ln_1p()
    } else {
        statrs::function::erf::erfc(-z / SQRT_2).ln() - LN_2
    }
}

/// Standard normal CDF.
pub fn ndtr(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / SQRT_2)
}

/// Log-density of a centred Cauchy distribution with the given scale.
pub fn ln_cauchy_pdf(x: f64, scale: f64) -> f64 {
    let r = x / scale;
    -(PI * scale).ln() - (r * r).ln_1p()
}

/// Logistic sigmoid.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(t)` computed without overflow.
pub fn ln_sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        -(-t).exp().ln_1p()
    } else {
        t - t.exp().ln_1p()
    }
}
