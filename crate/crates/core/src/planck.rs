//! Equilibrium weights as functions of the squared momentum `s = |p|^2`.

/// Planckian `1 / (e^s - 1)`. Underflows to zero for large `s`.
#[inline]
pub fn planck(s: f64) -> f64 {
    1.0 / s.exp_m1()
}

/// `1 / P(s) = e^s - 1`.
#[inline]
pub fn inv_planck(s: f64) -> f64 {
    s.exp_m1()
}

/// Maxwellian factor `e^{-s}`, equal to `P / (1 + P)`.
#[inline]
pub fn maxwellian(s: f64) -> f64 {
    (-s).exp()
}

/// `P (1 + P) = e^s / (e^s - 1)^2`.
#[inline]
pub fn planck_variance(s: f64) -> f64 {
    let p = planck(s);
    p * (1.0 + p)
}
