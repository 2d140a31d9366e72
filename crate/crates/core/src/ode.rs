//! Fixed-step classical Runge-Kutta for three-component systems.

/// One classical RK4 step of size `h` from `(t, x)`.
#[inline]
pub fn rk4_step<F>(f: F, t: f64, x: &[f64; 3], h: f64) -> [f64; 3]
where
    F: Fn(f64, &[f64; 3]) -> [f64; 3],
{
    let half = 0.5 * h;
    let k1 = f(t, x);
    let k2 = f(t + half, &axpy(x, half, &k1));
    let k3 = f(t + half, &axpy(x, half, &k2));
    let k4 = f(t + h, &axpy(x, h, &k3));
    let sixth = h / 6.0;
    [
        x[0] + sixth * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        x[1] + sixth * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        x[2] + sixth * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
    ]
}

#[inline]
fn axpy(x: &[f64; 3], a: f64, k: &[f64; 3]) -> [f64; 3] {
    [x[0] + a * k[0], x[1] + a * k[1], x[2] + a * k[2]]
}
