//! Cholesky factors of correlation matrices on an unconstrained scale.
//!
//! A `p × p` factor is built row by row from `p(p-1)/2` canonical partial
//! correlations `z = tanh(y)`; each row ends on the unit sphere. Factors are stored
//! dense and row-major.

/// Number of unconstrained coordinates for a `p × p` factor.
pub fn n_free(p: usize) -> usize {
    p * p.saturating_sub(1) / 2
}

/// `log(1 - tanh(y)^2)` without cancellation for large `|y|`.
fn log_sech2(y: f64) -> f64 {
    let a = y.abs();
    2.0 * (std::f64::consts::LN_2 - a - (-2.0 * a).exp().ln_1p())
}

/// Maps `y` to a lower-triangular factor with unit-norm rows and positive diagonal.
///
/// Returns the factor and `log |dL/dy|`.
pub fn constrain(y: &[f64], p: usize) -> (Vec<f64>, f64) {
    debug_assert_eq!(y.len(), n_free(p));
    let mut l = vec![0.0; p * p];
    if p == 0 {
        return (l, 0.0);
    }
    l[0] = 1.0;
    let mut log_jac = 0.0;
    let mut k = 0;
    for i in 1..p {
        let mut sum_sq: f64 = 0.0;
        for j in 0..i {
            let z = y[k].tanh();
            log_jac += log_sech2(y[k]);
            if j > 0 {
                log_jac += 0.5 * (1.0 - sum_sq).ln();
            }
            let v = z * (1.0 - sum_sq).sqrt();
            l[i * p + j] = v;
            sum_sq += v * v;
            k += 1;
        }
        l[i * p + i] = (1.0 - sum_sq).max(0.0).sqrt();
    }
    (l, log_jac)
}

/// Inverse of [`constrain`].
pub fn unconstrain(l: &[f64], p: usize) -> Vec<f64> {
    let mut y = Vec::with_capacity(n_free(p));
    for i in 1..p {
        let mut sum_sq: f64 = 0.0;
        for j in 0..i {
            let v = l[i * p + j];
            let z = v / (1.0 - sum_sq).sqrt();
            y.push(z.clamp(-1.0 + 1e-15, 1.0 - 1e-15).atanh());
            sum_sq += v * v;
        }
    }
    y
}

/// Pulls a gradient with respect to the factor entries back to `y`.
///
/// `grad_l` holds `∂f/∂L` (row-major, entries above the diagonal ignored). When
/// `with_jacobian` is set the gradient of `log |dL/dy|` is added.
pub fn backprop(y: &[f64], l: &[f64], grad_l: &[f64], p: usize, with_jacobian: bool) -> Vec<f64> {
    let mut gy = vec![0.0; n_free(p)];
    if p < 2 {
        return gy;
    }
    let jac = if with_jacobian { 1.0 } else { 0.0 };
    let row_start = |i: usize| i * (i - 1) / 2;
    let mut s = vec![0.0; p];
    for i in 1..p {
        // prefix sums of squares along row i: s[j] = Σ_{l<j} L_il²
        s[0] = 0.0;
        for j in 0..i {
            s[j + 1] = s[j] + l[i * p + j] * l[i * p + j];
        }
        // diagonal entry L_ii = sqrt(1 - s[i])
        let lii = l[i * p + i];
        let mut g_s_next = if lii > 0.0 {
            -0.5 * grad_l[i * p + i] / lii
        } else {
            0.0
        };
        for j in (0..i).rev() {
            let k = row_start(i) + j;
            let lij = l[i * p + j];
            let g_lij = grad_l[i * p + j] + 2.0 * lij * g_s_next;
            let mut g_s = g_s_next;
            let w = (1.0 - s[j]).sqrt();
            let z = y[k].tanh();
            let g_z = g_lij * w;
            if w > 0.0 {
                g_s += -0.5 * g_lij * z / w;
            }
            if j > 0 {
                g_s += -0.5 * jac / (1.0 - s[j]);
            }
            gy[k] = g_z * (1.0 - z * z) - 2.0 * jac * z;
            g_s_next = g_s;
        }
    }
    gy
}
