//! Restarted GMRES with right preconditioning on real vectors.

#[derive(Clone, Copy, Debug)]
pub struct GmresOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solve `A x = b` for `x`, starting from zero, using `A (M y)` with the
/// preconditioner `M`. Stops when `‖b - A x‖ <= rtol ‖b‖`.
pub fn gmres(
    apply: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    precond: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    b: &[f64],
    rtol: f64,
    restart: usize,
    max_iter: usize,
) -> (Vec<f64>, GmresOutcome) {
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return (x, GmresOutcome { iterations: 0, relative_residual: 0.0, converged: true });
    }
    let mut total = 0;
    let mut r = b.to_vec();
    let mut beta = bnorm;
    while total < max_iter {
        let m = restart.min(max_iter - total);
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut hmat = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        v.push(r.iter().map(|x| x / beta).collect());
        let mut k_used = 0;
        let mut res = beta;
        for j in 0..m {
            let zj = precond(&v[j]);
            let mut w = apply(&zj);
            z.push(zj);
            total += 1;
            for i in 0..=j {
                let hij = dot(&w, &v[i]);
                hmat[i][j] = hij;
                for (wk, vk) in w.iter_mut().zip(&v[i]) {
                    *wk -= hij * vk;
                }
            }
            let hnext = norm(&w);
            hmat[j + 1][j] = hnext;
            for i in 0..j {
                let t = cs[i] * hmat[i][j] + sn[i] * hmat[i + 1][j];
                hmat[i + 1][j] = -sn[i] * hmat[i][j] + cs[i] * hmat[i + 1][j];
                hmat[i][j] = t;
            }
            let denom = hmat[j][j].hypot(hmat[j + 1][j]);
            if denom == 0.0 {
                cs[j] = 1.0;
                sn[j] = 0.0;
            } else {
                cs[j] = hmat[j][j] / denom;
                sn[j] = hmat[j + 1][j] / denom;
            }
            hmat[j][j] = cs[j] * hmat[j][j] + sn[j] * hmat[j + 1][j];
            hmat[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            res = g[j + 1].abs();
            k_used = j + 1;
            if res <= rtol * bnorm || hnext == 0.0 {
                break;
            }
            v.push(w.iter().map(|x| x / hnext).collect());
        }
        // back substitution
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for l in i + 1..k_used {
                s -= hmat[i][l] * y[l];
            }
            y[i] = if hmat[i][i] != 0.0 { s / hmat[i][i] } else { 0.0 };
        }
        for (i, yi) in y.iter().enumerate() {
            for (xk, zk) in x.iter_mut().zip(&z[i]) {
                *xk += yi * zk;
            }
        }
        let ax = apply(&x);
        r = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        beta = norm(&r);
        if beta <= rtol * bnorm {
            return (x, GmresOutcome { iterations: total, relative_residual: beta / bnorm, converged: true });
        }
        if res == 0.0 && beta > rtol * bnorm && k_used < m {
            // breakdown without convergence
            break;
        }
    }
    (x, GmresOutcome { iterations: total, relative_residual: beta / bnorm, converged: beta <= rtol * bnorm })
}
