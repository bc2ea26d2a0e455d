//! Small dense least-squares problems (tall, few columns).

use crate::scalar::{dot, Real};

/// Minimum-norm solution of `min ||A x - b||_2` with `A` given by its
/// columns. Householder QR with column pivoting determines the numerical
/// rank; rank-deficient problems are completed by a second orthogonal
/// factorization so that the returned `x` has minimal norm.
pub fn lstsq_min_norm<T: Real>(cols: &[Vec<T>], b: &[T]) -> Vec<T> {
    let k = cols.len();
    if k == 0 {
        return Vec::new();
    }
    let m = b.len();
    assert!(cols.iter().all(|c| c.len() == m), "column length mismatch");
    let mut a: Vec<Vec<T>> = cols.to_vec();
    let mut rhs = b.to_vec();
    let mut perm: Vec<usize> = (0..k).collect();
    let steps = m.min(k);
    let mut diag = Vec::with_capacity(steps);

    for j in 0..steps {
        let (p, _) = (j..k)
            .map(|c| (c, a[c][j..].iter().map(|&v| v * v).sum::<T>()))
            .fold((j, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
        a.swap(j, p);
        perm.swap(j, p);
        let (v, beta, alpha) = householder(&a[j][j..]);
        a[j][j] = alpha;
        for x in a[j][j + 1..].iter_mut() {
            *x = T::zero();
        }
        for c in a.iter_mut().skip(j + 1) {
            reflect(&v, beta, &mut c[j..]);
        }
        reflect(&v, beta, &mut rhs[j..]);
        diag.push(alpha);
    }

    let scale = diag.first().map_or(T::zero(), |d| d.abs());
    let tol = T::from_usize_lossy(m.max(k)) * T::epsilon() * scale;
    let rank = diag.iter().take_while(|d| d.abs() > tol).count();
    let mut y = vec![T::zero(); k];
    if rank == 0 {
        return y;
    }
    let c = &rhs[..rank];
    // R entries: r(i, j) = a[j][i] for i <= j
    if rank == k {
        for i in (0..k).rev() {
            let mut s = c[i];
            for jj in i + 1..k {
                s -= a[jj][i] * y[jj];
            }
            y[i] = s / a[i][i];
        }
    } else {
        // T = [R11 R12] is rank x k; factor T^T = Q2 R2 and solve R2^T z = c.
        let mut tt: Vec<Vec<T>> = (0..rank).map(|i| (0..k).map(|jj| a[jj][i]).collect()).collect();
        let mut refl = Vec::with_capacity(rank);
        for i in 0..rank {
            let (v, beta, alpha) = householder(&tt[i][i..]);
            tt[i][i] = alpha;
            for x in tt[i][i + 1..].iter_mut() {
                *x = T::zero();
            }
            for col in tt.iter_mut().skip(i + 1) {
                reflect(&v, beta, &mut col[i..]);
            }
            refl.push((v, beta));
        }
        let mut z = vec![T::zero(); k];
        for i in 0..rank {
            let mut s = c[i];
            for jj in 0..i {
                s -= tt[i][jj] * z[jj];
            }
            z[i] = s / tt[i][i];
        }
        for (i, (v, beta)) in refl.iter().enumerate().rev() {
            reflect(v, *beta, &mut z[i..]);
        }
        y = z;
    }
    let mut x = vec![T::zero(); k];
    for (i, &pi) in perm.iter().enumerate() {
        x[pi] = y[i];
    }
    x
}

/// Householder vector `v` (with `v[0] = 1`) and `beta` such that
/// `(I - beta v v^T) x = alpha e_1`.
fn householder<T: Real>(x: &[T]) -> (Vec<T>, T, T) {
    let sigma: T = x[1..].iter().map(|&v| v * v).sum();
    let x0 = x[0];
    let mut v = x.to_vec();
    v[0] = T::one();
    if sigma == T::zero() {
        return (v, T::zero(), x0);
    }
    let mu = (x0 * x0 + sigma).sqrt();
    let v0 = if x0 <= T::zero() { x0 - mu } else { -sigma / (x0 + mu) };
    let beta = T::lit(2.0) * v0 * v0 / (sigma + v0 * v0);
    for vi in v[1..].iter_mut() {
        *vi /= v0;
    }
    (v, beta, mu)
}

fn reflect<T: Real>(v: &[T], beta: T, x: &mut [T]) {
    if beta == T::zero() {
        return;
    }
    let s = beta * dot(v, x);
    for (xi, &vi) in x.iter_mut().zip(v) {
        *xi -= s * vi;
    }
}

/// Anderson mixing step. `residuals[i] = P(u_i) - u_i` and
/// `images[i] = P(u_i)`, oldest first. Returns the mixed iterate
/// `sum alpha_i P(u_i)` and the weights `alpha` (which sum to one).
pub fn anderson_mixing<T: Real>(residuals: &[Vec<T>], images: &[Vec<T>]) -> (Vec<T>, Vec<T>) {
    assert_eq!(residuals.len(), images.len());
    assert!(!residuals.is_empty(), "Anderson mixing needs at least one residual");
    let last = residuals.len() - 1;
    let v_last = &residuals[last];
    let diffs: Vec<Vec<T>> = residuals[..last]
        .iter()
        .map(|v| v.iter().zip(v_last).map(|(&a, &b)| a - b).collect())
        .collect();
    let rhs: Vec<T> = v_last.iter().map(|&v| -v).collect();
    let mut alpha = lstsq_min_norm(&diffs, &rhs);
    let rest = T::one() - alpha.iter().copied().sum::<T>();
    alpha.push(rest);
    let n = images[0].len();
    let mut next = vec![T::zero(); n];
    for (img, &a) in images.iter().zip(&alpha) {
        for (x, &p) in next.iter_mut().zip(img) {
            *x += a * p;
        }
    }
    (next, alpha)
}
