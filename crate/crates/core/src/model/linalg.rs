//! Row-major dense kernels used by the encoder. Matrices are flat slices;
//! every `*_add` kernel accumulates into its output.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let (ca, ra) = a.split_at(a.len() - a.len() % 4);
    let (cb, rb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(4).zip(cb.chunks_exact(4)) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out[m×n] += a[m×k] · w[k×n]`
pub fn matmul_add(a: &[f64], m: usize, k: usize, w: &[f64], n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(w.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let x = a[i * k + p];
            if x != 0.0 {
                axpy(x, &w[p * n..(p + 1) * n], row);
            }
        }
    }
}

/// `out[m×k] += dc[m×n] · w[k×n]ᵀ`
pub fn matmul_bt_add(dc: &[f64], m: usize, n: usize, w: &[f64], k: usize, out: &mut [f64]) {
    debug_assert_eq!(dc.len(), m * n);
    debug_assert_eq!(w.len(), k * n);
    debug_assert_eq!(out.len(), m * k);
    for i in 0..m {
        let drow = &dc[i * n..(i + 1) * n];
        let orow = &mut out[i * k..(i + 1) * k];
        for (p, o) in orow.iter_mut().enumerate() {
            *o += dot(drow, &w[p * n..(p + 1) * n]);
        }
    }
}

/// `dw[k×n] += a[m×k]ᵀ · dc[m×n]`
pub fn matmul_at_add(a: &[f64], m: usize, k: usize, dc: &[f64], n: usize, dw: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(dc.len(), m * n);
    debug_assert_eq!(dw.len(), k * n);
    for i in 0..m {
        let drow = &dc[i * n..(i + 1) * n];
        for p in 0..k {
            let x = a[i * k + p];
            if x != 0.0 {
                axpy(x, drow, &mut dw[p * n..(p + 1) * n]);
            }
        }
    }
}

/// Adds `bias[n]` to every row of `out[m×n]`.
pub fn add_rows(out: &mut [f64], bias: &[f64]) {
    for row in out.chunks_exact_mut(bias.len()) {
        for (o, b) in row.iter_mut().zip(bias) {
            *o += b;
        }
    }
}

/// `db[n] += Σ_rows dc[m×n]`
pub fn sum_rows_add(dc: &[f64], db: &mut [f64]) {
    for row in dc.chunks_exact(db.len()) {
        for (d, x) in db.iter_mut().zip(row) {
            *d += x;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    fn transpose(a: &[f64], r: usize, c: usize) -> Vec<f64> {
        let mut t = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                t[j * r + i] = a[i * c + j];
            }
        }
        t
    }

    #[test]
    fn kernels_agree_with_naive_products() {
        let (m, k, n) = (3, 5, 7);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let w: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let dc: Vec<f64> = (0..m * n).map(|i| (i as f64 * 0.23).sin()).collect();

        let mut out = vec![0.0; m * n];
        matmul_add(&a, m, k, &w, n, &mut out);
        let expect = naive(&a, m, k, &w, n);
        assert!(out.iter().zip(&expect).all(|(x, y)| (x - y).abs() < 1e-12));

        let mut da = vec![0.0; m * k];
        matmul_bt_add(&dc, m, n, &w, k, &mut da);
        let expect = naive(&dc, m, n, &transpose(&w, k, n), k);
        assert!(da.iter().zip(&expect).all(|(x, y)| (x - y).abs() < 1e-12));

        let mut dw = vec![0.0; k * n];
        matmul_at_add(&a, m, k, &dc, n, &mut dw);
        let expect = naive(&transpose(&a, m, k), k, m, &dc, n);
        assert!(dw.iter().zip(&expect).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn dot_with_remainder() {
        let a: Vec<f64> = (1..=7).map(f64::from).collect();
        assert_eq!(dot(&a, &a), 140.0);
    }
}
