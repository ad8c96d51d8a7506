use super::*;

fn m(rows: usize, cols: usize, v: &[f64]) -> Matrix {
    Matrix::from_vec(rows, cols, v.to_vec()).unwrap()
}

#[test]
fn matmul_identity_and_product() {
    let mut t = Tape::new();
    let i = t.constant(Matrix::identity(2));
    let b = t.constant(m(2, 1, &[3.0, 4.0]));
    let y = t.matmul(i, b).unwrap();
    assert_eq!(t.value(y).as_slice(), &[3.0, 4.0]);

    let a = t.constant(m(1, 2, &[1.0, 2.0]));
    let y = t.matmul(a, b).unwrap();
    assert_eq!(t.value(y).as_slice(), &[11.0]);
}

#[test]
fn matmul_shape_error() {
    let mut t = Tape::new();
    let a = t.constant(Matrix::zeros(2, 3));
    let b = t.constant(Matrix::zeros(4, 1));
    match t.matmul(a, b) {
        Err(crate::Error::Dimension { left, right, .. }) => {
            assert_eq!(left, (2, 3));
            assert_eq!(right, (4, 1));
        }
        other => panic!("expected dimension error, got {other:?}"),
    }
}

#[test]
fn grad_of_sum_of_product_is_ones_times_b_transposed() {
    let a0 = m(2, 3, &[0.5, -1.0, 2.0, 1.5, 0.0, -0.3]);
    let b0 = m(3, 2, &[1.0, 2.0, -1.0, 0.5, 3.0, -2.0]);
    let mut t = Tape::new();
    let a = t.leaf(a0.clone());
    let b = t.constant(b0.clone());
    let p = t.matmul(a, b).unwrap();
    let s = t.sum(p);
    t.backward(s).unwrap();
    let expected = Matrix::filled(2, 2, 1.0).matmul(&b0.transpose()).unwrap();
    assert_eq!(t.grad(a), &expected);

    // independent central-difference oracle on the raw product
    let f = |a: &Matrix| a.matmul(&b0).unwrap().sum();
    let eps = 1e-5;
    for k in 0..a0.len() {
        let mut ap = a0.clone();
        ap.as_mut_slice()[k] += eps;
        let mut am = a0.clone();
        am.as_mut_slice()[k] -= eps;
        let fd = (f(&ap) - f(&am)) / (2.0 * eps);
        assert!((fd - expected.as_slice()[k]).abs() < 1e-8);
    }
}

#[test]
fn softmax_relu_basics() {
    let mut t = Tape::new();
    let z = t.constant(Matrix::zeros(1, 3));
    let s = t.softmax(z);
    for v in t.value(s).as_slice() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
    let x = t.constant(Matrix::row_vector(&[-1.0, 2.0]));
    let r = t.relu(x);
    assert_eq!(t.value(r).as_slice(), &[0.0, 2.0]);
}

#[test]
fn softmax_rows_normalized_for_large_logits() {
    let mut t = Tape::new();
    let z = t.constant(m(2, 3, &[1000.0, 999.0, -1000.0, -5.0, 0.0, 5.0]));
    let s = t.softmax(z);
    for r in 0..2 {
        let sum: f64 = t.value(s).row(r).iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }
}

#[test]
fn concat_slice_round_trip_and_errors() {
    let u = Matrix::row_vector(&[1.0, 2.0, 3.0]);
    let v = Matrix::row_vector(&[4.0, 5.0, 6.0, 7.0, 8.0]);
    let mut t = Tape::new();
    let a = t.constant(u.clone());
    let b = t.constant(v.clone());
    let c = t.concat(&[a, b]).unwrap();
    assert_eq!(t.shape(c), (1, 8));
    let s0 = t.slice(c, 0, 3).unwrap();
    let s1 = t.slice(c, 3, 8).unwrap();
    assert_eq!(t.value(s0), &u);
    assert_eq!(t.value(s1), &v);

    assert!(matches!(t.concat(&[]), Err(crate::Error::Argument(_))));
    assert!(matches!(t.slice(c, 4, 9), Err(crate::Error::Range(_))));
}

#[test]
fn stop_gradient_forward_identity_and_zero_backward() {
    let w0 = m(2, 3, &[0.1, 0.2, -0.3, 0.4, -0.5, 0.6]);
    let x0 = m(3, 1, &[1.0, -2.0, 0.5]);

    let mut t = Tape::new();
    let d = t.constant(Matrix::row_vector(&[1.0, 2.0, 3.0]));
    let sd = t.stop_gradient(d);
    assert_eq!(t.value(sd).as_slice(), &[1.0, 2.0, 3.0]);

    let w = t.leaf(w0.clone());
    let x = t.constant(x0.clone());
    let wx = t.matmul(w, x).unwrap();
    let stopped = t.stop_gradient(wx);
    let loss = t.sum(stopped);
    t.backward(loss).unwrap();
    assert_eq!(t.grad(w), &Matrix::zeros(2, 3));

    // d(sum(w x + stop(w x)))/dw = ones · xᵀ
    let mut t = Tape::new();
    let w = t.leaf(w0.clone());
    let x = t.constant(x0.clone());
    let wx = t.matmul(w, x).unwrap();
    let stopped = t.stop_gradient(wx);
    let both = t.add(wx, stopped).unwrap();
    let loss = t.sum(both);
    t.backward(loss).unwrap();
    let expected = Matrix::filled(2, 1, 1.0).matmul(&x0.transpose()).unwrap();
    assert_eq!(t.grad(w), &expected);

    let report = grad_check(
        |t, p| {
            let x = t.constant(x0.clone());
            let wx = t.matmul(p[0], x)?;
            let s = t.stop_gradient(wx);
            let both = t.add(wx, s)?;
            Ok(t.sum(both))
        },
        &[w0],
        1e-5,
    )
    .unwrap();
    for (k, n) in report.numeric(0).iter().enumerate() {
        assert!((n - expected.as_slice()[k]).abs() < 1e-8);
    }
    assert!(report.max_rel_error < 1e-8);
}

#[test]
fn cross_entropy_closed_forms() {
    let mut t = Tape::new();
    let z = t.constant(Matrix::zeros(1, 4));
    let target = Matrix::row_vector(&[1.0, 0.0, 0.0, 0.0]);
    let l = t.cross_entropy(z, &target).unwrap();
    assert!((t.scalar(l) - 4f64.ln()).abs() < 1e-12);
    assert!((t.scalar(l) - 1.3863).abs() < 1e-4);

    let z = t.constant(Matrix::zeros(1, 2));
    let l = t.cross_entropy(z, &Matrix::row_vector(&[0.5, 0.5])).unwrap();
    assert!((t.scalar(l) - 2f64.ln()).abs() < 1e-12);

    let z = t.constant(Matrix::row_vector(&[50.0, 0.0, 0.0]));
    let l = t.cross_entropy(z, &Matrix::row_vector(&[1.0, 0.0, 0.0])).unwrap();
    assert!(t.scalar(l) >= 0.0 && t.scalar(l) < 1e-20);

    let bad = Matrix::row_vector(&[0.5, 0.2, 0.0]);
    assert!(matches!(t.cross_entropy(z, &bad), Err(crate::Error::Validation(_))));
}

#[test]
fn mse_cases() {
    let mut t = Tape::new();
    let p = t.constant(Matrix::row_vector(&[1.0, 0.0]));
    let q = Matrix::row_vector(&[0.0, 1.0]);
    let l = t.mse(p, &q).unwrap();
    assert_eq!(t.scalar(l), 2.0);
    let l = t.mse(p, &Matrix::row_vector(&[1.0, 0.0])).unwrap();
    assert_eq!(t.scalar(l), 0.0);

    let a = m(2, 3, &[0.2, 0.3, 0.5, 0.1, 0.1, 0.8]);
    let b = m(2, 3, &[0.6, 0.2, 0.2, 0.3, 0.3, 0.4]);
    let pa = t.constant(a.clone());
    let pb = t.constant(b.clone());
    let ab = t.mse(pa, &b).unwrap();
    let ba = t.mse(pb, &a).unwrap();
    assert_eq!(t.scalar(ab), t.scalar(ba));

    assert!(matches!(t.mse(pa, &Matrix::zeros(1, 3)), Err(crate::Error::Dimension { .. })));
}

#[test]
fn backward_sum_and_accumulation() {
    let mut t = Tape::new();
    let w = t.leaf(Matrix::row_vector(&[0.3, -1.0, 2.0]));
    let s = t.sum(w);
    t.backward(s).unwrap();
    assert_eq!(t.grad(w).as_slice(), &[1.0, 1.0, 1.0]);

    let mut t = Tape::new();
    let w = t.leaf(m(2, 2, &[0.3, -1.0, 2.0, 0.7]));
    let x = t.constant(m(2, 2, &[1.0, 0.5, -0.5, 2.0]));
    let h = t.matmul(x, w).unwrap();
    let sm = t.softmax(h);
    let target = m(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let l = t.mse(sm, &target).unwrap();
    t.backward(l).unwrap();
    let once = t.grad(w).clone();
    t.backward(l).unwrap();
    let twice = t.grad(w).clone();
    for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
        assert_eq!(2.0 * a, *b);
    }
    t.zero_grad();
    assert_eq!(t.grad(w), &Matrix::zeros(2, 2));
}

#[test]
fn backward_rejects_non_scalar() {
    let mut t = Tape::new();
    let w = t.leaf(Matrix::zeros(2, 2));
    assert!(matches!(t.backward(w), Err(crate::Error::Contract(_))));
}

#[test]
fn grad_check_linear_model_is_tight() {
    let x = m(3, 2, &[1.0, 2.0, -1.0, 0.5, 0.3, -0.7]);
    let target = m(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.5, 0.5]);
    let w = m(2, 2, &[0.1, -0.2, 0.3, 0.05]);
    let b = m(1, 2, &[0.0, 0.1]);
    let report = grad_check(
        |t, p| {
            let xv = t.constant(x.clone());
            let h = t.matmul(xv, p[0])?;
            let z = t.add_row(h, p[1])?;
            t.cross_entropy(z, &target)
        },
        &[w, b],
        1e-5,
    )
    .unwrap();
    assert_eq!(report.checked, 6);
    assert!(report.max_rel_error < 1e-8, "{}", report.max_rel_error);
}

#[test]
fn grad_check_mlp_with_relu() {
    let x = m(4, 3, &[0.5, -1.2, 0.8, 1.1, 0.4, -0.6, -0.9, 0.3, 0.2, 0.7, 0.7, -1.5]);
    let target = m(4, 2, &[1.0, 0.0, 0.0, 1.0, 0.3, 0.7, 1.0, 0.0]);
    let w1 = m(3, 4, &[0.4, -0.3, 0.9, 0.2, -0.8, 0.5, 0.1, 0.6, 0.3, 0.7, -0.4, -0.2]);
    let w2 = m(4, 2, &[0.5, -0.6, 0.2, 0.8, -0.7, 0.1, 0.9, -0.3]);
    let report = grad_check(
        |t, p| {
            let xv = t.constant(x.clone());
            let h = t.matmul(xv, p[0])?;
            let h = t.relu(h);
            let z = t.matmul(h, p[1])?;
            t.cross_entropy(z, &target)
        },
        &[w1, w2],
        1e-5,
    )
    .unwrap();
    assert!(report.checked > 0);
    assert!(report.max_rel_error < 1e-4, "{}", report.max_rel_error);
}

#[test]
fn grad_check_reports_zero_for_stopped_path() {
    let w = m(2, 2, &[0.2, 0.4, -0.1, 0.3]);
    let report = grad_check(
        |t, p| {
            let s = t.stop_gradient(p[0]);
            let sm = t.softmax(s);
            t.mse(sm, &Matrix::filled(2, 2, 0.5))
        },
        &[w],
        1e-5,
    )
    .unwrap();
    assert_eq!(report.checked, 4);
    assert!(report.analytic(0).iter().all(|a| *a == 0.0));
    assert!(report.numeric(0).iter().all(|n| *n == 0.0));
    assert!(report.numeric(0).iter().all(|n| *n == 0.0));
}

#[test]
fn grad_check_rejects_bad_step() {
    let r = grad_check(|t, p| Ok(t.sum(p[0])), &[Matrix::zeros(1, 1)], 0.1);
    assert!(r.is_err());
}
