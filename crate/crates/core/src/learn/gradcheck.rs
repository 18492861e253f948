use crate::scalar::Real;

/// Central differences `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h` for every
/// coordinate.
pub fn finite_difference_gradient<T: Real, F: FnMut(&[T]) -> T>(mut f: F, x: &[T], h: T) -> Vec<T> {
    assert!(h > T::zero(), "step must be positive");
    let mut probe = x.to_vec();
    let two_h = h + h;
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / two_h
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or the plain difference norm when both
/// vectors are (near) zero.
pub fn relative_error<T: Real>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len());
    let norm = |v: &mut dyn Iterator<Item = T>| v.map(|x| x * x).sum::<T>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| *x - *y));
    let scale = norm(&mut a.iter().copied()).max(norm(&mut b.iter().copied()));
    if scale < T::lit(1e-12) {
        diff
    } else {
        diff / scale
    }
}
