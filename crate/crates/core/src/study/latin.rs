/// Cyclic Latin square over `items`: row `i` is `items` rotated left by `i`.
pub fn latin_square_orders<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    let k = items.len();
    (0..k)
        .map(|row| (0..k).map(|col| items[(row + col) % k].clone()).collect())
        .collect()
}

/// Round-robin row assignment for the `enrollment_index`-th participant (0-based).
pub fn row_for_enrollment(enrollment_index: usize, k: usize) -> usize {
    enrollment_index % k
}
