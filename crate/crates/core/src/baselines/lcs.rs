/// Length of the longest common subsequence, two-row dynamic programme.
pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `|LCS(a, b)| / sqrt(|a| |b|)`, in `[0, 1]`; zero if either sequence is empty.
pub fn lcs_kernel<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    lcs_length(a, b) as f64 / ((a.len() as f64) * (b.len() as f64)).sqrt()
}
