//! Reductions with a fixed evaluation order.
//!
//! Inputs are cut into chunks of [`CHUNK`] items that are folded left to right;
//! chunk partials are then combined pairwise, level by level. The order depends
//! only on the input length, so results are bit-identical across runs and thread
//! counts.

pub const CHUNK: usize = 1024;

pub fn tree_sum(xs: &[f64]) -> f64 {
    let partials: Vec<f64> = xs.chunks(CHUNK).map(|c| c.iter().fold(0.0, |a, b| a + b)).collect();
    pairwise(partials, |a, b| a + b).unwrap_or(0.0)
}

/// Folds `items` with `combine` in the fixed chunked/pairwise order.
pub fn tree_reduce<T, F>(items: Vec<T>, combine: F) -> Option<T>
where
    F: Fn(T, T) -> T,
{
    let mut partials = Vec::with_capacity(items.len().div_ceil(CHUNK));
    let mut iter = items.into_iter();
    loop {
        let mut chunk = iter.by_ref().take(CHUNK);
        let Some(first) = chunk.next() else { break };
        partials.push(chunk.fold(first, &combine));
    }
    pairwise(partials, combine)
}

fn pairwise<T, F>(mut level: Vec<T>, combine: F) -> Option<T>
where
    F: Fn(T, T) -> T,
{
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        let mut it = level.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(combine(a, b)),
                None => next.push(a),
            }
        }
        level = next;
    }
    level.pop()
}

/// Elementwise mean of equally sized vectors in the fixed reduction order.
pub fn tree_mean_vectors(vectors: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = vectors.len() as f64;
    tree_reduce(vectors, |mut a, b| {
        for (x, y) in a.iter_mut().zip(b) {
            *x += y;
        }
        a
    })
    .map(|mut s| {
        s.iter_mut().for_each(|v| *v /= n);
        s
    })
}
