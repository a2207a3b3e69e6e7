//! Symmetric matrices stored as their upper triangle (diagonal included).

use serde::{Deserialize, Serialize};

/// Row-major packed index of `(min(k,l), max(k,l))` in a `dim`-sized upper triangle.
#[inline]
pub fn tri_index(dim: usize, k: usize, l: usize) -> usize {
    let (a, b) = if k <= l { (k, l) } else { (l, k) };
    debug_assert!(b < dim);
    a * (2 * dim - a + 1) / 2 + (b - a)
}

/// Number of unordered pairs with repetition, `dim (dim + 1) / 2`.
#[inline]
pub fn tri_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// A symmetric `dim × dim` matrix; `get(k, l) == get(l, k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriMatrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Clone> TriMatrix<T> {
    pub fn filled(dim: usize, value: T) -> Self {
        Self {
            dim,
            data: vec![value; tri_len(dim)],
        }
    }
}

impl<T: Clone + Default> TriMatrix<T> {
    pub fn new(dim: usize) -> Self {
        Self::filled(dim, T::default())
    }
}

impl<T> TriMatrix<T> {
    /// Build from a closure over `k <= l`.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(tri_len(dim));
        for k in 0..dim {
            for l in k..dim {
                data.push(f(k, l));
            }
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize) -> &T {
        &self.data[tri_index(self.dim, k, l)]
    }

    #[inline]
    pub fn get_mut(&mut self, k: usize, l: usize) -> &mut T {
        let idx = tri_index(self.dim, k, l);
        &mut self.data[idx]
    }

    #[inline]
    pub fn set(&mut self, k: usize, l: usize, value: T) {
        *self.get_mut(k, l) = value;
    }

    /// Packed values in `(0,0), (0,1), …, (0,d-1), (1,1), …` order.
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Iterate `(k, l, &value)` over `k <= l`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &T)> {
        let dim = self.dim;
        (0..dim)
            .flat_map(move |k| (k..dim).map(move |l| (k, l)))
            .zip(self.data.iter())
            .map(|((k, l), v)| (k, l, v))
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> TriMatrix<U> {
        TriMatrix {
            dim: self.dim,
            data: self.data.iter().map(&mut f).collect(),
        }
    }
}

impl<T: Copy> TriMatrix<T> {
    #[inline]
    pub fn at(&self, k: usize, l: usize) -> T {
        self.data[tri_index(self.dim, k, l)]
    }

    /// Dense row-major `dim × dim` copy.
    pub fn to_dense(&self) -> Vec<Vec<T>> {
        (0..self.dim)
            .map(|k| (0..self.dim).map(|l| self.at(k, l)).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packed_index_covers_triangle_once() {
        for dim in 1..8 {
            let mut seen = vec![false; tri_len(dim)];
            for k in 0..dim {
                for l in k..dim {
                    let idx = tri_index(dim, k, l);
                    assert!(!seen[idx]);
                    seen[idx] = true;
                    assert_eq!(idx, tri_index(dim, l, k));
                }
            }
            assert!(seen.into_iter().all(|s| s));
        }
    }

    #[test]
    fn iter_matches_get() {
        let m = TriMatrix::from_fn(4, |k, l| 10 * k + l);
        for (k, l, v) in m.iter() {
            assert!(k <= l);
            assert_eq!(*v, 10 * k + l);
            assert_eq!(m.at(l, k), *v);
        }
    }
}
