//! Binary partial-sum tree for weighted selection in O(log n).

#[derive(Debug, Clone)]
pub struct SumTree {
    len: usize,
    size: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(weights: &[f64]) -> Self {
        let size = weights.len().next_power_of_two().max(1);
        let mut tree = Self { len: weights.len(), size, nodes: vec![0.0; 2 * size] };
        tree.nodes[size..size + weights.len()].copy_from_slice(weights);
        tree.rebuild();
        tree
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.size + i]
    }

    /// Set leaf `i` and recompute its ancestors from their children.
    #[inline]
    pub fn set(&mut self, i: usize, w: f64) {
        let mut k = self.size + i;
        self.nodes[k] = w;
        while k > 1 {
            k >>= 1;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Append a leaf, doubling the capacity when full.
    pub fn push(&mut self, w: f64) {
        if self.len == self.size {
            let leaves: Vec<f64> = self.nodes[self.size..self.size + self.len].to_vec();
            self.size *= 2;
            self.nodes = vec![0.0; 2 * self.size];
            self.nodes[self.size..self.size + leaves.len()].copy_from_slice(&leaves);
            self.rebuild();
        }
        self.len += 1;
        self.set(self.len - 1, w);
    }

    /// Recompute every internal node from the leaves.
    pub fn rebuild(&mut self) {
        for k in (1..self.size).rev() {
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Exact sum of the leaves, summed in index order.
    pub fn leaf_sum(&self) -> f64 {
        self.nodes[self.size..self.size + self.len].iter().sum()
    }

    /// Leaf whose cumulative interval contains `u`, for `0 <= u < total`.
    /// Zero-weight leaves are never returned.
    #[inline]
    pub fn find(&self, mut u: f64) -> usize {
        let mut k = 1;
        while k < self.size {
            let left = self.nodes[2 * k];
            if u < left {
                k *= 2;
            } else {
                u -= left;
                k = 2 * k + 1;
            }
        }
        let mut i = k - self.size;
        // rounding can land on an empty leaf at the right edge
        if i >= self.len || self.nodes[k] == 0.0 {
            i = (0..self.len).rev().find(|&j| self.get(j) > 0.0).unwrap_or(0);
        }
        i
    }
}
