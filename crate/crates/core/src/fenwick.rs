//! Binary-indexed tree over non-negative weights for O(log n) weighted
//! selection with point updates.

#[derive(Debug, Clone, Default)]
pub struct Fenwick {
    weights: Vec<f64>,
    tree: Vec<f64>,
    len: usize,
}

impl Fenwick {
    pub fn with_capacity(cap: usize) -> Self {
        let cap = cap.max(1).next_power_of_two();
        Self {
            weights: vec![0.0; cap],
            tree: vec![0.0; cap + 1],
            len: 0,
        }
    }

    pub fn from_weights(w: &[f64]) -> Self {
        let mut f = Self::with_capacity(w.len());
        f.weights[..w.len()].copy_from_slice(w);
        f.len = w.len();
        f.rebuild();
        f
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// Append a slot with weight `w`, growing the tree as needed.
    pub fn push(&mut self, w: f64) -> usize {
        if self.len == self.weights.len() {
            let cap = 2 * self.weights.len();
            self.weights.resize(cap, 0.0);
            self.tree = vec![0.0; cap + 1];
            self.weights[self.len] = w;
            self.len += 1;
            self.rebuild();
        } else {
            self.weights[self.len] = 0.0;
            self.len += 1;
            self.set(self.len - 1, w);
        }
        self.len - 1
    }

    pub fn set(&mut self, i: usize, w: f64) {
        debug_assert!(w >= 0.0 && i < self.len);
        let delta = w - self.weights[i];
        self.weights[i] = w;
        let mut k = i + 1;
        while k < self.tree.len() {
            self.tree[k] += delta;
            k += k & k.wrapping_neg();
        }
    }

    /// Recompute all partial sums from the stored weights.
    pub fn rebuild(&mut self) {
        let n = self.weights.len();
        self.tree.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let k = i + 1;
            self.tree[k] += self.weights[i];
            let parent = k + (k & k.wrapping_neg());
            if parent <= n {
                let v = self.tree[k];
                self.tree[parent] += v;
            }
        }
    }

    pub fn total(&self) -> f64 {
        self.tree[self.weights.len()]
    }

    /// Slot `i` with `prefix(i) ≤ u < prefix(i + 1)`, skipping zero weights.
    pub fn find(&self, u: f64) -> usize {
        let n = self.weights.len();
        let mut pos = 0;
        let mut rem = u;
        let mut step = n;
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= rem {
                pos = next;
                rem -= self.tree[next];
            }
            step >>= 1;
        }
        // Rounding can land on a trailing zero-weight slot; step back to the
        // last live one.
        let mut i = pos.min(self.len.saturating_sub(1));
        while self.weights[i] == 0.0 && i > 0 {
            i -= 1;
        }
        i
    }
}
