//! Cholesky factor of `G_AA` for a changing active set `A`, updated by one
//! row/column at a time.

use nalgebra::DMatrix;

/// Relative pivot floor below which an insertion is refused as singular.
const PIVOT_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone)]
pub(crate) struct ActiveFactor {
    idx: Vec<usize>,
    /// Lower triangle of the leading `idx.len()` block is in use.
    l: DMatrix<f64>,
}

impl ActiveFactor {
    pub fn new(p: usize) -> Self {
        ActiveFactor { idx: Vec::new(), l: DMatrix::zeros(p, p) }
    }

    pub fn indices(&self) -> &[usize] {
        &self.idx
    }

    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn position(&self, k: usize) -> Option<usize> {
        self.idx.iter().position(|&j| j == k)
    }

    fn forward(&self, b: &mut [f64]) {
        let s = self.idx.len();
        for j in 0..s {
            let col = self.l.column(j);
            let v = b[j] / col[j];
            b[j] = v;
            for i in j + 1..s {
                b[i] -= col[i] * v;
            }
        }
    }

    fn backward(&self, b: &mut [f64]) {
        let s = self.idx.len();
        for i in (0..s).rev() {
            let col = self.l.column(i);
            let mut v = b[i];
            for j in i + 1..s {
                v -= col[j] * b[j];
            }
            b[i] = v / col[i];
        }
    }

    /// Solves `G_AA x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward(&mut x);
        self.backward(&mut x);
        x
    }

    /// Appends coordinate `k`; returns `false` (leaving the factor unchanged)
    /// when the enlarged block is numerically singular.
    pub fn insert(&mut self, k: usize, gram: &DMatrix<f64>) -> bool {
        let s = self.idx.len();
        let mut w: Vec<f64> = self.idx.iter().map(|&j| gram[(j, k)]).collect();
        self.forward(&mut w);
        let gkk = gram[(k, k)];
        let d2 = gkk - w.iter().map(|v| v * v).sum::<f64>();
        if !(d2 > PIVOT_FLOOR * gkk) || !d2.is_finite() {
            return false;
        }
        for (j, v) in w.into_iter().enumerate() {
            self.l[(s, j)] = v;
        }
        self.l[(s, s)] = d2.sqrt();
        self.idx.push(k);
        true
    }

    /// Deletes the coordinate at `pos`: the rows below shift up and the
    /// trailing block absorbs the removed column as a rank-one update.
    pub fn remove(&mut self, pos: usize) {
        let s = self.idx.len();
        let mut x: Vec<f64> = (pos + 1..s).map(|i| self.l[(i, pos)]).collect();
        for j in 0..s {
            let src = if j < pos { j } else { j + 1 };
            if src >= s {
                break;
            }
            for i in src.max(pos + 1)..s {
                self.l[(i - 1, j)] = self.l[(i, src)];
            }
        }
        let m = s - 1 - pos;
        for a in 0..m {
            let ka = pos + a;
            let lkk = self.l[(ka, ka)];
            let r = lkk.hypot(x[a]);
            let c = r / lkk;
            let sn = x[a] / lkk;
            self.l[(ka, ka)] = r;
            for b in a + 1..m {
                let kb = pos + b;
                let v = (self.l[(kb, ka)] + sn * x[b]) / c;
                self.l[(kb, ka)] = v;
                x[b] = c * x[b] - sn * v;
            }
        }
        for j in 0..s {
            self.l[(s - 1, j)] = 0.0;
        }
        self.idx.remove(pos);
    }

    /// Makes the active set equal to `support`; `false` if some insertion failed.
    pub fn sync(&mut self, support: &[usize], gram: &DMatrix<f64>) -> bool {
        for pos in (0..self.idx.len()).rev() {
            if !support.contains(&self.idx[pos]) {
                self.remove(pos);
            }
        }
        for &k in support {
            if self.position(k).is_none() && !self.insert(k, gram) {
                return false;
            }
        }
        true
    }
}
