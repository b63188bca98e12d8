//! Dense lower-triangular factorization and solves for small symmetric systems.

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = f(i, j);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }
}

/// Lower factor `L` with `L Lᵀ = A`. Returns `None` when a pivot is not
/// strictly positive.
pub fn cholesky(a: &SquareMatrix) -> Option<SquareMatrix> {
    let n = a.dim();
    let mut l = SquareMatrix::zeros(n);
    for j in 0..n {
        let mut diag = a.get(j, j);
        for k in 0..j {
            diag -= l.get(j, k) * l.get(j, k);
        }
        if !(diag > 0.0 && diag.is_finite()) {
            return None;
        }
        let pivot = diag.sqrt();
        l.set(j, j, pivot);
        for i in (j + 1)..n {
            let mut v = a.get(i, j);
            for k in 0..j {
                v -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, v / pivot);
        }
    }
    Some(l)
}

/// Solves `L x = b`.
pub fn solve_lower(l: &SquareMatrix, b: &[f64]) -> Vec<f64> {
    let n = l.dim();
    let mut x = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            x[i] -= l.get(i, k) * x[k];
        }
        x[i] /= l.get(i, i);
    }
    x
}

/// Solves `Lᵀ x = b`.
pub fn solve_upper_transposed(l: &SquareMatrix, b: &[f64]) -> Vec<f64> {
    let n = l.dim();
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            x[i] -= l.get(k, i) * x[k];
        }
        x[i] /= l.get(i, i);
    }
    x
}

/// Largest elementwise deviation of `L Lᵀ` from `a`.
pub fn reconstruction_error(l: &SquareMatrix, a: &SquareMatrix) -> f64 {
    let n = a.dim();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v: f64 = (0..=i.min(j)).map(|k| l.get(i, k) * l.get(j, k)).sum();
            worst = worst.max((v - a.get(i, j)).abs());
        }
    }
    worst
}
