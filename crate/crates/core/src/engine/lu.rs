//! Dense LU with partial pivoting. Circuit matrices here are a few dozen
//! rows at most.

use super::SolveError;

/// Square MNA system `matrix · x = rhs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MnaSystem {
    pub dimension: usize,
    pub matrix: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl MnaSystem {
    pub fn new(dimension: usize) -> Self {
        Self { dimension, matrix: vec![0.0; dimension * dimension], rhs: vec![0.0; dimension] }
    }

    pub fn from_rows(rows: &[Vec<f64>], rhs: &[f64]) -> Self {
        let n = rows.len();
        let mut s = Self::new(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            s.matrix[i * n..(i + 1) * n].copy_from_slice(row);
        }
        s.rhs.copy_from_slice(rhs);
        s
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.matrix[row * self.dimension + col]
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        self.matrix[row * self.dimension + col] += value;
    }

    pub fn add_rhs(&mut self, row: usize, value: f64) {
        self.rhs[row] += value;
    }

    /// `‖A·x − b‖∞`.
    pub fn residual_norm(&self, x: &[f64]) -> f64 {
        (0..self.dimension)
            .map(|i| {
                let ax: f64 = (0..self.dimension).map(|j| self.get(i, j) * x[j]).sum();
                (ax - self.rhs[i]).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Relative pivot threshold against the pivot row's original norm.
const PIVOT_TOL: f64 = 1e-13;

struct Lu {
    n: usize,
    a: Vec<f64>,
    perm: Vec<usize>,
}

fn factor(s: &MnaSystem) -> Result<Lu, SolveError> {
    let n = s.dimension;
    let mut a = s.matrix.clone();
    if a.iter().any(|v| !v.is_finite()) {
        return Err(SolveError::SingularMatrix { row: 0 });
    }
    let row_norms: Vec<f64> =
        (0..n).map(|i| a[i * n..(i + 1) * n].iter().fold(0.0f64, |m, v| m.max(v.abs()))).collect();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (p, pmag) =
            (k..n)
                .map(|i| (i, a[i * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pmag == 0.0 || pmag < PIVOT_TOL * row_norms[perm[p]] {
            return Err(SolveError::SingularMatrix { row: perm[p] });
        }
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
            perm.swap(k, p);
        }
        let pivot = a[k * n + k];
        for i in k + 1..n {
            let f = a[i * n + k] / pivot;
            if f == 0.0 {
                continue;
            }
            a[i * n + k] = f;
            for j in k + 1..n {
                a[i * n + j] -= f * a[k * n + j];
            }
        }
    }
    Ok(Lu { n, a, perm })
}

impl Lu {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.a[i * n + j] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.a[i * n + j] * x[j]).sum();
            x[i] = (x[i] - s) / self.a[i * n + i];
        }
        x
    }
}

/// Solves the system by LU with partial pivoting plus one step of
/// iterative refinement.
pub fn solve_linear(s: &MnaSystem) -> Result<Vec<f64>, SolveError> {
    let lu = factor(s)?;
    let mut x = lu.solve(&s.rhs);
    let r: Vec<f64> =
        (0..s.dimension).map(|i| s.rhs[i] - (0..s.dimension).map(|j| s.get(i, j) * x[j]).sum::<f64>()).collect();
    let dx = lu.solve(&r);
    for (xi, d) in x.iter_mut().zip(dx) {
        *xi += d;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SolveError::SingularMatrix { row: 0 });
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity() {
        let s =
            MnaSystem::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]], &[3.0, -2.0, 7.5]);
        assert_eq!(solve_linear(&s).unwrap(), vec![3.0, -2.0, 7.5]);
    }

    #[test]
    fn diagonal() {
        let s = MnaSystem::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]], &[2.0, 4.0]);
        assert_eq!(solve_linear(&s).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn singular() {
        let s = MnaSystem::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]], &[1.0, 2.0]);
        assert!(matches!(solve_linear(&s), Err(SolveError::SingularMatrix { .. })));
    }

    #[test]
    fn needs_pivoting() {
        let s = MnaSystem::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]], &[5.0, 6.0]);
        assert_eq!(solve_linear(&s).unwrap(), vec![6.0, 5.0]);
    }

    proptest! {
        #[test]
        fn residual_bound(entries in prop::collection::vec(-10.0f64..10.0, 16), b in prop::collection::vec(-100.0f64..100.0, 4)) {
            // Diagonally dominant, so well conditioned.
            let mut rows = vec![vec![0.0; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    rows[i][j] = entries[i * 4 + j];
                }
                rows[i][i] = 50.0 + entries[i * 4 + i].abs();
            }
            let s = MnaSystem::from_rows(&rows, &b);
            let x = solve_linear(&s).unwrap();
            let bnorm = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(s.residual_norm(&x) <= 1e-9 * bnorm.max(1.0));
        }
    }
}
