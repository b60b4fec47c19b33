//! Dense two-phase simplex for the tiny LPs of the rounding step.

use nalgebra::DMatrix;

/// Feasibility and optimality tolerance.
pub const LP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

/// Maximizes `c^T x` subject to `A x = b`, `x >= 0`, with Bland's rule.
pub fn maximize(c: &[f64], a: &DMatrix<f64>, b: &[f64]) -> LpOutcome {
    let (m, nv) = a.shape();
    assert_eq!(c.len(), nv);
    assert_eq!(b.len(), m);
    // columns: x (nv), artificials (m), rhs
    let width = nv + m + 1;
    let mut t = DMatrix::zeros(m + 1, width);
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..nv {
            t[(i, j)] = sign * a[(i, j)];
        }
        t[(i, nv + i)] = 1.0;
        t[(i, width - 1)] = sign * b[i];
    }
    let mut basis: Vec<usize> = (nv..nv + m).collect();

    // phase one: minimize the artificial sum, i.e. maximize its negation
    let mut obj = vec![0.0; width - 1];
    obj[nv..nv + m].iter_mut().for_each(|v| *v = -1.0);
    set_objective(&mut t, &basis, &obj);
    if run(&mut t, &mut basis, nv + m).is_err() {
        return LpOutcome::Infeasible;
    }
    let scale = 1.0 + b.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    // the corner holds the remaining artificial mass
    if t[(m, width - 1)] > LP_TOL * scale {
        return LpOutcome::Infeasible;
    }
    // drive artificials out of the basis; rows that cannot pivot are redundant
    let mut keep_rows: Vec<usize> = Vec::new();
    for i in 0..m {
        if basis[i] < nv {
            keep_rows.push(i);
            continue;
        }
        if let Some(j) = (0..nv).find(|&j| t[(i, j)].abs() > LP_TOL) {
            pivot(&mut t, i, j);
            basis[i] = j;
            keep_rows.push(i);
        }
    }
    let m2 = keep_rows.len();
    let mut t2 = DMatrix::zeros(m2 + 1, nv + 1);
    let mut basis2 = Vec::with_capacity(m2);
    for (r, &i) in keep_rows.iter().enumerate() {
        for j in 0..nv {
            t2[(r, j)] = t[(i, j)];
        }
        t2[(r, nv)] = t[(i, width - 1)];
        basis2.push(basis[i]);
    }
    set_objective(&mut t2, &basis2, c);
    if run(&mut t2, &mut basis2, nv).is_err() {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![0.0; nv];
    for (r, &j) in basis2.iter().enumerate() {
        x[j] = t2[(r, nv)].max(0.0);
    }
    let value = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    LpOutcome::Optimal { x, value }
}

/// Writes reduced costs of `obj` into the last row (row holds `obj - z`,
/// entering columns have positive entries) and `-z` in the corner.
fn set_objective(t: &mut DMatrix<f64>, basis: &[usize], obj: &[f64]) {
    let (rows, width) = t.shape();
    let m = rows - 1;
    for j in 0..width {
        t[(m, j)] = if j < obj.len() { obj[j] } else { 0.0 };
    }
    for (i, &bj) in basis.iter().enumerate() {
        let cb = obj[bj];
        if cb != 0.0 {
            for j in 0..width {
                t[(m, j)] -= cb * t[(i, j)];
            }
        }
    }
}

fn pivot(t: &mut DMatrix<f64>, row: usize, col: usize) {
    let (rows, width) = t.shape();
    let p = t[(row, col)];
    for j in 0..width {
        t[(row, j)] /= p;
    }
    for i in 0..rows {
        if i == row {
            continue;
        }
        let f = t[(i, col)];
        if f != 0.0 {
            for j in 0..width {
                t[(i, j)] -= f * t[(row, j)];
            }
        }
    }
}

/// Simplex iterations over the first `ncols` columns. `Err` means unbounded.
fn run(t: &mut DMatrix<f64>, basis: &mut [usize], ncols: usize) -> Result<(), ()> {
    let (rows, width) = t.shape();
    let m = rows - 1;
    let rhs = width - 1;
    loop {
        let Some(enter) = (0..ncols).find(|&j| t[(m, j)] > LP_TOL) else {
            return Ok(());
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let a = t[(i, enter)];
            if a > LP_TOL {
                let ratio = t[(i, rhs)] / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - LP_TOL || (ratio <= lr + LP_TOL && basis[i] < basis[li]) {
                            Some((i, ratio))
                        } else {
                            Some((li, lr))
                        }
                    }
                };
            }
        }
        let Some((row, _)) = leave else {
            return Err(());
        };
        pivot(t, row, enter);
        basis[row] = enter;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 (slacks s1..s3)
        let a = DMatrix::from_row_slice(3, 5, &[
            1.0, 0.0, 1.0, 0.0, 0.0, //
            0.0, 2.0, 0.0, 1.0, 0.0, //
            3.0, 2.0, 0.0, 0.0, 1.0,
        ]);
        match maximize(&[3.0, 5.0, 0.0, 0.0, 0.0], &a, &[4.0, 12.0, 18.0]) {
            LpOutcome::Optimal { x, value } => {
                assert_relative_eq!(value, 36.0, epsilon = 1e-9);
                assert_relative_eq!(x[0], 2.0, epsilon = 1e-9);
                assert_relative_eq!(x[1], 6.0, epsilon = 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn infeasible_and_unbounded() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(maximize(&[1.0, 0.0], &a, &[1.0, 2.0]), LpOutcome::Infeasible);
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        assert_eq!(maximize(&[1.0, 0.0], &a, &[0.0]), LpOutcome::Unbounded);
    }

    #[test]
    fn redundant_rows_and_negative_rhs() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -2.0, -2.0]);
        match maximize(&[1.0, 2.0], &a, &[1.0, -2.0]) {
            LpOutcome::Optimal { value, .. } => assert_relative_eq!(value, 2.0, epsilon = 1e-9),
            other => panic!("{other:?}"),
        }
    }
}
