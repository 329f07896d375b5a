//! Fixtures and reference solvers shared by the integration tests.
#![allow(dead_code)]

use mechrom::linalg::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `n × r` matrix with orthonormal columns (QR of a Gaussian matrix).
pub fn orthonormal(rng: &mut ChaCha8Rng, n: usize, r: usize) -> Matrix {
    let q = gaussian(rng, n, r).qr().q();
    q.columns(0, r).into_owned()
}

/// Symmetric matrix with eigenvalues drawn uniformly from `[lo, hi]`.
pub fn spd(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Matrix {
    let q = orthonormal(rng, n, n);
    let d = Matrix::from_diagonal(&mechrom::Vector::from_fn(n, |_, _| rng.random_range(lo..=hi)));
    let a = &q * d * q.transpose();
    (&a + a.transpose()) * 0.5
}

/// A constrained-inference problem `(D̂, F̂)` with rank `r`.
///
/// `kind` cycles through data generated by definite operators (constraints
/// inactive), by indefinite operators (constraints active) and pure noise.
pub fn constrained_problem(rng: &mut ChaCha8Rng, r: usize, kind: usize) -> (Matrix, Matrix) {
    let n = 6 * r + 4;
    let d = gaussian(rng, 3 * r, n);
    let f = match kind % 3 {
        0 => {
            let m = spd(rng, r, 0.5, 2.0);
            let e = spd(rng, r, 0.0, 0.5);
            let k = spd(rng, r, 0.5, 3.0);
            let noise = gaussian(rng, r, n) * 0.01;
            m * d.rows(0, r) + e * d.rows(r, r) + k * d.rows(2 * r, r) + noise
        }
        1 => {
            let sym = |a: Matrix| (&a + a.transpose()) * 0.5;
            let m = sym(gaussian(rng, r, r));
            let e = sym(gaussian(rng, r, r));
            let k = sym(gaussian(rng, r, r)) - Matrix::identity(r, r);
            m * d.rows(0, r) + e * d.rows(r, r) + k * d.rows(2 * r, r)
        }
        _ => gaussian(rng, r, n),
    };
    (d, f)
}

/// `‖[M E K] D̂ - F̂‖²_F`.
pub fn constrained_objective(m: &Matrix, e: &Matrix, k: &Matrix, d: &Matrix, f: &Matrix) -> f64 {
    let r = m.nrows();
    (m * d.rows(0, r) + e * d.rows(r, r) + k * d.rows(2 * r, r) - f).norm_squared()
}

/// Symmetric unit matrices spanning `r × r` symmetric matrices.
fn sym_basis(r: usize) -> Vec<Matrix> {
    let mut out = Vec::new();
    for i in 0..r {
        for j in i..r {
            let mut s = Matrix::zeros(r, r);
            s[(i, j)] = 1.0;
            s[(j, i)] = 1.0;
            out.push(s);
        }
    }
    out
}

fn assemble(p: &[f64], basis: &[Matrix], r: usize) -> [Matrix; 3] {
    let q = basis.len();
    let block = |b: usize| {
        basis
            .iter()
            .enumerate()
            .fold(Matrix::zeros(r, r), |acc, (i, s)| acc + s * p[b * q + i])
    };
    [block(0), block(1), block(2)]
}

/// Reference minimizer of `‖[M E K] D̂ - F̂‖²_F` subject to `M ⪰ ωI`, `E ⪰ 0`,
/// `K ⪰ ωI`, computed with a log-det barrier and damped Newton steps.
///
/// Returns the objective and the operators; the optimality gap is below `3r / t_final`.
pub fn barrier_reference(d: &Matrix, f: &Matrix, omega: f64) -> (f64, [Matrix; 3]) {
    let r = f.nrows();
    let basis = sym_basis(r);
    let q = basis.len();
    let dim = 3 * q;
    let shifts = [omega, 0.0, omega];

    // Linear map p ↦ vec([M E K] D̂).
    let cols = f.ncols();
    let mut a = Matrix::zeros(r * cols, dim);
    for b in 0..3 {
        let db = d.rows(b * r, r);
        for (i, s) in basis.iter().enumerate() {
            let image = s * db;
            a.column_mut(b * q + i).copy_from_slice(image.as_slice());
        }
    }
    let target = mechrom::Vector::from_column_slice(f.as_slice());
    let h = a.transpose() * &a * 2.0;
    let g0 = a.transpose() * &target * 2.0;
    let objective = |p: &mechrom::Vector| (&a * p - &target).norm_squared();

    let inverses = |p: &mechrom::Vector| -> Option<Vec<Matrix>> {
        let blocks = assemble(p.as_slice(), &basis, r);
        let mut out = Vec::with_capacity(3);
        for (b, block) in blocks.iter().enumerate() {
            let x = block - Matrix::identity(r, r) * shifts[b];
            let chol = x.cholesky()?;
            out.push(chol.inverse());
        }
        Some(out)
    };
    let log_barrier = |p: &mechrom::Vector| -> Option<f64> {
        let blocks = assemble(p.as_slice(), &basis, r);
        let mut total = 0.0;
        for (b, block) in blocks.iter().enumerate() {
            let x = block - Matrix::identity(r, r) * shifts[b];
            let chol = x.cholesky()?;
            let logdet: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
            total -= logdet;
        }
        Some(total)
    };

    // Strictly feasible start: M = K = (ω + 1) I, E = I.
    let mut p = mechrom::Vector::zeros(dim);
    for b in 0..3 {
        for (i, s) in basis.iter().enumerate() {
            if s.trace() == 1.0 {
                p[b * q + i] = 1.0 + shifts[b];
            }
        }
    }

    let scale = 1.0 + target.norm_squared();
    let mut t = 1.0 / scale;
    let t_final = 3.0 * r as f64 / 1e-11;
    loop {
        for _ in 0..200 {
            let inv = inverses(&p).expect("iterate left the feasible set");
            let mut grad = (&h * &p - &g0) * t;
            let mut hess = &h * t;
            for b in 0..3 {
                let xi = &inv[b];
                for (i, si) in basis.iter().enumerate() {
                    let xs_i = xi * si;
                    grad[b * q + i] -= xs_i.trace();
                    for (j, sj) in basis.iter().enumerate().skip(i) {
                        let v = (&xs_i * xi * sj).trace();
                        hess[(b * q + i, b * q + j)] += v;
                        if i != j {
                            hess[(b * q + j, b * q + i)] += v;
                        }
                    }
                }
            }
            let step = match hess.clone().cholesky() {
                Some(c) => -c.solve(&grad),
                None => -hess.lu().solve(&grad).expect("singular Newton system"),
            };
            let decrement = -grad.dot(&step);
            if decrement / 2.0 < 1e-14 {
                break;
            }
            let phi = |p: &mechrom::Vector| log_barrier(p).map(|lb| t * objective(p) + lb);
            let current = phi(&p).unwrap();
            let mut alpha = 1.0;
            loop {
                let trial = &p + &step * alpha;
                if let Some(value) = phi(&trial) {
                    if value <= current - 0.25 * alpha * decrement {
                        p = trial;
                        break;
                    }
                }
                alpha *= 0.5;
                if alpha < 1e-14 {
                    break;
                }
            }
            if alpha < 1e-14 {
                break;
            }
        }
        if t >= t_final {
            break;
        }
        t = (t * 10.0).min(t_final);
    }
    let blocks = assemble(p.as_slice(), &basis, r);
    (objective(&p), blocks)
}

/// Largest relative Frobenius distance `‖a - b‖ / ‖b‖`.
pub fn rel(a: &Matrix, b: &Matrix) -> f64 {
    let nb = b.norm();
    if nb == 0.0 {
        a.norm()
    } else {
        (a - b).norm() / nb
    }
}
