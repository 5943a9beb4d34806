//! Test-only helpers and independent oracles.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vcpanel::bspline::{make_basis, Basis, SplineSpec};
use vcpanel::design::build_design;
use vcpanel::panel::{validate_panel, PanelData, RawPanel, Support};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller keeps the helpers independent of the library's sampling
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| normal(rng))
}

pub fn unit() -> Support {
    Support::new(0.0, 1.0).unwrap()
}

pub fn bases(p: usize, degree: usize, interior: usize) -> Vec<Basis> {
    vec![make_basis(&SplineSpec::new(degree, interior as isize, unit())).unwrap(); p]
}

/// A panel with intercept plus `p - 1` normal regressors, `U ~ Uniform[0,1]`
/// on the declared unit support, and response `Y = R gamma + effect + noise`.
pub struct Synthetic {
    pub panel: PanelData,
    pub bases: Vec<Basis>,
    pub gamma: DVector<f64>,
}

pub fn synthetic(
    rng: &mut ChaCha8Rng,
    n: usize,
    t: usize,
    bases: Vec<Basis>,
    effect: &DMatrix<f64>,
    noise_sd: f64,
) -> Synthetic {
    synthetic_with(rng, n, t, bases, effect, noise_sd, true)
}

/// Like [`synthetic`] but every regressor is random (no intercept column).
pub fn synthetic_slopes(
    rng: &mut ChaCha8Rng,
    n: usize,
    t: usize,
    bases: Vec<Basis>,
    effect: &DMatrix<f64>,
    noise_sd: f64,
) -> Synthetic {
    synthetic_with(rng, n, t, bases, effect, noise_sd, false)
}

fn synthetic_with(
    rng: &mut ChaCha8Rng,
    n: usize,
    t: usize,
    bases: Vec<Basis>,
    effect: &DMatrix<f64>,
    noise_sd: f64,
    intercept: bool,
) -> Synthetic {
    let p = bases.len();
    let mut x = Vec::new();
    if intercept {
        x.push(DMatrix::from_element(n, t, 1.0));
    }
    while x.len() < p {
        x.push(normal_matrix(rng, n, t));
    }
    let u = DMatrix::from_fn(n, t, |_, _| rng.random::<f64>());
    let raw = RawPanel {
        y: DMatrix::zeros(n, t),
        x,
        u,
        support: Some(unit()),
    };
    let shell = validate_panel(raw).unwrap();
    let q: usize = bases.iter().map(|b| b.n_functions()).sum();
    let gamma = DVector::from_fn(q, |_, _| normal(rng));
    let design = build_design(&shell, &bases).unwrap();
    let noise = normal_matrix(rng, n, t) * noise_sd;
    let y = design.fitted(&gamma) + effect + noise;
    Synthetic {
        panel: shell.with_response(y).unwrap(),
        bases,
        gamma,
    }
}

/// Orthogonal projector onto the column space of `f`.
pub fn col_projector(f: &DMatrix<f64>) -> DMatrix<f64> {
    let g = f.tr_mul(f).try_inverse().unwrap();
    f * g * f.transpose()
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix, descending.
pub fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    for _ in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut v: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    v.sort_by(|x, y| y.total_cmp(x));
    v
}

/// Nelder-Mead minimizer.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, start: &[f64], step: f64, iters: usize) -> (Vec<f64>, f64) {
    let d = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for j in 0..d {
        let mut v = start.to_vec();
        v[j] += step;
        simplex.push(v);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    for _ in 0..iters {
        let mut idx: Vec<usize> = (0..=d).collect();
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        vals = idx.iter().map(|&i| vals[i]).collect();
        let spread = (vals[d] - vals[0]).abs();
        let size: f64 = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= 1e-16 * vals[0].abs().max(1e-300) && size < 1e-12 {
            break;
        }
        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|v| v[j]).sum::<f64>() / d as f64)
            .collect();
        let along = |coef: f64| -> Vec<f64> {
            (0..d).map(|j| centroid[j] + coef * (simplex[d][j] - centroid[j])).collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[d] = xe;
                vals[d] = fe;
            } else {
                simplex[d] = xr;
                vals[d] = fr;
            }
        } else if fr < vals[d - 1] {
            simplex[d] = xr;
            vals[d] = fr;
        } else {
            let xc = if fr < vals[d] { along(-0.5) } else { along(0.5) };
            let fc = f(&xc);
            if fc < vals[d].min(fr) {
                simplex[d] = xc;
                vals[d] = fc;
            } else {
                for k in 1..=d {
                    simplex[k] = (0..d)
                        .map(|j| simplex[0][j] + 0.5 * (simplex[k][j] - simplex[0][j]))
                        .collect();
                    vals[k] = f(&simplex[k]);
                }
            }
        }
    }
    let best = (0..=d).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    (simplex[best].clone(), vals[best])
}

/// `[-1_{k-1}  I_{k-1}]'`, the `k x (k-1)` sum-zero coding.
pub fn sum_zero_coding(k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(k, k - 1, |r, c| {
        if r == 0 {
            -1.0
        } else if r == c + 1 {
            1.0
        } else {
            0.0
        }
    })
}

/// Subject dummies `D` and period dummies `S` built literally by Kronecker products.
pub fn dummy_matrices(n: usize, t: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = sum_zero_coding(n).kronecker(&DMatrix::from_element(t, 1, 1.0));
    let s = DMatrix::from_element(n, 1, 1.0).kronecker(&sum_zero_coding(t));
    (d, s)
}

/// `I - X (X'X)^-1 X'`, formed explicitly.
pub fn annihilator(x: &DMatrix<f64>) -> DMatrix<f64> {
    let k = x.nrows();
    DMatrix::identity(k, k) - x * x.tr_mul(x).try_inverse().unwrap() * x.transpose()
}

/// Subject-major vector of an `N x T` matrix.
pub fn vec_subject_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (n, t) = m.shape();
    (0..n * t).map(|k| m[(k / t, k % t)]).collect()
}
