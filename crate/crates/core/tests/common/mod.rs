//! Shared helpers for integration tests: independent numerical oracles and
//! small fixture builders.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use svr_core::linalg::Matrix;
use svr_core::nnet::{Arch, Batch, ParamSet};
use svr_core::taskgen::Example;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Unnormalized double-double number `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DD {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DD {
    pub const ZERO: DD = DD { hi: 0.0, lo: 0.0 };
    pub const ONE: DD = DD { hi: 1.0, lo: 0.0 };

    pub fn from(x: f64) -> Self {
        DD { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn add(self, o: DD) -> DD {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        DD { hi, lo }
    }

    pub fn neg(self) -> DD {
        DD {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    pub fn sub(self, o: DD) -> DD {
        self.add(o.neg())
    }

    pub fn mul(self, o: DD) -> DD {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        DD { hi, lo }
    }

    pub fn div(self, o: DD) -> DD {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(DD::from(q1)));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(DD::from(q2)));
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        DD { hi, lo }.add(DD::from(q3))
    }

    pub fn sqrt(self) -> DD {
        if self.hi <= 0.0 {
            return DD::ZERO;
        }
        // One Newton step from the f64 root doubles the precision.
        let x = self.hi.sqrt();
        let xx = DD::from(x).mul(DD::from(x));
        let corr = self.sub(xx).hi / (2.0 * x);
        let (hi, lo) = quick_two_sum(x, corr);
        DD { hi, lo }
    }

    pub fn abs(self) -> DD {
        if self.hi < 0.0 {
            self.neg()
        } else {
            self
        }
    }
}

/// Eigenvalues (descending) of a symmetric matrix by cyclic Jacobi in
/// double-double arithmetic.
pub fn dd_symmetric_eigenvalues(a: &[Vec<DD>]) -> Vec<DD> {
    let n = a.len();
    let mut a: Vec<Vec<DD>> = a.to_vec();
    let frob = a
        .iter()
        .flatten()
        .fold(DD::ZERO, |acc, x| acc.add(x.mul(*x)))
        .sqrt()
        .to_f64();
    for _sweep in 0..100 {
        let mut off = DD::ZERO;
        for p in 0..n {
            for q in p + 1..n {
                off = off.add(a[p][q].mul(a[p][q]));
            }
        }
        if off.sqrt().to_f64() <= 1e-31 * frob.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq.hi == 0.0 {
                    continue;
                }
                let tau = a[q][q].sub(a[p][p]).div(apq.mul(DD::from(2.0)));
                let root = DD::ONE.add(tau.mul(tau)).sqrt();
                let t = if tau.hi >= 0.0 {
                    DD::ONE.div(tau.add(root))
                } else {
                    DD::ONE.div(tau.sub(root))
                };
                let c = DD::ONE.div(DD::ONE.add(t.mul(t)).sqrt());
                let s = t.mul(c);
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c.mul(akp).sub(s.mul(akq));
                    a[k][q] = s.mul(akp).add(c.mul(akq));
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c.mul(apk).sub(s.mul(aqk));
                    a[q][k] = s.mul(apk).add(c.mul(aqk));
                }
            }
        }
    }
    let mut eig: Vec<DD> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(|x, y| y.to_f64().total_cmp(&x.to_f64()));
    eig
}

/// Singular values of `a` (descending, `min(m, n)` of them) from the
/// eigenvalues of the smaller Gram matrix, computed in double-double.
pub fn gram_singular_values(a: &Matrix) -> Vec<f64> {
    let (m, n) = a.shape();
    let (k, gram_entry): (usize, Box<dyn Fn(usize, usize) -> DD>) = if m >= n {
        (
            n,
            Box::new(move |i, j| {
                (0..m).fold(DD::ZERO, |acc, r| {
                    acc.add(DD::from(a.get(r, i)).mul(DD::from(a.get(r, j))))
                })
            }),
        )
    } else {
        (
            m,
            Box::new(move |i, j| {
                (0..n).fold(DD::ZERO, |acc, c| {
                    acc.add(DD::from(a.get(i, c)).mul(DD::from(a.get(j, c))))
                })
            }),
        )
    };
    let g: Vec<Vec<DD>> = (0..k)
        .map(|i| (0..k).map(|j| gram_entry(i, j)).collect())
        .collect();
    dd_symmetric_eigenvalues(&g)
        .into_iter()
        .map(|l| l.sqrt().to_f64())
        .collect()
}

/// Textbook triple-loop product.
pub fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    Matrix::from_fn(a.rows(), b.cols(), |i, j| {
        (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum()
    })
}

pub fn orthonormality_error(q: &Matrix) -> f64 {
    let k = q.cols();
    let mut worst: f64 = 0.0;
    for i in 0..k {
        for j in 0..k {
            let dot: f64 = (0..q.rows()).map(|r| q.get(r, i) * q.get(r, j)).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot - target).abs());
        }
    }
    worst
}

/// Random examples shaped for `arch`, with labels in range.
pub fn random_examples(arch: Arch, n: usize, rng: &mut ChaCha8Rng) -> Vec<Example> {
    (0..n)
        .map(|_| {
            let label = rng.random_range(0..arch.classes) as u8;
            Example {
                frames: (0..arch.frames * arch.input_dim)
                    .map(|_| rng.sample::<f64, _>(StandardNormal) as f32)
                    .collect(),
                frame_labels: (0..arch.frames)
                    .map(|_| rng.random_range(0..arch.classes) as u8)
                    .collect(),
                label,
            }
        })
        .collect()
}

pub fn random_batch(arch: Arch, n: usize, rng: &mut ChaCha8Rng) -> Batch {
    Batch::from_examples(&random_examples(arch, n, rng)).unwrap()
}

pub fn small_arch() -> Arch {
    Arch {
        input_dim: 6,
        hidden_dim: 5,
        classes: 3,
        frames: 3,
    }
}

/// Parameters with every entry drawn from `N(0, scale^2)`.
pub fn random_params(arch: Arch, scale: f64, rng: &mut ChaCha8Rng) -> ParamSet {
    let mut p = ParamSet::zeros(arch);
    let flat: Vec<f64> = (0..p.num_params())
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    p.assign_flat(&flat).unwrap();
    p
}

/// Central finite difference of `f` at `x` along coordinate `i`.
pub fn central_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

/// Relative agreement used by every gradient check.
pub fn grad_close(analytic: f64, numeric: f64, rel: f64) -> bool {
    (analytic - numeric).abs() <= rel * analytic.abs().max(numeric.abs()).max(1e-5)
}
