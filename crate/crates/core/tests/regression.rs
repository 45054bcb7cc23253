use emc_core::rng::SeededRng;
use emc_core::stats::{
    fit_ols, prune_by_vif, transform_columns, vif, vif_all, ColumnTransform, DesignMatrix,
    DEFAULT_VIF_THRESHOLD,
};
use num::traits::float::FloatCore;
use num::{BigInt, BigRational, Integer, One, Signed, ToPrimitive, Zero};
use proptest::prelude::*;

struct Oracle {
    beta: Vec<f64>,
    se: Vec<f64>,
    r2: f64,
    f: f64,
}

/// A column as exact integers times a common power of two.
struct Dyadic {
    ints: Vec<BigInt>,
    shift: i32,
}

impl Dyadic {
    fn new(values: &[f64]) -> Self {
        let parts: Vec<(u64, i16, i8)> = values.iter().map(|v| v.integer_decode()).collect();
        let shift = parts.iter().filter(|p| p.0 != 0).map(|p| p.1).min().unwrap_or(0) as i32;
        let ints = parts
            .iter()
            .map(|&(m, e, sign)| {
                let v = BigInt::from(m) << (e as i32 - shift) as usize;
                if sign < 0 {
                    -v
                } else {
                    v
                }
            })
            .collect();
        Dyadic { ints, shift }
    }

    fn int_dot(&self, other: &Dyadic) -> BigInt {
        self.ints.iter().zip(&other.ints).fold(BigInt::zero(), |acc, (a, b)| acc + a * b)
    }
}

fn pow2(e: i32) -> BigRational {
    let two = BigInt::from(2);
    if e >= 0 {
        BigRational::from_integer(two.pow(e as u32))
    } else {
        BigRational::new(BigInt::one(), two.pow((-e) as u32))
    }
}

/// Exact OLS via the normal equations. Every f64 is dyadic, so with
/// `X = A·S` (`A` integer, `S` a diagonal of powers of two) the system
/// reduces to the integer Gram matrix `AᵀA`, which is inverted by
/// integer-preserving Gauss-Jordan elimination. Only the final square roots
/// are taken in f64.
fn rational_ols(cols: &[Vec<f64>], y: &[f64]) -> Oracle {
    let n = y.len();
    let p = cols.len() + 1;
    let xs: Vec<Dyadic> =
        std::iter::once(Dyadic::new(&vec![1.0; n])).chain(cols.iter().map(|c| Dyadic::new(c))).collect();
    let ys = Dyadic::new(y);
    let width = 2 * p + 1;
    let mut m: Vec<Vec<BigInt>> = (0..p)
        .map(|i| {
            let mut row: Vec<BigInt> = (0..p).map(|j| xs[i].int_dot(&xs[j])).collect();
            row.extend((0..p).map(|j| if i == j { BigInt::one() } else { BigInt::zero() }));
            row.push(xs[i].int_dot(&ys));
            row
        })
        .collect();
    let mut prev = BigInt::one();
    for k in 0..p {
        let piv = (k..p).find(|&r| !m[r][k].is_zero()).expect("full rank");
        m.swap(k, piv);
        for i in (0..p).filter(|&i| i != k) {
            for j in (0..width).filter(|&j| j != k) {
                let num = &m[k][k] * &m[i][j] - &m[i][k] * &m[k][j];
                let (quot, rem) = num.div_rem(&prev);
                assert!(rem.is_zero());
                m[i][j] = quot;
            }
            m[i][k] = BigInt::zero();
        }
        prev = m[k][k].clone();
    }
    // Now every diagonal entry is det(AᵀA); the right blocks are det·(AᵀA)⁻¹ and det·(AᵀA)⁻¹Aᵀy.
    let det = BigRational::from_integer(prev);
    let beta: Vec<BigRational> = (0..p)
        .map(|i| BigRational::from_integer(m[i][2 * p].clone()) / &det * pow2(ys.shift - xs[i].shift))
        .collect();
    let inv_diag: Vec<BigRational> = (0..p)
        .map(|i| BigRational::from_integer(m[i][p + i].clone()) / &det * pow2(-2 * xs[i].shift))
        .collect();
    let yty = BigRational::from_integer(ys.int_dot(&ys)) * pow2(2 * ys.shift);
    let explained = (0..p).fold(BigRational::zero(), |acc, i| {
        acc + &beta[i] * BigRational::from_integer(xs[i].int_dot(&ys)) * pow2(xs[i].shift + ys.shift)
    });
    let rss = &yty - explained;
    let sum_y = BigRational::from_integer(xs[0].int_dot(&ys)) * pow2(xs[0].shift + ys.shift);
    let tss = &yty - &sum_y * &sum_y / BigRational::from_integer(n.into());
    let sigma2 = &rss / BigRational::from_integer((n - p).into());
    let se = inv_diag.iter().map(|d| (&sigma2 * d).abs().to_f64().unwrap().sqrt()).collect();
    let r2 = (BigRational::one() - &rss / &tss).to_f64().unwrap();
    let f = ((&tss - &rss) / BigRational::from_integer((p - 1).into()) / &sigma2).to_f64().unwrap();
    Oracle { beta: beta.iter().map(|b| b.to_f64().unwrap()).collect(), se, r2, f }
}

fn instance(rng: &mut SeededRng) -> (Vec<Vec<f64>>, Vec<f64>) {
    let m = 1 + rng.below(10);
    let n = m + 10 + rng.below(490 - m);
    let scales: Vec<f64> = (0..m).map(|_| 10f64.powf(rng.uniform_range(-3.0, 3.0))).collect();
    let shared: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let cols: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            let rho = rng.uniform_range(0.0, 0.8);
            let offset = rng.uniform_range(-5.0, 5.0);
            (0..n).map(|i| scales[j] * (offset + rho * shared[i] + rng.normal())).collect()
        })
        .collect();
    let beta: Vec<f64> = (0..m)
        .map(|j| rng.uniform_range(0.5, 2.0) * if rng.below(2) == 0 { -1.0 } else { 1.0 } / scales[j])
        .collect();
    let y = (0..n)
        .map(|i| 1.5 + (0..m).map(|j| beta[j] * cols[j][i]).sum::<f64>() + rng.gaussian(0.0, 0.5))
        .collect();
    (cols, y)
}

fn names(m: usize) -> Vec<String> {
    (0..m).map(|j| format!("x{j}")).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn matches_exact_rational_oracle() {
    let mut rng = SeededRng::new(1234);
    for _ in 0..30 {
        let (cols, y) = instance(&mut rng);
        let o = rational_ols(&cols, &y);
        let fit = fit_ols(&DesignMatrix::new(names(cols.len()), cols).unwrap(), &y).unwrap();
        for (c, (b, se)) in fit.coefficients.iter().zip(o.beta.iter().zip(&o.se)) {
            assert!(rel(c.estimate, *b) < 1e-8, "{} vs {}", c.estimate, b);
            assert!(rel(c.std_error, *se) < 1e-8, "{} vs {}", c.std_error, se);
        }
        assert!(rel(fit.r_squared, o.r2) < 1e-8);
        assert!(rel(fit.f_statistic.unwrap(), o.f) < 1e-8);
    }
}

#[test]
fn centering_and_standardizing_only_move_the_intercept() {
    let mut rng = SeededRng::new(77);
    for _ in 0..20 {
        let (cols, y) = instance(&mut rng);
        let x = DesignMatrix::new(names(cols.len()), cols).unwrap();
        let raw = fit_ols(&x, &y).unwrap();
        let centered = fit_ols(&transform_columns(&x, ColumnTransform::Center).unwrap(), &y).unwrap();
        let std = fit_ols(&transform_columns(&x, ColumnTransform::Standardize).unwrap(), &y).unwrap();
        for j in 0..x.ncols() {
            let b = raw.slopes()[j].estimate;
            assert!(rel(centered.slopes()[j].estimate, b) < 1e-9);
            assert!(rel(centered.slopes()[j].t_value, raw.slopes()[j].t_value) < 1e-8);
            assert!(rel(std.slopes()[j].estimate, b * std.scales[j]) < 1e-9);
            assert!(
                rel(std.slopes()[j].p_value, raw.slopes()[j].p_value) < 1e-6
                    || raw.slopes()[j].p_value < 1e-200
            );
        }
        assert!((raw.r_squared - centered.r_squared).abs() < 1e-12);
        // Centered intercept is the mean of y.
        let ybar = y.iter().sum::<f64>() / y.len() as f64;
        assert!(rel(centered.intercept(), ybar) < 1e-10);
    }
}

#[test]
fn vif_two_column_closed_form() {
    let mut rng = SeededRng::new(4);
    let n = 400;
    let a: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let b: Vec<f64> = a.iter().map(|v| 0.7 * v + rng.normal()).collect();
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let sab: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let saa: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let sbb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    let r2 = sab * sab / (saa * sbb);
    let x = DesignMatrix::new(names(2), vec![a, b]).unwrap();
    let expected = 1.0 / (1.0 - r2);
    assert!(rel(vif(&x, 0).unwrap(), expected) < 1e-10);
    assert!(rel(vif(&x, 1).unwrap(), expected) < 1e-10);
}

#[test]
fn pruning_terminates_below_threshold() {
    let mut rng = SeededRng::new(10);
    for _ in 0..10 {
        let n = 200;
        let base: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| rng.normal()).collect()).collect();
        let mut cols = base.clone();
        cols.push((0..n).map(|i| base[0][i] + base[1][i] + 0.05 * rng.normal()).collect());
        cols.push((0..n).map(|i| base[2][i] - base[0][i] + 0.05 * rng.normal()).collect());
        let x = DesignMatrix::new(names(5), cols).unwrap();
        let (kept, table) = prune_by_vif(&x, DEFAULT_VIF_THRESHOLD).unwrap();
        assert!(vif_all(&kept).unwrap().iter().all(|&v| v < DEFAULT_VIF_THRESHOLD));
        assert_eq!(kept.ncols() + table.history.len(), 5);
        let again = prune_by_vif(&x, DEFAULT_VIF_THRESHOLD).unwrap();
        assert_eq!(again.1, table);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn residuals_are_orthogonal(seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let (cols, y) = instance(&mut rng);
        let x = DesignMatrix::new(names(cols.len()), cols).unwrap();
        let fit = fit_ols(&x, &y).unwrap();
        let resid: Vec<f64> = (0..x.nrows()).map(|i| y[i] - fit.predict(&x.row(i))).collect();
        let ysc = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
        prop_assert!(resid.iter().sum::<f64>().abs() < 1e-8 * ysc * x.nrows() as f64);
        for j in 0..x.ncols() {
            let col = x.column(j);
            let csc = col.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let d: f64 = col.iter().zip(&resid).map(|(a, b)| a * b).sum();
            prop_assert!(d.abs() < 1e-8 * csc * ysc * x.nrows() as f64);
        }
        prop_assert!(fit.r_squared >= 0.0 && fit.r_squared <= 1.0);
    }

    #[test]
    fn vif_is_at_least_one_and_order_free(seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let (cols, _) = instance(&mut rng);
        prop_assume!(cols.len() >= 2);
        let m = cols.len();
        let x = DesignMatrix::new(names(m), cols).unwrap();
        let v = vif_all(&x).unwrap();
        prop_assert!(v.iter().all(|&f| f >= 1.0));
        let reversed: Vec<String> = x.names().iter().rev().cloned().collect();
        let refs: Vec<&str> = reversed.iter().map(String::as_str).collect();
        let xr = x.select(&refs).unwrap();
        let vr = vif_all(&xr).unwrap();
        for j in 0..m {
            prop_assert!(rel(vr[m - 1 - j], v[j]) < 1e-9);
        }
    }
}
