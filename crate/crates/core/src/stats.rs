//! Statistical helpers shared by experiments and tests: running moments,
//! chi-square goodness-of-fit with bin pooling, and the seed-derivation scheme
//! that gives every Monte Carlo replica an independent, reproducible stream.

/// 64-bit finalizer of the splitmix generator.
fn mix64(x: u64) -> u64 {
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Seed for replica `index` derived from `master`: the `(index + 1)`-th output
/// of a splitmix stream seeded at `master`. Recorded in run manifests so any
/// single replica can be reproduced in isolation.
pub fn replica_seed(master: u64, index: u64) -> u64 {
    mix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Welford accumulator for mean and standard error.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    /// |mean - reference| in units of the standard error; infinite when the
    /// spread is zero but the means differ.
    pub fn z_score(&self, reference: f64) -> f64 {
        let se = self.se();
        let d = (self.mean - reference).abs();
        if se == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d / se
        }
    }
}

/// ln Γ(x) for x > 0 (Lanczos, g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    debug_assert!(x > 0.0);
    let z = x - 1.0;
    let mut a = C[0];
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (z + i as f64);
    }
    let t = z + 7.5;
    0.5 * (2.0 * core::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + a.ln()
}

/// Regularized lower incomplete gamma P(a, x) by series expansion (x < a + 1).
fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..500 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Regularized upper incomplete gamma Q(a, x) by Lentz continued fraction
/// (x >= a + 1).
fn gamma_q_cf(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Survival function of the chi-square distribution with `dof` degrees of
/// freedom: P(X > x).
pub fn chi_square_sf(x: f64, dof: f64) -> f64 {
    assert!(dof > 0.0);
    if x <= 0.0 {
        return 1.0;
    }
    let a = 0.5 * dof;
    let t = 0.5 * x;
    if t < a + 1.0 {
        1.0 - gamma_p_series(a, t)
    } else {
        gamma_q_cf(a, t)
    }
}

/// Outcome of a pooled chi-square goodness-of-fit test.
#[derive(Debug, Clone, Copy)]
pub struct ChiSquareOutcome {
    pub statistic: f64,
    pub dof: u32,
    pub p_value: f64,
    pub pooled_bins: usize,
}

/// Chi-square test of observed counts against expected probabilities. Bins
/// with expected count below `min_expected` are pooled (ascending by expected
/// count) into a single bin, the standard guard for sparse categories.
pub fn chi_square_test(
    observed: &[u64],
    expected_prob: &[f64],
    min_expected: f64,
) -> ChiSquareOutcome {
    assert_eq!(observed.len(), expected_prob.len());
    let n: u64 = observed.iter().sum();
    let nf = n as f64;
    let mut order: Vec<usize> = (0..observed.len()).collect();
    order.sort_by(|&i, &j| expected_prob[i].total_cmp(&expected_prob[j]));

    let mut bins: Vec<(f64, f64)> = Vec::new(); // (observed, expected)
    let mut acc_obs = 0.0;
    let mut acc_exp = 0.0;
    for &i in &order {
        acc_obs += observed[i] as f64;
        acc_exp += expected_prob[i] * nf;
        if acc_exp >= min_expected {
            bins.push((acc_obs, acc_exp));
            acc_obs = 0.0;
            acc_exp = 0.0;
        }
    }
    if acc_exp > 0.0 || acc_obs > 0.0 {
        if let Some(last) = bins.last_mut() {
            last.0 += acc_obs;
            last.1 += acc_exp;
        } else {
            bins.push((acc_obs, acc_exp));
        }
    }

    let statistic: f64 = bins
        .iter()
        .map(|&(o, e)| {
            let d = o - e;
            d * d / e
        })
        .sum();
    let dof = bins.len().saturating_sub(1).max(1) as u32;
    ChiSquareOutcome {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof as f64),
        pooled_bins: bins.len(),
    }
}
