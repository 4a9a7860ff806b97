//! One-dimensional quadrature: an adaptive Gauss-Kronrod 7/15 integrator for
//! schedule integrals with stated tolerances, and a fixed two-point Gauss rule
//! used by the simulation engine on the short intervals between events.

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    /// Sum of per-interval |K15 - G7| discrepancies, a conservative error proxy.
    pub error_estimate: f64,
    /// False when the recursion hit its depth cap before meeting tolerance.
    pub converged: bool,
}

// 15-point Kronrod abscissae on [0, 1] side of the symmetric rule; odd indices
// are the embedded 7-point Gauss nodes.
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let pair = f(c - x) + f(c + x);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kronrod * h, (kronrod - gauss).abs() * h.abs())
}

fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    seed: (f64, f64),
    budget: f64,
    depth: u32,
    out: &mut QuadResult,
) {
    let (value, err) = seed;
    if err <= budget || depth >= 52 {
        out.value += value;
        out.error_estimate += err;
        out.converged &= err <= budget;
        return;
    }
    let mid = 0.5 * (a + b);
    let left = gk15(f, a, mid);
    let right = gk15(f, mid, b);
    refine(f, a, mid, left, 0.5 * budget, depth + 1, out);
    refine(f, mid, b, right, 0.5 * budget, depth + 1, out);
}

/// Integrate `f` over `[a, b]` to relative tolerance `rel_tol` (with absolute
/// floor `abs_tol` for integrals near zero). The interval is pre-split into
/// eight panels before refinement so that narrow features off the initial
/// node set are still detected.
pub fn adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> QuadResult {
    let mut out = QuadResult {
        value: 0.0,
        error_estimate: 0.0,
        converged: true,
    };
    if a == b {
        return out;
    }
    const PANELS: usize = 8;
    let h = (b - a) / PANELS as f64;
    let seeds: Vec<(f64, f64, (f64, f64))> = (0..PANELS)
        .map(|k| {
            let lo = a + k as f64 * h;
            let hi = if k == PANELS - 1 { b } else { lo + h };
            (lo, hi, gk15(&f, lo, hi))
        })
        .collect();
    let estimate: f64 = seeds.iter().map(|s| s.2 .0).sum();
    let budget = (rel_tol * estimate.abs()).max(abs_tol) / PANELS as f64;
    for (lo, hi, seed) in seeds {
        refine(&f, lo, hi, seed, budget, 0, &mut out);
    }
    out
}

/// Two-point Gauss-Legendre rule on `[a, b]`; exact for cubics. The engine
/// applies it per inter-event interval, where its error is negligible against
/// statistical noise.
pub fn gauss2<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    const INV_SQRT3: f64 = 0.5773502691896258;
    let c = 0.5 * (a + b);
    let d = 0.5 * (b - a) * INV_SQRT3;
    0.5 * (b - a) * (f(c - d) + f(c + d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = adaptive(|x| 3.0 * x * x, 0.0, 2.0, 1e-12, 1e-15);
        assert!((r.value - 8.0).abs() < 1e-13, "got {}", r.value);
        assert!(r.converged);
    }

    #[test]
    fn oscillatory_integral_meets_tolerance() {
        // \int_0^10 sin(x) dx = 1 - cos(10)
        let exact = 1.0 - 10.0_f64.cos();
        let r = adaptive(|x| x.sin(), 0.0, 10.0, 1e-10, 1e-14);
        assert!(r.converged);
        assert!(
            (r.value - exact).abs() < 1e-10,
            "err {}",
            (r.value - exact).abs()
        );
    }

    #[test]
    fn sharp_peak_subdivides() {
        // Narrow Gaussian: forces many levels before the error budget is met.
        let r = adaptive(
            |x: f64| (-((x - 0.37) / 1e-3).powi(2)).exp(),
            0.0,
            1.0,
            1e-8,
            1e-12,
        );
        let exact = 1e-3 * core::f64::consts::PI.sqrt();
        assert!(r.converged);
        assert!((r.value - exact).abs() / exact < 1e-6, "value {}", r.value);
    }

    #[test]
    fn zero_length_interval() {
        let r = adaptive(|x| x.exp(), 1.5, 1.5, 1e-10, 1e-14);
        assert_eq!(r.value, 0.0);
        assert!(r.converged);
    }

    #[test]
    fn gauss2_exact_for_cubics() {
        let v = gauss2(|x| x * x * x - 2.0 * x + 1.0, -1.0, 3.0);
        // antiderivative x^4/4 - x^2 + x over [-1, 3]
        let exact = (81.0 / 4.0 - 9.0 + 3.0) - (0.25 - 1.0 - 1.0);
        assert!((v - exact).abs() < 1e-12);
    }
}
