//! Smoothing maps pulling trajectories toward the usable interior domain.
//!
//! Two density regularizers: a pointwise convex mix with the reference
//! profile, and a per-slice elliptic resolvent of the pinned-edge Laplacian
//! applied to the deviation from the reference. Both keep values in `[0, 1]`
//! and restore exact boundary values. Current paths are tamed separately by
//! clamping their slopes.

use super::FunctionalError;
use crate::grid::{CurrentPath, DensityField};
use crate::protocol::{BoundaryProtocol, Side};

/// Solve a tridiagonal system with constant off-diagonals `off` and constant
/// diagonal `diag` in place; `rhs` becomes the solution.
fn solve_constant_tridiagonal(diag: f64, off: f64, rhs: &mut [f64]) {
    let n = rhs.len();
    if n == 0 {
        return;
    }
    let mut scratch = vec![0.0; n];
    let mut denom = diag;
    scratch[0] = off / denom;
    rhs[0] /= denom;
    for k in 1..n {
        denom = diag - off * scratch[k - 1];
        scratch[k] = off / denom;
        rhs[k] = (rhs[k] - off * rhs[k - 1]) / denom;
    }
    for k in (0..n - 1).rev() {
        rhs[k] -= scratch[k] * rhs[k + 1];
    }
}

/// Pointwise convex combination with the reference profile:
/// `(1 - eps) * rho + eps * reference`.
pub fn regularize_convex(
    rho: &DensityField,
    protocol: &BoundaryProtocol,
    eps: f64,
) -> Result<DensityField, FunctionalError> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(FunctionalError::BadParameter(format!(
            "mixing weight {eps} outside [0, 1]"
        )));
    }
    let g = rho.grid().clone();
    let mut values = Vec::with_capacity(g.nodes());
    for i in 0..g.nt() {
        for j in 0..g.ny() {
            let reference = protocol.profile(g.t(i), g.y(j));
            values.push((1.0 - eps) * rho.get(i, j) + eps * reference);
        }
    }
    Ok(DensityField::new(g, values)?)
}

/// Per-slice elliptic smoothing: the deviation from the reference profile is
/// passed through the resolvent of the pinned-edge second-difference
/// operator, and the edges are reset to the exact reservoir values.
pub fn regularize_resolvent(
    rho: &DensityField,
    protocol: &BoundaryProtocol,
    eps: f64,
) -> Result<DensityField, FunctionalError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(FunctionalError::BadParameter(format!(
            "resolvent scale {eps} must be positive"
        )));
    }
    let g = rho.grid().clone();
    let dy = g.dy();
    let c = eps / (dy * dy);
    let mut values = Vec::with_capacity(g.nodes());
    let mut deviation = vec![0.0; g.m_y() - 1];
    for i in 0..g.nt() {
        let t = g.t(i);
        for (k, dev) in deviation.iter_mut().enumerate() {
            let j = k + 1;
            *dev = rho.get(i, j) - protocol.profile(t, g.y(j));
        }
        solve_constant_tridiagonal(1.0 + 2.0 * c, -c, &mut deviation);
        values.push(protocol.density(Side::Left, t));
        for (k, dev) in deviation.iter().enumerate() {
            // resolvent kernel is positive with mass at most one, so the
            // reference plus smoothed deviation stays inside [0, 1]
            values.push((protocol.profile(t, g.y(k + 1)) + dev).clamp(0.0, 1.0));
        }
        values.push(protocol.density(Side::Right, t));
    }
    Ok(DensityField::new(g, values)?)
}

/// Sup-norm residual between the space gradient of the resolvent-smoothed
/// field and the reflecting-edge resolvent applied to the gradient of the
/// raw field. The two agree to second order in the space step for fields
/// matching the reservoirs at the edges.
pub fn resolvent_identity_residual(
    rho: &DensityField,
    protocol: &BoundaryProtocol,
    eps: f64,
) -> Result<f64, FunctionalError> {
    let smoothed = regularize_resolvent(rho, protocol, eps)?;
    let g = rho.grid();
    let dy = g.dy();
    let c = eps / (dy * dy);
    let n = g.ny();
    let mut worst: f64 = 0.0;
    let mut gradient = vec![0.0; n];
    for i in 0..g.nt() {
        for (j, gr) in gradient.iter_mut().enumerate() {
            *gr = if j == 0 {
                (-3.0 * rho.get(i, 0) + 4.0 * rho.get(i, 1) - rho.get(i, 2)) / (2.0 * dy)
            } else if j == n - 1 {
                (3.0 * rho.get(i, n - 1) - 4.0 * rho.get(i, n - 2) + rho.get(i, n - 3)) / (2.0 * dy)
            } else {
                (rho.get(i, j + 1) - rho.get(i, j - 1)) / (2.0 * dy)
            };
        }
        solve_reflecting_resolvent(c, &mut gradient);
        for j in 1..n - 1 {
            let direct = (smoothed.get(i, j + 1) - smoothed.get(i, j - 1)) / (2.0 * dy);
            worst = worst.max((direct - gradient[j]).abs());
        }
    }
    Ok(worst)
}

/// Solve `(I - eps * Lap_reflecting) x = rhs` in place, with the mirrored
/// ghost-node second difference at both ends; `c = eps / dy^2`.
fn solve_reflecting_resolvent(c: f64, rhs: &mut [f64]) {
    let n = rhs.len();
    let mut sub = vec![-c; n - 1];
    let mut diag = vec![1.0 + 2.0 * c; n];
    let mut sup = vec![-c; n - 1];
    sup[0] = -2.0 * c;
    sub[n - 2] = -2.0 * c;
    // general Thomas sweep (non-constant first/last rows)
    for k in 1..n {
        let w = sub[k - 1] / diag[k - 1];
        diag[k] -= w * sup[k - 1];
        rhs[k] -= w * rhs[k - 1];
    }
    rhs[n - 1] /= diag[n - 1];
    for k in (0..n - 1).rev() {
        rhs[k] = (rhs[k] - sup[k] * rhs[k + 1]) / diag[k];
    }
}

/// Current path with the same increments clamped to `[-k, k]`.
pub fn truncate_current(j: &CurrentPath, k: f64) -> Result<CurrentPath, FunctionalError> {
    if !(k > 0.0) {
        return Err(FunctionalError::BadParameter(format!(
            "slope bound {k} must be positive"
        )));
    }
    let g = j.grid().clone();
    let dt = g.dt();
    let mut values = Vec::with_capacity(g.nt());
    values.push(0.0);
    for i in 0..g.m_t() {
        let clamped = j.slope(i).clamp(-k, k);
        values.push(values[i] + clamped * dt);
    }
    Ok(CurrentPath::new(g, values)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::stats::replica_seed;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn protocol() -> BoundaryProtocol {
        BoundaryProtocol::constant(0.2, 0.8, 1.0).unwrap()
    }

    fn reference_field(p: &BoundaryProtocol, g: &Grid) -> DensityField {
        DensityField::from_fn(g.clone(), |t, y| p.profile(t, y)).unwrap()
    }

    fn wiggly_field(p: &BoundaryProtocol, g: &Grid, seed: u64) -> DensityField {
        let mut rng = ChaCha8Rng::seed_from_u64(replica_seed(seed, 0));
        let (a, b) = (rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        DensityField::from_fn(g.clone(), |t, y| {
            let bump =
                (1.0 - y * y) * (0.3 * a * (2.5 * y + t).sin() + 0.2 * b * (4.0 * y).cos() * t);
            (p.profile(t, y) + bump).clamp(0.02, 0.98)
        })
        .unwrap()
    }

    #[test]
    fn convex_mix_endpoints() {
        let p = protocol();
        let g = Grid::new(1.0, 6, 12).unwrap();
        let rho = wiggly_field(&p, &g, 31);
        let same = regularize_convex(&rho, &p, 0.0).unwrap();
        assert_eq!(same.values(), rho.values());
        let full = regularize_convex(&rho, &p, 1.0).unwrap();
        let reference = reference_field(&p, &g);
        for (a, b) in full.values().iter().zip(reference.values()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(regularize_convex(&rho, &p, 1.5).is_err());
    }

    #[test]
    fn convex_mix_interpolates_cost() {
        use crate::functional::rate::rate_functional;
        use crate::functional::RateOptions;
        let p = protocol();
        let g = Grid::new(1.0, 10, 10).unwrap();
        let rho = wiggly_field(&p, &g, 32);
        let j = CurrentPath::from_fn(g.clone(), |t| 0.25 * t).unwrap();
        let opts = RateOptions::default();
        let eps = 0.37;
        let mixed = regularize_convex(&rho, &p, eps).unwrap();
        let i_rho = rate_functional(&j, &rho, &p, &opts).unwrap().total;
        let i_ref = rate_functional(&j, &reference_field(&p, &g), &p, &opts)
            .unwrap()
            .total;
        let i_mix = rate_functional(&j, &mixed, &p, &opts).unwrap().total;
        assert!(i_mix <= (1.0 - eps) * i_rho + eps * i_ref + 1e-10);
    }

    #[test]
    fn resolvent_fixes_reference_and_edges() {
        let p = protocol();
        let g = Grid::new(1.0, 5, 16).unwrap();
        let reference = reference_field(&p, &g);
        let smoothed = regularize_resolvent(&reference, &p, 0.05).unwrap();
        for (a, b) in smoothed.values().iter().zip(reference.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        let rho = wiggly_field(&p, &g, 33);
        let out = regularize_resolvent(&rho, &p, 0.2).unwrap();
        for i in 0..g.nt() {
            assert!((out.get(i, 0) - 0.2).abs() < 1e-15);
            assert!((out.get(i, g.m_y()) - 0.8).abs() < 1e-15);
        }
    }

    #[test]
    fn resolvent_keeps_values_strictly_inside() {
        let p = protocol();
        let g = Grid::new(1.0, 8, 40).unwrap();
        for seed in 34..39 {
            let rho = wiggly_field(&p, &g, seed);
            let out = regularize_resolvent(&rho, &p, 0.1).unwrap();
            let (mut lo, mut hi) = (1.0f64, 0.0f64);
            for &v in out.values() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            assert!(lo > 0.0 && hi < 1.0, "range [{lo}, {hi}]");
        }
    }

    #[test]
    fn resolvent_shrinks_toward_identity_as_eps_vanishes() {
        let p = protocol();
        let g = Grid::new(1.0, 6, 24).unwrap();
        let rho = wiggly_field(&p, &g, 40);
        let mut previous = f64::INFINITY;
        for eps in [0.1, 0.01, 0.001] {
            let out = regularize_resolvent(&rho, &p, eps).unwrap();
            let dist = out
                .values()
                .iter()
                .zip(rho.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(dist < previous);
            previous = dist;
        }
        assert!(previous < 5e-3, "distance {previous}");
    }

    #[test]
    fn gradient_identity_residual_is_second_order() {
        let p = protocol();
        let smooth = |g: &Grid| {
            DensityField::from_fn(g.clone(), |t, y| {
                p.profile(t, y) + 0.15 * (1.0 - y * y) * (1.5 * y + 0.5 * t).sin()
            })
            .unwrap()
        };
        let coarse = Grid::new(1.0, 4, 20).unwrap();
        let fine = coarse.refined();
        let r_coarse = resolvent_identity_residual(&smooth(&coarse), &p, 0.05).unwrap();
        let r_fine = resolvent_identity_residual(&smooth(&fine), &p, 0.05).unwrap();
        assert!(
            r_fine < r_coarse / 2.5,
            "no second-order decay: {r_coarse} -> {r_fine}"
        );
    }

    #[test]
    fn truncation_trivial_and_active() {
        let g = Grid::new(1.0, 10, 4).unwrap();
        let j = CurrentPath::from_fn(g.clone(), |t| -0.3 * t).unwrap();
        let same = truncate_current(&j, 1.0).unwrap();
        for (a, b) in same.values().iter().zip(j.values()) {
            assert!((a - b).abs() < 1e-15);
        }
        let steep = CurrentPath::from_fn(g, |t| 10.0 * t).unwrap();
        let cut = truncate_current(&steep, 1.0).unwrap();
        assert!((cut.get(10) - 1.0).abs() < 1e-12);
        assert!(truncate_current(&cut, 0.0).is_err());
    }
}
