//! Release gate: twelve criteria the toolkit commits to, one test each.
//!
//! Every test line printed by the runner is one criterion's pass/fail
//! verdict. Stochastic criteria run at fixed seeds so a pass is
//! reproducible bit for bit; wall-clock budgets are asserted where a
//! criterion carries one. Criterion 12 measures the replacement-observable
//! estimate at fixed window fraction `eps = 0.1`; the window there is too
//! narrow for the stated bound at N = 32, so that test documents the
//! measured values in its panic message and is expected to stay red (see
//! README).

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qsx_core::exec::run_replicas;
use qsx_core::functional::bd::BdOptions;
use qsx_core::functional::{
    bd_rate, optimal_tilt, rate_functional, variational_objective, RateOptions,
};
use qsx_core::grid::{CurrentPath, DensityField, Grid, TiltField};
use qsx_core::harness::{run, ExperimentConfig, RunManifest};
use qsx_core::protocol::{logit, BoundaryProtocol, ScalingParameters, Schedule};
use qsx_core::quad;
use qsx_core::sim::{mobility, simulate, InitialCondition, SimOptions};
use qsx_core::tilt::TiltSpecification;

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(text).expect("acceptance config parses")
}

fn require(manifest: &RunManifest, names: &[&str]) {
    for &name in names {
        let v = manifest
            .verdict(name)
            .unwrap_or_else(|| panic!("verdict {name} missing from manifest"));
        assert!(
            v.passed,
            "{name}: value {:.6e} violates threshold {:.6e}",
            v.value, v.threshold
        );
    }
}

/// Criterion 1: pathwise conservation is exact and the height field stays
/// homogeneous across the interior, uniformly over scalings, schedules,
/// and tilting.
#[test]
fn criterion_01_conservation_and_current_homogeneity() {
    struct Run {
        scaling: ScalingParameters,
        protocol: BoundaryProtocol,
        tilted: bool,
        samples: Vec<f64>,
        seed: u64,
    }
    let floor = BoundaryProtocol::DEFAULT_FLOOR;
    let runs = vec![
        Run {
            scaling: ScalingParameters::new(16, 1.0, 1.0).unwrap(),
            protocol: BoundaryProtocol::constant(0.25, 0.75, 0.5).unwrap(),
            tilted: false,
            samples: vec![0.0, 0.1, 0.3, 0.5],
            seed: 10001,
        },
        Run {
            scaling: ScalingParameters::new(8, 0.5, 0.7).unwrap(),
            protocol: BoundaryProtocol::new(
                Schedule::Ramp {
                    start: 0.3,
                    end: 0.6,
                },
                Schedule::Sinusoid {
                    mean: 0.6,
                    amplitude: 0.15,
                    angular_frequency: 2.0 * PI,
                    phase: 0.5,
                },
                1.0,
                floor,
            )
            .unwrap(),
            tilted: false,
            samples: vec![0.0, 0.25, 0.5, 1.0],
            seed: 10002,
        },
        Run {
            scaling: ScalingParameters::new(12, 1.5, 1.2).unwrap(),
            protocol: BoundaryProtocol::new(
                Schedule::Sinusoid {
                    mean: 0.4,
                    amplitude: 0.2,
                    angular_frequency: PI,
                    phase: 0.0,
                },
                Schedule::Constant { value: 0.7 },
                0.25,
                floor,
            )
            .unwrap(),
            tilted: false,
            samples: vec![0.0, 0.1, 0.25],
            seed: 10003,
        },
        Run {
            scaling: ScalingParameters::new(6, 1.0, 1.0).unwrap(),
            protocol: BoundaryProtocol::constant(0.2, 0.8, 1.0).unwrap(),
            tilted: true,
            samples: vec![0.0, 0.5, 1.0],
            seed: 10004,
        },
    ];

    for run in &runs {
        let horizon = run.protocol.horizon();
        let tilt = if run.tilted {
            let g = Grid::new(horizon, 64, 64).unwrap();
            let field = TiltField::from_fn(g, |t, y| {
                0.3 * (0.5 * PI * (y + 1.0)).sin() * (1.0 + 0.5 * (PI * t / horizon).cos())
            })
            .unwrap();
            TiltSpecification::from_field(&field, &run.scaling)
        } else {
            TiltSpecification::Untilted
        };
        let record = simulate(
            &run.scaling,
            &run.protocol,
            &tilt,
            &InitialCondition::ProductProfile,
            run.seed,
            &run.samples,
            0.1,
            &SimOptions::default(),
        )
        .expect("trajectory completes");
        assert!(record.event_count > 0, "run produced no events");

        let n = run.scaling.n() as usize;
        let norm = run.scaling.current_normalization();
        let width = 2.0 * n as f64;
        let bound = width.powf(-run.scaling.alpha());
        for sample in &record.samples {
            assert_eq!(sample.occupation.len(), 2 * n + 1);
            assert_eq!(sample.current.len(), 2 * n + 2);

            // Exact conservation: the occupation change at each site is the
            // net inflow through its two bonds, particle by particle.
            for i in 0..2 * n + 1 {
                let delta = sample.occupation[i] as f64 - record.initial_occupation[i] as f64;
                let flow = norm * (sample.current[i] - sample.current[i + 1]);
                assert!(
                    (flow - delta).abs() < 1e-6,
                    "conservation broken at site {i} of run seed {}: \
                     occupation change {delta}, bond flow {flow}",
                    run.seed
                );
            }

            // Interior homogeneity: the signed transport counts across the
            // bonds -N..N span at most 2N raw jumps, so the height field
            // rescaled by the lattice width (2N)^(1+alpha) varies by at most
            // (2N)^(-alpha) between any two interior positions.
            let raw: Vec<f64> = sample.current[1..].iter().map(|c| c * norm).collect();
            let span_raw = raw.iter().cloned().fold(f64::MIN, f64::max)
                - raw.iter().cloned().fold(f64::MAX, f64::min);
            let span_rescaled = span_raw / width.powf(1.0 + run.scaling.alpha());
            assert!(
                span_rescaled <= bound + 1e-12,
                "homogeneity broken at t = {}: rescaled span {span_rescaled:.3e} \
                 exceeds {bound:.3e} (raw span {span_raw})",
                sample.time
            );
        }
    }
}

/// Criterion 2: on the enumerable lattice the sampler matches the master
/// equation in per-site occupations and per-bond currents to Monte Carlo
/// accuracy, and the end-state law passes a goodness-of-fit test.
#[test]
fn criterion_02_small_lattice_matches_master_equation() {
    let start = Instant::now();
    let base = r#"
        kind = "oracle-check"
        seed = 20001
        replicas = 10000

        [scaling]
        n = 3
        alpha = 1.0
        gamma = 1.0

        [protocol]
        horizon = 1.0
        left = { kind = "constant", value = 0.2 }
        right = { kind = "constant", value = 0.8 }
    "#;
    let manifest = run(&config(base), None).expect("moment run completes");
    require(&manifest, &["site_z_max", "bond_z_max"]);

    let law = r#"
        kind = "oracle-check"
        seed = 20002
        replicas = 100000

        [scaling]
        n = 3
        alpha = 1.0
        gamma = 1.0

        [protocol]
        horizon = 1.0
        left = { kind = "constant", value = 0.2 }
        right = { kind = "constant", value = 0.8 }

        [experiment]
        end_state_law = true
    "#;
    let manifest = run(&config(law), None).expect("law run completes");
    require(&manifest, &["site_z_max", "bond_z_max", "law_p_value"]);

    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        elapsed < 300.0,
        "criterion 2 took {elapsed:.1}s, budget 300s"
    );
}

/// Criterion 3: the compensated exponential transform has unit expectation
/// exactly under the enumerable oracle, and the sampled likelihood-ratio
/// weights have unit mean to Monte Carlo accuracy.
#[test]
fn criterion_03_martingale_and_reweighting() {
    let start = Instant::now();
    let text = r#"
        kind = "martingale-check"
        seed = 30001
        replicas = 10000

        [scaling]
        n = 3
        alpha = 1.0
        gamma = 1.0

        [protocol]
        horizon = 1.0
        left = { kind = "constant", value = 0.2 }
        right = { kind = "constant", value = 0.8 }

        [experiment]
        field_count = 5
    "#;
    let manifest = run(&config(text), None).expect("martingale run completes");
    require(&manifest, &["exact_unit_mean", "reweighting_unit_mean"]);

    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        elapsed < 300.0,
        "criterion 3 took {elapsed:.1}s, budget 300s"
    );
}

/// Criterion 4: empirical profiles concentrate on the quasi-static profile
/// as the lattice grows, in time-integrated L1 distance, and the
/// bond-averaged transport matches the integrated current.
#[test]
fn criterion_04_hydrodynamic_concentration() {
    let start = Instant::now();
    let text = r#"
        kind = "hydro-convergence"
        seed = 40001
        replicas = 50

        [scaling]
        n = 8
        alpha = 1.0
        gamma = 1.0

        [protocol]
        horizon = 1.0
        left = { kind = "sinusoid", mean = 0.5, amplitude = 0.2, angular_frequency = 3.141592653589793 }
        right = { kind = "constant", value = 0.5 }

        [experiment]
        widths = [8, 16, 32]
        eps = 0.1
    "#;
    let manifest = run(&config(text), None).expect("hydrodynamic run completes");
    require(
        &manifest,
        &["profile_l1_decreasing", "profile_l1_final", "current_z"],
    );

    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        elapsed < 900.0,
        "criterion 4 took {elapsed:.1}s, budget 900s"
    );
}

/// Criterion 5: the quasi-static pair induced by a schedule costs nothing,
/// for three structurally different schedules.
#[test]
fn criterion_05_typical_pair_costs_nothing() {
    let floor = BoundaryProtocol::DEFAULT_FLOOR;
    let protocols = vec![
        BoundaryProtocol::constant(0.2, 0.8, 1.0).unwrap(),
        BoundaryProtocol::new(
            Schedule::Ramp {
                start: 0.3,
                end: 0.6,
            },
            Schedule::Ramp {
                start: 0.7,
                end: 0.5,
            },
            1.0,
            floor,
        )
        .unwrap(),
        BoundaryProtocol::new(
            Schedule::Sinusoid {
                mean: 0.5,
                amplitude: 0.2,
                angular_frequency: PI,
                phase: 0.3,
            },
            Schedule::Constant { value: 0.65 },
            1.0,
            floor,
        )
        .unwrap(),
    ];
    let scaling = ScalingParameters::new(32, 1.0, 1.0).unwrap();
    let opts = RateOptions::default();
    for (k, protocol) in protocols.iter().enumerate() {
        let grid = Grid::new(protocol.horizon(), 200, 200).unwrap();
        let j = CurrentPath::from_fn(grid.clone(), |t| protocol.current(&scaling, t)).unwrap();
        let rho = DensityField::from_fn(grid, |t, y| protocol.profile(t, y)).unwrap();
        let breakdown = rate_functional(&j, &rho, protocol, &opts).unwrap();
        assert!(breakdown.finite, "schedule {k}: typical pair rejected");
        assert_eq!(
            breakdown.boundary_mismatch, 0.0,
            "schedule {k}: typical pair misses its own boundary data"
        );
        assert!(
            breakdown.total.abs() <= 1e-8,
            "schedule {k}: typical cost {:.3e} exceeds 1e-8",
            breakdown.total
        );
    }
}

/// Criterion 6: reversing the current against the constant 0.2 / 0.8
/// schedule costs exactly the fugacity work term, reproduced to 1e-4 on
/// the production grid and to 1e-6 after one Richardson step.
#[test]
fn criterion_06_reversed_current_price() {
    const EXACT: f64 = 0.831_776_616_671_934_4;

    let text = r#"
        kind = "rate-eval"
        seed = 60001

        [scaling]
        n = 8
        alpha = 1.0
        gamma = 1.0

        [protocol]
        horizon = 1.0
        left = { kind = "constant", value = 0.2 }
        right = { kind = "constant", value = 0.8 }

        [grid]
        m_t = 200
        m_y = 200
    "#;
    let manifest = run(&config(text), None).expect("rate run completes");
    require(
        &manifest,
        &[
            "typical_cost_zero",
            "reversed_cost",
            "reversed_cost_refined",
        ],
    );

    // Independent replay against the frozen closed-form value
    // 0.3 * (logit(0.8) - logit(0.2)) = 0.6 * ln 4.
    let protocol = BoundaryProtocol::constant(0.2, 0.8, 1.0).unwrap();
    let scaling = ScalingParameters::new(8, 1.0, 1.0).unwrap();
    let opts = RateOptions::default();
    let cost_on = |grid: Grid| {
        let j = CurrentPath::from_fn(grid.clone(), |t| protocol.current(&scaling, t)).unwrap();
        let rho = DensityField::from_fn(grid, |t, y| protocol.profile(t, y)).unwrap();
        rate_functional(&j.reversed(), &rho, &protocol, &opts)
            .unwrap()
            .total
    };
    let grid = Grid::new(1.0, 200, 200).unwrap();
    let coarse = cost_on(grid.clone());
    let fine = cost_on(grid.refined());
    let richardson = fine + (fine - coarse) / 3.0;
    let closed_form = 0.3 * (logit(0.8) - logit(0.2));
    assert!((closed_form - EXACT).abs() < 1e-12);
    assert!(
        (coarse - EXACT).abs() <= 1e-4,
        "reversed cost {coarse:.9} misses {EXACT:.9} beyond 1e-4"
    );
    assert!(
        (richardson - EXACT).abs() <= 1e-6,
        "extrapolated reversed cost {richardson:.10} misses {EXACT:.10} beyond 1e-6"
    );
}

/// Criterion 7: the time-reversal cost difference equals the fugacity work
/// term on random compatible pairs, jointly and after contraction to the
/// current, and contraction never raises the cost.
#[test]
fn criterion_07_fluctuation_identities() {
    let text = r#"
        kind = "fluctuation-check"
        seed = 70001

        [scaling]
        n = 8
        alpha = 1.0
        gamma = 1.0

        [protocol]
        horizon = 1.0
        left = { kind = "constant", value = 0.2 }
        right = { kind = "constant", value = 0.8 }

        [grid]
        m_t = 100
        m_y = 200

        [experiment]
        field_count = 20
    "#;
    let manifest = run(&config(text), None).expect("fluctuation run completes");
    require(
        &manifest,
        &[
            "joint_identity",
            "contracted_identity",
            "contraction_lower_bound",
        ],
    );
}

/// Random density wiggle vanishing at both edges plus a current started at
/// zero: any such pair is admissible for the quadratic cost.
fn random_pair_closures(
    rng: &mut ChaCha8Rng,
) -> (
    impl Fn(f64) -> f64 + Clone,
    impl Fn(f64, f64) -> f64 + Clone,
) {
    let c1 = rng.random_range(-0.6..0.6);
    let c2 = rng.random_range(-0.4..0.4);
    let c3 = rng.random_range(-0.5..0.5);
    let j = move |t: f64| c1 * t + c2 * t * t + c3 * (PI * t).sin() / PI;

    let mut amps = [0.0; 3];
    let mut speeds = [0.0; 3];
    let mut phases = [0.0; 3];
    for k in 0..3 {
        amps[k] = rng.random_range(-0.12..0.12) / (k as f64 + 1.0);
        speeds[k] = rng.random_range(0.5..2.5);
        phases[k] = rng.random_range(0.0..2.0 * PI);
    }
    let rho = move |t: f64, y: f64| {
        let base = 0.5 + 0.15 * y;
        let mut v = base;
        for k in 0..3 {
            v += amps[k]
                * (0.5 * PI * (k as f64 + 1.0) * (y + 1.0)).sin()
                * (speeds[k] * PI * t + phases[k]).cos();
        }
        v
    };
    (j, rho)
}

/// Criterion 8: the quadratic cost has a variational form. The optimizing
/// bias field reproduces the cost with a defect of order dt + dy^2 that
/// shrinks under grid doubling, and no bias field beats the cost by more
/// than the discretization slack.
#[test]
fn criterion_08_variational_form() {
    let protocol = BoundaryProtocol::constant(0.35, 0.65, 1.0).unwrap();
    let opts = RateOptions::default();
    let coarse = Grid::new(1.0, 100, 100).unwrap();
    let fine = coarse.refined();
    let mut rng = ChaCha8Rng::seed_from_u64(80001);

    // Part one: defect contraction under doubling on 20 random pairs.
    let mut checked = 0usize;
    for pair in 0..20 {
        let (jf, rf) = random_pair_closures(&mut rng);
        let defect_on = |grid: &Grid| {
            let j = CurrentPath::from_fn(grid.clone(), &jf).unwrap();
            let rho = DensityField::from_fn(grid.clone(), &rf).unwrap();
            let cost = rate_functional(&j, &rho, &protocol, &opts).unwrap().total;
            let h = optimal_tilt(&j, &rho, &opts).unwrap();
            let objective = variational_objective(&h, &j, &rho, &protocol).unwrap();
            (cost, (objective - cost).abs())
        };
        let (cost_c, e_c) = defect_on(&coarse);
        let (_, e_f) = defect_on(&fine);
        assert!(cost_c.is_finite());
        if e_c < 1e-12 {
            continue; // defect already at rounding level; nothing to contract
        }
        checked += 1;
        assert!(
            e_f <= e_c / 1.7 + 1e-12,
            "pair {pair}: defect {e_c:.3e} -> {e_f:.3e} contracts slower than first order"
        );
    }
    assert!(checked >= 15, "too few informative pairs: {checked}");

    // Part two: 50 random bias fields never beat the cost beyond slack.
    let (jf, rf) = random_pair_closures(&mut rng);
    let j = CurrentPath::from_fn(fine.clone(), &jf).unwrap();
    let rho = DensityField::from_fn(fine.clone(), &rf).unwrap();
    let cost = rate_functional(&j, &rho, &protocol, &opts).unwrap().total;
    let slack = 2.0 * (fine.dt() + fine.dy() * fine.dy()) * (1.0 + cost.abs());
    for field in 0..50 {
        let mut b = [0.0; 3];
        let mut u = [0.0; 3];
        let mut psi = [0.0; 3];
        for k in 0..3 {
            b[k] = rng.random_range(-0.5..0.5);
            u[k] = rng.random_range(0.5..3.0);
            psi[k] = rng.random_range(0.0..2.0 * PI);
        }
        let h = TiltField::from_fn(fine.clone(), |t, y| {
            let mut v = 0.0;
            for k in 0..3 {
                v += b[k]
                    * (0.5 * PI * (k as f64 + 1.0) * (y + 1.0)).sin()
                    * (u[k] * PI * t + psi[k]).cos();
            }
            v
        })
        .unwrap();
        let objective = variational_objective(&h, &j, &rho, &protocol).unwrap();
        assert!(
            objective <= cost + slack,
            "field {field}: objective {objective:.6e} beats cost {cost:.6e} \
             beyond slack {slack:.2e}"
        );
    }
}

/// Static minimization oracle: with constant reservoir densities the
/// optimal profile satisfies a first integral `rho'^2 = q^2 + e phi(rho)`,
/// with `e` pinned by requiring the profile to span the unit interval of
/// width 2. The minimal cost then reduces to one-dimensional quadrature.
fn static_cost_by_shooting(q: f64, lo: f64, hi: f64) -> f64 {
    let phi_max = 0.25; // mobility peaks at density one half, inside [lo, hi]
    let span = |e: f64| {
        quad::adaptive(
            |r| 1.0 / (q * q + e * mobility(r)).sqrt(),
            lo,
            hi,
            1e-9,
            1e-11,
        )
        .value
    };
    // The spanning root never sits within a thousandth of the degenerate
    // edge -q^2/phi_max (the span grows only logarithmically there), so the
    // bracket can stop well clear of the square-root singularity.
    let mut e_lo = -q * q / phi_max * (1.0 - 1e-3);
    assert!(span(e_lo) > 2.0, "lower shooting bracket too tight");
    let mut e_hi = 1.0;
    while span(e_hi) > 2.0 {
        e_hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (e_lo + e_hi);
        if span(mid) > 2.0 {
            e_lo = mid;
        } else {
            e_hi = mid;
        }
    }
    let e = 0.5 * (e_lo + e_hi);
    let even = quad::adaptive(
        |r| {
            let phi = mobility(r);
            (2.0 * q * q / phi + e) / (4.0 * (q * q + e * phi).sqrt())
        },
        lo,
        hi,
        1e-11,
        1e-13,
    )
    .value;
    even + 0.5 * q * (logit(hi) - logit(lo))
}

/// Criterion 9: the static minimization vanishes at the typical slope, is
/// convex across a half-width scan, and agrees with an independent
/// first-integral shooting oracle.
#[test]
fn criterion_09_static_minimization() {
    let text = r#"
        kind = "bd-scan"
        seed = 90001

        [scaling]
        n = 8
        alpha = 1.0
        gamma = 1.0

        [protocol]
        horizon = 1.0
        left = { kind = "constant", value = 0.2 }
        right = { kind = "constant", value = 0.8 }

        [grid]
        m_t = 4
        m_y = 200

        [experiment]
        q_count = 21
        q_halfwidth = 0.5
    "#;
    let manifest = run(&config(text), None).expect("static scan completes");
    require(&manifest, &["typical_slope_zero", "scan_convex"]);

    let opts = BdOptions {
        m_y: 400,
        tol: 1e-10,
        max_iterations: 2_000_000,
        ..BdOptions::default()
    };
    for q in [-0.55, -0.30, -0.05] {
        let solver = bd_rate(q, 0.2, 0.8, &opts).unwrap().value;
        let oracle = static_cost_by_shooting(q, 0.2, 0.8);
        assert!(
            (solver - oracle).abs() <= 1e-4,
            "slope {q}: solver {solver:.8} vs shooting oracle {oracle:.8}"
        );
    }
}

/// Criterion 10: truncating the current and smoothing the profile changes
/// the cost by less and less as the truncation loosens and the smoothing
/// sharpens, ending within 1e-3; the smoother satisfies its gradient
/// identity at second order in the cell size.
#[test]
fn criterion_10_regularization() {
    let text = r#"
        kind = "regularization-scan"
        seed = 100001

        [scaling]
        n = 8
        alpha = 1.0
        gamma = 1.0

        [protocol]
        horizon = 1.0
        left = { kind = "constant", value = 0.2 }
        right = { kind = "constant", value = 0.8 }

        [grid]
        m_t = 200
        m_y = 200

        [experiment]
        field_count = 5
    "#;
    let manifest = run(&config(text), None).expect("regularization run completes");
    require(
        &manifest,
        &["approximation_trend", "final_gap", "identity_order"],
    );
}

/// Criterion 11: under the optimal bias for a shifted current, the sampled
/// entropy production per site approaches the quadratic cost as the
/// lattice grows, and the tilted profiles concentrate.
#[test]
fn criterion_11_tilted_entropy_production() {
    let start = Instant::now();
    let text = r#"
        kind = "tilted-entropy"
        seed = 110001
        replicas = 100

        [scaling]
        n = 8
        alpha = 1.0
        gamma = 1.0

        [protocol]
        horizon = 1.0
        left = { kind = "constant", value = 0.2 }
        right = { kind = "constant", value = 0.8 }

        [grid]
        m_t = 200
        m_y = 200
        samples = 5

        [experiment]
        widths = [8, 16, 32]
        eps = 0.1
        current_shift = -0.2
    "#;
    let manifest = run(&config(text), None).expect("tilted run completes");
    require(
        &manifest,
        &[
            "entropy_gap_decreasing",
            "entropy_final_relative",
            "concentration_decreasing",
        ],
    );

    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        elapsed < 1800.0,
        "criterion 11 took {elapsed:.1}s, budget 1800s"
    );
}

/// Criterion 12: the time-integrated replacement observable per site at
/// window fraction 0.1. The window holds ~0.2 N sites, so the estimate
/// decays like 1 / (2 floor(0.1 N) + 1): the decreasing trend is real, but
/// the N = 32 window (7 sites) is still far from the 0.02 target. This
/// test is expected to fail on the final bound and reports the measured
/// values; see README for the analysis.
#[test]
fn criterion_12_replacement_estimate() {
    let protocol = BoundaryProtocol::constant(0.2, 0.8, 1.0).unwrap();
    let mut means = Vec::new();
    for (k, n) in [8u32, 16, 32].into_iter().enumerate() {
        let scaling = ScalingParameters::new(n, 1.0, 1.0).unwrap();
        let values = run_replicas(120001 + k as u64, 100, |_, seed| {
            let record = simulate(
                &scaling,
                &protocol,
                &TiltSpecification::Untilted,
                &InitialCondition::ProductProfile,
                seed,
                &[0.0, 1.0],
                0.1,
                &SimOptions::default(),
            )
            .expect("replacement trajectory completes");
            record.samples.last().unwrap().v_integral / n as f64
        });
        means.push(values.iter().sum::<f64>() / values.len() as f64);
    }
    assert!(
        means[1] < means[0] && means[2] < means[1],
        "replacement estimate not decreasing: {means:?}"
    );
    assert!(
        means[2] <= 0.02,
        "replacement estimate at N = 32 is {:.4} (ladder {:?}); the 0.02 target \
         needs a wider averaging window than eps = 0.1 provides at these sizes",
        means[2],
        means
    );
}
