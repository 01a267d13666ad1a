//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::process::Command;
use std::time::Instant;

use patchsis::analysis::{
    b_plus_v, endemic_equilibrium_equal_diffusion, jacobian_dl, lyapunov_left_vector, r0,
    stability_modulus, stationary_n,
};
use patchsis::lln::{convergence_study, LlnStudyConfig};
use patchsis::model::{validate, ContinuousState, Network, PatchParams, ValidatedModel};
use patchsis::ode::{integrate, OdeConfig, OdeMethod};
use patchsis::stochastic::{initial_counts, step, EventChannel, Simulator};
use patchsis::table1::{run_table1, TOLERANCE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn model(lambda: &[f64], gamma: &[f64], net: Network) -> ValidatedModel {
    let patches = lambda
        .iter()
        .zip(gamma)
        .map(|(&l, &g)| PatchParams::new(l, g))
        .collect();
    validate(patches, net).expect("valid model")
}

fn scaled(base: &ValidatedModel, c: f64) -> ValidatedModel {
    let patches = base
        .patches()
        .iter()
        .map(|p| PatchParams::new(p.lambda * c, p.gamma))
        .collect();
    base.with_patches(patches).unwrap()
}

/// Bisects the infection-rate scale `c` in `[lo, hi]` until `f(c) = 0`,
/// assuming `f` increases with `c`.
fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Random interior state of total mass 1.
fn random_state(ell: usize, rng: &mut ChaCha8Rng) -> ContinuousState {
    let w: Vec<f64> = (0..2 * ell).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    ContinuousState::new(
        w[..ell].iter().map(|x| x / total).collect(),
        w[ell..].iter().map(|x| x / total).collect(),
    )
}

fn euclid(a: &ContinuousState, b: &ContinuousState) -> f64 {
    a.to_vec()
        .iter()
        .zip(b.to_vec())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_patchsis"))
        .arg("table1")
        .output()
        .map_err(|e| format!("cannot run binary: {e}"))?;
    let elapsed = start.elapsed().as_secs_f64();
    if !out.status.success() {
        return Err(format!("table1 exited with {}", out.status));
    }
    let report = run_table1();
    let mut problems = Vec::new();
    let mut worst: f64 = 0.0;
    for r in &report.rows {
        match r.deviation {
            Some(d) => {
                worst = worst.max(d[0]).max(d[1]);
                if d[0] > TOLERANCE || d[1] > TOLERANCE {
                    problems.push(format!("row {} deviation {:?}", r.index + 1, d));
                }
            }
            None => problems.push(format!("row {} failed: {:?}", r.index + 1, r.error)),
        }
    }
    for (a, change) in &report.sensitivity {
        if change.is_nan() || *change >= 0.01 {
            problems.push(format!("a = {a} changes prevalences by {change}"));
        }
    }
    let anomaly = report.rows[0].known_anomaly;
    if elapsed >= 5.0 {
        problems.push(format!("runtime {elapsed:.2} s"));
    }
    let detail = format!(
        "12 rows, max |computed - published| = {worst:.4} (tol {TOLERANCE}), sensitivity {:?}, row-1 patch-2 anomaly flagged = {anomaly}, {elapsed:.2} s (< 5 s)",
        report.sensitivity
    );
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", problems.join("; ")))
    }
}

fn criterion_2() -> Outcome {
    let (lambda, gamma, nu) = (2.0, 1.0, 0.3);
    let mut worst: f64 = 0.0;
    for ell in [2usize, 5] {
        for net in [Network::path(ell, nu, nu), Network::complete(ell, nu, nu)] {
            let m = model(&vec![lambda; ell], &vec![gamma; ell], net);
            let ee = endemic_equilibrium_equal_diffusion(&m, 1.0).map_err(|e| e.to_string())?;
            let s_ref = gamma / (ell as f64 * lambda);
            let i_ref = (1.0 - gamma / lambda) / ell as f64;
            for j in 0..ell {
                worst = worst
                    .max((ee.state.s[j] - s_ref).abs())
                    .max((ee.state.i[j] - i_ref).abs());
            }
        }
    }
    let detail =
        format!("max error {worst:.2e} over ell in {{2, 5}}, path and complete graphs (tol 1e-10)");
    if worst <= 1e-10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

#[allow(clippy::needless_range_loop)]
fn criterion_3() -> Outcome {
    let mut single: f64 = 0.0;
    for (l, g) in [(1.5, 1.0), (0.3, 0.7), (4.0, 2.5), (1.0, 1.0)] {
        let m = model(&[l], &[g], Network::from_rows(&[], 0.0, 0.0).unwrap());
        single = single.max((r0(&m).map_err(|e| e.to_string())? - l / g).abs());
    }
    let mut pair: f64 = 0.0;
    for (l, g, a, nu_i) in [
        (1.5, 1.0, 1.0, 1e-4),
        (2.0, 0.5, 0.5, 0.3),
        (0.8, 1.2, 2.0, 0.05),
    ] {
        let m = model(&[l, l], &[g, g], Network::two_patch(a, 0.1, nu_i));
        let expect = f64::max(l / g, l / (g + 2.0 * a * nu_i));
        pair = pair.max((r0(&m).map_err(|e| e.to_string())? - expect).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut agree = 0;
    let mut tested = 0;
    let mut mismatches = Vec::new();
    while tested < 200 {
        let ell = rng.random_range(1..=5);
        let lambda: Vec<f64> = (0..ell).map(|_| rng.random_range(0.1..3.0)).collect();
        let gamma: Vec<f64> = (0..ell).map(|_| rng.random_range(0.2..2.0)).collect();
        let mut rows = vec![vec![0.0; ell]; ell];
        for j in 1..ell {
            // spanning tree plus random extra edges keeps the graph connected
            let k = rng.random_range(0..j);
            let w = rng.random_range(0.1..2.0);
            rows[j][k] = w;
            rows[k][j] = w;
            for k in 0..j {
                if rows[j][k] == 0.0 && rng.random_bool(0.3) {
                    let w = rng.random_range(0.1..2.0);
                    rows[j][k] = w;
                    rows[k][j] = w;
                }
            }
        }
        let nu_s = rng.random_range(0.0..1.0);
        let nu_i = rng.random_range(0.0..1.0);
        let m = model(
            &lambda,
            &gamma,
            Network::from_rows(&rows, nu_s, nu_i).unwrap(),
        );
        let r = r0(&m).map_err(|e| e.to_string())?;
        let alpha = stability_modulus(&b_plus_v(&m)).map_err(|e| e.to_string())?;
        if (r - 1.0).abs() < 1e-9 {
            continue;
        }
        tested += 1;
        if (r > 1.0) == (alpha > 0.0) {
            agree += 1;
        } else {
            mismatches.push(format!("R0 = {r}, alpha = {alpha}"));
        }
    }
    let detail = format!(
        "single-patch max error {single:.1e} (tol 1e-12), two-patch closed form max error {pair:.1e} (tol 1e-10), sign agreement {agree}/200"
    );
    if single <= 1e-12 && pair <= 1e-10 && agree == 200 {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", mismatches.join("; ")))
    }
}

fn criterion_4() -> Outcome {
    let m = model(&[1.5, 2.0], &[1.0, 1.0], Network::two_patch(1.0, 0.1, 0.1));
    let x0 = ContinuousState::new(vec![0.45, 0.45], vec![0.05, 0.05]);
    let cfg = LlnStudyConfig {
        populations: vec![100, 1_000, 10_000, 100_000],
        replicates: 20,
        t_max: 10.0,
        grid_dt: None,
        master_seed: 20240601,
    };
    let start = Instant::now();
    let res = convergence_study(&m, &x0, &cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let medians: Vec<f64> = res.aggregates.iter().map(|a| a.median).collect();
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    let at_1e4 = medians[2];
    let failed: usize = res.aggregates.iter().map(|a| a.failed).sum();
    let detail = format!(
        "median sup errors {:?} for N = 1e2..1e5, median at 1e4 = {at_1e4:.4} (< 0.05), {failed} failed cells, {elapsed:.1} s (< 120 s)",
        medians.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>()
    );
    if decreasing && at_1e4 < 0.05 && elapsed < 120.0 && failed == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_5() -> Outcome {
    let m = model(
        &[1.5, 2.0, 0.7],
        &[1.0, 0.8, 1.1],
        Network::path(3, 0.3, 0.2),
    );
    let x0 = ContinuousState::new(vec![0.3, 0.3, 0.3], vec![0.04, 0.03, 0.03]);
    let start = initial_counts(&x0, 100_000);
    let total = start.total();
    let mut sim = Simulator::new(&m, start).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut events = 0u64;
    let mut violations = 0u64;
    while events < 1_000_000 {
        sim.advance(&mut rng)
            .map_err(|e| format!("after {events} events: {e}"))?;
        events += 1;
        if sim.state().total() != total {
            violations += 1;
        }
    }
    let traj = integrate(&m, &x0, &OdeConfig::adaptive(100.0, 0.5)).map_err(|e| e.to_string())?;
    let mass0 = x0.mass();
    let drift = traj
        .states()
        .map(|z| (z.mass() - mass0).abs())
        .fold(0.0, f64::max);
    let detail = format!(
        "{events} SSA events with {violations} count changes (total {total}); ODE max mass drift {drift:.2e} over [0, 100] (tol 1e-8)"
    );
    if violations == 0 && drift < 1e-8 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_6() -> Outcome {
    let base = model(
        &[1.0, 2.0, 1.5],
        &[1.0, 1.2, 0.8],
        Network::path(3, 0.4, 0.1),
    );
    let c = bisect(0.01, 10.0, |c| r0(&scaled(&base, c)).unwrap() - 0.8);
    let m = scaled(&base, c);
    let r = r0(&m).map_err(|e| e.to_string())?;
    let n_star = stationary_n(&m, 1.0).map_err(|e| e.to_string())?;
    let target = ContinuousState::new(n_star, vec![0.0; 3]);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let z0 = random_state(3, &mut rng);
        let traj = integrate(&m, &z0, &OdeConfig::adaptive(1e4, 1e3)).map_err(|e| e.to_string())?;
        worst = worst.max(euclid(&traj.final_state(), &target));
    }
    let detail = format!("R0 = {r:.12}, nu_S = 0.4, nu_I = 0.1, 10 starts, max ||z(1e4) - DFE|| = {worst:.2e} (tol 1e-6)");
    if (r - 0.8).abs() < 1e-9 && worst < 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_7() -> Outcome {
    let base = model(
        &[1.5, 2.5],
        &[1.0, 1.0],
        Network::two_patch(1.0, 0.05, 0.05),
    );
    let c = bisect(0.01, 10.0, |c| r0(&scaled(&base, c)).unwrap() - 1.8);
    let m = scaled(&base, c);
    let r = r0(&m).map_err(|e| e.to_string())?;
    let newton = endemic_equilibrium_equal_diffusion(&m, 1.0).map_err(|e| e.to_string())?;
    let n_star = stationary_n(&m, 1.0).map_err(|e| e.to_string())?;
    let alpha_dl =
        stability_modulus(&jacobian_dl(&m, &n_star, &newton.state.i)).map_err(|e| e.to_string())?;
    let cfg = OdeConfig {
        t_max: 2000.0,
        method: OdeMethod::Rk45Adaptive {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
        },
        record_dt: 500.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let finals: Vec<ContinuousState> = (0..10)
        .map(|_| {
            let z0 = random_state(2, &mut rng);
            integrate(&m, &z0, &cfg).map(|t| t.final_state())
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let spread = finals
        .iter()
        .flat_map(|a| finals.iter().map(move |b| euclid(a, b)))
        .fold(0.0, f64::max);
    let to_newton = finals
        .iter()
        .map(|z| {
            z.to_vec()
                .iter()
                .zip(newton.state.to_vec())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    let detail = format!(
        "R0 = {r:.12}, 10 starts spread {spread:.2e} (tol 1e-6), max |z(2000) - Newton root| = {to_newton:.2e} (tol 1e-8), alpha(DL(I*)) = {alpha_dl:.4} (< 0)"
    );
    if (r - 1.8).abs() < 1e-9 && spread < 1e-6 && to_newton < 1e-8 && alpha_dl < 0.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_8() -> Outcome {
    let base = model(
        &[0.6, 1.4, 0.9],
        &[1.0, 1.0, 1.0],
        Network::path(3, 0.2, 0.2),
    );
    let alpha_of = |c: f64| stability_modulus(&b_plus_v(&scaled(&base, c))).unwrap();
    let c = bisect(0.01, 10.0, alpha_of);
    let m = scaled(&base, c);
    let lv = lyapunov_left_vector(&m).map_err(|e| e.to_string())?;
    let ell = 3;
    let third = 1.0 / ell as f64;
    let i0 = [0.1, 0.2, 0.05];
    let z0 = ContinuousState::new(i0.iter().map(|i| third - i).collect(), i0.to_vec());
    let t_max = 200.0;
    let cfg = OdeConfig {
        t_max,
        method: OdeMethod::Rk45Adaptive {
            rel_tol: 1e-10,
            abs_tol: 1e-13,
        },
        record_dt: t_max / 200.0,
    };
    let traj = integrate(&m, &z0, &cfg).map_err(|e| e.to_string())?;
    let l: Vec<f64> = traj
        .states()
        .map(|z| z.i.iter().zip(&lv.v).map(|(i, v)| i * v).sum())
        .collect();
    let worst_rise = l
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let detail = format!(
        "alpha(B + V) = {:.2e} (|.| <= 1e-8), {} grid points, <v, i> from {:.4e} to {:.4e}, largest increase {worst_rise:.2e} (slack 1e-10)",
        lv.alpha,
        l.len(),
        l[0],
        l[l.len() - 1]
    );
    if lv.alpha.abs() <= 1e-8 && l.len() >= 200 && worst_rise <= 1e-10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_9() -> Outcome {
    let (lambda, gamma) = (1.5, 1.0);
    let m = model(
        &[lambda],
        &[gamma],
        Network::from_rows(&[], 0.0, 0.0).unwrap(),
    );
    let state = patchsis::model::DiscreteState::new(vec![70], vec![30]);
    let infection = lambda * 70.0 * 30.0 / 100.0;
    let p = infection / (infection + gamma * 30.0);
    let n = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut hits = 0usize;
    for _ in 0..n {
        let jump = step(&state, &m, &mut rng).map_err(|e| e.to_string())?;
        if matches!(jump.channel, EventChannel::Infection(_)) {
            hits += 1;
        }
    }
    let freq = hits as f64 / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    let z = (freq - p) / se;
    let detail =
        format!("infection frequency {freq:.4} vs p = {p:.4} over {n} steps, z = {z:.2} (|z| < 3)");
    if z.abs() < 3.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 two-patch prevalence table", criterion_1),
        ("2 closed-form endemic equilibrium", criterion_2),
        ("3 R0 oracles and threshold equivalence", criterion_3),
        ("4 law of large numbers", criterion_4),
        ("5 conservation", criterion_5),
        ("6 disease-free state global stability", criterion_6),
        ("7 endemic equilibrium global stability", criterion_7),
        ("8 critical Lyapunov function", criterion_8),
        ("9 embedded-chain channel law", criterion_9),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(d) => println!("PASS criterion {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {name}: {d}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
