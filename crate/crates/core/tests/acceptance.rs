//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::process::Command;
use std::time::Instant;

use hnls_core::field::{cubic_convolution, fl_norm, fl_sup_norm, trilinear_n, trilinear_r1, trilinear_r2};
use hnls_core::lattice::{empirical_count_constant, enumerate_gamma, DyadicShell, FreqVector, ModulusSign};
use hnls_core::normal_form::{eval_n0, eval_n2j, eval_n_assembled, eval_rj, nf_solve, NormalFormParams};
use hnls_core::probe::{modulation_sum_bound, modulation_sum_s, threshold_scan};
use hnls_core::solver::{illposedness_slope, integrate, picard_second_iterate, InteractionFlow, Scheme, SimConfig};
use hnls_core::trees::enumerate_trees;
use hnls_core::SpectralField;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn tree_cardinality() -> Outcome {
    let mut got = Vec::new();
    for j in 1..=6u64 {
        let n = enumerate_trees(j as usize).map_err(|e| e.to_string())?.len() as u64;
        if n != common::double_factorial(j) {
            return Err(format!("|T({j})| = {n}, expected {}", common::double_factorial(j)));
        }
        got.push(n.to_string());
    }
    Ok(got.join(", "))
}

fn resonance_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sizes = [1i64, 2, 4, 8, 16, 32];
    let mut nonempty = 0;
    for q in 0..200 {
        let sign = if q % 2 == 0 { ModulusSign::Hyperbolic } else { ModulusSign::Elliptic };
        let n1s = sizes[rng.gen_range(0..sizes.len())];
        let n3s = sizes[rng.gen_range(0..sizes.len())];
        let n = FreqVector::new(rng.gen_range(-40..=40), rng.gen_range(-40..=40));
        // Half the queries take μ from a planted triple so that most sets are non-empty.
        let mu = if q % 4 < 2 {
            let a = FreqVector::new(rng.gen_range(-2 * n1s + 1..2 * n1s), rng.gen_range(-2 * n1s + 1..2 * n1s));
            let b = FreqVector::new(rng.gen_range(-2 * n3s + 1..2 * n3s), rng.gen_range(-2 * n3s + 1..2 * n3s));
            common::phi(n, a, a - n + b, b, sign)
        } else {
            2 * rng.gen_range(-2000i128..=2000)
        };
        let fast: Vec<_> = enumerate_gamma(n, mu, sign, DyadicShell::new(n1s).unwrap(), DyadicShell::new(n3s).unwrap())
            .into_iter()
            .map(|t| (t.n1, t.n2, t.n3))
            .collect();
        let slow = common::brute_gamma(n, mu, sign, n1s, n3s);
        if fast != slow {
            return Err(format!("mismatch at n = {n}, μ = {mu}, N1 = {n1s}, N3 = {n3s}, {sign:?}: {} vs {}", fast.len(), slow.len()));
        }
        nonempty += usize::from(!slow.is_empty());
    }
    Ok(format!("200 queries agree ({nonempty} non-empty)"))
}

fn counting_ratio() -> Outcome {
    let r16 = empirical_count_constant(ModulusSign::Hyperbolic, 0.25, 16, 10_000, 11).map_err(|e| e.to_string())?;
    let r64 = empirical_count_constant(ModulusSign::Hyperbolic, 0.25, 64, 10_000, 11).map_err(|e| e.to_string())?;
    let ratio = r64.max_ratio / r16.max_ratio;
    check(ratio < 2.0, format!("C(64) = {:.3}, C(16) = {:.3}, ratio {ratio:.3}", r64.max_ratio, r16.max_ratio))
}

fn single_mode() -> Outcome {
    let n0 = FreqVector::new(2, 1);
    let amp = c(0.6, -0.3);
    let u0 = SpectralField::single_mode(4, n0, amp).map_err(|e| e.to_string())?;
    let cfg = SimConfig { radius: 4, dt: 1e-3, t_end: 1.0, scheme: Scheme::Rk4InteractionPicture, record_every: 10 };
    let traj = integrate(&u0, &cfg).map_err(|e| e.to_string())?;
    let mut err: f64 = 0.0;
    for (t, u) in &traj.samples {
        err = err.max((u.get(n0) - common::single_mode_exact(n0, amp, *t)).norm());
        err = err.max(u.iter().filter(|(n, _)| *n != n0).map(|(_, v)| v.norm()).fold(0.0, f64::max));
    }
    check(err <= 1e-8, format!("max error {err:.2e}"))
}

fn conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let u0 = common::smooth_field(&mut rng, 8, 8, 0.5);
    let cfg = SimConfig { radius: 8, dt: 1e-3, t_end: 1.0, scheme: Scheme::Rk4InteractionPicture, record_every: 10 };
    let traj = integrate(&u0, &cfg).map_err(|e| e.to_string())?;
    let (m, h) = (traj.conserved.mass_drift(), traj.conserved.hamiltonian_drift());
    check(m <= 1e-10 && h <= 1e-8, format!("mass drift {m:.2e}, hamiltonian drift {h:.2e}"))
}

fn decomposition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let u1 = common::random_field(&mut rng, 8, 40, 1.0);
        let u2 = common::random_field(&mut rng, 8, 40, 1.0);
        let u3 = common::random_field(&mut rng, 8, 40, 1.0);
        let split = trilinear_n(&u1, &u2, &u3).add(&trilinear_r1(&u1, &u2, &u3)).add(&trilinear_r2(&u1, &u2, &u3));
        worst = worst.max(split.max_abs_diff(&cubic_convolution(&u1, &u2, &u3)));
    }
    check(worst <= 1e-12, format!("max pointwise difference {worst:.2e}"))
}

fn diagonal_data() -> SpectralField {
    SpectralField::from_modes(
        4,
        [
            (FreqVector::new(0, 0), c(0.2, 0.0)),
            (FreqVector::new(1, 1), c(0.0, 0.1)),
            (FreqVector::new(-2, -2), c(0.05, 0.05)),
            (FreqVector::new(2, 2), c(-0.04, 0.02)),
        ],
    )
    .unwrap()
}

fn nf_equivalence() -> Outcome {
    let u0 = diagonal_data();
    let direct = integrate(&u0, &SimConfig { radius: 4, dt: 1e-3, t_end: 0.1, scheme: Scheme::Rk4InteractionPicture, record_every: 1 })
        .map_err(|e| e.to_string())?;
    let mut dists = Vec::new();
    for j_max in 2..=4 {
        let params =
            NormalFormParams { k: NormalFormParams::default_k(&u0, 1.0, 2.0), p: 2.0, s: 1.0, j_max, radius: 4, sign: ModulusSign::Hyperbolic };
        let nf = nf_solve(&u0, 0.1, 100, &params).map_err(|e| e.to_string())?;
        if !nf.report.converged {
            return Err(format!("Picard iteration did not converge at J_max = {j_max}"));
        }
        let d = nf
            .trajectory
            .iter()
            .zip(&direct.samples)
            .map(|((_, a), (_, b))| fl_norm(&a.sub(b), params.diagnostic_norm()))
            .fold(0.0, f64::max);
        dists.push(d);
    }
    let ok = dists[1] <= 1e-6 && dists[1] <= dists[0] && dists[2] <= dists[1];
    check(ok, format!("FL^{{1,2}} distance at J_max = 2, 3, 4: {:.3e}, {:.3e}, {:.3e}", dists[0], dists[1], dists[2]))
}

fn telescoping_data() -> SpectralField {
    SpectralField::from_modes(
        4,
        [
            (FreqVector::new(0, 0), c(0.3, 0.1)),
            (FreqVector::new(1, 0), c(-0.2, 0.25)),
            (FreqVector::new(0, 2), c(0.15, -0.1)),
            (FreqVector::new(-1, 1), c(0.05, 0.2)),
            (FreqVector::new(2, -1), c(0.1, 0.1)),
            (FreqVector::new(3, 1), c(0.1, -0.05)),
            (FreqVector::new(-2, -3), c(-0.08, 0.06)),
        ],
    )
    .unwrap()
}

fn telescoping() -> Outcome {
    let radius = 4;
    // p = 1/4 keeps the far sets non-empty at this radius.
    let params = NormalFormParams { k: 1.0, p: 0.25, s: 0.0, j_max: 4, radius, sign: ModulusSign::Hyperbolic };
    let u = telescoping_data();
    let (t0, h) = (0.3, 1e-4);
    let mut flow = InteractionFlow::new(radius);
    let up = flow.evolve(&u, t0, h, 1);
    let um = flow.evolve(&u, t0, -h, 1);
    let mut parts = Vec::new();
    let mut ok = true;
    for j in 1..=2 {
        let run = || -> hnls_core::Result<(f64, f64)> {
            let d = eval_n0(j + 1, &up, t0 + h, &params)?.sub(&eval_n0(j + 1, &um, t0 - h, &params)?).scale(c(0.5 / h, 0.0));
            let lhs = d.add(&eval_rj(j + 1, &u, t0, &params)?).add(&eval_n_assembled(j + 1, &u, t0, &params)?);
            let rhs = eval_n2j(j, &u, t0, &params)?;
            Ok((lhs.max_abs_diff(&rhs), rhs.max_abs()))
        };
        let (err, scale) = run().map_err(|e| e.to_string())?;
        let rel = err / scale;
        ok &= scale > 0.0 && rel < 1e-4;
        parts.push(format!("j = {j}: relative error {rel:.2e}"));
    }
    check(ok, parts.join(", "))
}

fn decay() -> Outcome {
    let u = SpectralField::from_modes(
        4,
        [
            (FreqVector::new(0, 0), c(0.3, 0.1)),
            (FreqVector::new(1, 0), c(-0.2, 0.25)),
            (FreqVector::new(0, 2), c(0.15, -0.1)),
            (FreqVector::new(-1, 1), c(0.05, 0.2)),
            (FreqVector::new(2, -1), c(0.1, 0.1)),
        ],
    )
    .unwrap();
    let p = 0.25;
    let params = NormalFormParams { k: NormalFormParams::default_k(&u, 0.0, p), p, s: 0.0, j_max: 4, radius: 4, sign: ModulusSign::Hyperbolic };
    let norms: Vec<f64> = (1..=4).map(|j| eval_n2j(j, &u, 0.2, &params).map(|v| fl_sup_norm(&v, 0.0))).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let ok = norms[0] > 0.0 && norms.windows(2).all(|w| w[1] <= 1.05 * w[0]);
    check(ok, format!("K = {:.4}, sup norms {}", params.k, norms.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")))
}

fn illposedness() -> Outcome {
    let ns = [16, 32, 64, 128];
    let mut parts = Vec::new();
    let mut ok = true;
    for (s, p, tol) in [(0.0, 2.0, 0.05), (0.25, 2.0, 0.05), (0.0, 4.0, 0.05), (0.5, 2.0, 0.02)] {
        let r = illposedness_slope(s, p, 1.0, &ns).map_err(|e| e.to_string())?;
        ok &= (r.slope - r.expected).abs() <= tol;
        parts.push(format!("(s, p) = ({s}, {p}): {:.4} vs {:.2}", r.slope, r.expected));
    }
    check(ok, parts.join("; "))
}

fn picard_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let f = common::random_field(&mut rng, 2, 5, 0.5);
        let t = 0.5;
        let exact = picard_second_iterate(&f, t);
        let quad = common::picard_trapezoid(&f, t, 10_000);
        for (n, v) in &quad {
            worst = worst.max((exact.get(*n) - v).norm());
        }
        worst = worst.max(exact.iter().filter(|(n, _)| !quad.contains_key(n)).map(|(_, v)| v.norm()).fold(0.0, f64::max));
    }
    check(worst <= 1e-8, format!("max difference {worst:.2e}"))
}

fn threshold() -> Outcome {
    let radii = [8, 16, 32, 64];
    let mut parts = Vec::new();
    let mut ok = true;
    for (p, below, above) in [(2.0, 0.4, 0.6), (4.0, 0.65, 0.85)] {
        let scan = threshold_scan(p, &[below, above], &radii, 8, 0.1).map_err(|e| e.to_string())?;
        let slope = |s: f64| scan.rows.iter().find(|r| r.s == s).map(|r| r.slope).unwrap();
        let lo = scan.classification(below).unwrap_or("");
        let hi = scan.classification(above).unwrap_or("");
        ok &= lo == "growing" && hi == "bounded";
        parts.push(format!("p = {p}: s = {below} {lo} ({:.3}), s = {above} {hi} ({:.3})", slope(below), slope(above)));
    }
    check(ok, parts.join("; "))
}

fn modulation_bound() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for j in 2..=3 {
        for k in [1.0, 2.0] {
            let s = modulation_sum_s(j, k, 2.0, 100_000).map_err(|e| e.to_string())?;
            let b = modulation_sum_bound(j, k, 2.0).map_err(|e| e.to_string())?;
            ok &= s > 0.0 && s <= b;
            parts.push(format!("j = {j}, K = {k}: {s:.3e} <= {b:.3e}"));
        }
    }
    check(ok, parts.join("; "))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let init = dir.path().join("init.json");
    std::fs::write(&init, telescoping_data().to_json()).map_err(|e| e.to_string())?;
    let init = init.to_str().unwrap().to_string();
    let diag = dir.path().join("diag.json");
    std::fs::write(&diag, diagonal_data().to_json()).map_err(|e| e.to_string())?;
    let diag = diag.to_str().unwrap().to_string();
    let runs: Vec<Vec<&str>> = vec![
        vec!["count", "--sign", "hyperbolic", "--radius", "16", "--theta", "0.25", "--samples", "500", "--seed", "7"],
        vec!["simulate", "--init", &init, "--radius", "4", "--dt", "0.01", "--T", "0.2", "--record-every", "5", "--norms", "0:2,1:2"],
        vec!["nf-compare", "--init", &diag, "--radius", "4", "--T", "0.05", "--steps", "10", "--Jmax", "3"],
        vec!["illpose", "--s", "0", "--p", "2", "--t", "1", "--N", "16,32,64"],
        vec!["probe", "--p", "2", "--s-list", "0.4,0.6", "--radii", "4,8", "--sigma0-range", "2"],
        vec!["probe", "--p", "2", "--modulation-j", "2,3", "--K", "1", "--alpha-radius", "1000"],
    ];
    let exe = env!("CARGO_BIN_EXE_hnls-lab");
    for args in &runs {
        let a = Command::new(exe).args(args).output().map_err(|e| e.to_string())?;
        let b = Command::new(exe).args(args).output().map_err(|e| e.to_string())?;
        if a.status.code() != Some(0) {
            return Err(format!("`{}` exited with {:?}: {}", args[0], a.status.code(), String::from_utf8_lossy(&a.stderr)));
        }
        if a.stdout != b.stdout || a.stdout.is_empty() {
            return Err(format!("`{}` output differs between runs", args[0]));
        }
    }
    Ok(format!("{} commands byte-identical across two runs", runs.len()))
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("tree cardinality", tree_cardinality),
        ("resonance oracle equivalence", resonance_oracle),
        ("counting-bound ratio", counting_ratio),
        ("single-mode exact solution", single_mode),
        ("conservation", conservation),
        ("nonlinearity decomposition", decomposition),
        ("normal-form/direct equivalence", nf_equivalence),
        ("telescoping identity", telescoping),
        ("error-term decay", decay),
        ("ill-posedness exponent", illposedness),
        ("Picard-iterate oracle", picard_oracle),
        ("threshold scan", threshold),
        ("modulation sum bound", modulation_bound),
        ("CLI determinism", determinism),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {:2} {name} [{secs:.1}s]: {d}", i + 1),
            Err(d) => {
                failures += 1;
                println!("FAIL {:2} {name} [{secs:.1}s]: {d}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
