//! Acceptance criteria, one PASS/FAIL line each. A failed criterion is
//! reported in the output and the summary; it does not abort the run or the
//! exit status.
//!
//! `cargo test -p thermocc --test acceptance -- 3 8` runs a subset.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use thermocc::dmcc::{run_quench, ClusterAmplitudes, Truncation};
use thermocc::observables::quadratic_oracle;
use thermocc::oracle_dense::{build_thermal_ket, projection_oracle, propagate_dense};
use thermocc::oracle_tebd::run_tebd;
use thermocc::thermofield::build_super_hamiltonian;
use thermocc::wick::{evaluate, generate_eom};
use thermocc::{build_bath, BathDiscretization, Occupations, SiamConfig, TrajectoryRecord};

use Truncation::{Singles as S, SinglesDoubles as SD};

struct Line {
    id: &'static str,
    name: &'static str,
    pass: bool,
    detail: String,
}

struct Suite {
    lines: Vec<Line>,
    runs: HashMap<String, TrajectoryRecord>,
}

impl Suite {
    fn check(&mut self, id: &'static str, name: &'static str, pass: bool, detail: String) {
        println!("{} [{id}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.lines.push(Line {
            id,
            name,
            pass,
            detail,
        });
    }

    /// Runs are cached by label so the N_b = 30 trajectories feed several
    /// criteria.
    fn run(&mut self, label: &str, f: impl FnOnce() -> TrajectoryRecord) -> TrajectoryRecord {
        if let Some(r) = self.runs.get(label) {
            return r.clone();
        }
        let start = Instant::now();
        let r = f();
        eprintln!("  run {label}: {:.1} s", start.elapsed().as_secs_f64());
        self.runs.insert(label.to_string(), r.clone());
        r
    }
}

fn base() -> SiamConfig {
    SiamConfig::default()
}

fn dmcc(config: &SiamConfig, t: Truncation) -> TrajectoryRecord {
    run_quench(config, t).expect("dmcc run")
}

fn dense(config: &SiamConfig) -> TrajectoryRecord {
    let bath = build_bath(config).unwrap();
    let rho = build_thermal_ket(&Occupations::reference(config, &bath)).unwrap();
    propagate_dense(&rho, config).expect("dense run")
}

fn tebd(config: &SiamConfig) -> TrajectoryRecord {
    run_tebd(config).expect("tebd run")
}

/// Per-time maximum of |Δn_imp| over both spins; grids must coincide.
fn imp_dev(a: &TrajectoryRecord, b: &TrajectoryRecord) -> Vec<(f64, f64)> {
    assert_eq!(a.len(), b.len(), "time grids differ");
    a.samples()
        .iter()
        .zip(b.samples())
        .map(|(x, y)| {
            assert!((x.time - y.time).abs() < 1e-9);
            let d = (x.n_imp[0] - y.n_imp[0]).abs().max((x.n_imp[1] - y.n_imp[1]).abs());
            (x.time, d)
        })
        .collect()
}

fn max_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, f64::max)
}

fn max_imp_dev(a: &TrajectoryRecord, b: &TrajectoryRecord) -> f64 {
    max_of(imp_dev(a, b).into_iter().map(|(_, d)| d))
}

fn n_drift(r: &TrajectoryRecord) -> f64 {
    let n0 = r.samples()[0].n_electrons;
    max_of(r.samples().iter().map(|s| (s.n_electrons - n0).abs()))
}

fn max_trace_dev(r: &TrajectoryRecord) -> f64 {
    max_of(r.samples().iter().map(|s| s.trace_dev.expect("trace diagnostic")))
}

fn final_sample(r: &TrajectoryRecord) -> (f64, f64) {
    let s = r.last().unwrap();
    (s.n_total(), s.polarization())
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

fn criterion_1(suite: &mut Suite) {
    let config = SiamConfig {
        hubbard_u: 0.0,
        temperature: 0.0,
        n_bath: 100,
        t_final: 200.0,
        // truncation error at 0.02 is ~1e-10, far inside the tolerance
        dt: 0.02,
        ..base()
    };
    let (s, secs) = timed(|| dmcc(&config, S));
    let exact = quadratic_oracle(&config).unwrap();
    let dev = max_imp_dev(&s, &exact);
    suite.check(
        "1",
        "U=0 DMCC-S vs quadratic oracle, N_b=100, t<=200",
        dev < 1e-8,
        format!("max |dn_imp| = {dev:.2e} (tol 1e-8); DMCC-S run {secs:.0} s (target < 60 s)"),
    );
}

fn random_amplitudes(rng: &mut ChaCha8Rng, n: usize, t: Truncation) -> ClusterAmplitudes {
    let mut a = ClusterAmplitudes::zeros(n, t);
    let mut z = || Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    for m in &mut a.t1 {
        m.mapv_inplace(|_| z());
    }
    if let Some(t2) = &mut a.t2 {
        for m in t2.iter_mut() {
            m.mapv_inplace(|_| z());
        }
    }
    a.antisymmetrize();
    // rescale to a largest element of 0.1
    let mut big: f64 = a.t1.iter().flatten().map(|x| x.norm()).fold(0.0, f64::max);
    if let Some(t2) = &a.t2 {
        big = t2.iter().flatten().map(|x| x.norm()).fold(big, f64::max);
    }
    let f = 0.1 / big;
    for m in &mut a.t1 {
        m.mapv_inplace(|x| x * f);
    }
    if let Some(t2) = &mut a.t2 {
        for m in t2.iter_mut() {
            m.mapv_inplace(|x| x * f);
        }
    }
    a
}

fn criterion_2(suite: &mut Suite) {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for n_bath in [1usize, 2] {
        for (gamma, t) in [(0.0, 0.0), (0.04, 3.0)] {
            let config = SiamConfig {
                n_bath: 2,
                gamma,
                delta_eps: 0.08,
                omega: 4.0 * PI * 0.04,
                ..base()
            };
            let bath = if n_bath == 1 {
                BathDiscretization {
                    energies: vec![0.05],
                    couplings: vec![config.hybridization],
                }
            } else {
                build_bath(&config).unwrap()
            };
            let occ = Occupations::reference(&config, &bath);
            let sh = build_super_hamiltonian(&config, &bath, &occ, t).unwrap();
            for trunc in [S, SD] {
                let program = generate_eom(&sh, trunc).unwrap();
                for _ in 0..20 {
                    let amps = random_amplitudes(&mut rng, n_bath + 1, trunc);
                    let want = projection_oracle(&sh, &occ, &amps).unwrap();
                    let got = evaluate(&program, &sh, &amps).unwrap();
                    worst = worst.max(got.max_abs_diff(&want));
                    cases += 1;
                }
            }
        }
    }
    suite.check(
        "2",
        "compiled contractions vs dense projection, N_b in {1,2}",
        worst < 1e-10,
        format!("{cases} random inputs (max |t| = 0.1), max residual deviation {worst:.2e} (tol 1e-10)"),
    );
}

fn small() -> SiamConfig {
    SiamConfig {
        n_bath: 2,
        hubbard_u: 0.1,
        temperature: 0.04,
        dt: 0.01,
        t_final: 100.0,
        ..base()
    }
}

fn criterion_3(suite: &mut Suite) {
    let config = small();
    let exact = suite.run("small dense", || dense(&config));
    let mps = suite.run("small tebd", || tebd(&config));
    let s = suite.run("small S", || dmcc(&config, S));
    let sd = suite.run("small SD", || dmcc(&config, SD));

    let dev = max_imp_dev(&mps, &exact);
    suite.check(
        "3a",
        "TEBD vs dense, N_b=2, t<=100",
        dev < 1e-4,
        format!("max |dn_imp| = {dev:.2e} (tol 1e-4)"),
    );

    let d_sd = imp_dev(&sd, &exact);
    let d_s = imp_dev(&s, &exact);
    let max_sd = max_of(d_sd.iter().map(|x| x.1));
    let late: Vec<_> = d_sd.iter().zip(&d_s).filter(|(a, _)| a.0 > 5.0).collect();
    let violations: Vec<f64> = late.iter().filter(|(a, b)| a.1 >= b.1).map(|(a, _)| a.0).collect();
    suite.check(
        "3b",
        "DMCC-SD vs dense < 0.02 and below DMCC-S at every t > 5",
        max_sd < 0.02 && violations.is_empty(),
        format!(
            "max |dn_imp| SD {max_sd:.2e} (tol 0.02), S {:.2e}; SD >= S at {} of {} times{}",
            max_of(d_s.iter().map(|x| x.1)),
            violations.len(),
            late.len(),
            match violations.first() {
                Some(t) => format!(" (first at t = {t})"),
                None => String::new(),
            }
        ),
    );
}

/// Step used for the N_b = 30 DMCC runs.
const LARGE_DT: f64 = 0.1;

fn large(u: f64, temperature: f64) -> SiamConfig {
    SiamConfig {
        n_bath: 30,
        hubbard_u: u,
        temperature,
        dt: LARGE_DT,
        t_final: 100.0,
        ..base()
    }
}

fn large_run(suite: &mut Suite, u: f64, temperature: f64, t: Truncation) -> TrajectoryRecord {
    let label = format!("N_b=30 U={u} T={temperature} {t:?}");
    suite.run(&label, || dmcc(&large(u, temperature), t))
}

fn criterion_4(suite: &mut Suite) {
    let mut drift: f64 = 0.0;
    let mut trace: f64 = 0.0;
    for temperature in [0.0, 0.04] {
        for t in [S, SD] {
            let r = large_run(suite, 0.1, temperature, t);
            drift = drift.max(n_drift(&r));
            trace = trace.max(max_trace_dev(&r));
        }
    }
    // no instruction may write a rank-0 residual: the trace equation is empty
    let config = large(0.1, 0.04);
    let bath = build_bath(&config).unwrap();
    let occ = Occupations::reference(&config, &bath);
    let sh = build_super_hamiltonian(&config, &bath, &occ, 0.0).unwrap();
    let scalar = generate_eom(&sh, SD)
        .unwrap()
        .instructions()
        .iter()
        .filter(|i| i.target.rank() == 0 || i.out.is_empty())
        .count();
    suite.check(
        "4a",
        "DMCC number and trace conservation, N_b=30, gamma=0, T in {0,0.04}",
        drift < 1e-6 && trace == 0.0 && scalar == 0,
        format!("max |N(t)-N(0)| = {drift:.2e} (tol 1e-6); trace dev {trace:e}; scalar residual instructions {scalar}"),
    );

    let config = small();
    let exact = suite.run("small dense", || dense(&config));
    let mps = suite.run("small tebd", || tebd(&config));
    let (te, de) = (max_trace_dev(&mps), max_trace_dev(&exact));
    let (tn, dn) = (n_drift(&mps), n_drift(&exact));
    suite.check(
        "4b",
        "TEBD/dense trace conservation, N_b=2, gamma=0",
        te < 1e-8 && de < 1e-8 && tn < 1e-6 && dn < 1e-6,
        format!("trace dev TEBD {te:.2e}, dense {de:.2e} (tol 1e-8); |N(t)-N(0)| TEBD {tn:.2e}, dense {dn:.2e} (tol 1e-6)"),
    );
}

fn criterion_5(suite: &mut Suite) {
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for (u, temperature) in [(0.1, 0.0), (0.1, 0.04), (0.1, 0.08), (0.05, 0.0), (0.0, 0.0)] {
        let r = large_run(suite, u, temperature, SD);
        worst = max_of(r.samples().iter().map(|s| s.herm_dev.unwrap())).max(worst);
        n += 1;
    }
    let r = suite.run("small SD", || dmcc(&small(), SD));
    worst = max_of(r.samples().iter().map(|s| s.herm_dev.unwrap())).max(worst);
    suite.check(
        "5",
        "DMCC-SD hermiticity deviation in closed runs",
        worst < 1e-6,
        format!("max deviation {worst:.2e} over {} runs (tol 1e-6)", n + 1),
    );
}

fn criterion_6(suite: &mut Suite) {
    let mut detail = Vec::new();
    let mut ok_t = true;
    for t in [S, SD] {
        let finals: Vec<(f64, f64)> = [0.0, 0.04, 0.08]
            .iter()
            .map(|&temperature| final_sample(&large_run(suite, 0.1, temperature, t)))
            .collect();
        let pop_ok = finals.windows(2).all(|w| w[1].0 <= w[0].0);
        let pol_ok = finals.windows(2).all(|w| w[1].1 <= w[0].1);
        ok_t &= pop_ok && pol_ok;
        detail.push(format!(
            "{t:?} n(T) = {:.4}/{:.4}/{:.4}, p(T) = {:.4}/{:.4}/{:.4}",
            finals[0].0, finals[1].0, finals[2].0, finals[0].1, finals[1].1, finals[2].1
        ));
    }
    suite.check(
        "6a",
        "population and polarization non-increasing in T at t=100, U=0.1",
        ok_t,
        detail.join("; "),
    );

    let mut ok_u = true;
    let mut detail = Vec::new();
    for u in [0.05, 0.1] {
        let s = large_run(suite, u, 0.0, S);
        let sd = large_run(suite, u, 0.0, SD);
        let below: Vec<f64> = s
            .samples()
            .iter()
            .zip(sd.samples())
            .filter(|(a, b)| a.n_total() < b.n_total())
            .map(|(a, b)| b.n_total() - a.n_total())
            .collect();
        let (fs, fsd) = (final_sample(&s).0, final_sample(&sd).0);
        ok_u &= below.is_empty();
        detail.push(format!(
            "U={u}: n_S(100) = {fs:.4} vs n_SD(100) = {fsd:.4}, S < SD at {} times (by at most {:.1e})",
            below.len(),
            max_of(below.iter().copied())
        ));
    }
    suite.check(
        "6b",
        "DMCC-S population >= DMCC-SD population, U in {0.05,0.1}, T=0",
        ok_u,
        detail.join("; "),
    );

    let s = large_run(suite, 0.0, 0.0, S);
    let sd = large_run(suite, 0.0, 0.0, SD);
    let dev = max_imp_dev(&s, &sd);
    suite.check(
        "6c",
        "DMCC-S = DMCC-SD at U=0",
        dev < 1e-8,
        format!("max |dn_imp| = {dev:.2e} (tol 1e-8)"),
    );
}

fn driven(omega: f64) -> SiamConfig {
    SiamConfig {
        gamma: 0.2,
        delta_eps: 0.08,
        omega,
        ..large(0.1, 0.04)
    }
}

/// Half the peak-to-peak total population over the last full drive period
/// before `t_final`.
fn oscillation_amplitude(r: &TrajectoryRecord, omega: f64) -> f64 {
    let t_end = r.last().unwrap().time;
    let window: Vec<f64> = r
        .samples()
        .iter()
        .filter(|s| s.time >= t_end - 2.0 * PI / omega - 1e-9)
        .map(|s| s.n_total())
        .collect();
    let hi = window.iter().copied().fold(f64::MIN, f64::max);
    let lo = window.iter().copied().fold(f64::MAX, f64::min);
    0.5 * (hi - lo)
}

fn criterion_7(suite: &mut Suite) {
    let v = base().hybridization;
    let mut dev: f64 = 0.0;
    let mut amp = HashMap::new();
    for (label, omega) in [("pi V", PI * v), ("4 pi V", 4.0 * PI * v)] {
        let config = driven(omega);
        let s = suite.run(&format!("driven {label} S"), || dmcc(&config, S));
        let sd = suite.run(&format!("driven {label} SD"), || dmcc(&config, SD));
        dev = dev.max(max_imp_dev(&s, &sd));
        amp.insert(label, (oscillation_amplitude(&s, omega), oscillation_amplitude(&sd, omega)));
    }
    suite.check(
        "7a",
        "driven-dissipative DMCC-S vs DMCC-SD, gamma=0.2",
        dev < 0.01,
        format!("max |dn_imp| = {dev:.2e} (tol 0.01)"),
    );
    let (lo, hi) = (amp["pi V"], amp["4 pi V"]);
    suite.check(
        "7b",
        "oscillation amplitude smaller at 4 pi V than at pi V",
        hi.0 < lo.0 && hi.1 < lo.1,
        format!(
            "S {:.4} vs {:.4}; SD {:.4} vs {:.4} (pi V vs 4 pi V)",
            lo.0, hi.0, lo.1, hi.1
        ),
    );
}

fn criterion_8(suite: &mut Suite) {
    let probe = SiamConfig {
        t_final: 20.0,
        record_interval: 0.4,
        ..small()
    };
    let at = |dt: f64| dmcc(&SiamConfig { dt, ..probe.clone() }, SD);
    let (a, b, c) = (at(0.4), at(0.2), at(0.1));
    let ratio = max_imp_dev(&a, &b) / max_imp_dev(&b, &c);
    suite.check(
        "8a",
        "RK4 step-halving deviation ratio (DMCC-SD vs itself)",
        ratio >= 8.0,
        format!(
            "|x(0.4)-x(0.2)| = {:.2e}, |x(0.2)-x(0.1)| = {:.2e}, ratio {ratio:.1} (need >= 8)",
            max_imp_dev(&a, &b),
            max_imp_dev(&b, &c)
        ),
    );

    let probe = SiamConfig {
        t_final: 20.0,
        record_interval: 0.1,
        ..small()
    };
    let exact = dense(&probe);
    let at = |dt: f64| tebd(&SiamConfig { tebd_dt: dt, ..probe.clone() });
    let (coarse, fine) = (max_imp_dev(&at(0.1), &exact), max_imp_dev(&at(0.05), &exact));
    let ratio = coarse / fine;
    suite.check(
        "8b",
        "TEBD Trotter step-halving ratio vs dense",
        (3.0..=5.0).contains(&ratio),
        format!("deviation {coarse:.2e} at 0.1, {fine:.2e} at 0.05, ratio {ratio:.2} (need 4 +- 1)"),
    );
}

fn main() {
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn(&mut Suite)); 8] = [
        ("1", criterion_1),
        ("2", criterion_2),
        ("3", criterion_3),
        ("4", criterion_4),
        ("5", criterion_5),
        ("6", criterion_6),
        ("7", criterion_7),
        ("8", criterion_8),
    ];
    let mut suite = Suite {
        lines: Vec::new(),
        runs: HashMap::new(),
    };
    let start = Instant::now();
    for (id, f) in criteria {
        if only.is_empty() || only.iter().any(|o| o == id) {
            f(&mut suite);
        }
    }
    let failed: Vec<&Line> = suite.lines.iter().filter(|l| !l.pass).collect();
    println!(
        "acceptance: {} passed, {} failed in {:.0} s",
        suite.lines.len() - failed.len(),
        failed.len(),
        start.elapsed().as_secs_f64()
    );
    for l in &failed {
        println!("  failed [{}] {}: {}", l.id, l.name, l.detail);
    }
}
