//! End-to-end acceptance checks. Each check prints one PASS/FAIL line; the
//! binary exits non-zero if any check fails.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spinlab::averaging::{build_kernel, evaluation_grid, measure_lower_bound, phi_n, probe_points};
use spinlab::demag::{rasterize_smooth, solve, DemagConfig, MagGrid, Method};
use spinlab::energies::{exchange_discrete, ExchangeParams};
use spinlab::fem_projection::energy_breakdown;
use spinlab::fields::SmoothField;
use spinlab::geometry::{build_lattice, decompose, neighbors, DomainSpec, TetKind};
use spinlab::lab::{
    run_construction_study, run_defect_robustness, run_norm_study, run_total_study, DemagSettings,
    FieldSpec, StudyStatus, SweepConfig, ZeemanSpec,
};
use spinlab::spin_field::{DefectAmplitude, DefectSpec, SpinField};
use spinlab::{Mat3, Vec3};

type Check = (&'static str, Duration, fn() -> Result<String, String>);

fn helix_sweep(n_list: Vec<usize>) -> SweepConfig {
    SweepConfig::new(
        DomainSpec::unit_box(),
        n_list,
        FieldSpec::Helix {
            q: Vec3::new(2.0 * PI, 0.0, 0.0),
        },
    )
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn require(failures: &mut Vec<String>, ok: bool, what: impl Into<String>) {
    if !ok {
        failures.push(what.into());
    }
}

fn verdict(failures: Vec<String>, summary: String) -> Result<String, String> {
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{}; {summary}", failures.join("; ")))
    }
}

/// Σ_T |T|·|∇P(μ)|² with gradients solved directly from edge differences.
fn dirichlet_oracle(field: &SpinField<'_>, tets: &[spinlab::geometry::Tet]) -> f64 {
    let l = field.lattice();
    tets.iter()
        .map(|t| {
            let p0 = l.position(t.vertices[0]);
            let d = Mat3::from_columns(&[1, 2, 3].map(|i| l.position(t.vertices[i]) - p0));
            let u = Mat3::from_columns(
                &[1, 2, 3].map(|i| field.value(t.vertices[i]) - field.value(t.vertices[0])),
            );
            let g = u * d.try_inverse().expect("non-degenerate tet");
            d.determinant().abs() / 6.0 * g.norm_squared()
        })
        .sum()
}

fn exchange_identity() -> Result<String, String> {
    let l = build_lattice(&DomainSpec::unit_box(), 1.0, 4).unwrap();
    assert_eq!(l.len(), 125);
    let dec = decompose(&l);
    let nt = neighbors(&l);
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (mut worst_id, mut worst_alpha, mut worst_oracle) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let coupling = rng.gen_range(0.5..3.0);
        let s = SpinField::random_unit(&l, &mut rng);
        let b = energy_breakdown(&s, &dec).unwrap();
        let ex = exchange_discrete(&s, &nt, &ExchangeParams::new(coupling).unwrap()).unwrap();
        let alpha_explicit = b.s_cross - b.s_surface;
        worst_id = worst_id
            .max((b.dirichlet - ex / (2.0 * coupling) - alpha_explicit).abs() / b.dirichlet);
        worst_alpha = worst_alpha.max(rel(b.alpha_n, alpha_explicit));
        worst_oracle = worst_oracle.max(rel(b.dirichlet, dirichlet_oracle(&s, dec.tets())));
    }
    let mut f = Vec::new();
    require(
        &mut f,
        worst_id <= 1e-12,
        format!("identity residual {worst_id:.2e} > 1e-12"),
    );
    require(
        &mut f,
        worst_alpha <= 1e-10,
        format!("α_n forms differ by {worst_alpha:.2e} > 1e-10"),
    );
    require(
        &mut f,
        worst_oracle <= 1e-12,
        format!("Dirichlet energy off the direct oracle by {worst_oracle:.2e}"),
    );
    verdict(
        f,
        format!("20 fields, identity residual {worst_id:.1e}, α_n agreement {worst_alpha:.1e}, oracle {worst_oracle:.1e}"),
    )
}

fn construction() -> Result<String, String> {
    let mut cfg = helix_sweep(vec![8, 16, 32, 64]);
    cfg.tolerances.construction_max_rel_error = Some(0.03);
    let t = run_construction_study(&cfg).map_err(|e| e.to_string())?;
    let target = 2.0 * (2.0 * PI).powi(2);
    let mut f = Vec::new();
    for r in &t.rows {
        // sampled helix on the closed unit box: 8(n+1)² sin²(π/n)
        let nf = r.n as f64;
        let closed = 8.0 * (nf + 1.0).powi(2) * (PI / nf).sin().powi(2);
        require(
            &mut f,
            rel(r.value, closed) < 1e-10,
            format!("n = {}: E = {} vs closed form {closed}", r.n, r.value),
        );
        require(
            &mut f,
            rel(r.reference, target) < 1e-9,
            format!("reference {} ≠ 2(2π)²", r.reference),
        );
    }
    let errs: Vec<f64> = t.rows.iter().map(|r| r.rel_error).collect();
    let last = t.rows.last().unwrap();
    require(
        &mut f,
        last.rel_error <= 0.03,
        format!("relative error {:.4} at n = 64 > 0.03", last.rel_error),
    );
    let rate = t.fitted_rate.unwrap_or(f64::NAN);
    require(
        &mut f,
        (0.9..=2.1).contains(&rate),
        format!("fitted rate {rate:.3} outside [0.9, 2.1]"),
    );
    require(
        &mut f,
        errs.windows(2).all(|w| w[1] < w[0]),
        "errors not monotone",
    );
    require(
        &mut f,
        t.status.is_success(),
        format!("study status {}", t.status),
    );
    verdict(f, format!("rel errors {errs:.4?}, rate {rate:.3}"))
}

fn unit_norm_limit() -> Result<String, String> {
    let t = run_norm_study(&helix_sweep(vec![8, 16, 32, 64])).map_err(|e| e.to_string())?;
    let mut f = Vec::new();
    for r in &t.rows {
        let zeta = r.bound.unwrap();
        require(
            &mut f,
            r.value <= zeta,
            format!("n = {}: deviation {:.3e} > ζ_n {zeta:.3e}", r.n, r.value),
        );
    }
    let rate = t.fitted_rate.unwrap_or(f64::NAN);
    require(
        &mut f,
        (1.5..=2.5).contains(&rate),
        format!("fitted rate {rate:.3} outside [1.5, 2.5]"),
    );
    require(
        &mut f,
        t.status.is_success(),
        format!("study status {}", t.status),
    );
    let devs: Vec<String> = t
        .rows
        .iter()
        .map(|r| format!("{:.2e}≤{:.2e}", r.value, r.bound.unwrap()))
        .collect();
    verdict(
        f,
        format!("deviation vs ζ_n [{}], rate {rate:.3}", devs.join(", ")),
    )
}

fn defect_robustness() -> Result<String, String> {
    let mut cfg = helix_sweep(vec![8, 16, 32, 64]);
    cfg.defects = Some(DefectSpec {
        beta: 1.0,
        amplitude: DefectAmplitude::InverseLog { scale: 1.0 },
        seed: 7,
    });
    let t = run_defect_robustness(&cfg).map_err(|e| e.to_string())?;
    let mut f = Vec::new();
    for r in &t.rows {
        // (a/n)·A·6·⌈βn⌉·c_n·1.1, recomputed here
        let nf = r.n as f64;
        let bound = 6.0 * nf.ceil() / nf / (nf + 1.0).ln() * 1.1;
        require(
            &mut f,
            rel(r.bound.unwrap(), bound) < 1e-12,
            format!("n = {}: bound mismatch", r.n),
        );
        require(
            &mut f,
            r.value <= bound,
            format!(
                "n = {}: perturbation {:.4e} > bound {bound:.4e}",
                r.n, r.value
            ),
        );
    }
    let perts: Vec<f64> = t.rows.iter().map(|r| r.value).collect();
    require(
        &mut f,
        perts.windows(2).all(|w| w[1] < w[0]),
        format!("perturbation not decreasing: {}", sci(&perts)),
    );
    require(
        &mut f,
        t.status.is_success(),
        format!("study status {}", t.status),
    );

    cfg.defects = Some(DefectSpec {
        beta: 1.0,
        amplitude: DefectAmplitude::Constant(1.0 / 9f64.ln()),
        seed: 7,
    });
    let frozen = run_defect_robustness(&cfg).map_err(|e| e.to_string())?;
    require(
        &mut f,
        frozen.status == StudyStatus::HypothesisViolatingControl,
        format!("frozen amplitude reported as {}", frozen.status),
    );
    verdict(
        f,
        format!(
            "perturbations {}, frozen control: {}",
            sci(&perts),
            frozen.status
        ),
    )
}

fn demag_oracle() -> Result<String, String> {
    let mut f = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let spectral = DemagConfig::default();
    let direct = DemagConfig {
        method: Method::Direct,
        ..DemagConfig::default()
    };
    let (mut worst_method, mut worst_recip) = (0.0f64, 0.0f64);
    for _ in 0..10 {
        let dims = [0; 3].map(|_| rng.gen_range(1..=16usize));
        let cell = rng.gen_range(0.05..0.5);
        let random_grid = |rng: &mut ChaCha8Rng| {
            let mut g = MagGrid::new(dims, cell, Vec3::zeros()).unwrap();
            for v in g.values_mut() {
                *v = Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            }
            g
        };
        let g1 = random_grid(&mut rng);
        let g2 = random_grid(&mut rng);
        let s1 = solve(&g1, &spectral).unwrap();
        let d1 = solve(&g1, &direct).unwrap();
        worst_method = worst_method.max(rel(s1.energy(), d1.energy()));
        let s2 = solve(&g2, &spectral).unwrap();
        let (i12, i21) = (s1.interaction(&g2).unwrap(), s2.interaction(&g1).unwrap());
        worst_recip = worst_recip.max((i12 - i21).abs() / (s1.energy() * s2.energy()).sqrt());
    }
    require(
        &mut f,
        worst_method <= 1e-10,
        format!("spectral vs direct {worst_method:.2e} > 1e-10"),
    );
    require(
        &mut f,
        worst_recip <= 1e-9,
        format!("reciprocity {worst_recip:.2e} > 1e-9"),
    );

    let ball = DomainSpec::new_ball(Vec3::zeros(), 0.5).unwrap();
    let g = rasterize_smooth(&SmoothField::constant(Vec3::z()), &ball, 64, 4).unwrap();
    let cfg = DemagConfig {
        cells: 64,
        ..DemagConfig::default()
    };
    let e = solve(&g, &cfg).unwrap().energy();
    // uniform ball: h_d = −m/3 inside, E = μ0/2 · |m|²/3 · λ(B)
    let target = ball.volume() / 6.0;
    let ball_err = rel(e, target);
    require(
        &mut f,
        ball_err <= 0.05,
        format!("ball energy off by {:.2}%", 100.0 * ball_err),
    );
    verdict(
        f,
        format!(
            "methods agree to {worst_method:.1e}, reciprocity {worst_recip:.1e}, ball {e:.5} vs {target:.5} ({:.2}%)",
            100.0 * ball_err
        ),
    )
}

fn composite() -> Result<String, String> {
    let mut cfg = helix_sweep(vec![8, 16, 32]);
    cfg.zeeman = ZeemanSpec::Uniform(Vec3::z());
    cfg.demag = Some(DemagSettings::default());
    let t = run_total_study(&cfg).map_err(|e| e.to_string())?;
    let mut f = Vec::new();
    require(
        &mut f,
        t.status.is_success(),
        format!("study status {}", t.status),
    );
    for sub in &t.subtables {
        require(
            &mut f,
            sub.status.is_success(),
            format!("{}: {}", sub.study, sub.status),
        );
    }
    let zeeman = t
        .subtables
        .iter()
        .find(|s| s.study == "total.zeeman")
        .expect("zeeman sub-table");
    for r in &zeeman.rows {
        require(
            &mut f,
            r.value.abs() <= 1e-12 && r.reference.abs() <= 1e-12,
            format!("n = {}: Zeeman {:.2e}", r.n, r.value),
        );
    }
    let errs = t.errors();
    require(
        &mut f,
        errs.windows(2).all(|w| w[1] < w[0]),
        format!("total error not decreasing: {}", sci(&errs)),
    );
    let parts: Vec<String> = t
        .subtables
        .iter()
        .map(|s| format!("{} {:.3e}", s.study, s.rows.last().unwrap().abs_error))
        .collect();
    verdict(
        f,
        format!(
            "total errors {}; last errors {}",
            sci(&errs),
            parts.join(", ")
        ),
    )
}

fn combinatorics() -> Result<String, String> {
    let mut f = Vec::new();
    // 4³ cells
    let l = build_lattice(&DomainSpec::unit_box(), 1.0, 4).unwrap();
    let dec = decompose(&l);
    let h = l.spacing();
    let mut volume = 0.0;
    let mut corner_count: HashMap<(usize, usize), u8> = HashMap::new();
    let mut center_count: HashMap<(usize, usize), u8> = HashMap::new();
    for t in dec.tets() {
        let p0 = l.position(t.vertices[0]);
        let d = Mat3::from_columns(&[1, 2, 3].map(|i| l.position(t.vertices[i]) - p0));
        volume += d.determinant().abs() / 6.0;
        for i in 0..4 {
            for j in i + 1..4 {
                let (p, q) = (
                    t.vertices[i].min(t.vertices[j]),
                    t.vertices[i].max(t.vertices[j]),
                );
                let map = if t.kind == TetKind::Corner {
                    &mut corner_count
                } else {
                    &mut center_count
                };
                *map.entry((p, q)).or_default() += 1;
            }
        }
    }
    let full_cells = (0..l.len())
        .filter(|&p| {
            let [i, j, k] = l.node(p);
            (0..8).all(|c| {
                l.find([i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)])
                    .is_some()
            })
        })
        .count();
    let omega_n = full_cells as f64 * h.powi(3);
    require(&mut f, full_cells == 64, format!("{full_cells} cells"));
    require(
        &mut f,
        (volume - omega_n).abs() < 1e-13,
        format!("Σ|T| = {volume} vs λ(Ω_n) = {omega_n}"),
    );
    require(
        &mut f,
        (dec.covered_volume() - omega_n).abs() < 1e-13,
        "covered_volume disagrees",
    );

    let inside = |c: i64| c > -2 && c < 2;
    let (mut axis_interior, mut diag_interior) = (0, 0);
    for (p, q) in neighbors(&l).edges().iter().copied() {
        let (a, b) = (l.node(p), l.node(q));
        let axis = (0..3).find(|&d| a[d] != b[d]).unwrap();
        let brute = corner_count
            .get(&(p.min(q), p.max(q)))
            .copied()
            .unwrap_or(0);
        let lib = dec.axis_edge(p, q).map_or(0, |e| e.corner_mult);
        require(
            &mut f,
            brute == lib,
            format!("axis edge {a:?}-{b:?}: counted {brute}, stored {lib}"),
        );
        if (0..3).filter(|&d| d != axis).all(|d| inside(a[d])) {
            axis_interior += 1;
            require(
                &mut f,
                brute == 4,
                format!("interior axis edge {a:?}-{b:?} multiplicity {brute}"),
            );
        }
    }
    for e in dec.diag_edges() {
        let (a, b) = (l.node(e.nodes.0), l.node(e.nodes.1));
        let key = (e.nodes.0.min(e.nodes.1), e.nodes.0.max(e.nodes.1));
        let brute = center_count.get(&key).copied().unwrap_or(0);
        require(
            &mut f,
            brute == e.center_mult,
            format!(
                "diagonal {a:?}-{b:?}: counted {brute}, stored {}",
                e.center_mult
            ),
        );
        let normal = (0..3).find(|&d| a[d] == b[d]).unwrap();
        if inside(a[normal]) {
            diag_interior += 1;
            require(
                &mut f,
                brute == 2,
                format!("interior diagonal {a:?}-{b:?} multiplicity {brute}"),
            );
        }
    }
    require(
        &mut f,
        center_count.len() == dec.diag_edges().len(),
        "diagonal edge sets differ",
    );
    require(
        &mut f,
        axis_interior > 0 && diag_interior > 0,
        "no interior edges examined",
    );

    let mut ratios = Vec::new();
    for domain in [
        DomainSpec::unit_box(),
        DomainSpec::new_ball(Vec3::zeros(), 0.5).unwrap(),
    ] {
        let r: Vec<f64> = [8usize, 16, 32]
            .iter()
            .map(|&n| {
                let l = build_lattice(&domain, 1.0, n).unwrap();
                neighbors(&l).boundary().len() as f64 / (n * n) as f64
            })
            .collect();
        let (lo, hi) = r
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        require(
            &mut f,
            hi <= 1.5 * lo && hi < 10.0,
            format!("#∂L/n² not bounded: {r:?}"),
        );
        ratios.push(r);
    }
    verdict(
        f,
        format!(
            "Σ|T| = {volume}, {axis_interior} interior axis edges ×4, {diag_interior} interior diagonals ×2, #∂L/n² box {:.3?} ball {:.3?}",
            ratios[0], ratios[1]
        ),
    )
}

fn partition_of_unity() -> Result<String, String> {
    let mut f = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let l = build_lattice(&DomainSpec::unit_box(), 1.0, 16).unwrap();
    let mut worst = 0.0f64;
    for k in [1usize, 2] {
        let kernel = build_kernel(1.0, k).unwrap();
        let margin = kernel.support_half_width() / 16.0;
        for _ in 0..100 {
            let y = Vec3::from_fn(|_, _| rng.gen_range(-0.5 + margin..0.5 - margin));
            worst = worst.max((kernel.translate_total(&(y * 16.0)) - 1.0).abs());
            worst = worst.max((phi_n(&kernel, &l, &y) - 1.0).abs());
        }
    }
    require(
        &mut f,
        worst <= 1e-8,
        format!("translate sum off by {worst:.2e}"),
    );

    let mut bounds = Vec::new();
    for (name, domain, k) in [
        ("box", DomainSpec::unit_box(), 1usize),
        ("ball", DomainSpec::new_ball(Vec3::zeros(), 0.5).unwrap(), 2),
    ] {
        let kernel = build_kernel(1.0, k).unwrap();
        for n in [8usize, 16] {
            let l = build_lattice(&domain, 1.0, n).unwrap();
            let mut pts = evaluation_grid(&domain, 25);
            pts.extend(probe_points(&domain, 2.0 / n as f64, 400, n as u64));
            let b = measure_lower_bound(&kernel, &l, &pts);
            let top = pts
                .iter()
                .map(|y| phi_n(&kernel, &l, y))
                .fold(0.0, f64::max);
            require(&mut f, b > 0.0, format!("{name}, n = {n}: b = {b}"));
            require(
                &mut f,
                top <= 1.0 + 1e-12,
                format!("{name}, n = {n}: Φ_n reaches {top}"),
            );
            bounds.push(format!("{name}(k={k}, n={n}) b = {b:.4}"));
        }
    }
    verdict(
        f,
        format!("max |Σρ − 1| = {worst:.1e}; {}", bounds.join(", ")),
    )
}

fn main() {
    let checks: [Check; 8] = [
        (
            "1 exchange identity",
            Duration::from_secs(10),
            exchange_identity,
        ),
        (
            "2 construction limit",
            Duration::from_secs(60),
            construction,
        ),
        (
            "3 unit-norm limit",
            Duration::from_secs(60),
            unit_norm_limit,
        ),
        (
            "4 defect robustness",
            Duration::from_secs(60),
            defect_robustness,
        ),
        (
            "5 demagnetizing oracle",
            Duration::from_secs(300),
            demag_oracle,
        ),
        ("6 composite energy", Duration::from_secs(300), composite),
        (
            "7 geometry combinatorics",
            Duration::from_secs(10),
            combinatorics,
        ),
        (
            "8 partition of unity",
            Duration::from_secs(10),
            partition_of_unity,
        ),
    ];
    // optional filter: `cargo test --test acceptance -- 2 5` runs checks 2 and 5
    let only: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, budget, check) in checks {
        if !only.is_empty()
            && !only
                .iter()
                .any(|o| name.split(' ').next() == Some(o.as_str()))
        {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(s) if took > budget => Err(format!(
                "took {:.1} s > {} s budget; {s}",
                took.as_secs_f64(),
                budget.as_secs()
            )),
            other => other,
        };
        match outcome {
            Ok(s) => println!("PASS  {name} ({:.1} s): {s}", took.as_secs_f64()),
            Err(s) => {
                failed += 1;
                println!("FAIL  {name} ({:.1} s): {s}", took.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
