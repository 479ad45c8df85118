//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use smokeflow::dataset::{self, DatasetConfig};
use smokeflow::hhd::{curl_velocity, decompose, gradient, stream_function};
use smokeflow::poisson::{solve_dirichlet_node, solve_neumann_cell, Preconditioner, SolverOptions};
use smokeflow::reconstruct::{fit_stream_function, FitParams, Stroke, StrokeSet};
use smokeflow::sim::{self, advect_scalar, project, GridConfig, SimParams, SimState};
use smokeflow::streamline::{select_seeds, trace, TraceParams};
use smokeflow::{Field, Grid, MacVelocity, ScalarField, Siting, Vec2};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_psi(grid: Grid, rng: &mut ChaCha8Rng) -> ScalarField {
    let mut psi = ScalarField::zeros(grid, Siting::Node);
    for j in 1..grid.ny {
        for i in 1..grid.nx {
            psi.set(i, j, rng.random_range(-1.0..1.0));
        }
    }
    psi
}

/// Sum of a few random sine modes, zero on the boundary.
fn smooth_psi(grid: Grid, rng: &mut ChaCha8Rng) -> ScalarField {
    let modes: Vec<(f64, f64, f64)> =
        (0..4).map(|_| (rng.random_range(1..5) as f64, rng.random_range(1..5) as f64, rng.random_range(-1.0..1.0))).collect();
    let pi = std::f64::consts::PI;
    ScalarField::from_fn(grid, Siting::Node, |p| {
        modes.iter().map(|&(a, b, c)| c * (a * pi * p.x).sin() * (b * pi * p.y).sin()).sum()
    })
    .with_zero_boundary()
}

fn random_scalar(grid: Grid, siting: Siting, rng: &mut ChaCha8Rng, amp: f64) -> ScalarField {
    let mut f = ScalarField::zeros(grid, siting);
    f.data.iter_mut().for_each(|x| *x = rng.random_range(-amp..amp));
    f
}

fn random_mac(grid: Grid, rng: &mut ChaCha8Rng, amp: f64) -> MacVelocity {
    let mut v = MacVelocity::zeros(grid);
    v.u.iter_mut().for_each(|x| *x = rng.random_range(-amp..amp));
    v.v.iter_mut().for_each(|x| *x = rng.random_range(-amp..amp));
    v
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    num / den
}

fn div_curl_identity() -> Outcome {
    let grid = Grid::unit(64, 64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let fields: Vec<ScalarField> = (0..100).map(|_| random_psi(grid, &mut rng)).collect();
    let start = Instant::now();
    let worst = fields.iter().map(|p| curl_velocity(p).max_abs_divergence()).fold(0.0, f64::max);
    let elapsed = start.elapsed();
    check(
        worst <= 1e-12 && elapsed < Duration::from_secs(1),
        format!("max divergence {worst:.3e} over 100 fields in {elapsed:.2?}"),
    )
}

fn hhd_round_trip() -> Outcome {
    let grid = Grid::unit(64, 64).unwrap();
    let opts = SolverOptions::with_tol(1e-10);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut rec, mut resid, mut p_ratio, mut gp_ratio) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for k in 0..6 {
        let psi0 = if k % 2 == 0 { smooth_psi(grid, &mut rng) } else { random_psi(grid, &mut rng) };
        let u = curl_velocity(&psi0);
        let (psi, _) = stream_function(&u, &opts).map_err(|e| e.to_string())?;
        rec = rec.max(rel_l2(&psi.data, &psi0.data));
        let d = decompose(&u, &opts).map_err(|e| e.to_string())?;
        resid = resid.max(d.residual_norm);
        p_ratio = p_ratio.max(d.grad_potential.norm_l2() / u.norm_l2());
        gp_ratio = gp_ratio.max(d.grad_part.norm_l2() / u.norm_l2());
    }
    check(
        rec <= 1e-6 && resid <= 1e-6 && p_ratio <= 1e-6 && gp_ratio <= 1e-6,
        format!("psi rel L2 {rec:.3e}, residual {resid:.3e}, |P|/|U| {p_ratio:.3e}, |grad P|/|U| {gp_ratio:.3e}"),
    )
}

fn dense_dirichlet(grid: Grid, rhs: &ScalarField) -> Vec<f64> {
    let (w, h) = (grid.nx - 1, grid.ny - 1);
    let n = w * h;
    let inv = 1.0 / (grid.dx * grid.dx);
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for j in 0..h {
        for i in 0..w {
            let k = j * w + i;
            a[(k, k)] = 4.0 * inv;
            if i > 0 {
                a[(k, k - 1)] = -inv;
            }
            if i + 1 < w {
                a[(k, k + 1)] = -inv;
            }
            if j > 0 {
                a[(k, k - w)] = -inv;
            }
            if j + 1 < h {
                a[(k, k + w)] = -inv;
            }
            b[k] = rhs.at(i + 1, j + 1);
        }
    }
    let x = a.lu().solve(&b).unwrap();
    let mut out = vec![0.0; (grid.nx + 1) * (grid.ny + 1)];
    for j in 0..h {
        for i in 0..w {
            out[(j + 1) * (grid.nx + 1) + i + 1] = x[j * w + i];
        }
    }
    out
}

/// Bordered system `[A 1; 1ᵀ 0]` pins the mean to zero.
fn dense_neumann(grid: Grid, rhs: &ScalarField) -> Vec<f64> {
    let (w, h) = (grid.nx, grid.ny);
    let n = w * h;
    let inv = 1.0 / (grid.dx * grid.dx);
    let mean = rhs.data.iter().sum::<f64>() / n as f64;
    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut b = DVector::<f64>::zeros(n + 1);
    for j in 0..h {
        for i in 0..w {
            let k = j * w + i;
            let mut nb = |m: usize| {
                a[(k, k)] += inv;
                a[(k, m)] -= inv;
            };
            if i > 0 {
                nb(k - 1);
            }
            if i + 1 < w {
                nb(k + 1);
            }
            if j > 0 {
                nb(k - w);
            }
            if j + 1 < h {
                nb(k + w);
            }
            a[(k, n)] = 1.0;
            a[(n, k)] = 1.0;
            b[k] = rhs.data[k] - mean;
        }
    }
    let x = a.lu().solve(&b).unwrap();
    x.rows(0, n).iter().copied().collect()
}

fn poisson_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for n in [4, 6] {
        let grid = Grid::unit(n, n).unwrap();
        for pre in [Preconditioner::None, Preconditioner::Jacobi] {
            let opts = SolverOptions { tol: 1e-14, max_iter: None, preconditioner: pre };
            let rhs = random_scalar(grid, Siting::Node, &mut rng, 1.0);
            let (x, _) = solve_dirichlet_node(&rhs, &opts).map_err(|e| e.to_string())?;
            let exact = dense_dirichlet(grid, &rhs);
            let scale = exact.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            worst = worst.max(x.data.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale);

            let rhs = random_scalar(grid, Siting::Cell, &mut rng, 1.0);
            let (x, _) = solve_neumann_cell(&rhs, &opts).map_err(|e| e.to_string())?;
            let exact = dense_neumann(grid, &rhs);
            let scale = exact.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            worst = worst.max(x.data.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale);
        }
    }
    check(worst <= 1e-10, format!("max relative deviation from dense LU {worst:.3e} (4x4, 6x6, Dirichlet and Neumann)"))
}

fn second_order() -> Outcome {
    let pi = std::f64::consts::PI;
    let err = |n: usize| -> Result<f64, String> {
        let grid = Grid::unit(n, n).unwrap();
        let exact = ScalarField::from_fn(grid, Siting::Node, |p| (pi * p.x).sin() * (pi * p.y).sin());
        let rhs = exact.scaled(2.0 * pi * pi);
        let (x, _) = solve_dirichlet_node(&rhs, &SolverOptions::with_tol(1e-12)).map_err(|e| e.to_string())?;
        Ok(x.data.iter().zip(&exact.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    };
    let (e32, e64) = (err(32)?, err(64)?);
    let ratio = e32 / e64;
    check((3.0..=5.0).contains(&ratio), format!("max error {e32:.3e} (N=32) / {e64:.3e} (N=64) = {ratio:.3}"))
}

fn projection() -> Outcome {
    let grid = Grid::unit(64, 64).unwrap();
    let tol = 1e-10;
    let params = SimParams { solver: SolverOptions::with_tol(tol), ..SimParams::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let u = random_mac(grid, &mut rng, 1.0);
    let once = project(&u, &params).map_err(|e| e.to_string())?.vel;
    let div = once.max_abs_divergence();
    let twice = project(&once, &params).map_err(|e| e.to_string())?.vel;
    let idem = twice.distance_l2(&once) / u.norm_l2();

    let q = random_scalar(grid, Siting::Cell, &mut rng, 1.0);
    let g = gradient(&q);
    let left = project(&g, &params).map_err(|e| e.to_string())?.vel.norm_l2() / g.norm_l2();
    check(
        div <= 1e-6 && idem <= 10.0 * tol && left <= 10.0 * tol,
        format!("max divergence {div:.3e}, idempotence gap {idem:.3e}, gradient remainder {left:.3e} (relative)"),
    )
}

fn max_principle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = 0;
    for _ in 0..1000 {
        let nx = rng.random_range(4..24);
        let ny = rng.random_range(4..24);
        let grid = Grid::unit(nx, ny).unwrap();
        let f = random_scalar(grid, Siting::Cell, &mut rng, 5.0);
        let vel = random_mac(grid, &mut rng, 3.0);
        let dt = rng.random_range(0.0..0.5);
        let out = advect_scalar(&f, &vel, dt).map_err(|e| e.to_string())?;
        let (lo, hi) = (f.min(), f.max());
        violations += out.data.iter().filter(|&&x| x < lo || x > hi).count();
    }
    check(violations == 0, format!("{violations} out-of-range values over 1000 triples"))
}

fn rotation(n: usize) -> MacVelocity {
    MacVelocity::from_fn(Grid::unit(n, n).unwrap(), |p| Vec2::new(-(p.y - 0.5), p.x - 0.5))
}

fn streamlines() -> Outcome {
    let vel = rotation(64);
    let center = Vec2::new(0.5, 0.5);
    let seed = Vec2::new(0.75, 0.5);
    let r0 = seed.distance(center);
    let h = 0.01;
    let steps = (2.0 * std::f64::consts::PI / h).ceil() as usize;
    let params = TraceParams { h, max_steps: steps, min_speed: 1e-9, bidirectional: false };
    let line = trace(&vel, seed, &params);
    let drift = line.points.iter().map(|p| (p.distance(center) - r0).abs()).fold(0.0, f64::max) / r0;

    let closure = |n: usize| {
        let h = 2.0 * std::f64::consts::PI / n as f64;
        let p = TraceParams { h, max_steps: n, min_speed: 1e-9, bidirectional: false };
        let line = trace(&vel, seed, &p);
        line.points.last().unwrap().distance(seed)
    };
    let (e1, e2) = (closure(64), closure(128));
    let ratio = e1 / e2;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let big = random_mac(Grid::unit(64, 64).unwrap(), &mut rng, 1.0);
    let small = random_mac(Grid::unit(16, 16).unwrap(), &mut rng, 1.0);
    let sorted = |s: &[smokeflow::streamline::Seed]| s.windows(2).all(|w| w[0].speed >= w[1].speed);
    let (sb, ss) = (select_seeds(&big, 512), select_seeds(&small, 512));
    let seeds_ok = sb.len() == 512 && ss.len() == 256 && sorted(&sb) && sorted(&ss);

    check(
        drift < 1e-3 && (8.0..=32.0).contains(&ratio) && line.points.len() == steps + 1 && seeds_ok,
        format!(
            "radius drift {:.3e}% per revolution, closure error ratio {ratio:.2}, seeds {}/{} sorted={}",
            drift * 100.0,
            sb.len(),
            ss.len(),
            sorted(&sb) && sorted(&ss)
        ),
    )
}

fn guidance() -> Outcome {
    let grid = Grid::unit(48, 48).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let target = curl_velocity(&smooth_psi(grid, &mut rng).scaled(0.1));
    let params = SimParams { guidance_gain: 5.0, ..SimParams::default() };
    let start = SimState::at_rest(grid);
    let d0 = start.vel.distance_l2(&target);
    let end = sim::run(&start, &params, Some(&target), 50, |_, _| {}).map_err(|e| e.to_string())?;
    let d50 = end.vel.distance_l2(&target);

    let off = SimParams { guidance_gain: 0.0, ..params };
    let with = sim::run(&start, &off, Some(&target), 50, |_, _| {}).map_err(|e| e.to_string())?;
    let without = sim::run(&start, &off, None, 50, |_, _| {}).map_err(|e| e.to_string())?;
    let bits = |s: &SimState| -> Vec<u64> {
        s.vel.u.iter().chain(&s.vel.v).chain(&s.density.data).chain(&s.pressure.data).map(|x| x.to_bits()).collect()
    };
    let identical = bits(&with) == bits(&without);
    check(d50 < d0 && identical, format!("distance {d0:.4e} -> {d50:.4e} after 50 steps; k_g=0 bitwise equal: {identical}"))
}

fn reconstruction() -> Outcome {
    let grid = Grid::unit(32, 32).unwrap();
    let tol = 1e-10;
    let fit = FitParams { tol, ..FitParams::new(grid) };
    let strokes = StrokeSet {
        domain: Vec2::new(1.0, 1.0),
        strokes: vec![Stroke { points: vec![Vec2::new(0.2, 0.5), Vec2::new(0.8, 0.5)], speed: 1.0 }],
    };
    let (psi, report) = fit_stream_function(&strokes, &fit).map_err(|e| e.to_string())?;
    let (neg, _) = fit_stream_function(&strokes.reversed(), &fit).map_err(|e| e.to_string())?;
    let gap = psi.data.iter().zip(&neg.data).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
    check(
        report.median_cosine >= 0.9 && gap <= 10.0 * tol,
        format!("median cosine {:.4}, max |psi + psi_reversed| {gap:.3e}", report.median_cosine),
    )
}

fn digests(root: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                let hash = Sha256::digest(std::fs::read(&path).unwrap());
                out.insert(rel, hash.iter().map(|b| format!("{b:02x}")).collect());
            }
        }
    }
    out
}

fn dataset_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = |dir: &str| DatasetConfig {
        sims: 10,
        steps: 80,
        snapshot_every: 10,
        grid: GridConfig { nx: 64, ny: 64, dx: None },
        seed: 2024,
        output_dir: tmp.path().join(dir),
        ..DatasetConfig::default()
    };
    let start = Instant::now();
    let a = dataset::generate(&config("a")).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    dataset::generate(&config("b")).map_err(|e| e.to_string())?;
    let (da, db) = (digests(&tmp.path().join("a")), digests(&tmp.path().join("b")));
    let sfld = da.keys().filter(|k| k.ends_with(".sfld")).count();

    let root = tmp.path().join("a");
    let mut failing = 0;
    let mut worst_psi = 0.0f64;
    let mut worst_div = 0.0f64;
    for r in &a.records {
        let c = dataset::check_record(&root, r).map_err(|e| e.to_string())?;
        worst_psi = worst_psi.max(c.psi_rel_diff);
        worst_div = worst_div.max(r.divergence / r.params.grid().unwrap().dx);
        failing += usize::from(!c.ok);
    }
    check(
        da == db && a.records.len() == 80 && failing == 0 && worst_div <= 1e-6 && elapsed < Duration::from_secs(60),
        format!(
            "{} records in {elapsed:.2?}; {sfld} SFLD files, digests identical: {}; psi cross-check worst {worst_psi:.3e}; max divergence {worst_div:.3e}",
            a.records.len(),
            da == db
        ),
    )
}

fn metrics() -> Outcome {
    let grid = Grid::unit(2, 2).unwrap();
    let cell = |data: Vec<f64>| Field::Scalar(ScalarField { grid, siting: Siting::Cell, data });
    let zero = cell(vec![0.0; 4]);
    let b = cell(vec![1.0, 2.0, 3.0, 4.0]);
    let hand = dataset::mse(&zero, &b).map_err(|e| e.to_string())?;
    let ident = dataset::mse(&b, &b).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let f = Field::Mac(random_mac(Grid::unit(16, 16).unwrap(), &mut rng, 1.0));
    let offset = dataset::mse(&f, &f.map(|x| x + 0.1)).map_err(|e| e.to_string())?;
    let norm = dataset::normalize_values(&[-2.0, 0.0, 2.0]);
    check(
        ident == 0.0 && (offset - 0.01).abs() <= 1e-12 && hand == 7.5 && norm == [0.0, 0.5, 1.0],
        format!("identity {ident}, offset {offset:.6e}, 2x2 {hand}, normalize {norm:?}"),
    )
}

struct Server {
    url: String,
}

fn start_server() -> Server {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            smokeflow_service::serve(listener, smokeflow_service::ServiceConfig::default()).await.unwrap();
        });
    });
    Server { url: format!("http://{}", rx.recv().unwrap()) }
}

struct Script {
    frames: Vec<Vec<u8>>,
    d0: f64,
    d50: f64,
    d50_new: f64,
    d100: f64,
    negation_gap: f64,
    cosines: (f64, f64),
    frame_dims: (u32, u32),
}

fn scripted_session(server: &Server) -> Result<Script, String> {
    let client = reqwest::blocking::Client::new();
    let err = |e: reqwest::Error| e.to_string();
    let post = |path: &str, body: Value| -> Result<Value, String> {
        let r = client.post(format!("{}{path}", server.url)).json(&body).send().map_err(err)?;
        let status = r.status();
        let v: Value = r.json().map_err(err)?;
        if !status.is_success() {
            return Err(format!("POST {path}: {status} {v}"));
        }
        Ok(v)
    };
    let get = |path: &str| -> Result<Vec<u8>, String> {
        let r = client.get(format!("{}{path}", server.url)).send().map_err(err)?;
        if !r.status().is_success() {
            return Err(format!("GET {path}: {}", r.status()));
        }
        Ok(r.bytes().map_err(err)?.to_vec())
    };
    let stroke = |rev: bool| {
        let mut pts = vec![[0.2, 0.5], [0.8, 0.5]];
        if rev {
            pts.reverse();
        }
        json!({ "domain": [1.0, 1.0], "strokes": [{ "points": pts, "speed": 1.0 }] })
    };
    let distance = |v: &Value| v["target_distance"].as_f64().unwrap_or(f64::NAN);

    let created = post("/sessions", json!({ "params": { "seed": 11 }, "strokes": stroke(false) }))?;
    let id = created["id"].as_str().ok_or("no id")?.to_string();
    let steps = format!("/sessions/{id}/steps");
    let d0 = distance(&post(&steps, json!({ "count": 0 }))?);
    let d50 = distance(&post(&steps, json!({ "count": 50 }))?);
    let f0 = get(&format!("/sessions/{id}/frames/0"))?;
    let f49 = get(&format!("/sessions/{id}/frames/49"))?;
    let img = image::load_from_memory(&f49).map_err(|e| e.to_string())?;
    image::load_from_memory(&f0).map_err(|e| e.to_string())?;

    let field = |kind: &str| -> Result<ScalarField, String> {
        let bytes = get(&format!("/sessions/{id}/field?kind={kind}"))?;
        Field::decode(&bytes).map_err(|e| e.to_string())?.into_scalar().ok_or("not scalar".into())
    };
    let before = field("target_psi")?;
    let r = client
        .put(format!("{}/sessions/{id}/strokes", server.url))
        .json(&json!({ "strokes": stroke(true) }))
        .send()
        .map_err(err)?;
    if !r.status().is_success() {
        return Err(format!("PUT strokes: {}", r.status()));
    }
    let refit: Value = r.json().map_err(err)?;
    let after = field("target_psi")?;
    let negation_gap = before.data.iter().zip(&after.data).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
    let d50_new = distance(&post(&steps, json!({ "count": 0 }))?);
    let last = post(&steps, json!({ "count": 50 }))?;
    let d100 = distance(&last);
    let count = last["frame_count"].as_u64().ok_or("no frame_count")? as usize;
    let frames = (0..count).map(|n| get(&format!("/sessions/{id}/frames/{n}"))).collect::<Result<Vec<_>, _>>()?;
    Ok(Script {
        frames,
        d0,
        d50,
        d50_new,
        d100,
        negation_gap,
        cosines: (
            created["fit_report"]["median_cosine"].as_f64().unwrap_or(0.0),
            refit["fit_report"]["median_cosine"].as_f64().unwrap_or(0.0),
        ),
        frame_dims: (img.width(), img.height()),
    })
}

fn service() -> Outcome {
    let first = scripted_session(&start_server())?;
    let second = scripted_session(&start_server())?;
    let identical = first.frames == second.frames;
    let tol = 1e-10;
    check(
        first.d50 < first.d0
            && first.d100 < first.d50_new
            && first.negation_gap <= 10.0 * tol
            && first.cosines.0 >= 0.9
            && first.cosines.1 >= 0.9
            && first.frames.len() == 101
            && first.frame_dims == (64, 64)
            && identical,
        format!(
            "distance {:.3e} -> {:.3e}; after retarget {:.3e} -> {:.3e}; psi negation gap {:.3e}; {} frames, rerun identical: {identical}",
            first.d0,
            first.d50,
            first.d50_new,
            first.d100,
            first.negation_gap,
            first.frames.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("div-curl identity", div_curl_identity),
        ("HHD round trip", hhd_round_trip),
        ("Poisson dense oracle", poisson_oracle),
        ("second-order convergence", second_order),
        ("projection", projection),
        ("advection max principle", max_principle),
        ("streamlines", streamlines),
        ("guidance", guidance),
        ("baseline reconstruction", reconstruction),
        ("dataset determinism", dataset_determinism),
        ("mse and normalize01", metrics),
        ("service scripted session", service),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", 12 - failed, 12);
    if failed > 0 {
        std::process::exit(1);
    }
}
