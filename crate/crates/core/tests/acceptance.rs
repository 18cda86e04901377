//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::cell::OnceCell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use wesbench::bench::{
    cmd_benchmark, cmd_reference, cmd_we, BenchmarkConfig, BenchmarkReport, WeOutcome, WeRunOptions,
};
use wesbench::metrics::{
    bad_features_frames, coverage, kl_divergence, radius_of_gyration, uniform_edges, w1_distance, Histogram1D,
    KL_EPSILON,
};
use wesbench::msm::{
    assign_bins, msm_reweight, pcca, stationary_distribution, transition_matrix, CountMatrix, MsmModel,
    RectilinearGrid, TransitionMatrix,
};
use wesbench::potentials::PotentialSpec;
use wesbench::propagate::{run_reference, PropagatorConfig};
use wesbench::tica::{featurize, FeatureSpec, TicaModel};
use wesbench::we::{WeConfig, WeRunRecord, WeRunner};
use wesbench::{Conformation, WeightedFrameSet};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- WE on DW

const DW_KT: f64 = 0.4;

fn dw_tica(prop: &PropagatorConfig) -> TicaModel {
    let potential = prop.potential;
    let reference = run_reference(prop, &[potential.default_start()], 50).unwrap();
    let x = featurize(&FeatureSpec::raw(), &reference[0]).unwrap();
    TicaModel::fit(&[&x], 10, 2, FeatureSpec::raw()).unwrap()
}

fn dw_propagator(seed: u64) -> PropagatorConfig {
    PropagatorConfig::new(PotentialSpec::double_well(DW_KT), 5e-3, seed)
}

fn weight_conservation() -> Outcome {
    let prop = dw_propagator(11);
    let tica = dw_tica(&prop);
    let cfg = WeConfig::new(prop, 200);
    let (mut runner, first) = WeRunner::new(cfg, &tica, None).unwrap();
    let mut worst = (first.weight_sum() - 1.0).abs();
    let mut iterations = 0;
    let mut walkers = 0;
    while let Some(rec) = runner.step().unwrap() {
        worst = worst.max((rec.weight_sum() - 1.0).abs());
        iterations += 1;
        walkers = walkers.max(rec.walkers.len());
    }
    outcome(
        iterations == 200 && worst <= 1e-12,
        format!("{iterations} iterations, up to {walkers} walkers, max |sum w - 1| = {worst:.2e}"),
    )
}

/// Bin masses of the exact x-marginal `exp(-(x^2 - 1)^2 / kT)` by composite
/// Simpson quadrature inside each bin.
fn boltzmann_x_marginal(edges: &[f64], kt: f64) -> Vec<f64> {
    let density = |x: f64| (-(x * x - 1.0).powi(2) / kt).exp();
    let masses: Vec<f64> = edges
        .windows(2)
        .map(|w| {
            let n = 64;
            let h = (w[1] - w[0]) / n as f64;
            let mut s = density(w[0]) + density(w[1]);
            for k in 1..n {
                s += density(w[0] + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        })
        .collect();
    let total: f64 = masses.iter().sum();
    masses.iter().map(|m| m / total).collect()
}

fn x_histogram(frames: &WeightedFrameSet, edges: &[f64]) -> Histogram1D {
    let xs: Vec<f64> = frames.frames.iter().map(|f| f.positions()[0]).collect();
    Histogram1D::from_weighted(&xs, &frames.weights, edges.to_vec()).unwrap()
}

struct EquilibriumRun {
    record: WeRunRecord,
    first_iteration: u32,
    edges: Vec<f64>,
}

const EQ_ITERATIONS: u32 = 500;

fn equilibrium_run() -> EquilibriumRun {
    let prop = dw_propagator(21);
    let tica = dw_tica(&prop);
    let cfg = WeConfig::new(prop, EQ_ITERATIONS);
    let record = wesbench::we::run_we(&cfg, &tica, None).unwrap();
    EquilibriumRun {
        record,
        first_iteration: EQ_ITERATIONS / 5,
        edges: uniform_edges(-2.0, 2.0, 80),
    }
}

fn equilibrium_recovery(run: &EquilibriumRun) -> Outcome {
    let exact = Histogram1D::new(run.edges.clone(), boltzmann_x_marginal(&run.edges, DW_KT)).unwrap();
    let frames = run.record.weighted_frames(run.first_iteration).unwrap();
    let we = x_histogram(&frames, &run.edges);
    let kl = kl_divergence(&exact, &we, KL_EPSILON).unwrap();
    let w1 = w1_distance(&exact, &we).unwrap();
    outcome(
        kl < 0.05 && w1 < 0.05,
        format!(
            "KL(exact||WE) = {kl:.4}, W1 = {w1:.4} over {} frames of iterations {}..{}",
            frames.len(),
            run.first_iteration,
            EQ_ITERATIONS
        ),
    )
}

fn msm_consistency(run: &EquilibriumRun) -> Outcome {
    let segments = run.record.segment_pcoords(run.first_iteration);
    let rows: usize = segments.iter().map(|s| s.nrows()).sum();
    let mut points = DMatrix::zeros(rows, 2);
    let mut at = 0;
    for s in &segments {
        points.rows_mut(at, s.nrows()).copy_from(*s);
        at += s.nrows();
    }
    let grid = RectilinearGrid::from_points(&points, 2, 40).unwrap();
    let model = MsmModel::fit(grid.clone(), &segments, 1).unwrap();
    let assignments = assign_bins(&grid, &points).unwrap();
    let we = run.record.weighted_frames(run.first_iteration).unwrap();
    let msm = msm_reweight(&model, &assignments, we.frames.clone()).unwrap();
    let kl = kl_divergence(
        &x_histogram(&msm, &run.edges),
        &x_histogram(&we, &run.edges),
        KL_EPSILON,
    )
    .unwrap();
    outcome(
        kl < 0.05,
        format!("KL(MSM||WE) = {kl:.4} with {} MSM states", model.n_states()),
    )
}

// ---------------------------------------------------------------- TICA

fn tica_synthetic() -> Outcome {
    let n = 100_000;
    let theta = 30f64.to_radians();
    let (c, s) = (theta.cos(), theta.sin());
    let mut r = rng(4);
    let (mut a, mut b) = (0.0f64, 0.0f64);
    let mut x = DMatrix::zeros(n, 2);
    for t in 0..n {
        let e1: f64 = r.sample(StandardNormal);
        let e2: f64 = r.sample(StandardNormal);
        a = 0.9 * a + (1.0 - 0.81f64).sqrt() * e1;
        b = 0.5 * b + (1.0 - 0.25f64).sqrt() * e2;
        // Slow coordinate along (c, s), fast along the orthogonal axis.
        x[(t, 0)] = 2.0 * a * c - b * s;
        x[(t, 1)] = 2.0 * a * s + b * c;
    }
    let model = TicaModel::fit(&[&x], 1, 2, FeatureSpec::raw()).unwrap();
    let lambda = model.eigenvalues[0];
    let u = model.transform.column(0);
    let cos = (u[0] * c + u[1] * s).abs() / u.norm();
    let angle = cos.min(1.0).acos().to_degrees();
    outcome(
        (0.85..=0.95).contains(&lambda) && angle < 5.0,
        format!(
            "lambda_1 = {lambda:.4}, lambda_2 = {:.4}, slow-axis error {angle:.2} deg",
            model.eigenvalues[1]
        ),
    )
}

// ---------------------------------------------------------------- MSM

/// Solves `pi^T T = pi^T, sum pi = 1` by Gaussian elimination with partial
/// pivoting on `(T^T - I)` with the last equation replaced by the sum.
fn stationary_oracle(t: &[Vec<f64>]) -> Vec<f64> {
    let n = t.len();
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| t[j][i] - if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut rhs = vec![0.0; n];
    a[n - 1] = vec![1.0; n];
    rhs[n - 1] = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .unwrap();
        a.swap(col, piv);
        rhs.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col].clone();
            for (v, p) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *v -= f * p;
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (rhs[i] - s) / a[i][i];
    }
    x
}

fn random_stochastic(r: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n)
                .map(|j| {
                    // Sparse rows, kept irreducible by a ring of nonzeros.
                    if j == (i + 1) % n || j == i || r.random_bool(0.6) {
                        r.random_range(0.01..1.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
            row
        })
        .collect()
}

fn msm_oracle() -> Outcome {
    let mut r = rng(5);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = r.random_range(1..=6);
        let t = random_stochastic(&mut r, n);
        let dense = DMatrix::from_fn(n, n, |i, j| t[i][j]);
        let pi = stationary_distribution(&TransitionMatrix::from_dense(&dense).unwrap()).unwrap();
        let oracle = stationary_oracle(&t);
        worst = pi.iter().zip(&oracle).fold(worst, |m, (a, b)| m.max((a - b).abs()));
    }
    let mut worst_rev = 0.0f64;
    for _ in 0..1000 {
        let n = r.random_range(1..=6);
        let mut c = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = if j == i || j == i + 1 || r.random_bool(0.5) {
                    r.random_range(1..500)
                } else {
                    0
                };
                c[(i, j)] = v as f64;
                c[(j, i)] = v as f64;
            }
        }
        let counts = CountMatrix::from_dense(&c).unwrap();
        let pi = stationary_distribution(&transition_matrix(&counts).unwrap()).unwrap();
        let total: f64 = c.iter().sum();
        for (i, p) in pi.iter().enumerate() {
            worst_rev = worst_rev.max((p - c.row(i).sum() / total).abs());
        }
    }
    outcome(
        worst <= 1e-9 && worst_rev <= 1e-10,
        format!("1000 general: max err {worst:.1e}; 1000 reversible: max err {worst_rev:.1e}"),
    )
}

// ---------------------------------------------------------------- W1

/// Minimum-cost transport between point masses by successive shortest
/// paths (Bellman-Ford) on the bipartite flow network.
fn brute_force_ot(xs: &[f64], p: &[f64], q: &[f64]) -> f64 {
    let n = xs.len();
    // Nodes: 0 source, 1..=n supply, n+1..=2n demand, 2n+1 sink.
    let (src, sink, nodes) = (0, 2 * n + 1, 2 * n + 2);
    let mut to = Vec::new();
    let mut cap = Vec::new();
    let mut cost = Vec::new();
    let mut adj = vec![Vec::new(); nodes];
    let mut add = |a: usize, b: usize, c: f64, w: f64, adj: &mut Vec<Vec<usize>>| {
        adj[a].push(to.len());
        to.push(b);
        cap.push(c);
        cost.push(w);
        adj[b].push(to.len());
        to.push(a);
        cap.push(0.0);
        cost.push(-w);
    };
    for i in 0..n {
        add(src, 1 + i, p[i], 0.0, &mut adj);
        add(n + 1 + i, sink, q[i], 0.0, &mut adj);
        for j in 0..n {
            add(1 + i, n + 1 + j, f64::INFINITY, (xs[i] - xs[j]).abs(), &mut adj);
        }
    }
    let mut total = 0.0;
    loop {
        let mut dist = vec![f64::INFINITY; nodes];
        let mut via = vec![usize::MAX; nodes];
        dist[src] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for u in 0..nodes {
                if dist[u].is_infinite() {
                    continue;
                }
                for &e in &adj[u] {
                    if cap[e] > 1e-15 && dist[u] + cost[e] < dist[to[e]] - 1e-15 {
                        dist[to[e]] = dist[u] + cost[e];
                        via[to[e]] = e;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if dist[sink].is_infinite() {
            return total;
        }
        let mut push = f64::INFINITY;
        let mut v = sink;
        while v != src {
            push = push.min(cap[via[v]]);
            v = to[via[v] ^ 1];
        }
        let mut v = sink;
        while v != src {
            cap[via[v]] -= push;
            cap[via[v] ^ 1] += push;
            v = to[via[v] ^ 1];
        }
        total += push * dist[sink];
    }
}

fn random_masses(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut m: Vec<f64> = (0..n)
        .map(|_| if r.random_bool(0.2) { 0.0 } else { r.random::<f64>() })
        .collect();
    if m.iter().all(|v| *v == 0.0) {
        m[0] = 1.0;
    }
    let s: f64 = m.iter().sum();
    m.iter_mut().for_each(|v| *v /= s);
    m
}

fn random_edges(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut e = vec![r.random_range(-3.0..3.0)];
    for _ in 0..n {
        let last = *e.last().unwrap();
        e.push(last + r.random_range(0.1..2.0));
    }
    e
}

fn w1_oracle() -> Outcome {
    let mut r = rng(6);
    let mut worst = 0.0f64;
    let cases = 2000;
    for _ in 0..cases {
        let n = r.random_range(1..=5);
        let edges = random_edges(&mut r, n);
        let (p, q) = (random_masses(&mut r, n), random_masses(&mut r, n));
        let hp = Histogram1D::new(edges.clone(), p.clone()).unwrap();
        let hq = Histogram1D::new(edges.clone(), q.clone()).unwrap();
        let w = w1_distance(&hp, &hq).unwrap();
        worst = worst.max((w - brute_force_ot(&hp.centers(), &p, &q)).abs());
    }
    let (mut asym, mut violations) = (0.0f64, 0);
    for _ in 0..10_000 {
        let n = r.random_range(1..=8);
        let edges = random_edges(&mut r, n);
        let h: Vec<Histogram1D> = (0..3)
            .map(|_| Histogram1D::new(edges.clone(), random_masses(&mut r, n)).unwrap())
            .collect();
        let d = |a: usize, b: usize| w1_distance(&h[a], &h[b]).unwrap();
        asym = asym.max((d(0, 1) - d(1, 0)).abs());
        if d(0, 2) > d(0, 1) + d(1, 2) + 1e-12 {
            violations += 1;
        }
    }
    outcome(
        worst <= 1e-9 && asym == 0.0 && violations == 0,
        format!("{cases} pairs: max |W1 - OT| = {worst:.1e}; 1e4 triples: asymmetry {asym:.1e}, {violations} triangle violations"),
    )
}

// ---------------------------------------------------------------- PCCA+

fn block_matrix(r: &mut ChaCha8Rng, sizes: &[usize]) -> (DMatrix<f64>, Vec<usize>) {
    let n: usize = sizes.iter().sum();
    let mut labels = Vec::with_capacity(n);
    for (b, &s) in sizes.iter().enumerate() {
        labels.extend(std::iter::repeat_n(b, s));
    }
    // Shuffle states so blocks are not contiguous.
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, r.random_range(0..=i));
    }
    let labels: Vec<usize> = perm.iter().map(|&p| labels[p]).collect();
    let mut t = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                t[(i, j)] = r.random_range(0.05..1.0);
            }
        }
        let s = t.row(i).sum();
        t.row_mut(i).iter_mut().for_each(|v| *v /= s);
    }
    (t, labels)
}

fn same_partition(a: &[usize], b: &[usize]) -> usize {
    let mut bad = 0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            if (a[i] == a[j]) != (b[i] == b[j]) {
                bad += 1;
            }
        }
    }
    bad
}

fn pcca_blocks() -> Outcome {
    let mut r = rng(7);
    let mut misassigned = 0;
    let mut trials = 0;
    for sizes in [&[3usize, 4][..], &[5, 2], &[2, 3, 4], &[4, 4, 4], &[1, 3, 2]] {
        for _ in 0..20 {
            let (t, labels) = block_matrix(&mut r, sizes);
            let result = pcca(&t, sizes.len()).unwrap();
            misassigned += same_partition(&result.assignment, &labels);
            trials += 1;
        }
    }
    outcome(
        misassigned == 0,
        format!("{trials} block matrices, {misassigned} misassigned state pairs"),
    )
}

// ---------------------------------------------------------------- geometry

fn conf(points: &[[f64; 3]]) -> Conformation {
    Conformation::from_points(points).unwrap()
}

fn rotation(r: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    let q: [f64; 4] = std::array::from_fn(|_| r.sample(StandardNormal));
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

fn angular_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * std::f64::consts::PI);
    d.min(2.0 * std::f64::consts::PI - d)
}

fn geometry() -> Outcome {
    use std::f64::consts::{FRAC_PI_2, PI};
    let mut failures = Vec::new();

    let square = Conformation::from_points(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
    if radius_of_gyration(&square) != 0.5f64.sqrt() {
        failures.push("square RoG");
    }
    let bad = bad_features_frames(&[conf(&[[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0]])]);
    if bad.angles.unwrap().values != vec![FRAC_PI_2] {
        failures.push("right angle");
    }
    if bad.bonds.unwrap().values != vec![1.0, 1.0] {
        failures.push("unit bonds");
    }
    let bad = bad_features_frames(&[conf(&[[0.0, 0.0, 0.0], [3.0, 4.0, 0.0]])]);
    if bad.bonds.unwrap().values != vec![5.0] {
        failures.push("3-4-5 bond");
    }
    let trans = conf(&[[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, -1.0, 0.0]]);
    let cis = conf(&[[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0]]);
    let gauche = conf(&[[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 0.0, 1.0]]);
    let d = bad_features_frames(&[trans, cis, gauche]).dihedrals.unwrap().values;
    if d[0] != PI || d[1] != 0.0 || (d[2].abs() - FRAC_PI_2).abs() > 1e-15 {
        failures.push("dihedral examples");
    }

    let mut r = rng(8);
    let spec = PotentialSpec::cg_chain(1.0);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let mut frame = spec.default_start().into_positions();
        frame.iter_mut().for_each(|v| *v += r.random_range(-1.0..1.0));
        let a = Conformation::new(frame.clone(), 3).unwrap();
        let rot = rotation(&mut r);
        let shift: [f64; 3] = std::array::from_fn(|_| r.random_range(-20.0..20.0));
        let moved: Vec<f64> = frame
            .chunks(3)
            .flat_map(|p| (0..3).map(move |i| (0..3).map(|k| rot[i][k] * p[k]).sum::<f64>() + shift[i]))
            .collect();
        let b = Conformation::new(moved, 3).unwrap();
        worst = worst.max((radius_of_gyration(&a) - radius_of_gyration(&b)).abs());
        let (fa, fb) = (bad_features_frames(&[a]), bad_features_frames(&[b]));
        for (x, y) in fa.bonds.unwrap().values.iter().zip(&fb.bonds.unwrap().values) {
            worst = worst.max((x - y).abs());
        }
        for (x, y) in fa.angles.unwrap().values.iter().zip(&fb.angles.unwrap().values) {
            worst = worst.max((x - y).abs());
        }
        for (x, y) in fa.dihedrals.unwrap().values.iter().zip(&fb.dihedrals.unwrap().values) {
            worst = worst.max(angular_gap(*x, *y));
        }
    }
    if worst > 1e-12 {
        failures.push("rigid-motion invariance");
    }
    outcome(
        failures.is_empty(),
        format!(
            "exact examples {}; rigid-motion max deviation {worst:.1e}",
            if failures.is_empty() {
                "ok".to_string()
            } else {
                format!("failed: {}", failures.join(", "))
            }
        ),
    )
}

// ---------------------------------------------------------------- chain sanity

fn chain_config(dir: &Path, dt_scale: f64) -> BenchmarkConfig {
    let text = format!(
        r#"{{
  "system": {{"kind": "CG_CHAIN_3D", "temperature": 1.0}},
  "propagator": {{"dt": {}}},
  "reference": {{"n_starts": 4, "segments_per_start": 20}},
  "we": {{"max_iterations": 30}},
  "macrostates": {{"n_clusters": 20, "n_macrostates": 3}},
  "output_dir": "{}"
}}"#,
        1e-3 * dt_scale,
        dir.display()
    );
    BenchmarkConfig::from_json(&text, Path::new("chain.json")).unwrap()
}

fn read_report(path: &Path) -> BenchmarkReport {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn chain_sanity() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let stable = chain_config(&tmp.path().join("stable"), 1.0);
    let reference = cmd_reference(&stable).unwrap();
    let run = |cfg: &BenchmarkConfig| {
        let WeOutcome::Finished { trajectory, .. } =
            cmd_we(cfg, &reference.tica, None, WeRunOptions::default()).unwrap()
        else {
            panic!("run paused unexpectedly");
        };
        let out = cmd_benchmark(cfg, &reference.trajectory, &trajectory, &reference.tica).unwrap();
        read_report(&out.report).diagnostics
    };
    let good = run(&stable);
    let unstable = chain_config(&tmp.path().join("unstable"), 10.0);
    let bad = run(&unstable);
    let mass = good.bond_mass_in_range.unwrap_or(0.0);
    let bad_mass = bad.bond_mass_in_range.unwrap_or(f64::NAN);
    outcome(
        mass >= 0.99 && !good.flagged_broken && bad.flagged_broken,
        format!(
            "stable: {:.2}% of bond mass in range; 10x dt: flagged = {}, {} broken walkers, {:.2}% in range, report written",
            100.0 * mass,
            bad.flagged_broken,
            bad.broken_walkers,
            100.0 * bad_mass
        ),
    )
}

// ---------------------------------------------------------------- coverage

fn coverage_oracle(gt: &[(f64, f64)], model: &[(f64, f64)], n: usize) -> f64 {
    let (x0, x1) = gt
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (y0, y1) = gt
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let inside = |i: usize, j: usize, p: &(f64, f64)| {
        let in_1d = |v: f64, lo: f64, hi: f64, k: usize| {
            if hi == lo {
                return v == lo && k == 0;
            }
            let a = lo + (hi - lo) * k as f64 / n as f64;
            let b = lo + (hi - lo) * (k + 1) as f64 / n as f64;
            v >= a && (v < b || (k == n - 1 && v <= hi))
        };
        in_1d(p.0, x0, x1, i) && in_1d(p.1, y0, y1, j)
    };
    let (mut occupied, mut hit) = (0, 0);
    for i in 0..n {
        for j in 0..n {
            if gt.iter().any(|p| inside(i, j, p)) {
                occupied += 1;
                if model.iter().any(|p| inside(i, j, p)) {
                    hit += 1;
                }
            }
        }
    }
    100.0 * hit as f64 / occupied as f64
}

fn to_matrix(p: &[(f64, f64)]) -> DMatrix<f64> {
    DMatrix::from_fn(p.len(), 2, |r, c| if c == 0 { p[r].0 } else { p[r].1 })
}

fn coverage_metric() -> Outcome {
    let mut r = rng(10);
    let mut mismatches = 0;
    let mut identity_ok = true;
    for _ in 0..1000 {
        let n = r.random_range(1..=12);
        // Quantized coordinates put many points exactly on cell edges.
        let point = |r: &mut ChaCha8Rng| {
            let q = |r: &mut ChaCha8Rng| (r.random_range(-20..=20) as f64) * 0.25;
            (q(r), q(r))
        };
        let gt: Vec<_> = (0..r.random_range(1..40)).map(|_| point(&mut r)).collect();
        let model: Vec<_> = (0..r.random_range(1..40)).map(|_| point(&mut r)).collect();
        let got = coverage(&to_matrix(&gt), &to_matrix(&model), n).unwrap();
        if got != coverage_oracle(&gt, &model, n) {
            mismatches += 1;
        }
        identity_ok &= coverage(&to_matrix(&gt), &to_matrix(&gt), n).unwrap() == 100.0;
    }
    outcome(
        mismatches == 0 && identity_ok,
        format!("1000 random sets: {mismatches} mismatches; identity gives 100%: {identity_ok}"),
    )
}

// ---------------------------------------------------------------- determinism

fn pipeline(dir: &Path, threads: &str) {
    let cfg = dir.join("cfg.json");
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(
        &cfg,
        format!(
            r#"{{
  "system": {{"kind": "DOUBLE_WELL_2D", "temperature": 0.4}},
  "reference": {{"n_starts": 4, "segments_per_start": 20}},
  "we": {{"max_iterations": 40}},
  "macrostates": {{"n_clusters": 20, "n_macrostates": 2}},
  "output_dir": "{}"
}}"#,
            dir.join("out").display()
        ),
    )
    .unwrap();
    for cmd in ["reference", "we-run", "benchmark"] {
        let out = Command::new(env!("CARGO_BIN_EXE_wesbench"))
            .args([cmd, "--config"])
            .arg(&cfg)
            .env("WESBENCH_THREADS", threads)
            .env("RUST_LOG", "warn")
            .output()
            .unwrap();
        assert!(out.status.success(), "{cmd} failed with {threads} threads");
    }
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let runs = [
        ("1", tmp.path().join("a")),
        ("4", tmp.path().join("b")),
        ("1", tmp.path().join("c")),
    ];
    for (threads, dir) in &runs {
        pipeline(dir, threads);
    }
    let files = [
        "gt.wetrj",
        "tica_model.json",
        "we.wetrj",
        "we.record.json",
        "report.json",
        "msm_model.json",
    ];
    let mut differing = Vec::new();
    for f in files {
        let bytes: Vec<Vec<u8>> = runs
            .iter()
            .map(|(_, d)| std::fs::read(d.join("out").join(f)).unwrap())
            .collect();
        if bytes.windows(2).any(|w| w[0] != w[1]) {
            differing.push(f);
        }
    }
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            format!(
                "3 pipelines (1, 4, 1 threads): {} artifacts byte-identical",
                files.len()
            )
        } else {
            format!("differing artifacts: {}", differing.join(", "))
        },
    )
}

fn main() {
    let eq_run = OnceCell::new();
    let eq = || eq_run.get_or_init(equilibrium_run);

    type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;
    let criteria: Vec<(&str, Check)> = vec![
        ("weight conservation", Box::new(weight_conservation)),
        ("equilibrium recovery", Box::new(|| equilibrium_recovery(eq()))),
        ("MSM vs WE weights", Box::new(|| msm_consistency(eq()))),
        ("TICA synthetic process", Box::new(tica_synthetic)),
        ("stationary distribution oracle", Box::new(msm_oracle)),
        ("W1 oracle", Box::new(w1_oracle)),
        ("PCCA+ block recovery", Box::new(pcca_blocks)),
        ("geometry", Box::new(geometry)),
        ("chain bond sanity", Box::new(chain_sanity)),
        ("coverage", Box::new(coverage_metric)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        failed += usize::from(!result.pass);
        println!(
            "[{}] {:>2} {name}: {} ({:.1}s)",
            if result.pass { "PASS" } else { "FAIL" },
            i + 1,
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
