//! Acceptance criteria 1-9. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::f64::consts::{FRAC_PI_2, PI};
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use panoalign::geometry::{
    erp_pixel_to_spherical, lift_points, ray_to_spherical, spherical_to_erp_pixel,
    spherical_to_ray, CameraModel, SphericalCoord, UnitRay,
};
use panoalign::graphopt::{level_plan, loss_terms, optimize, OptConfig, OptOutput, OptState, Problem};
use panoalign::io::{self, parse_config, Strictness};
use panoalign::metrics::{chamfer, fscore, median_align, valid_overlap, voxel_iou};
use panoalign::oracle::{gradcheck, Corruption, SceneSpec};
use panoalign::pipeline::OracleCase;
use panoalign::{ErpGrid, Grid, PointCloud};

const SCALES: [f64; 6] = [1.0, 1.2, 0.8, 1.1, 0.9, 1.05];
const HEIGHT: usize = 128;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Chamfer distance to ground truth after median alignment over the valid overlap.
fn aligned_chamfer(pred: &ErpGrid<f64>, gt: &ErpGrid<f64>) -> f64 {
    let mask = valid_overlap(pred, gt, None).unwrap();
    let (aligned, _) = median_align(pred, gt, &mask).unwrap();
    chamfer(
        &lift_points(&aligned, Some(&mask)).unwrap(),
        &lift_points(gt, Some(&mask)).unwrap(),
    )
    .unwrap()
}

/// 95th percentile of the relative depth jump `2|a - b| / (a + b)` over
/// horizontally or vertically adjacent pixels owned by different faces.
fn seam_p95(depth: &ErpGrid<f64>, face_id: &ErpGrid<u8>) -> f64 {
    let (w, h) = depth.dims();
    let mut jumps = Vec::new();
    for y in 0..h {
        for x in 0..w {
            for (nx, ny) in [((x + 1) % w, y), (x, (y + 1).min(h - 1))] {
                if face_id.get(x, y) != face_id.get(nx, ny) {
                    let (a, b) = (*depth.get(x, y), *depth.get(nx, ny));
                    jumps.push(2.0 * (a - b).abs() / (a + b));
                }
            }
        }
    }
    jumps.sort_by(f64::total_cmp);
    jumps[(0.95 * (jumps.len() - 1) as f64).round() as usize]
}

fn levels_descend(out: &OptOutput) -> bool {
    out.levels
        .iter()
        .all(|l| l.final_terms.total < l.initial.total)
}

struct Runs {
    clean: OracleCase,
    clean_out: OptOutput,
    corrupted: OracleCase,
    corrupted_out: OptOutput,
    corrupted_secs: f64,
    descents: Vec<(String, bool)>,
}

fn shared_runs() -> Runs {
    let cfg = OptConfig::default();
    let clean = OracleCase::box_room(HEIGHT, [1.0; 6]);
    let clean_out = optimize(&clean.inputs, &cfg).expect("clean run");
    let corrupted = OracleCase::box_room(HEIGHT, SCALES);
    let started = Instant::now();
    let corrupted_out = optimize(&corrupted.inputs, &cfg).expect("corrupted run");
    let corrupted_secs = started.elapsed().as_secs_f64();
    let descents = vec![
        ("clean".to_string(), levels_descend(&clean_out)),
        ("corrupted".to_string(), levels_descend(&corrupted_out)),
    ];
    Runs {
        clean,
        clean_out,
        corrupted,
        corrupted_out,
        corrupted_secs,
        descents,
    }
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let samples = 100_000;
    let (w, h) = (2048usize, 1024usize);
    let cam = CameraModel::new(256);
    let n = cam.face_size() as f64;
    let (mut ray_err, mut angle_err, mut erp_px, mut face_ray_err, mut face_px): (f64, f64, f64, f64, f64) =
        (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..samples {
        let xi = SphericalCoord {
            theta: rng.random_range(-PI..PI),
            phi: rng.random_range(-FRAC_PI_2..FRAC_PI_2),
        };
        let ray = spherical_to_ray(xi);
        let back = ray_to_spherical(&ray);
        let dtheta = (back.theta - xi.theta + PI).rem_euclid(2.0 * PI) - PI;
        angle_err = angle_err.max(dtheta.abs() * xi.phi.cos()).max((back.phi - xi.phi).abs());
        ray_err = ray_err.max((spherical_to_ray(back).as_vector() - ray.as_vector()).norm());

        let (u, v) = (rng.random_range(-0.5..w as f64 - 0.5), rng.random_range(-0.5..h as f64 - 0.5));
        let s = erp_pixel_to_spherical(u, v, w, h).unwrap();
        let (u2, v2) = spherical_to_erp_pixel(s, w, h);
        erp_px = erp_px.max((u2 - u).abs()).max((v2 - v).abs());

        let dir = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if let Some(r) = UnitRay::new(dir) {
            let p = cam.ray_to_face_pixel(&r).unwrap();
            face_ray_err = face_ray_err.max((cam.face_ray(p.face, p.u, p.v).as_vector() - r.as_vector()).norm());
        }
        let face = rng.random_range(0..6);
        let (fu, fv) = (rng.random_range(0.0..n), rng.random_range(0.0..n));
        let p = cam.ray_to_face_pixel(&cam.face_ray(face, fu, fv)).unwrap();
        if p.face == face {
            face_px = face_px.max((p.u - fu).abs()).max((p.v - fv).abs());
        } else {
            face_px = f64::INFINITY;
        }
    }
    let sqrt2 = 2f64.sqrt();
    let sqrt3 = 3f64.sqrt();
    let rho_err = [
        (cam.rho_factor(n / 2.0, n / 2.0) - 1.0).abs(),
        (cam.rho_factor(0.0, n / 2.0) - sqrt2).abs(),
        (cam.rho_factor(n / 2.0, n) - sqrt2).abs(),
        (cam.rho_factor(0.0, 0.0) - sqrt3).abs(),
        (cam.rho_factor(n, n) - sqrt3).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let secs = started.elapsed().as_secs_f64();
    let pass = ray_err < 1e-9
        && angle_err < 1e-9
        && face_ray_err < 1e-9
        && erp_px < 0.5
        && face_px < 0.5
        && rho_err < 1e-9
        && secs < 10.0;
    outcome(
        pass,
        format!(
            "{samples} samples: sph<->ray {ray_err:.1e}/{angle_err:.1e} (tol 1e-9), ray<->face {face_ray_err:.1e} (tol 1e-9), \
             erp px {erp_px:.1e}, face px {face_px:.1e} (tol 0.5), rho {rho_err:.1e} (tol 1e-9), {secs:.2}s (limit 10s)"
        ),
    )
}

fn criterion_2() -> Outcome {
    let started = Instant::now();
    let instances = 24;
    let mut worst: f64 = 0.0;
    let mut failed = None;
    for seed in 0..instances {
        match gradcheck(seed, 16, 8) {
            Ok(r) => worst = worst.max(r.max_relative_error),
            Err(e) => failed = Some(format!("seed {seed}: {e}")),
        }
    }
    let secs = started.elapsed().as_secs_f64();
    if let Some(f) = failed {
        return outcome(false, f);
    }
    outcome(
        worst < 1e-4 && secs < 60.0,
        format!("{instances} instances 16x8, h=1e-4: max relative error {worst:.2e} (tol 1e-4), {secs:.2}s (limit 60s)"),
    )
}

fn criterion_3(runs: &Runs) -> Outcome {
    let inputs = &runs.clean.inputs;
    let rel: Vec<f64> = runs
        .clean_out
        .depth
        .data()
        .iter()
        .zip(inputs.depth.data())
        .zip(inputs.valid.data())
        .filter(|(_, v)| **v)
        .map(|((a, b), _)| (a - b).abs() / b)
        .collect();
    let med = median(rel);
    let lambda_dev = runs
        .clean_out
        .lambda
        .iter()
        .map(|l| (l - 1.0).abs())
        .fold(0.0, f64::max);
    outcome(
        med < 0.005 && lambda_dev < 0.01,
        format!(
            "{}x{}: median relative depth change {med:.5} (tol 0.005), max |lambda - 1| {lambda_dev:.5} (tol 0.01)",
            2 * HEIGHT,
            HEIGHT
        ),
    )
}

fn criterion_4(runs: &Runs) -> Outcome {
    let products: Vec<f64> = runs
        .corrupted_out
        .lambda
        .iter()
        .zip(SCALES)
        .map(|(l, s)| l * s)
        .collect();
    let max = products.iter().copied().fold(f64::MIN, f64::max);
    let min = products.iter().copied().fold(f64::MAX, f64::min);
    let mutual = max / min - 1.0;
    let before = aligned_chamfer(&runs.corrupted.inputs.depth, &runs.corrupted.gt_depth);
    let after = aligned_chamfer(&runs.corrupted_out.depth, &runs.corrupted.gt_depth);
    let improvement = 1.0 - after / before;
    let secs = runs.corrupted_secs;
    let shown: Vec<String> = products.iter().map(|p| format!("{p:.4}")).collect();
    outcome(
        mutual < 0.05 && improvement >= 0.5 && secs < 300.0,
        format!(
            "lambda*s = [{}], max/min - 1 = {mutual:.4} (tol 0.05); chamfer {before:.4} -> {after:.4}, \
             improvement {:.1}% (min 50%); {secs:.1}s (limit 300s)",
            shown.join(", "),
            100.0 * improvement
        ),
    )
}

fn criterion_5(runs: &Runs) -> Outcome {
    let face_id = &runs.corrupted.inputs.face_id;
    let before = seam_p95(&runs.corrupted.inputs.depth, face_id);
    let after = seam_p95(&runs.corrupted_out.depth, face_id);
    let gt = seam_p95(&runs.corrupted.gt_depth, face_id);
    let ratio = after / before;
    outcome(
        ratio <= 0.3,
        format!("p95 seam jump {before:.4} -> {after:.4}, ratio {ratio:.3} (tol 0.30; ground truth {gt:.4})"),
    )
}

fn criterion_6(runs: &Runs) -> Outcome {
    let echo = serde_json::to_string(&OptConfig::default()).unwrap();
    let (resolved, _) = parse_config(&echo, "echo", Strictness::Strict).unwrap();
    let plan = level_plan(512, &resolved).unwrap();
    let sizes: Vec<(usize, usize)> = plan.iter().map(|p| (p.width, p.height)).collect();
    let iterations: Vec<usize> = plan.iter().map(|p| p.iterations).collect();
    let levels = resolved.levels as i32;
    let lr_ok = plan
        .iter()
        .all(|p| (p.learning_rate - 5.0 * 10f64.powi(p.level as i32 - levels)).abs() < 1e-15);
    let plan_ok = sizes == [(256, 128), (512, 256), (1024, 512)] && iterations == [300, 150, 30] && lr_ok;
    let failing: Vec<&str> = runs
        .descents
        .iter()
        .filter(|(_, ok)| !ok)
        .map(|(n, _)| n.as_str())
        .collect();
    outcome(
        plan_ok && failing.is_empty(),
        format!(
            "plan for 1024x512: sizes {sizes:?}, iterations {iterations:?}, lr {:?}; \
             {} oracle runs, levels without descent: {failing:?}",
            plan.iter().map(|p| p.learning_rate).collect::<Vec<_>>(),
            runs.descents.len()
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut cloud = |n: usize| {
        PointCloud::new(
            (0..n)
                .map(|_| Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
                .collect(),
        )
    };
    let a = cloud(500);
    let b = cloud(500);
    let identical = (
        chamfer(&a, &a).unwrap(),
        fscore(&a, &a, 0.1).unwrap(),
        voxel_iou(&a, &a, 0.1).unwrap(),
    );
    let identical_ok = identical == (0.0, 100.0, 100.0);

    let directed = |from: &PointCloud, to: &PointCloud| {
        let mut sum = 0.0;
        for p in &from.points {
            let mut best = f64::INFINITY;
            for q in &to.points {
                let (dx, dy, dz) = (p.x - q.x, p.y - q.y, p.z - q.z);
                best = best.min(dx * dx + dy * dy + dz * dz);
            }
            sum += best.sqrt();
        }
        sum / from.points.len() as f64
    };
    let brute = directed(&a, &b) + directed(&b, &a);
    let fast = chamfer(&a, &b).unwrap();
    let bitwise = brute.to_bits() == fast.to_bits();

    let case = OracleCase::box_room(32, SCALES);
    let gt = &case.gt_depth;
    let pred = &case.inputs.depth;
    let mask = valid_overlap(pred, gt, None).unwrap();
    let metrics = |p: &ErpGrid<f64>| {
        let (aligned, _) = median_align(p, gt, &mask).unwrap();
        let pa = lift_points(&aligned, Some(&mask)).unwrap();
        let pg = lift_points(gt, Some(&mask)).unwrap();
        (
            chamfer(&pa, &pg).unwrap(),
            fscore(&pa, &pg, 0.1).unwrap(),
            voxel_iou(&pa, &pg, 0.1).unwrap(),
        )
    };
    let base = metrics(pred);
    let mut worst_scale_dev: f64 = 0.0;
    for k in [0.37, 0.5, 2.0, 3.3] {
        let m = metrics(&pred.map(|d| d * k));
        worst_scale_dev = worst_scale_dev
            .max((m.0 - base.0).abs() / base.0)
            .max((m.1 - base.1).abs())
            .max((m.2 - base.2).abs());
    }
    outcome(
        identical_ok && bitwise && worst_scale_dev < 1e-9,
        format!(
            "identical clouds {identical:?} (want (0, 100, 100)); chamfer vs brute force on 500 points bitwise equal: {bitwise}; \
             max metric change under global scale {worst_scale_dev:.1e} (tol 1e-9)"
        ),
    )
}

fn criterion_8(runs: &mut Runs) -> Outcome {
    let cfg = OptConfig::default();
    let inputs = &runs.corrupted.inputs;
    let base_problem = Problem::new(inputs.clone(), &cfg).unwrap();
    let base_loss = loss_terms(&OptState::from_inputs(inputs), &base_problem, &cfg).total;
    let mut loss_dev: f64 = 0.0;
    for k in [1isize, 2, 3, 17, 128, -1, -45] {
        let rolled = inputs.roll_x(k);
        let problem = Problem::new(rolled.clone(), &cfg).unwrap();
        let loss = loss_terms(&OptState::from_inputs(&rolled), &problem, &cfg).total;
        loss_dev = loss_dev.max((loss - base_loss).abs() / base_loss);
    }
    let mut depth_dev: f64 = 0.0;
    let shifts = [1isize, 5, 64, -37];
    for k in shifts {
        let out = optimize(&inputs.roll_x(k), &cfg).expect("rolled run");
        runs.descents.push((format!("roll {k}"), levels_descend(&out)));
        let want = runs.corrupted_out.depth.roll_x(k);
        let dev = out
            .depth
            .data()
            .iter()
            .zip(want.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        depth_dev = depth_dev.max(dev);
    }
    outcome(
        loss_dev < 1e-9 && depth_dev < 1e-6,
        format!(
            "loss relative change {loss_dev:.1e} over 7 shifts (tol 1e-9); output vs rolled output max |dD| {depth_dev:.1e} \
             over shifts {shifts:?} (tol 1e-6)"
        ),
    )
}

fn criterion_9(runs: &mut Runs) -> Outcome {
    let noisy = Corruption {
        scales: SCALES,
        normal_noise_deg: 3.0,
        depth_noise: 0.01,
    };
    let make = || OracleCase::new(SceneSpec::default_box(32), noisy, 16, 11);
    let (a, b) = (make(), make());
    let inputs_same = a.inputs.depth.data().iter().zip(b.inputs.depth.data()).all(|(x, y)| x.to_bits() == y.to_bits())
        && a.inputs.normals == b.inputs.normals;
    let cfg = OptConfig::default();
    let out_a = optimize(&a.inputs, &cfg).unwrap();
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let out_b = single.install(|| optimize(&b.inputs, &cfg).unwrap());
    runs.descents.push(("noisy".into(), levels_descend(&out_a)));
    let outputs_same = out_a.depth.data().iter().zip(out_b.depth.data()).all(|(x, y)| x.to_bits() == y.to_bits())
        && out_a.lambda.map(f64::to_bits) == out_b.lambda.map(f64::to_bits)
        && out_a.normals == out_b.normals;

    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let depth = Grid::from_fn(64, 32, |_, _| rng.random_range(0.5f32..20.0) as f64);
    let pfm = dir.path().join("d.pfm");
    io::write_depth(&pfm, &depth).unwrap();
    let back = io::read_depth(&pfm).unwrap();
    let pfm_ok = back.data().iter().zip(depth.data()).all(|(x, y)| x.to_bits() == y.to_bits());
    let pfm_bytes = std::fs::read(&pfm).unwrap();
    io::write_depth(&pfm, &back).unwrap();
    let pfm_ok = pfm_ok && std::fs::read(&pfm).unwrap() == pfm_bytes;

    let cloud = PointCloud {
        points: (0..1000)
            .map(|_| Vector3::new(rng.random::<f32>() as f64, rng.random::<f32>() as f64, -(rng.random::<f32>() as f64)))
            .collect(),
        colors: Some((0..1000).map(|i| [i as u8, (i / 4) as u8, 7]).collect()),
    };
    let ply = dir.path().join("c.ply");
    io::write_pointcloud(&ply, &cloud).unwrap();
    let cloud_back = io::read_pointcloud(&ply).unwrap();
    let ply_ok = cloud_back.colors == cloud.colors
        && cloud_back.points.iter().zip(&cloud.points).all(|(p, q)| p.iter().zip(q.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));

    let png = dir.path().join("d.png");
    io::write_depth(&png, &depth).unwrap();
    let png_back = io::read_depth(&png).unwrap();
    let lo = depth.data().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = depth.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bound = 0.5 * (hi - lo) / 65535.0;
    let png_err = png_back.data().iter().zip(depth.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let png_ok = png_err <= bound * (1.0 + 1e-9);

    outcome(
        inputs_same && outputs_same && pfm_ok && ply_ok && png_ok,
        format!(
            "seeded inputs bitwise equal: {inputs_same}; outputs bitwise equal (default vs 1 thread): {outputs_same}; \
             PFM bitwise: {pfm_ok}; PLY bitwise: {ply_ok}; PNG16 max error {png_err:.2e} (bound {bound:.2e})"
        ),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    results.push((1, "geometry round-trips", criterion_1()));
    results.push((2, "gradient oracle", criterion_2()));
    let mut runs = shared_runs();
    results.push((3, "fixed point", criterion_3(&runs)));
    results.push((4, "scale recovery", criterion_4(&runs)));
    results.push((5, "seam continuity", criterion_5(&runs)));
    results.push((7, "metrics oracles", criterion_7()));
    results.push((8, "horizontal-roll invariance", criterion_8(&mut runs)));
    results.push((9, "determinism and I/O", criterion_9(&mut runs)));
    results.push((6, "loss descent and level plan", criterion_6(&runs)));
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (n, name, o) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n} [{name}]: {tag} - {}", o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
