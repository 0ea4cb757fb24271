//! Acceptance run on the circular torus `R₀ = 2`, `a = 1`: one line per
//! criterion, `PASS` or `FAIL`, with the measured numbers. Exits non-zero if
//! any criterion fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use cwsbie::bvp::BoundarySolver;
use cwsbie::fields::{bs_surface_current, toroidal_circulation};
use cwsbie::geometry::{FourierTorus, ReferenceCurves, SurfaceGrid, VolumeGrid};
use cwsbie::layer_potentials::{solid_angle_defect, LayerOperators, QuadratureOptions};
use cwsbie::norms::{current_norm_survey, neumann_energy_survey, RatioSurvey, SurveyOptions};
use cwsbie::reconstruction::{geometric_fit, KernelRoute, Reconstruction, Step1Result};
use cwsbie::surface_fields::{avg_windings, TangentField};
use cwsbie::vec3::{self, Vec3};

type Outcome = Result<(bool, String), String>;
type Criterion = (&'static str, fn() -> Outcome);

const INTERIOR: [Vec3; 5] = [[2.0, 0.0, 0.0], [0.0, 2.4, 0.3], [-1.6, 0.3, -0.4], [1.2, -1.5, 0.25], [0.0, -2.5, -0.4]];
const EXTERIOR: [Vec3; 4] = [[4.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.5, -0.5, 2.0], [-3.5, 1.0, 0.8]];

fn torus() -> FourierTorus {
    FourierTorus::circular(2.0, 1.0).unwrap()
}

fn grid(n: usize) -> Arc<SurfaceGrid> {
    SurfaceGrid::new(&torus(), n, n).unwrap()
}

fn reconstruction() -> &'static Reconstruction {
    static REC: OnceLock<Reconstruction> = OnceLock::new();
    REC.get_or_init(|| {
        let ops = Arc::new(LayerOperators::assemble(grid(64)).unwrap());
        let plasma = VolumeGrid::new(&torus(), 6, 16, 32, 0.5).unwrap();
        Reconstruction::new(ops, plasma).unwrap()
    })
}

/// Step 1 for the uniform vertical target with 49 modes.
fn uniform_fit() -> &'static Step1Result {
    static FIT: OnceLock<Step1Result> = OnceLock::new();
    FIT.get_or_init(|| {
        let rec = reconstruction();
        rec.step1_fit(&uniform_target(rec), 49, Some(0.0)).unwrap()
    })
}

fn uniform_target(rec: &Reconstruction) -> Vec<Vec3> {
    vec![[0.0, 0.0, 1.0]; rec.plasma.len()]
}

fn axisymmetric_gamma(x: Vec3) -> Vec3 {
    let rho2 = x[0] * x[0] + x[1] * x[1];
    [-x[1] / (2.0 * PI * rho2), x[0] / (2.0 * PI * rho2), 0.0]
}

fn relative_error(got: &[Vec3], want: &[Vec3]) -> f64 {
    let num: f64 = got.iter().zip(want).map(|(a, b)| vec3::dot(vec3::sub(*a, *b), vec3::sub(*a, *b))).sum();
    let den: f64 = want.iter().map(|b| vec3::dot(*b, *b)).sum();
    (num / den).sqrt()
}

fn relative_error_scalar(got: &[f64], want: &[f64]) -> f64 {
    let num: f64 = got.iter().zip(want).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = want.iter().map(|b| b * b).sum();
    (num / den).sqrt()
}

fn point_source(x0: Vec3) -> impl Fn(Vec3) -> (f64, Vec3) {
    move |x| {
        let d = vec3::sub(x, x0);
        let r = vec3::norm(d);
        (1.0 / r, vec3::scale(d, -1.0 / (r * r * r)))
    }
}

fn solid_angle() -> Outcome {
    let opts = QuadratureOptions::default();
    let mut defects = Vec::new();
    for n in [16, 32] {
        defects.push(solid_angle_defect(&grid(n), &opts).map_err(|e| e.to_string())?);
    }
    let d64 = reconstruction().operators().solid_angle_defect();
    defects.push(d64);
    defects.push(solid_angle_defect(&grid(128), &opts).map_err(|e| e.to_string())?);
    let monotone = defects.windows(2).all(|w| w[1] < w[0]);
    Ok((
        d64 <= 2e-3 && monotone,
        format!(
            "|W1 + 1/2|_inf at 16/32/64/128 = {:.2e} / {:.2e} / {:.2e} / {:.2e}",
            defects[0], defects[1], defects[2], defects[3]
        ),
    ))
}

fn bvp_oracles() -> Outcome {
    let rec = reconstruction();
    let solver: &BoundarySolver = &rec.solver;
    let grid = rec.grid();
    let e = |r: cwsbie::Result<cwsbie::bvp::HarmonicSolution>| r.map_err(|e| e.to_string());
    let mut errs = Vec::new();

    // Dirichlet: linear function and an outside point source.
    let lin: Vec<f64> = grid.points.iter().map(|p| p[0] - 0.5 * p[2]).collect();
    let sol = e(solver.solve_dirichlet_interior(&lin))?;
    let want: Vec<f64> = INTERIOR.iter().map(|p| p[0] - 0.5 * p[2]).collect();
    errs.push(("dirichlet linear", relative_error_scalar(&sol.value_at(&INTERIOR), &want)));
    let src = point_source([6.0, 0.0, 0.0]);
    let kappa: Vec<f64> = grid.points.iter().map(|p| src(*p).0).collect();
    let sol = e(solver.solve_dirichlet_interior(&kappa))?;
    let want: Vec<f64> = INTERIOR.iter().map(|p| src(*p).0).collect();
    errs.push(("dirichlet source", relative_error_scalar(&sol.value_at(&INTERIOR), &want)));

    // Interior Neumann: linear function and an outside point source.
    let b: Vec<f64> = grid.normals.iter().map(|n| n[2]).collect();
    let sol = e(solver.solve_neumann_interior(&b))?;
    let want = vec![[0.0, 0.0, 1.0]; INTERIOR.len()];
    errs.push(("neumann linear", relative_error(&sol.gradient_at(&INTERIOR), &want)));
    let b: Vec<f64> = grid.points.iter().zip(&grid.normals).map(|(p, n)| vec3::dot(src(*p).1, *n)).collect();
    let sol = e(solver.solve_neumann_interior(&b))?;
    let want: Vec<Vec3> = INTERIOR.iter().map(|p| src(*p).1).collect();
    errs.push(("neumann source", relative_error(&sol.gradient_at(&INTERIOR), &want)));

    // Exterior Neumann: point source inside the torus.
    let inner = point_source([2.0, 0.0, 0.0]);
    let b: Vec<f64> = grid.points.iter().zip(&grid.normals).map(|(p, n)| vec3::dot(inner(*p).1, *n)).collect();
    let sol = e(solver.solve_neumann_exterior(&b))?;
    let want: Vec<f64> = EXTERIOR.iter().map(|p| inner(*p).0).collect();
    errs.push(("exterior source", relative_error_scalar(&sol.value_at(&EXTERIOR), &want)));

    let ok = errs.iter().all(|(_, v)| *v <= 1e-3);
    let detail = errs.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect::<Vec<_>>().join(", ");
    Ok((ok, format!("relative probe errors: {detail}")))
}

fn harmonic_neumann_field() -> Outcome {
    let rec = reconstruction();
    let grid = rec.grid();
    let exact: Vec<Vec3> = grid.points.iter().map(|p| axisymmetric_gamma(*p)).collect();
    let on_surface = relative_error(&rec.gamma.on_surface, &exact);
    let inside = rec.gamma.eval(&INTERIOR).map_err(|e| e.to_string())?;
    let exact_inside: Vec<Vec3> = INTERIOR.iter().map(|p| axisymmetric_gamma(*p)).collect();
    let interior = relative_error(&inside, &exact_inside);
    let axis = ReferenceCurves::axis_loop(&grid.torus, 256);
    let circ = toroidal_circulation(|p| rec.gamma.eval(p), &axis).map_err(|e| e.to_string())?;
    Ok((
        on_surface <= 1e-2 && interior <= 1e-2 && (circ - 1.0).abs() <= 1e-3,
        format!("error vs e_phi/(2 pi rho): surface {on_surface:.1e}, probes {interior:.1e}; circulation {circ:.8}"),
    ))
}

fn image_membership() -> Outcome {
    let rec = reconstruction();
    let grid = rec.grid();
    let inside = bs_surface_current(grid, &rec.gamma.cross_normal, &INTERIOR);
    let gamma = rec.gamma.eval(&INTERIOR).map_err(|e| e.to_string())?;
    let interior = relative_error(&inside, &gamma);
    let outside = bs_surface_current(grid, &rec.gamma.cross_normal, &EXTERIOR);
    let scale = gamma.iter().map(|v| vec3::norm(*v)).fold(0.0, f64::max);
    let leakage = outside.iter().map(|v| vec3::norm(*v)).fold(0.0, f64::max) / scale;
    Ok((
        interior <= 2e-2 && leakage <= 2e-2,
        format!("BS(Gamma x N) vs Gamma at probes {interior:.1e}; exterior leakage {leakage:.1e}"),
    ))
}

fn ratios(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|w| w[1] / w[0]).collect()
}

fn geometric_convergence() -> Outcome {
    let rec = reconstruction();
    let lambda = rec.contraction().map_err(|e| e.to_string())?.lambda;
    let bound = lambda + 0.05;
    let step2 = rec.step2_preimage(uniform_fit(), 20).map_err(|e| e.to_string())?;
    // Increments are indexed from n = 1; ratios from n >= 2 on.
    let step2_worst = ratios(&step2.increment_norms).iter().skip(1).copied().fold(0.0, f64::max);
    let study = rec.kernel_series_study(10).map_err(|e| e.to_string())?;
    let kernel_worst = ratios(&study.increments).iter().skip(1).copied().fold(0.0, f64::max);
    let leak_ratios = ratios(&study.leakage);
    let leak_worst = leak_ratios.iter().copied().fold(0.0, f64::max);
    let (fit_ratio, _) = geometric_fit(&study.leakage);
    Ok((
        lambda < 1.0 && step2_worst <= bound && kernel_worst <= bound && leak_worst < 1.0 && fit_ratio <= bound,
        format!(
            "lambda_hat {lambda:.4}; worst increment ratio step2 {step2_worst:.3}, kernel {kernel_worst:.3}; \
             leakage {:.1e} -> {:.1e} over n = 0..10, fitted ratio {fit_ratio:.3}",
            study.leakage[0],
            study.leakage[study.leakage.len() - 1]
        ),
    ))
}

fn poloidality() -> Outcome {
    let rec = reconstruction();
    let s1 = uniform_fit();
    let step2 = rec.step2_preimage(s1, 20).map_err(|e| e.to_string())?;
    let exact = rec.exact_preimage(s1).map_err(|e| e.to_string())?;
    let gamma_fit = rec.step1_fit(rec.gamma_on_plasma(), 49, Some(1.0)).map_err(|e| e.to_string())?;
    let gamma_pre = rec.step2_preimage(&gamma_fit, 20).map_err(|e| e.to_string())?;
    let q = [step2.windings.qbar_relative, exact.windings.qbar_relative, gamma_pre.windings.qbar_relative];
    let q_worst = q.iter().copied().fold(0.0, f64::max);
    let kernel = rec.kernel_element(KernelRoute::Exact, 0).map_err(|e| e.to_string())?;
    let (kp, kq) = (kernel.windings.pbar_relative, kernel.windings.qbar_relative);
    Ok((
        q_worst <= 1e-6 && kp <= 1e-2 && kq >= 0.1,
        format!("preimage |Qbar| relative <= {q_worst:.1e}; kernel |Pbar| {kp:.1e}, |Qbar| {kq:.3} (relative)"),
    ))
}

fn route_equivalence() -> Outcome {
    let rec = reconstruction();
    let grid = rec.grid();
    let exact = rec.kernel_element(KernelRoute::Exact, 0).map_err(|e| e.to_string())?;
    let exterior = rec.kernel_element(KernelRoute::Exterior, 0).map_err(|e| e.to_string())?;
    let diff: Vec<Vec3> = exact.current.iter().zip(exterior.current.iter()).map(|(a, b)| vec3::sub(*a, *b)).collect();
    let rel = TangentField(diff).l2_norm(grid) / exact.current.l2_norm(grid);
    Ok((rel <= 1e-2, format!("exact vs exterior kernel current {rel:.1e} relative in L2(surface)")))
}

fn winding_analytics() -> Outcome {
    let rec = reconstruction();
    let grid = rec.grid();
    let (q, _) = avg_windings(grid, &rec.basis, &rec.basis.gamma_p_cross_n);
    let value = q.abs() * grid.area;
    Ok(((value - 1.0).abs() <= 1e-3, format!("|Qbar(gamma_p x N)| * |surface| = {value:.8}")))
}

fn end_to_end() -> Outcome {
    let rec = reconstruction();
    let s1 = uniform_fit();
    let step2 = rec.step2_preimage(s1, 20).map_err(|e| e.to_string())?;
    let residual = step2.residual_vs_target;
    let monotone = s1.residual_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
    let lambdas: Vec<f64> = (2..=9).map(|k| 10f64.powi(-k)).collect();
    let tik = rec.regularized_fit(&uniform_target(rec), &lambdas, 5).map_err(|e| e.to_string())?;
    let last = tik.sweep.last().expect("nonempty sweep");
    let factor = last.residual / residual;
    Ok((
        residual <= 0.05 && monotone && (0.5..=2.0).contains(&factor),
        format!(
            "two-step residual {residual:.2e} (49 modes, n = 20); history monotone: {monotone}; \
             Tikhonov at lambda {:.0e}: {:.2e} ({factor:.2}x)",
            last.lambda, last.residual
        ),
    ))
}

fn norm_surveys() -> Outcome {
    let opts = SurveyOptions::default();
    let coarse = BoundarySolver::new(Arc::new(LayerOperators::assemble(grid(32)).map_err(|e| e.to_string())?));
    let fine = &reconstruction().solver;
    let run = |s: &BoundarySolver| -> Result<(RatioSurvey, RatioSurvey), String> {
        Ok((
            neumann_energy_survey(s, &opts).map_err(|e| e.to_string())?,
            current_norm_survey(s, &opts).map_err(|e| e.to_string())?,
        ))
    };
    let (c32, d32) = run(&coarse)?;
    let (c64, d64) = run(fine)?;
    let ok = [&c32, &d32, &c64, &d64].iter().all(|s| s.ratios.len() >= 20 && s.spread() < 20.0)
        && c32.drift(&c64) < 2.0
        && d32.drift(&d64) < 2.0;
    Ok((
        ok,
        format!(
            "grad/Neumann ratio [{:.3}, {:.3}] at 32, [{:.3}, {:.3}] at 64 (drift {:.3}); \
             current/field ratio [{:.3}, {:.3}] at 32, [{:.3}, {:.3}] at 64 (drift {:.3}); {} samples each",
            c32.min(),
            c32.max(),
            c64.min(),
            c64.max(),
            c32.drift(&c64),
            d32.min(),
            d32.max(),
            d64.min(),
            d64.max(),
            d32.drift(&d64),
            opts.samples
        ),
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("solid-angle identity", solid_angle),
        ("analytic BVP oracles", bvp_oracles),
        ("harmonic Neumann field", harmonic_neumann_field),
        ("image membership", image_membership),
        ("geometric convergence", geometric_convergence),
        ("poloidality certificates", poloidality),
        ("route equivalence", route_equivalence),
        ("winding analytics", winding_analytics),
        ("end-to-end reconstruction", end_to_end),
        ("norm-equivalence surveys", norm_surveys),
    ];
    let mut failures = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(msg)
        });
        let (ok, detail) = match outcome {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failures += 1;
        }
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {verdict} {name}: {detail} [{:.1}s]", k + 1, start.elapsed().as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
