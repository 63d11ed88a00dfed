//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::time::{Duration, Instant};

use diffsc::config::parse_config;
use diffsc::experiment::{run_simulate, run_sweep, train, with_threads, Setup};
use diffsc::table::Table;
use diffsc_core::channels::{
    awgn_transmit, mimo_svd_decompose, mimo_transmit, random_channel_matrix, rayleigh_transmit_mmse, ComplexVector,
    MimoChannel, RayleighConvention,
};
use diffsc_core::codec::{init_codec, Arch, CodecParams, GaussianParams, SnrConditioning};
use diffsc_core::diffusion::{
    adaptive_receive, compensate_to_step, denoise_from_step, forward_sample, AnalyticGaussianDenoiser,
    GaussianSourceModel,
};
use diffsc_core::loss::{guidance_kl, prior_kl, sample_loss, smoothed, LossWeights, SampleNoise};
use diffsc_core::metrics::{mse, MomentAccumulator};
use diffsc_core::rng::{normal, stream};
use diffsc_core::{Error, Latent, Schedule, Shape};
use num_complex::Complex64;
use rand::Rng;

type Outcome = Result<String, String>;

fn schedule() -> Schedule {
    Schedule::linear(1000, 1e-4, 0.02).unwrap()
}

fn fixed_latent() -> Latent {
    let v = vec![
        0.5, -1.0, 0.3, 1.7, -0.2, 0.0, 2.1, -1.4, 0.9, -0.6, 0.05, 1.1, -2.0, 0.4, -0.8, 1.3,
    ];
    Latent::new(v, Shape::new(4, 4, 1).unwrap()).unwrap()
}

// ---------------------------------------------------------------------------
// 1. KL closed forms against quadrature.

fn log_pdf(x: f64, m: f64, s: f64) -> f64 {
    let z = (x - m) / s;
    -0.5 * z * z - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Adaptive Simpson on `p log(p/q)` over `mp +- 14 sp`.
fn kl_quadrature(mp: f64, sp: f64, mq: f64, sq: f64) -> f64 {
    let f = |x: f64| {
        let lp = log_pdf(x, mp, sp);
        lp.exp() * (lp - log_pdf(x, mq, sq))
    };
    fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn adapt(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(a, m, fa, flm, fm);
        let right = simpson(m, b, fm, frm, fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        adapt(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + adapt(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (a, b) = (mp - 14.0 * sp, mp + 14.0 * sp);
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    adapt(&f, a, b, fa, fm, fb, whole, 1e-10, 40)
}

fn criterion_1() -> Outcome {
    let mut r = stream(101);
    let mut worst_g = 0.0f64;
    let mut worst_p = 0.0f64;
    for _ in 0..100 {
        let y = 2.0 * normal(&mut r);
        let sigma = r.random_range(0.1..2.0);
        let mu = y + normal(&mut r);
        let sy = r.random_range(0.2..2.5);
        let q = GaussianParams::new(vec![mu], vec![sy]).unwrap();
        let closed = guidance_kl(&Latent::from_vec(vec![y]), sigma, &q).unwrap();
        worst_g = worst_g.max((closed - kl_quadrature(y, sigma, mu, sy)).abs());
    }
    for _ in 0..100 {
        let mu = 1.5 * normal(&mut r);
        let sy = r.random_range(0.2..2.5);
        let q = GaussianParams::new(vec![mu], vec![sy]).unwrap();
        let closed = prior_kl(&q).unwrap();
        worst_p = worst_p.max((closed - kl_quadrature(mu, sy, 0.0, 1.0)).abs());
    }
    let detail = format!("max |err| guidance {worst_g:.2e}, prior {worst_p:.2e}");
    if worst_g < 1e-6 && worst_p < 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// 2. Channel output at an exact step equals the forward process.

const DRAWS: usize = 100_000;
const TOL_SE: f64 = 4.0;

struct MomentCheck {
    ok: bool,
    max_z: f64,
}

/// Compares the moments of `draw()` with `N(sqrt(ab) y0, 1 - ab)` on the
/// elements in `idx`.
fn check_against_forward(
    y0: &Latent,
    idx: &[usize],
    u: usize,
    sched: &Schedule,
    mut draw: impl FnMut() -> Vec<f64>,
) -> MomentCheck {
    let ab = sched.alpha_bar(u);
    let mu: Vec<f64> = idx.iter().map(|&i| ab.sqrt() * y0.as_slice()[i]).collect();
    let var = vec![1.0 - ab; idx.len()];
    let mut acc = MomentAccumulator::new(idx.len());
    let mut buf = vec![0.0; idx.len()];
    for _ in 0..DRAWS {
        let v = draw();
        for (b, &i) in buf.iter_mut().zip(idx) {
            *b = v[i];
        }
        acc.push(&buf);
    }
    let rep = acc.check(&mu, &var, TOL_SE).unwrap();
    MomentCheck {
        ok: rep.passed(),
        max_z: rep.max_z,
    }
}

fn criterion_2() -> Outcome {
    let sched = schedule();
    let y0 = fixed_latent();
    let all: Vec<usize> = (0..y0.len()).collect();
    let mut lines = Vec::new();
    let mut ok = true;
    let mut r = stream(202);
    for target in [0.25, 1.0, 4.0] {
        let u = sched.sigma2_to_step(target).unwrap().step;
        let s2 = sched.step_to_sigma2(u).unwrap();
        let scale = sched.alpha_bar(u).sqrt();
        let sym = ComplexVector::from_real(y0.as_slice());

        let fwd = check_against_forward(&y0, &all, u, &sched, || forward_sample(&y0, u, &sched, &mut r).unwrap().into_vec());
        let awgn = check_against_forward(&y0, &all, u, &sched, || {
            let out = awgn_transmit(&sym, s2.sqrt(), &sched, &mut r).unwrap();
            out.received.to_real(y0.len()).iter().map(|x| scale * x).collect()
        });

        let h = Complex64::new(0.6, -0.45);
        let mut rayleigh = |conv: RayleighConvention| {
            // Chosen so the MMSE-convention variance lands exactly on step u.
            let sigma = s2.sqrt() * h.norm();
            let mut step = 0;
            let c = check_against_forward(&y0, &all, u, &sched, || {
                let out = rayleigh_transmit_mmse(&sym, h, sigma, conv, &sched, &mut r).unwrap();
                step = out.mappings[0].step;
                let sc = out.mappings[0].scale;
                out.received.to_real(y0.len()).iter().map(|x| sc * x).collect()
            });
            (c, step)
        };
        let (ray_mmse, _) = rayleigh(RayleighConvention::Mmse);
        let (ray_paper, paper_step) = rayleigh(RayleighConvention::Paper);

        // MIMO with singular values placing each subchannel on an exact step.
        let steps = [u, sched.sigma2_to_step(target * 0.5).unwrap().step];
        let sigma = 0.7;
        let gains: Vec<f64> = steps.iter().map(|&s| sigma / sched.step_to_sigma2(s).unwrap().sqrt()).collect();
        let base = mimo_svd_decompose(&random_channel_matrix(2, &mut r)).unwrap();
        let (big, small) = if gains[0] >= gains[1] { (0, 1) } else { (1, 0) };
        let shaped = MimoChannel {
            h: base.h.clone(),
            u: base.u.clone(),
            v: base.v.clone(),
            singular_values: vec![gains[big], gains[small]],
        }
        .reconstruct();
        let ch = mimo_svd_decompose(&shaped).unwrap();
        let probe = mimo_transmit(&sym, &ch, sigma, &sched, &mut r).unwrap();
        let per_stream = probe.real_indices_per_stream(y0.len());
        let mut mimo_ok = true;
        let mut mimo_z = 0.0f64;
        for (i, idx) in per_stream.iter().enumerate() {
            let m = probe.mappings[i];
            let c = check_against_forward(&y0, idx, m.step, &sched, || {
                let out = mimo_transmit(&sym, &ch, sigma, &sched, &mut r).unwrap();
                out.received.to_real(y0.len()).iter().map(|x| m.scale * x).collect()
            });
            mimo_ok &= c.ok;
            mimo_z = mimo_z.max(c.max_z);
        }

        ok &= fwd.ok && awgn.ok && ray_mmse.ok && mimo_ok;
        lines.push(format!(
            "s2={target} u={u}: fwd z={:.2} awgn z={:.2} rayleigh[mmse] z={:.2} mimo z={:.2}",
            fwd.max_z, awgn.max_z, ray_mmse.max_z, mimo_z
        ));
        lines.push(format!(
            "  rayleigh[paper] maps to u={paper_step}, z={:.1} ({}; effective variance s2|h|^2 does not match the y+(s/h)e output)",
            ray_paper.max_z,
            if ray_paper.ok { "matches" } else { "reported, not gating" }
        ));
    }
    if ok {
        Ok(lines.join("\n    "))
    } else {
        Err(lines.join("\n    "))
    }
}

// ---------------------------------------------------------------------------
// 3. Compensation reaches the target step's total variance.

fn criterion_3() -> Outcome {
    let sched = schedule();
    let y0 = fixed_latent();
    let mut r = stream(303);
    let mut parts = Vec::new();
    let mut ok = true;
    for (sigma2, target) in [(0.1f64, 200usize), (0.25, 400), (1.0, 600)] {
        let ab = sched.alpha_bar(target);
        let mut acc = MomentAccumulator::new(y0.len());
        for _ in 0..DRAWS {
            let s_hat: Vec<f64> = y0.as_slice().iter().map(|y| y + sigma2.sqrt() * normal(&mut r)).collect();
            let s_hat = Latent::new(s_hat, y0.shape()).unwrap();
            let y_t = compensate_to_step(&s_hat, sigma2, target, &sched, &mut r).unwrap();
            let noise: Vec<f64> = y_t.as_slice().iter().zip(y0.as_slice()).map(|(a, y)| a - ab.sqrt() * y).collect();
            acc.push(&noise);
        }
        let rep = acc.check(&vec![0.0; y0.len()], &vec![1.0 - ab; y0.len()], TOL_SE).unwrap();
        ok &= rep.passed();
        parts.push(format!("({sigma2},{target}) z={:.2}", rep.max_z));
    }
    let y = Latent::from_vec(vec![0.0; 4]);
    let infeasible = compensate_to_step(&y, 1.0, 200, &sched, &mut r);
    let raised = matches!(infeasible, Err(Error::CompensationInfeasible { .. }));
    ok &= raised;
    parts.push(format!("infeasible (1.0,200) raises: {raised}"));
    if ok {
        Ok(parts.join(", "))
    } else {
        Err(parts.join(", "))
    }
}

// ---------------------------------------------------------------------------
// 4. SVD reconstruction and noise whitening.

fn criterion_4() -> Outcome {
    let sched = schedule();
    let mut r = stream(404);
    let mut worst = 0.0f64;
    let mut channels = Vec::new();
    for _ in 0..1000 {
        let h = random_channel_matrix(2, &mut r);
        let ch = mimo_svd_decompose(&h).unwrap();
        worst = worst.max((ch.reconstruct() - &h).norm());
        channels.push(ch);
    }
    // Zero input: the combiner output times the gains is U^H n.
    let sigma = 0.8f64;
    let s2 = sigma * sigma;
    let zeros = ComplexVector::zeros(2);
    let mut cov_ok = true;
    let mut max_z = 0.0f64;
    for ch in channels.iter().filter(|c| c.singular_values[1] > 0.1).take(5) {
        let n = 20_000;
        let mut acc = MomentAccumulator::new(4);
        for _ in 0..n {
            let out = mimo_transmit(&zeros, ch, sigma, &sched, &mut r).unwrap();
            let w: Vec<Complex64> = out.received.0.iter().zip(&ch.singular_values).map(|(c, g)| c * g).collect();
            let cross = w[0] * w[1].conj();
            acc.push(&[w[0].norm_sqr(), w[1].norm_sqr(), cross.re, cross.im]);
        }
        // Each entry is a sample mean; only its mean is tested against sigma^2 I.
        let target = [s2, s2, 0.0, 0.0];
        let rep = acc.check(&target, &[1.0; 4], f64::INFINITY).unwrap();
        for (i, m) in rep.sample_mean.iter().enumerate() {
            let se = (rep.sample_var[i] / n as f64).sqrt();
            let z = (m - target[i]) / se;
            max_z = max_z.max(z.abs());
            cov_ok &= z.abs() <= TOL_SE;
        }
    }
    let detail = format!("max ||USV^H - H||_F = {worst:.2e}, noise covariance max z = {max_z:.2}");
    if worst < 1e-10 && cov_ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// 5. Analytic denoiser end to end.

fn psnr_column(t: &Table) -> Vec<f64> {
    t.floats("psnr_db").unwrap().into_iter().map(|v| v.unwrap()).collect()
}

fn criterion_5() -> Outcome {
    let sched = schedule();
    let model = GaussianSourceModel::new(0.0, 1.0).unwrap();
    let den = AnalyticGaussianDenoiser::new(model, &sched);
    let u = sched.sigma2_to_step(1.0).unwrap().step;
    let s2 = sched.step_to_sigma2(u).unwrap();
    let shape = Shape::new(4, 4, 1).unwrap();
    let mut r = stream(505);
    let trials = 10_000;
    let mut total = 0.0;
    for _ in 0..trials {
        let y0 = model.sample(shape, &mut r);
        let sym = ComplexVector::from_real(y0.as_slice());
        let out = awgn_transmit(&sym, s2.sqrt(), &sched, &mut r).unwrap();
        let s_hat = Latent::new(out.received.to_real(y0.len()), shape).unwrap();
        let (y_u, m) = adaptive_receive(&s_hat, s2, &sched).unwrap();
        let est = denoise_from_step(&y_u, m.step, &den, &sched, &mut r).unwrap();
        total += mse(&est, &y0).unwrap();
    }
    let measured = total / trials as f64;
    let expected = 2.0 * s2 / (1.0 + s2);
    let rel = (measured - expected).abs() / expected;

    let cfg = parse_config(
        r#"
seed = 55
[source]
kind = "gaussian"
shape = [8, 8, 4]
count = 300
[channel]
type = "awgn"
snr_db = [0.0, 3.0, 6.0, 9.0, 12.0]
"#,
        None,
    )
    .unwrap();
    let psnrs = psnr_column(&run_simulate(&cfg).unwrap());
    let increasing = psnrs.windows(2).all(|w| w[1] > w[0]);
    let detail = format!(
        "u={u} MSE {measured:.4} vs 2vs2/(v+s2) = {expected:.4} (rel {:.1}%); PSNR over 0..12 dB: {}",
        100.0 * rel,
        psnrs.iter().map(|p| format!("{p:.2}")).collect::<Vec<_>>().join(" < ")
    );
    if rel <= 0.15 && increasing {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// 6. Compensate-to-200 vs adaptive at the matched variance.

fn criterion_6() -> Outcome {
    let cfg = parse_config(
        r#"
seed = 66
[source]
kind = "gaussian"
shape = [8, 8, 4]
count = 400
[channel]
type = "awgn"
snr_db = [3.0, 6.0, 9.0, 12.0]
[mode]
kind = "fixed_step"
target = 200
"#,
        None,
    )
    .unwrap();
    let t = run_simulate(&cfg).unwrap();
    let d: Vec<f64> = t.floats("delta_psnr_db").unwrap().into_iter().map(|v| v.unwrap()).collect();
    let ci: Vec<f64> = t.floats("delta_ci95").unwrap().into_iter().map(|v| v.unwrap()).collect();
    let snr: Vec<f64> = t.floats("snr_db").unwrap().into_iter().map(|v| v.unwrap()).collect();
    let ok = d.iter().zip(&ci).all(|(d, c)| d.abs() <= *c);
    let detail = snr
        .iter()
        .zip(d.iter().zip(&ci))
        .map(|(s, (d, c))| format!("{s} dB: {d:+.4} +- {c:.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// 7. Gradients through codec and reparameterization.

fn grad_rel_error(shape: Shape, k: f64, arch: Arch, seed: u64) -> f64 {
    let mut r = stream(seed);
    let mut p = init_codec(shape, k, arch, &mut r).unwrap();
    for a in p.arrays_mut() {
        for v in a.iter_mut() {
            *v += 0.05 * normal(&mut r);
        }
    }
    let y = Latent::new((0..shape.len()).map(|_| normal(&mut r)).collect(), shape).unwrap();
    let sigma = 0.5;
    let snr = 1.0 / (sigma * sigma);
    let w = LossWeights::new(0.1, 0.1).unwrap();
    let noise = SampleNoise::draw(&p, false, &mut r);
    let loss = |q: &CodecParams| sample_loss(q, &y, sigma, snr, &noise, w, None).unwrap().total;
    let mut g = p.zeros_like();
    sample_loss(&p, &y, sigma, snr, &noise, w, Some((&mut g, 1.0))).unwrap();
    let analytic: Vec<Vec<f64>> = g.arrays().into_iter().map(|(_, a)| a.to_vec()).collect();
    let mut worst = 0.0f64;
    for (ai, arr) in analytic.iter().enumerate() {
        for (j, &ga) in arr.iter().enumerate() {
            let x = p.arrays()[ai].1[j];
            let h = 1e-5 * x.abs().max(1.0);
            let mut plus = p.clone();
            plus.arrays_mut()[ai][j] = x + h;
            let mut minus = p.clone();
            minus.arrays_mut()[ai][j] = x - h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            worst = worst.max((ga - fd).abs() / ga.abs().max(fd.abs()).max(1e-6));
        }
    }
    worst
}

fn criterion_7() -> Outcome {
    let instances = [
        (Shape::new(2, 2, 2).unwrap(), 0.5, Arch::default()),
        (
            Shape::new(3, 2, 1).unwrap(),
            2.0 / 6.0,
            Arch {
                snr_conditioning: SnrConditioning::Both,
                ..Arch::default()
            },
        ),
        (
            Shape::new(2, 2, 1).unwrap(),
            0.75,
            Arch {
                power_normalize: false,
                bottleneck: 2,
                ..Arch::default()
            },
        ),
    ];
    let errs: Vec<f64> = instances
        .iter()
        .enumerate()
        .map(|(i, &(s, k, a))| grad_rel_error(s, k, a, 700 + i as u64))
        .collect();
    let detail = format!(
        "max relative error per instance: {}",
        errs.iter().map(|e| format!("{e:.1e}")).collect::<Vec<_>>().join(", ")
    );
    if errs.iter().all(|&e| e < 1e-4) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// 8. Desk-scale training.

fn criterion_8() -> Outcome {
    let cfg = parse_config(
        r#"
seed = 88
[source]
kind = "gaussian"
shape = [8, 8, 4]
[channel]
type = "awgn"
snr_db = [5.0]
[codec]
enabled = true
k = 0.5
[loss]
lambda = 0.1
gamma = 0.1
[train]
steps = 2000
batch = 4
lr = 1e-4
snr_db = 5.0
eval_every = 500
"#,
        None,
    )
    .unwrap();
    let setup = Setup::new(&cfg).unwrap();
    let out = train(&setup, cfg.seed).unwrap();
    let (before, after) = (out.initial_eval_psnr.unwrap(), out.final_eval_psnr.unwrap());
    let totals: Vec<f64> = out.log.iter().map(|r| r.loss.total).collect();
    let sm = smoothed(&totals, 100);
    let (at100, at_end) = (sm[99], sm[sm.len() - 1]);
    let detail = format!(
        "held-out PSNR {before:.3} -> {after:.3} dB (gain {:.3}); smoothed loss {at100:.4} @100 -> {at_end:.4} @{}",
        after - before,
        sm.len()
    );
    if after - before >= 1.0 && at_end < at100 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// 9. Determinism.

fn criterion_9() -> Outcome {
    let sim = parse_config(
        r#"
seed = 99
[source]
kind = "gaussian"
shape = [8, 8, 2]
count = 40
[channel]
type = ["awgn", "rayleigh", "mimo"]
snr_db = [0.0, 6.0, 12.0]
[mode]
kind = "fixed_step"
target = 300
"#,
        None,
    )
    .unwrap();
    let a = with_threads(Some(1), || run_simulate(&sim)).unwrap().unwrap().to_csv_string();
    let b = with_threads(Some(3), || run_simulate(&sim)).unwrap().unwrap().to_csv_string();
    let c = run_simulate(&sim).unwrap().to_csv_string();

    let sweep = parse_config(
        r#"
seed = 98
[source]
kind = "gaussian"
shape = [8, 8, 1]
count = 16
[channel]
type = "awgn"
snr_db = [5.0]
[codec]
k = 0.5
[train]
steps = 50
eval_every = 0
[sweep]
parameter = "gamma"
values = [0.5, 0.1]
"#,
        None,
    )
    .unwrap();
    let s1 = with_threads(Some(1), || run_sweep(&sweep)).unwrap().unwrap().to_csv_string();
    let s2 = with_threads(Some(2), || run_sweep(&sweep)).unwrap().unwrap().to_csv_string();
    let detail = format!("simulate {} bytes x3, sweep {} bytes x2", a.len(), s1.len());
    if a == b && b == c && s1 == s2 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// 10. Hyperparameter sweep tables.

fn criterion_10() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (param, fixed) in [("lambda", "gamma = 0.0"), ("gamma", "lambda = 0.1")] {
        let text = format!(
            r#"
seed = 10
[source]
kind = "gaussian"
shape = [8, 8, 4]
count = 64
[channel]
type = "awgn"
snr_db = [5.0]
[codec]
k = 0.5
[loss]
{fixed}
[train]
steps = 500
eval_every = 0
[sweep]
parameter = "{param}"
values = [1.0, 0.1, 0.01]
"#
        );
        let t = run_sweep(&parse_config(&text, None).unwrap()).unwrap();
        let has_cols = ["parameter", "value", "psnr_db", "ssim", "mse"].iter().all(|c| t.column(c).is_some());
        let finite = ["psnr_db", "ssim", "mse"]
            .iter()
            .all(|c| t.floats(c).unwrap().iter().all(|v| v.is_some_and(f64::is_finite)));
        let values: Vec<f64> = t.floats("value").unwrap().into_iter().map(|v| v.unwrap()).collect();
        ok &= t.rows.len() == 3 && has_cols && finite && values == [1.0, 0.1, 0.01];
        let psnr = psnr_column(&t);
        parts.push(format!(
            "{param}: {} rows, PSNR {}",
            t.rows.len(),
            psnr.iter().map(|p| format!("{p:.2}")).collect::<Vec<_>>().join("/")
        ));
    }
    if ok {
        Ok(parts.join("; "))
    } else {
        Err(parts.join("; "))
    }
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 10] = [
        ("KL closed forms vs quadrature", Duration::from_secs(10), criterion_1),
        ("channel-to-forward equivalence", Duration::from_secs(60), criterion_2),
        ("compensation path", Duration::from_secs(30), criterion_3),
        ("SVD correctness", Duration::from_secs(10), criterion_4),
        ("analytic denoiser end to end", Duration::from_secs(300), criterion_5),
        ("adaptive vs fixed-step equivalence", Duration::from_secs(300), criterion_6),
        ("gradient validation", Duration::from_secs(30), criterion_7),
        ("desk-scale training", Duration::from_secs(600), criterion_8),
        ("determinism", Duration::from_secs(60), criterion_9),
        ("hyperparameter sweep tables", Duration::from_secs(900), criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let id = format!("{}", i + 1);
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = run();
        let took = start.elapsed();
        let in_budget = took <= *budget;
        let (status, detail) = match (&result, in_budget) {
            (Ok(d), true) => ("PASS", d.clone()),
            (Ok(d), false) => ("FAIL", format!("{d}; over time budget")),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!(
            "acceptance {id:>2} {status}: {name} [{:.1}s / {}s]\n    {detail}",
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
