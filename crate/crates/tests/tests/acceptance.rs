//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails or overruns its time budget.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use fairgraph::constraint::{DerivationReport, LinearConstraint};
use fairgraph::dsl::{load_model, parse_model, serialize_model};
use fairgraph::estimator::{
    adjusted_predictor, expectation_predictor, fit_constrained, AdjustmentSource, EstimatorError, FittedPredictor,
    Link, PredictorForm,
};
use fairgraph::models;
use fairgraph::sem::{conditional_expectation_fit, do_sample, interventional_expectation, root_form, sample, Intervention};
use fairgraph::stats::{mean, std_dev};
use fairgraph::synth::{random_linear_sem, random_proxy_sem};
use fairgraph::validator::{necessity_sweep, test_intervention_invariance, TestMode, Theorem1Report};
use fairgraph::{NodeRole, SEModel};
use fairgraph_cli::CommandResult;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Check = Result<String, String>;

/// Name, runtime budget in seconds, and the check itself.
type Criterion = (&'static str, Option<f64>, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fig3() -> SEModel {
    models::bundled("fig3").unwrap()
}

fn model_path(name: &str) -> String {
    format!("{}/../core/models/{name}.cfm", env!("CARGO_MANIFEST_DIR"))
}

fn cli(args: &[&str]) -> CommandResult {
    fairgraph_cli::run(std::iter::once("fairgraph").chain(args.iter().copied()))
}

/// Derives the fig3 constraint through the CLI and fits it on 10^5 rows.
fn fig3_fits() -> Result<(FittedPredictor, FittedPredictor), String> {
    let out = cli(&["derive", &model_path("fig3"), "--mode", "proxy"]);
    ensure(out.code == 0, || format!("derive exited {}: {}", out.code, out.stderr))?;
    let report: DerivationReport = serde_json::from_str(&out.stdout).map_err(|e| e.to_string())?;
    let row = &report.constraint_rows[0];
    ensure(report.constraint_rows.len() == 1 && row.coefficients == [1.0, 0.5] && row.rhs == 0.0, || {
        format!("unexpected constraint {:?}", report.constraint_rows)
    })?;
    ensure(row.description == "lambda_P + 0.5*lambda_X = 0", || row.description.clone())?;
    let m = fig3();
    let h = m.sole_hypothesis().unwrap();
    let data = sample(&m, 100_000, 1).map_err(|e| e.to_string())?;
    let fair = fit_constrained(&data, h, "Y", &report.constraint()).map_err(|e| e.to_string())?;
    let ols = fit_constrained(&data, h, "Y", &LinearConstraint::unconstrained(h.all_params())).map_err(|e| e.to_string())?;
    Ok((fair, ols))
}

fn c1_constraint_recovery() -> Check {
    let (fair, _) = fig3_fits()?;
    let (lp, lx) = (fair.coefficients["lambda_P"], fair.coefficients["lambda_X"]);
    let gap = (lp + 0.5 * lx).abs();
    ensure(gap < 1e-9, || format!("lambda_P + 0.5 lambda_X = {gap:e}"))?;
    Ok(format!("lambda_P + 0.5*lambda_X = 0; fitted ({lp:.4}, {lx:.4}), gap {gap:.1e}"))
}

fn c2_proxy_freedom() -> Check {
    let (fair, ols) = fig3_fits()?;
    let m = fig3();
    let mut worst_z = f64::INFINITY;
    for (k, (p, q)) in [(-1.0, 1.0), (0.0, 2.0)].into_iter().enumerate() {
        let seed = 20 + k as u64;
        let r = test_intervention_invariance(&m, &fair, "P", &[p, q], TestMode::Distribution, 100_000, seed)
            .map_err(|e| e.to_string())?;
        ensure(r.pass, || format!("constrained fit fails at ({p}, {q}): D={}", r.pairs[0].ks.statistic))?;
        let r = test_intervention_invariance(&m, &ols, "P", &[p, q], TestMode::Distribution, 100_000, seed)
            .map_err(|e| e.to_string())?;
        ensure(!r.pass, || format!("OLS passes at ({p}, {q})"))?;
        let analytic = (ols.coefficients["lambda_P"] + 0.5 * ols.coefficients["lambda_X"]) * (p - q);
        let z = analytic.abs() / r.pairs[0].mean.standard_error;
        ensure(z >= 5.0, || format!("analytic shift only {z:.1} standard errors"))?;
        worst_z = worst_z.min(z);
    }
    Ok(format!("constrained passes both pairs; OLS fails both, shift >= {worst_z:.0} SE"))
}

fn c3_theorem1() -> Check {
    let out = cli(&["repro-thm1", "-n", "100000", "--seed", "7"]);
    let r: Theorem1Report = serde_json::from_str(&out.stdout).map_err(|e| e.to_string())?;
    ensure(out.code == if r.pass { 0 } else { 1 }, || "exit code disagrees with report".into())?;
    let worst = r.joint.iter().map(|c| c.ks.statistic / c.ks.critical_value).fold(0.0, f64::max);
    ensure(r.joint_pass && worst < 1.0, || format!("joint KS: worst D/crit = {worst:.3}"))?;
    ensure(!r.audits.left.verdict && r.audits.right.verdict, || "audit verdicts".into())?;
    for name in ["thm1_left", "thm1_right"] {
        let role = models::bundled(name).unwrap().graph().role("X1").unwrap();
        ensure(role == NodeRole::Resolving, || format!("X1 is {role} in {name}"))?;
    }
    let tested = r.calibration.iter().filter(|b| b.pass.is_some()).count();
    ensure(r.calibration_pass && tested > 0, || "calibration bins".into())?;
    ensure(r.equal_odds_pass, || "equal odds".into())?;
    Ok(format!(
        "{} KS comparisons (max D/crit {worst:.2}); audits left=false right=true; {tested} calibration bins; equal odds holds",
        r.joint.len()
    ))
}

fn bump_slopes(pred: &mut FittedPredictor, by: f64) {
    if let PredictorForm::Adjusted { adjustments, .. } = &mut pred.form {
        for a in adjustments {
            a.slope += by;
        }
    }
}

fn c4_adjusted_predictors() -> Check {
    let mut rng = StdRng::seed_from_u64(4);
    let links = [Link::Identity, Link::Tanh, Link::Cubic];
    let mut failures = Vec::new();
    let mut flips = [0usize; 3];
    for k in 0..10 {
        let pm = random_proxy_sem(&mut rng);
        for (j, link) in links.into_iter().enumerate() {
            let seed = 1000 + 10 * k as u64 + j as u64;
            let mut pred = adjusted_predictor(AdjustmentSource::Model(&pm.model), &pm.proxy, &pm.features, link, None)
                .map_err(|e| e.to_string())?;
            let r = test_intervention_invariance(&pm.model, &pred, &pm.proxy, &[-1.0, 1.0], TestMode::Distribution, 20_000, seed)
                .map_err(|e| e.to_string())?;
            if !r.pass {
                let ks = &r.pairs[0].ks;
                failures.push(format!("model {k}/{link} D={:.4} crit={:.4}", ks.statistic, ks.critical_value));
            }
            bump_slopes(&mut pred, 0.2);
            let r = test_intervention_invariance(&pm.model, &pred, &pm.proxy, &[-1.0, 1.0], TestMode::Distribution, 20_000, seed)
                .map_err(|e| e.to_string())?;
            flips[j] += usize::from(!r.pass);
        }
    }
    let summary = format!(
        "{}/30 pass{}; +0.2 slope flips {}/{}/{} of 10 (identity/tanh/cubic)",
        30 - failures.len(),
        if failures.is_empty() { String::new() } else { format!(" ({})", failures.join(", ")) },
        flips[0],
        flips[1],
        flips[2]
    );
    ensure(failures.is_empty() && flips.iter().all(|&f| f >= 9), || summary.clone())?;
    Ok(summary)
}

fn c5_observational_adjustment() -> Check {
    let chain = models::bundled("chain").unwrap();
    let data = sample(&chain, 100_000, 5).map_err(|e| e.to_string())?;
    let obs = conditional_expectation_fit(&data, "X", "P").map_err(|e| e.to_string())?;
    let ie = interventional_expectation(&chain, "X", "P").map_err(|e| e.to_string())?;
    let z = (obs.slope - ie.slope).abs() / obs.slope_se;
    ensure(z < 3.0, || format!("chain slopes {} vs {} ({z:.2} SE)", obs.slope, ie.slope))?;
    let src = AdjustmentSource::Data { graph: chain.graph(), data: &data };
    adjusted_predictor(src, "P", &["X"], Link::Identity, None).map_err(|e| e.to_string())?;

    let m = fig3();
    let data = sample(&m, 1_000, 5).map_err(|e| e.to_string())?;
    let src = AdjustmentSource::Data { graph: m.graph(), data: &data };
    match adjusted_predictor(src, "P", &["X"], Link::Identity, None) {
        Err(EstimatorError::AdjustmentNotIdentifiable { .. }) => {}
        other => return Err(format!("fig3 observational adjustment not refused: {other:?}")),
    }
    Ok(format!("chain slope {:.4} vs {:.4} ({z:.2} SE); fig3 refused", obs.slope, ie.slope))
}

fn c6_expectation_predictor() -> Check {
    let m = fig3();
    let pred = expectation_predictor(&m, "P", "X", 2.0, 5.0).map_err(|e| e.to_string())?;
    let n = 100_000;
    let mut worst = 0.0f64;
    for (k, p) in [-1.0, 0.5, 2.0].into_iter().enumerate() {
        let d = do_sample(&m, &[("P", Intervention::Point(p))], n, 60 + k as u64).map_err(|e| e.to_string())?;
        let r = pred.eval_matrix(&d).map_err(|e| e.to_string())?;
        let half = 4.0 * std_dev(&r) / (n as f64).sqrt();
        let dev = (mean(&r) - 5.0).abs();
        ensure(dev <= half, || format!("do(P={p}) mean {} outside 5 +/- {half}", mean(&r)))?;
        worst = worst.max(dev / half);
    }
    Ok(format!("do-means within the band for P in {{-1, 0.5, 2}} (worst {worst:.2} of the half-width)"))
}

fn c7_necessity_sweep() -> Check {
    let grid = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let m = fig3();
    for (k, link) in [Link::Identity, Link::Sigmoid].into_iter().enumerate() {
        let r = necessity_sweep(&m, link, &grid, 100_000, 70 + k as u64).map_err(|e| e.to_string())?;
        ensure(r.pass_set == [0.0] && r.matches_expected, || format!("{link}: pass set {:?}", r.pass_set))?;
    }
    Ok("only mu = 0 passes for identity and sigmoid".into())
}

fn c8_root_form_oracle() -> Check {
    let mut rng = StdRng::seed_from_u64(8_000);
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for k in 0..100 {
        let nodes = rng.random_range(2..=8);
        let m = random_linear_sem(&mut rng, nodes, 0.5);
        let d = sample(&m, 100, k).map_err(|e| e.to_string())?;
        for target in m.graph().names() {
            let rf = root_form(&m, target, &[] as &[&str]).map_err(|e| e.to_string())?;
            let col = d.column(target).unwrap();
            for (row, &want) in col.iter().enumerate() {
                let got = rf.evaluate(|n| d.column(n).map(|c| c[row])).ok_or("root form not numeric")?;
                worst = worst.max((got - want).abs());
                checked += 1;
            }
        }
    }
    ensure(worst <= 1e-10, || format!("max deviation {worst:e}"))?;
    Ok(format!("{checked} values, max deviation {worst:.1e}"))
}

fn c9_calibration() -> Check {
    let m = fig3();
    let h = m.sole_hypothesis().unwrap();
    let null = FittedPredictor::linear(h, &[-0.5, 1.0]).map_err(|e| e.to_string())?;
    // Under do(P = p) this predictor is 0.6 A + N_X; shift its mean by half a
    // standard deviation between p = 0 and p = 1.
    let sd = (0.36f64 + 1.0).sqrt();
    let shifted = FittedPredictor::linear(h, &[-0.5 + 0.5 * sd, 1.0]).map_err(|e| e.to_string())?;
    let n = 10_000;
    let (mut false_pos, mut detected) = (0, 0);
    for run in 0..100u64 {
        let r = test_intervention_invariance(&m, &null, "P", &[0.0, 1.0], TestMode::Distribution, n, 9_000 + run)
            .map_err(|e| e.to_string())?;
        false_pos += usize::from(!r.pass);
        let r = test_intervention_invariance(&m, &shifted, "P", &[0.0, 1.0], TestMode::Distribution, n, 9_500 + run)
            .map_err(|e| e.to_string())?;
        detected += usize::from(!r.pass);
    }
    ensure(false_pos <= 3 && detected >= 99, || format!("{false_pos} false positives, {detected} detections"))?;
    Ok(format!("{false_pos}/100 false positives; {detected}/100 shifts detected"))
}

/// Random character edits, line duplications and truncations.
fn mutate(rng: &mut StdRng, text: &str) -> String {
    const ALPHABET: &[char] = &[
        '(', ')', ',', '*', '+', '-', '>', '=', '#', ' ', '\n', '\t', '.', 'e', '0', '9', 'A', 'x', '_', 'é', '\u{0}',
    ];
    let mut chars: Vec<char> = text.chars().collect();
    for _ in 0..rng.random_range(1..6) {
        let len = chars.len();
        match rng.random_range(0..6) {
            0 if len > 0 => {
                chars.remove(rng.random_range(0..len));
            }
            1 => chars.insert(rng.random_range(0..=len), ALPHABET[rng.random_range(0..ALPHABET.len())]),
            2 if len > 1 => {
                let i = rng.random_range(0..len - 1);
                chars.swap(i, i + 1);
            }
            3 => chars.truncate(rng.random_range(0..=len)),
            4 if len > 0 => {
                let i = rng.random_range(0..len);
                chars[i] = ALPHABET[rng.random_range(0..ALPHABET.len())];
            }
            _ => {
                let s: String = chars.iter().collect();
                let lines: Vec<&str> = s.lines().collect();
                if !lines.is_empty() {
                    let l = lines[rng.random_range(0..lines.len())];
                    chars.extend(format!("\n{l}\n").chars());
                }
            }
        }
    }
    chars.into_iter().collect()
}

fn c10_parser() -> Check {
    let golden = ["fig1", "fig3", "fig5", "thm1_left", "thm1_right"];
    for name in golden {
        let (_, text) = models::ALL.iter().find(|(n, _)| *n == name).unwrap();
        let spec = parse_model(text).map_err(|d| format!("{name}: {d:?}"))?;
        ensure(serialize_model(&spec) == *text, || format!("{name} does not round-trip"))?;
        ensure(parse_model(&serialize_model(&spec)).as_ref() == Ok(&spec), || format!("{name} re-parse differs"))?;
    }
    let mut rng = StdRng::seed_from_u64(10);
    let (mut crashes, mut rejected) = (0, 0);
    for k in 0..10_000 {
        let (_, base) = models::ALL[k % models::ALL.len()];
        let text = mutate(&mut rng, base);
        match catch_unwind(AssertUnwindSafe(|| load_model(&text, "fuzz"))) {
            Err(_) => crashes += 1,
            Ok(Err(d)) if d.is_empty() => crashes += 1,
            Ok(Err(_)) => rejected += 1,
            Ok(Ok(_)) => {}
        }
    }
    ensure(crashes == 0, || format!("{crashes} crashes"))?;
    Ok(format!("{} golden files round-trip; 10000 mutations, {rejected} rejected with diagnostics, 0 crashes", golden.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("constraint recovery", Some(1.0), c1_constraint_recovery),
        ("proxy-freedom soundness", Some(10.0), c2_proxy_freedom),
        ("two-graph reproduction", Some(60.0), c3_theorem1),
        ("adjusted predictor property suite", Some(60.0), c4_adjusted_predictors),
        ("observational adjustment", Some(10.0), c5_observational_adjustment),
        ("expectation predictor", Some(5.0), c6_expectation_predictor),
        ("necessity sweep", Some(30.0), c7_necessity_sweep),
        ("root-form oracle", None, c8_root_form_oracle),
        ("statistical calibration", None, c9_calibration),
        ("parser round-trip and fuzz", None, c10_parser),
    ];
    let mut failed = 0;
    let mut out = std::io::stdout().lock();
    for (i, (name, budget, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let result = match (result, budget) {
            (Ok(_), Some(b)) if elapsed > Duration::from_secs_f64(b) => {
                Err(format!("took {:.2} s, budget {b} s", elapsed.as_secs_f64()))
            }
            (r, _) => r,
        };
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => ("FAIL", d.as_str()),
        };
        failed += usize::from(result.is_err());
        let _ = writeln!(out, "criterion {:>2} {tag} [{:>6.2} s] {name}: {detail}", i + 1, elapsed.as_secs_f64());
    }
    let _ = writeln!(out, "acceptance: {} of 10 criteria pass", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
