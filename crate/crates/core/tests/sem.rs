use fairgraph::dsl::load_model;
use fairgraph::models;
use fairgraph::sem::{
    conditional_expectation_fit, do_sample, interventional_expectation, root_form, sample, Intervention, SemError,
};
use fairgraph::stats::{mean, std_dev, variance};
use fairgraph::synth::{random_linear_sem, random_proxy_sem};
use fairgraph::SEModel;
use rand::rngs::StdRng;
use rand::SeedableRng;

const N: usize = 100_000;

fn fig3() -> SEModel {
    models::bundled("fig3").unwrap()
}

#[test]
fn linear_model_validates() {
    fig3().validate().unwrap();
    models::bundled("fig5").unwrap().validate().unwrap();
}

#[test]
fn non_parent_reference_is_rejected() {
    let text = "node A role=protected\nnode X role=feature\neq A = normal(0, 1)\neq X = 0.5*A\n";
    let err = load_model(text, "t").unwrap_err();
    assert!(err[0].message.contains("A"), "{}", err[0].message);
    let text = "node A role=protected\nnode X role=feature\neq X = normal(0, 0)\n";
    let err = load_model(text, "t").unwrap_err();
    assert!(err[0].message.contains("standard deviation") || err[0].message.contains("sd"), "{}", err[0].message);
}

#[test]
fn sd_zero_is_bad_noise() {
    use fairgraph::expr::{Expr, NoiseSpec, Term};
    use fairgraph::{CausalGraph, NodeRole};
    let g = CausalGraph::builder().node("X", NodeRole::Feature).build().unwrap();
    let eq = Expr::new(vec![Term::Noise(NoiseSpec::Gaussian { mean: Box::new(Expr::constant(0.0)), sd: 0.0 })]);
    let err = SEModel::new("t", g, vec![("X".into(), eq)], vec![]).unwrap_err();
    assert!(matches!(err, SemError::BadNoiseParam { .. }));
}

#[test]
fn thm1_left_protected_mean() {
    let d = sample(&models::bundled("thm1_left").unwrap(), N, 11).unwrap();
    let a = d.column("A").unwrap();
    assert!(a.iter().all(|&v| v == 1.0 || v == -1.0));
    assert!(mean(a).abs() < 3.0 / (N as f64).sqrt());
}

#[test]
fn empty_sample_keeps_header() {
    let d = sample(&fig3(), 0, 1).unwrap();
    assert_eq!(d.nrows(), 0);
    assert_eq!(d.to_csv_string(), "A,N_P,N_X,P,X,Y\n");
}

#[test]
fn standard_normal_root_variance() {
    let m = load_model("node Z role=latent\neq Z = normal(0, 1)\n", "z").unwrap();
    let d = sample(&m, N, 3).unwrap();
    assert!((variance(d.column("Z").unwrap()) - 1.0).abs() < 0.02);
}

#[test]
fn point_intervention_on_proxy() {
    let m = fig3();
    for p in [-1.0, 2.0] {
        let d = do_sample(&m, &[("P", Intervention::Point(p))], N, 5).unwrap();
        assert!(d.column("P").unwrap().iter().all(|&v| v == p));
        let x = d.column("X").unwrap();
        let se = (1.36f64 / N as f64).sqrt();
        assert!((mean(x) - 0.5 * p).abs() < 4.0 * se);
        assert!((variance(x) - 1.36).abs() < 0.03);
    }
}

#[test]
fn root_intervention_at_mean_keeps_means() {
    let text = "node A role=protected\nnode B role=feature\nnode C role=feature\nedge A -> B\nedge B -> C\n\
                eq A = normal(2, 1)\neq B = 1.5*A + normal(0, 1)\neq C = -2*B + 1 + normal(0, 1)\n";
    let m = load_model(text, "chain").unwrap();
    let d = do_sample(&m, &[("A", Intervention::Point(2.0))], N, 9).unwrap();
    let b = d.column("B").unwrap();
    let c = d.column("C").unwrap();
    let se = 1.0 / (N as f64).sqrt();
    assert!((mean(b) - 3.0).abs() < 4.0 * se);
    assert!((mean(c) + 5.0).abs() < 4.0 * 2.3 * se);
    assert!((variance(b) - 1.0).abs() < 0.03);
    assert!((variance(c) - 5.0).abs() < 0.15);
}

#[test]
fn intervening_on_childless_node_changes_nothing_else() {
    let m = fig3();
    let plain = sample(&m, 5_000, 21).unwrap();
    let cut = do_sample(&m, &[("Y", Intervention::Point(0.0))], 5_000, 21).unwrap();
    for c in ["A", "N_P", "N_X", "P", "X"] {
        assert_eq!(plain.column(c), cut.column(c));
    }
}

#[test]
fn marginal_intervention_keeps_the_marginal_and_breaks_dependence() {
    let m = models::bundled("fig5").unwrap();
    let d = do_sample(&m, &[("E", Intervention::Marginal)], N, 4).unwrap();
    let e = d.column("E").unwrap();
    let a = d.column("A").unwrap();
    assert!(mean(e).abs() < 4.0 * (1.81f64 / N as f64).sqrt());
    assert!((variance(e) - 1.81).abs() < 0.04);
    let cov = e.iter().zip(a).map(|(x, y)| x * y).sum::<f64>() / N as f64;
    assert!(cov.abs() < 4.0 * (1.81f64).sqrt() / (N as f64).sqrt());
    assert!(d.provenance.interventions[0].starts_with("E~marginal"));
}

#[test]
fn fig5_root_form_under_marginal_intervention() {
    let rf = root_form(&models::bundled("fig5").unwrap(), "R", &["E"]).unwrap();
    let e = &rf.fixed["E"];
    assert_eq!((e.param_coeff("lambda_E"), e.param_coeff("lambda_X")), (1.0, 0.5));
    let a = &rf.terms["A"];
    assert_eq!((a.param_coeff("lambda_E"), a.param_coeff("lambda_X")), (0.0, 0.6));
}

#[test]
fn chain_expectation_is_path_product() {
    let text = "node P role=proxy\nnode M role=latent\nnode X role=feature\nedge P -> M\nedge M -> X\n\
                eq P = normal(0, 1)\neq M = 2*P + normal(0, 1)\neq X = 3*M + normal(0, 1)\n";
    let m = load_model(text, "pmx").unwrap();
    let e = interventional_expectation(&m, "X", "P").unwrap();
    assert_eq!(e.slope, 6.0);
    let mut means = Vec::new();
    for p in [-1.0, 1.0] {
        let d = do_sample(&m, &[("P", Intervention::Point(p))], N, 17).unwrap();
        let x = d.column("X").unwrap();
        assert!((mean(x) - e.at(p)).abs() < 4.0 * std_dev(x) / (N as f64).sqrt());
        means.push(mean(x));
    }
    let slope = (means[1] - means[0]) / 2.0;
    assert!((slope - 6.0).abs() < 0.05);
}

#[test]
fn observational_slope_matches_only_without_confounding() {
    let chain = models::bundled("chain").unwrap();
    let d = sample(&chain, N, 2).unwrap();
    let fit = conditional_expectation_fit(&d, "X", "P").unwrap();
    let mu = interventional_expectation(&chain, "X", "P").unwrap().slope;
    assert!((fit.slope - mu).abs() < 3.0 * fit.slope_se, "{} vs {mu}", fit.slope);

    let d = sample(&fig3(), N, 2).unwrap();
    let fit = conditional_expectation_fit(&d, "X", "P").unwrap();
    assert!((fit.slope - 0.5).abs() > 5.0 * fit.slope_se, "{}", fit.slope);

    let fit = conditional_expectation_fit(&d, "N_X", "P").unwrap();
    assert!(fit.slope.abs() < 4.0 * fit.slope_se);
}

#[test]
fn constant_regressor_is_degenerate() {
    let d = do_sample(&fig3(), &[("P", Intervention::Point(1.0))], 100, 2).unwrap();
    assert!(matches!(conditional_expectation_fit(&d, "X", "P"), Err(SemError::DegenerateDesign(_))));
}

#[test]
fn sampling_is_independent_of_thread_count() {
    let m = models::bundled("thm1_left").unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| do_sample(&m, &[("X1", Intervention::Marginal)], 20_000, 77).unwrap())
    };
    let one = run(1);
    let many = run(6);
    assert_eq!(one, many);
    assert_eq!(one.to_csv_string(), many.to_csv_string());
    assert_ne!(one, do_sample(&m, &[("X1", Intervention::Marginal)], 20_000, 78).unwrap());
}

#[test]
fn root_form_reproduces_samples_on_random_linear_models() {
    let mut rng = StdRng::seed_from_u64(8);
    for k in 0..40 {
        let m = random_linear_sem(&mut rng, 2 + k % 7, 0.5);
        let d = sample(&m, 200, k as u64).unwrap();
        for target in m.graph().names() {
            let rf = root_form(&m, target, &[] as &[&str]).unwrap();
            for row in 0..d.nrows() {
                let got = rf.evaluate(|n| d.column(n).map(|c| c[row])).unwrap();
                let want = d.column(target).unwrap()[row];
                assert!((got - want).abs() <= 1e-10 * (1.0 + want.abs()), "{target}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn interventional_expectation_matches_simulation() {
    let mut rng = StdRng::seed_from_u64(31);
    for k in 0..5 {
        let pm = random_proxy_sem(&mut rng);
        for (j, p) in [-1.0, 0.5, 2.0].into_iter().enumerate() {
            let d = do_sample(&pm.model, &[("P", Intervention::Point(p))], N, 100 + 3 * k + j as u64).unwrap();
            for x in &pm.features {
                let want = interventional_expectation(&pm.model, x, "P").unwrap().at(p);
                let col = d.column(x).unwrap();
                let tol = 4.0 * std_dev(col) / (N as f64).sqrt();
                assert!((mean(col) - want).abs() < tol, "model {k}, {x} at p={p}: {} vs {want}", mean(col));
            }
        }
    }
}

#[test]
fn mixture_component_frequencies_follow_logistic_weight() {
    for (logit, seed) in [(0.0, 1u64), (1.5, 2), (-0.7, 3)] {
        let text = format!("node X role=latent\neq X = mix2(6, 1, -6, 1, {logit})\n");
        let d = sample(&load_model(&text, "mix").unwrap(), N, seed).unwrap();
        let first = d.column("X").unwrap().iter().filter(|&&x| x > 0.0).count() as f64 / N as f64;
        let w = fairgraph::expr::sigmoid(logit);
        assert!((first - w).abs() < 3.0 * (w * (1.0 - w) / N as f64).sqrt(), "{first} vs {w}");
    }
}

#[test]
fn csv_header_must_name_nodes() {
    let g = fig3().graph().clone();
    let err = fairgraph::SampleMatrix::read_csv("P,Q\n1,2\n".as_bytes(), &g).unwrap_err();
    assert!(err.to_string().contains("Q"));
    let d = sample(&fig3(), 10, 1).unwrap();
    let back = fairgraph::SampleMatrix::read_csv(d.to_csv_string().as_bytes(), &g).unwrap();
    assert_eq!(back.column("X"), d.column("X"));
}
