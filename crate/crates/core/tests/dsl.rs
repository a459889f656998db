use fairgraph::dsl::{compile, load_model, parse_model, serialize_model, Decl, DiagnosticKind, ModelSpec};
use fairgraph::expr::{Expr, NoiseSpec, Term};
use fairgraph::models;
use fairgraph::NodeRole;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

#[test]
fn golden_files_are_canonical() {
    for (name, text) in models::ALL {
        let spec = parse_model(text).unwrap_or_else(|d| panic!("{name}: {d:?}"));
        assert_eq!(serialize_model(&spec), text, "{name} is not in canonical form");
        compile(&spec, name).unwrap();
    }
}

#[test]
fn fig3_equations() {
    let spec = parse_model(models::FIG3).unwrap();
    let eqs: Vec<String> = spec
        .decls
        .iter()
        .filter_map(|d| match d {
            Decl::Equation { node, expr } => Some(format!("{node} = {expr}")),
            _ => None,
        })
        .collect();
    assert!(eqs.contains(&"P = 0.8*A + N_P".to_string()));
    assert!(eqs.contains(&"X = 0.6*A + 0.5*P + N_X".to_string()));
}

#[test]
fn whitespace_and_comments_normalise() {
    let messy = "  # header\n\nnode   A role=protected   \nnode X role=feature\nedge A->X\neq X=0.5*A+normal( 0 ,1 )\n";
    let spec = parse_model(messy).unwrap();
    assert_eq!(
        serialize_model(&spec),
        "# header\nnode A role=protected\nnode X role=feature\nedge A -> X\neq X = 0.5*A + normal(0, 1)\n"
    );
}

#[test]
fn programmatic_spec_round_trips() {
    let m = models::bundled("thm1_left").unwrap();
    let spec = ModelSpec::from_model(&m);
    let text = serialize_model(&spec);
    assert_eq!(parse_model(&text).unwrap(), spec);
    assert_eq!(load_model(&text, "again").unwrap().graph(), m.graph());
}

#[test]
fn diagnostics_carry_positions() {
    let d = &parse_model("node A role=protcted\n").unwrap_err()[0];
    assert_eq!((d.line, d.col, &d.kind), (1, 13, &DiagnosticKind::UnknownRole));
    let d = &parse_model("node X role=feature\neq X = 2*Q\n").unwrap_err()[0];
    assert_eq!(d.kind, DiagnosticKind::UndeclaredVariable);
    assert_eq!(d.line, 2);
    let d = &parse_model("node X role=feature\neq X = 1\neq X = 2\n").unwrap_err()[0];
    assert_eq!((d.line, &d.kind), (3, &DiagnosticKind::DuplicateEquation));
}

#[test]
fn three_independent_mistakes_are_all_reported() {
    let mut rng = StdRng::seed_from_u64(3);
    let lines: Vec<&str> = models::FIG3.lines().collect();
    for _ in 0..20 {
        let mut out: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
        let mut targets: Vec<usize> = Vec::new();
        while targets.len() < 3 {
            let i = rng.random_range(1..lines.len());
            if !targets.contains(&i) {
                targets.push(i);
            }
        }
        targets.sort_unstable();
        for (k, &i) in targets.iter().enumerate() {
            out[i] = match k {
                0 => out[i].replacen(' ', " ?", 1),
                1 => format!("{} )", out[i]),
                _ => "node".to_string() + &out[i][out[i].find(' ').unwrap()..] + " @",
            };
        }
        let diags = parse_model(&out.join("\n")).unwrap_err();
        for &i in &targets {
            assert!(diags.iter().any(|d| d.line == i + 1), "line {} missing from {diags:?}", i + 1);
        }
    }
}

/// Random single-character edits, line duplications and truncations of the
/// golden files.
fn mutate(rng: &mut StdRng, text: &str) -> String {
    const ALPHABET: &[char] = &[
        '(', ')', ',', '*', '+', '-', '>', '=', '#', ' ', '\n', '\t', '.', 'e', 'E', '0', '9', 'A', 'x', '_', 'é', '∞',
        '\u{0}',
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

#[test]
fn mutated_inputs_yield_diagnostics_not_panics() {
    let mut rng = StdRng::seed_from_u64(99);
    for k in 0..2_000 {
        let (_, base) = models::ALL[k % models::ALL.len()];
        let text = mutate(&mut rng, base);
        if let Err(diags) = load_model(&text, "fuzz") {
            assert!(!diags.is_empty());
            let nlines = text.lines().count().max(1);
            for d in diags {
                assert!(d.line >= 1 && d.line <= nlines + 1, "{d} in {text:?}");
                assert!(d.col >= 1);
            }
        }
    }
}

#[test]
fn deep_nesting_is_a_diagnostic() {
    let text = format!("node X role=feature\neq X = {}1{}\n", "sigmoid(".repeat(5_000), ")".repeat(5_000));
    assert!(parse_model(&text).is_err());
}

fn arb_number() -> impl Strategy<Value = f64> {
    prop_oneof![(-1000i32..1000).prop_map(|v| v as f64 / 8.0), -1e6f64..1e6, Just(0.0)]
}

fn arb_expr(vars: Vec<String>) -> impl Strategy<Value = Expr> {
    let var = proptest::sample::select(vars);
    let leaf = prop_oneof![
        arb_number().prop_map(Term::Const),
        var.clone().prop_map(Term::Var),
        (arb_number(), var).prop_map(|(c, v)| Term::Scaled(c, v)),
    ];
    let terms = proptest::collection::vec(leaf, 1..4).prop_map(Expr::new);
    terms.prop_recursive(3, 24, 4, |inner| {
        let sd = 0.01f64..10.0;
        prop_oneof![
            inner.clone().prop_map(|e| Expr::new(vec![Term::Sigmoid(Box::new(e))])),
            (inner.clone(), sd.clone())
                .prop_map(|(e, sd)| Expr::new(vec![Term::Noise(NoiseSpec::Gaussian { mean: Box::new(e), sd })])),
            inner.clone().prop_map(|e| Expr::new(vec![Term::Noise(NoiseSpec::BernoulliPm { prob: Box::new(e) })])),
            (inner.clone(), sd.clone(), inner.clone(), sd, inner.clone()).prop_map(|(m1, sd1, m2, sd2, l)| {
                Expr::new(vec![Term::Noise(NoiseSpec::Mixture {
                    mean1: Box::new(m1),
                    sd1,
                    mean2: Box::new(m2),
                    sd2,
                    logit: Box::new(l),
                })])
            }),
            proptest::collection::vec(inner, 2..3).prop_map(|es| Expr::new(es.into_iter().flat_map(|e| e.terms).collect())),
        ]
    })
}

fn arb_spec() -> impl Strategy<Value = ModelSpec> {
    let vars: Vec<String> = ["A", "B", "C_1"].iter().map(|s| s.to_string()).collect();
    (arb_expr(vars.clone()), arb_expr(vars), any::<bool>()).prop_map(|(e1, e2, intercept)| {
        ModelSpec::from_decls(vec![
            Decl::Comment(" generated".into()),
            Decl::Node { name: "A".into(), role: NodeRole::Protected },
            Decl::Node { name: "B".into(), role: NodeRole::Feature },
            Decl::Node { name: "C_1".into(), role: NodeRole::Latent },
            Decl::Node { name: "R".into(), role: NodeRole::Predictor },
            Decl::Edge { from: "A".into(), to: "B".into() },
            Decl::Equation { node: "B".into(), expr: e1 },
            Decl::Equation { node: "C_1".into(), expr: e2 },
            Decl::Predictor { name: "R".into(), inputs: vec!["A".into(), "B".into()], intercept },
        ])
    })
}

proptest! {
    #[test]
    fn serialize_then_parse_is_identity(spec in arb_spec()) {
        let text = serialize_model(&spec);
        let back = parse_model(&text).map_err(|d| TestCaseError::fail(format!("{d:?}\n{text}")))?;
        prop_assert_eq!(&back, &spec);
        prop_assert_eq!(serialize_model(&back), text);
    }
}
