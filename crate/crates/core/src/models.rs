//! Bundled example models in canonical `.cfm` form.

use crate::dsl::load_model;
use crate::sem::SEModel;

/// `A → X → R`, `A → R` with `X` resolving.
pub const FIG1: &str = include_str!("../models/fig1.cfm");
/// Proxy template with a confounded feature.
pub const FIG3: &str = include_str!("../models/fig3.cfm");
/// Resolving-variable template.
pub const FIG5: &str = include_str!("../models/fig5.cfm");
/// Proxy chain `A → P → X` with no confounding edge.
pub const CHAIN: &str = include_str!("../models/chain.cfm");
pub const THM1_LEFT: &str = include_str!("../models/thm1_left.cfm");
pub const THM1_RIGHT: &str = include_str!("../models/thm1_right.cfm");

/// Every bundled model as `(name, text)`.
pub const ALL: [(&str, &str); 6] = [
    ("fig1", FIG1),
    ("fig3", FIG3),
    ("fig5", FIG5),
    ("chain", CHAIN),
    ("thm1_left", THM1_LEFT),
    ("thm1_right", THM1_RIGHT),
];

/// Loads a bundled model by name.
pub fn bundled(name: &str) -> Option<SEModel> {
    let (_, text) = ALL.iter().find(|(n, _)| *n == name)?;
    Some(load_model(text, name).expect("bundled model is valid"))
}
