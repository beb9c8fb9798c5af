//! Instruction rendering from the versioned template resource.

use std::sync::OnceLock;

use serde::Deserialize;

use crate::rng::Rng;

const RESOURCE: &str = include_str!("../../resources/instructions_v1.toml");

#[derive(Debug, Deserialize)]
pub(crate) struct Templates {
    #[allow(dead_code)]
    pub version: u32,
    pub sorting: Vec<String>,
    pub alignment: Vec<String>,
    pub roomedit: Vec<String>,
    pub roomedit_constraint: String,
}

pub(crate) fn templates() -> &'static Templates {
    static T: OnceLock<Templates> = OnceLock::new();
    T.get_or_init(|| toml::from_str(RESOURCE).expect("bundled instruction templates parse"))
}

pub(crate) fn pick<'a>(rng: &mut Rng, options: &'a [String]) -> &'a str {
    rng.choose(options).as_str()
}

/// Replaces each `{key}` with its value.
pub(crate) fn render(template: &str, vars: &[(&str, String)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    debug_assert!(!out.contains('{'), "unfilled placeholder in {out:?}");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_templates_load() {
        let t = templates();
        assert!(!t.sorting.is_empty() && !t.alignment.is_empty() && !t.roomedit.is_empty());
        assert_eq!(render("a {x} b {x}", &[("x", "1".into())]), "a 1 b 1");
    }
}
