//! Built-in object vocabularies with dimension ranges in meters.

pub const SHAPES: &[&str] = &["cube", "cylinder", "sphere", "cone", "prism"];
pub const COLORS: &[&str] = &["red", "green", "blue", "yellow", "purple", "orange"];
pub const CATEGORIES: &[&str] = &["block", "toy", "jar", "vase", "can"];

/// A category with (min, max) ranges for length, width and height.
#[derive(Debug, Clone, Copy)]
pub struct Furniture {
    pub name: &'static str,
    pub length: (f64, f64),
    pub width: (f64, f64),
    pub height: (f64, f64),
}

const fn f(name: &'static str, length: (f64, f64), width: (f64, f64), height: (f64, f64)) -> Furniture {
    Furniture {
        name,
        length,
        width,
        height,
    }
}

/// Floor-standing room furniture.
pub const FURNITURE: &[Furniture] = &[
    f("bed", (1.9, 2.2), (1.4, 1.8), (0.45, 0.6)),
    f("sofa", (1.8, 2.4), (0.8, 1.0), (0.75, 0.95)),
    f("armchair", (0.7, 0.95), (0.7, 0.9), (0.8, 1.0)),
    f("dining chair", (0.42, 0.5), (0.45, 0.55), (0.8, 1.0)),
    f("dining table", (1.2, 1.8), (0.8, 1.0), (0.72, 0.78)),
    f("coffee table", (0.9, 1.3), (0.5, 0.7), (0.38, 0.48)),
    f("desk", (1.1, 1.6), (0.6, 0.8), (0.72, 0.78)),
    f("office chair", (0.55, 0.7), (0.55, 0.7), (0.9, 1.2)),
    f("wardrobe", (1.0, 1.8), (0.55, 0.65), (1.8, 2.2)),
    f("nightstand", (0.4, 0.55), (0.35, 0.45), (0.5, 0.65)),
    f("bookshelf", (0.8, 1.2), (0.28, 0.38), (1.6, 2.0)),
    f("tv stand", (1.2, 1.8), (0.38, 0.5), (0.45, 0.6)),
    f("dresser", (0.9, 1.4), (0.45, 0.55), (0.75, 0.95)),
    f("cabinet", (0.6, 1.0), (0.4, 0.55), (0.8, 1.2)),
    f("floor lamp", (0.3, 0.45), (0.3, 0.45), (1.5, 1.8)),
    f("potted plant", (0.3, 0.6), (0.3, 0.6), (0.5, 1.4)),
    f("ottoman", (0.45, 0.7), (0.45, 0.7), (0.38, 0.45)),
    f("side table", (0.4, 0.6), (0.4, 0.6), (0.45, 0.6)),
    f("stool", (0.3, 0.4), (0.3, 0.4), (0.45, 0.75)),
    f("bench", (1.0, 1.5), (0.35, 0.45), (0.42, 0.5)),
];

/// Boxed goods for grid arrangements.
pub const GRID_ITEMS: &[Furniture] = &[
    f("cardboard box", (0.3, 0.6), (0.3, 0.5), (0.2, 0.5)),
    f("storage bin", (0.4, 0.6), (0.3, 0.45), (0.25, 0.4)),
    f("plastic crate", (0.4, 0.6), (0.3, 0.4), (0.25, 0.35)),
    f("wicker basket", (0.3, 0.5), (0.3, 0.5), (0.2, 0.35)),
    f("metal drum", (0.5, 0.6), (0.5, 0.6), (0.8, 0.9)),
    f("paint bucket", (0.25, 0.35), (0.25, 0.35), (0.3, 0.4)),
    f("tool case", (0.45, 0.6), (0.3, 0.4), (0.15, 0.25)),
    f("water jug", (0.25, 0.3), (0.25, 0.3), (0.45, 0.55)),
    f("potted shrub", (0.35, 0.5), (0.35, 0.5), (0.6, 1.0)),
    f("traffic cone", (0.3, 0.4), (0.3, 0.4), (0.5, 0.7)),
];

/// Yaw choices for grid rows, degrees.
pub const GRID_YAWS: &[f64] = &[0.0, 90.0, -90.0, 180.0];

/// Vocabulary consulted for a grouping attribute.
pub fn labels_for(key: super::GroupKey) -> &'static [&'static str] {
    match key {
        super::GroupKey::Shape => SHAPES,
        super::GroupKey::Color => COLORS,
        super::GroupKey::Category => CATEGORIES,
    }
}

/// Finds the `key` attribute among the caption's words.
pub fn caption_attribute(caption: &str, key: super::GroupKey) -> Option<&'static str> {
    let labels = labels_for(key);
    caption
        .split_whitespace()
        .find_map(|w| labels.iter().find(|l| l.eq_ignore_ascii_case(w)).copied())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchgen::GroupKey;

    #[test]
    fn attributes_from_caption() {
        assert_eq!(caption_attribute("Red cube block", GroupKey::Color), Some("red"));
        assert_eq!(caption_attribute("red cube block", GroupKey::Shape), Some("cube"));
        assert_eq!(caption_attribute("red cube block", GroupKey::Category), Some("block"));
        assert_eq!(caption_attribute("lamp", GroupKey::Color), None);
    }
}
