// SPDX-License-Identifier: Apache-2.0

//! Bundled configuration presets.

use crate::config::{SimConfig, SimConfigError};

pub const PRESETS: [(&str, &str); 6] = [
    ("base", include_str!("../presets/base.json")),
    ("pulp", include_str!("../presets/pulp.json")),
    ("cheshire", include_str!("../presets/cheshire.json")),
    ("mempool", include_str!("../presets/mempool.json")),
    ("manticore", include_str!("../presets/manticore.json")),
    ("hbm", include_str!("../presets/hbm.json")),
];

/// Raw JSON of a preset, by name with or without `.json`.
pub fn preset_json(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".json").unwrap_or(name);
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, j)| *j)
}

pub fn load_preset(name: &str) -> Option<Result<SimConfig, SimConfigError>> {
    preset_json(name).map(SimConfig::from_json)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_check() {
        for (name, _) in PRESETS {
            let c = load_preset(name).unwrap().unwrap();
            assert_eq!(c.name.as_deref(), Some(name));
            c.check().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(preset_json("pulp.json").is_some());
        assert!(preset_json("nope").is_none());
    }
}
