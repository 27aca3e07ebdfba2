//! Figure presets shipped with the binary.

use crate::config::{parse_config, ScenarioConfig};
use crate::error::{CliError, Result};

pub const PRESETS: &[(&str, &str)] = &[
    ("fig2", include_str!("../presets/fig2.toml")),
    ("fig3", include_str!("../presets/fig3.toml")),
    ("fig4", include_str!("../presets/fig4.toml")),
    ("fig5", include_str!("../presets/fig5.toml")),
    ("fig6", include_str!("../presets/fig6.toml")),
    ("fig7", include_str!("../presets/fig7.toml")),
    ("fig8", include_str!("../presets/fig8.toml")),
    ("fig9", include_str!("../presets/fig9.toml")),
    ("fig10", include_str!("../presets/fig10.toml")),
    ("fig11", include_str!("../presets/fig11.toml")),
    ("fig12", include_str!("../presets/fig12.toml")),
];

pub fn preset_source(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
        .ok_or_else(|| CliError::UnknownPreset(name.to_string()))
}

pub fn preset(name: &str) -> Result<ScenarioConfig> {
    parse_config(preset_source(name)?, name)
}

/// Name and first comment line of every preset.
pub fn list_presets() -> Vec<(&'static str, &'static str)> {
    PRESETS
        .iter()
        .map(|(name, text)| {
            let title = text
                .lines()
                .find_map(|l| l.strip_prefix('#'))
                .map(str::trim)
                .unwrap_or("");
            (*name, title)
        })
        .collect()
}
