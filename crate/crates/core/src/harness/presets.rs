use crate::error::{Error, Result};

use super::{ExperimentSpec, SweepSpec};

/// Named experiment recipes shipped with the crate.
pub const PRESETS: [(&str, &str); 7] = [
    ("fig1", include_str!("../../presets/fig1.json")),
    ("fig2", include_str!("../../presets/fig2.json")),
    ("fig3", include_str!("../../presets/fig3.json")),
    ("fig4", include_str!("../../presets/fig4.json")),
    ("fig5", include_str!("../../presets/fig5.json")),
    ("fig6", include_str!("../../presets/fig6.json")),
    ("sweep", include_str!("../../presets/sweep.json")),
];

pub fn fig_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n).filter(|n| n.starts_with("fig"))
}

pub fn preset_json(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, json)| *json)
        .ok_or_else(|| {
            let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            Error::InvalidArgument(format!("unknown preset `{name}` (known: {})", known.join(", ")))
        })
}

pub fn preset_spec(name: &str) -> Result<ExperimentSpec> {
    if name == "sweep" {
        return Err(Error::InvalidArgument("`sweep` is a sweep preset; use the sweep subcommand".into()));
    }
    ExperimentSpec::from_json(preset_json(name)?)
}

pub fn sweep_preset() -> Result<SweepSpec> {
    Ok(serde_json::from_str(preset_json("sweep")?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        for name in fig_names() {
            let spec = preset_spec(name).unwrap();
            spec.validate().unwrap();
            spec.environment().unwrap();
            assert_eq!(spec.output.unwrap().to_str().unwrap(), format!("{name}.csv"));
        }
        assert_eq!(fig_names().count(), 6);
        let sweep = sweep_preset().unwrap();
        assert!(!sweep.ladder.is_empty());
        assert!(preset_spec("fig9").is_err());
    }
}
