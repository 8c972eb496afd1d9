//! The scenario files shipped with the repository, compiled in.

use super::Scenario;
use crate::error::Result;

pub const HOLD: &str = include_str!("../../../../scenarios/hold.toml");
pub const SQUARE_4MOD: &str = include_str!("../../../../scenarios/square_4mod.toml");
pub const SQUARE_2MOD: &str = include_str!("../../../../scenarios/square_2mod.toml");
pub const AMPLIFY: &str = include_str!("../../../../scenarios/amplify.toml");
pub const TELEOP: &str = include_str!("../../../../scenarios/teleop.toml");

pub const ALL: [(&str, &str); 5] = [
    ("hold", HOLD),
    ("square_4mod", SQUARE_4MOD),
    ("square_2mod", SQUARE_2MOD),
    ("amplify", AMPLIFY),
    ("teleop", TELEOP),
];

pub fn hold() -> Result<Scenario> {
    Scenario::from_toml_str(HOLD)
}

/// The square trajectory with the upper pair (`2`) or all four modules.
pub fn square(modules: usize) -> Result<Scenario> {
    match modules {
        2 => Scenario::from_toml_str(SQUARE_2MOD),
        _ => Scenario::from_toml_str(SQUARE_4MOD)?.with_modules(modules),
    }
}

pub fn amplify() -> Result<Scenario> {
    Scenario::from_toml_str(AMPLIFY)
}

pub fn teleop() -> Result<Scenario> {
    Scenario::from_toml_str(TELEOP)
}
