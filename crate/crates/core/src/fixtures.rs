//! The "minibuild" test building and its reference scenario.

use crate::building::Building;
use crate::scenario::Scenario;

pub const MINIBUILD: &str = include_str!("../testdata/minibuild.json");
pub const SCENARIO_EQ1: &str = include_str!("../testdata/scenario_eq1.json");

pub fn minibuild() -> Building {
    Building::load_str(MINIBUILD).expect("fixture building is valid")
}

pub fn scenario_eq1(building: &Building) -> Scenario {
    Scenario::load(building, SCENARIO_EQ1.as_bytes()).expect("fixture scenario is valid")
}
