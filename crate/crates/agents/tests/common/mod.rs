#![allow(dead_code)]

pub mod scenarios;

use storymap_agents::geocoder::Geocoder;
use storymap_agents::llm::Gateway;

pub fn replay() -> (Gateway, Geocoder) {
    let dir = scenarios::fixtures_dir();
    (Gateway::replay(&dir), Geocoder::replay(&dir))
}
