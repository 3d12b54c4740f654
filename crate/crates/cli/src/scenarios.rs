//! Scenarios compiled into the binary.

pub const BUNDLED: &[(&str, &str)] = &[
    ("tsp_smoke", include_str!("../scenarios/tsp_smoke.json")),
    (
        "two_node_race",
        include_str!("../scenarios/two_node_race.json"),
    ),
    (
        "proportional",
        include_str!("../scenarios/proportional.json"),
    ),
    ("gossip", include_str!("../scenarios/gossip.json")),
];

pub fn find(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".json").unwrap_or(name);
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}
