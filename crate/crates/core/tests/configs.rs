use std::fs;
use std::path::Path;

use ks_homog::harness::{parse_config, parse_config_str};

#[test]
fn shipped_configs_parse_and_echo_round_trips() {
    let dir = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"));
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|e| e != "toml") {
            continue;
        }
        let config = parse_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let again = parse_config_str(&config.echo()).unwrap();
        assert_eq!(config, again, "{}", path.display());
        seen += 1;
    }
    assert!(seen >= 3);
}
