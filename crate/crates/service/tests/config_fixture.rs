use proxtrace_core::simulator::{aspen_sparse, denver_crowded};
use proxtrace_service::ServiceConfig;

#[test]
fn example_config_matches_builtin_scenarios() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/service.toml");
    let config = ServiceConfig::load(path).unwrap();
    assert_eq!(config.regions, vec![denver_crowded().region, aspen_sparse().region]);
    assert_eq!(config.thresholds, Default::default());
    assert!(config.data_dir.ends_with("../data"));
    config.platform_config();
}
