use langdrive::scenegen::{
    generate_scene, generate_scene_with_kind, validate_scene, GeneratorConfig, ScenarioKind,
};
use std::collections::HashMap;

#[test]
fn thousand_scenes_pass_validator() {
    let cfg = GeneratorConfig::default();
    let mut kinds: HashMap<ScenarioKind, usize> = HashMap::new();
    let mut agents = 0;
    for seed in 0..1000 {
        let (kind, scene) = generate_scene_with_kind(seed, &cfg).unwrap();
        if let Err(e) = validate_scene(&scene, &cfg) {
            panic!("seed {seed}: {e}");
        }
        *kinds.entry(kind).or_default() += 1;
        agents += scene.agents.len();
    }
    eprintln!("{kinds:?} mean agents {}", agents as f64 / 1000.0);
    for kind in [
        ScenarioKind::Following,
        ScenarioKind::CrossingPedestrian,
        ScenarioKind::LaneChange,
        ScenarioKind::Turn,
    ] {
        assert!(
            kinds.get(&kind).copied().unwrap_or(0) > 100,
            "{kind:?} underrepresented"
        );
    }
}

#[test]
fn scenes_serialize_identically() {
    let cfg = GeneratorConfig::default();
    let a = serde_json::to_string(&generate_scene(5, &cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&generate_scene(5, &cfg).unwrap()).unwrap();
    assert_eq!(a, b);
}
