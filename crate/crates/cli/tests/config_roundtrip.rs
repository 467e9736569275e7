use std::collections::BTreeMap;

use proptest::prelude::*;
use underact::ode::Method;
use underact_cli::config::{ScenarioConfig, SystemKind};

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, -1.0..1.0f64, Just(0.0), Just(1e-300)]
}

fn config() -> impl Strategy<Value = ScenarioConfig> {
    (
        prop_oneof![Just(SystemKind::Furuta), Just(SystemKind::Pendubot)],
        proptest::collection::btree_map("[a-z]{1,3}", finite(), 0..3),
        proptest::option::of(finite()),
        (1e-3..1e3f64, 1e-3..1e3f64),
        proptest::array::uniform4(finite()),
        (
            prop_oneof![Just(Method::Rk4), Just(Method::Rk45)],
            1e-6..1.0f64,
            1.0..100.0f64,
        ),
        proptest::option::of((finite(), finite())),
        any::<bool>(),
    )
        .prop_map(
            |(kind, params, k, gains, x0, (method, h, t_end), range, d4)| {
                let mut c = ScenarioConfig::furuta_demo();
                c.system.kind = kind;
                c.system.params = params.into_iter().collect::<BTreeMap<_, _>>();
                c.synthesis.k1 = k;
                c.synthesis.gamma1 = gains.0;
                c.synthesis.gamma2 = gains.1;
                c.x0 = x0;
                c.integrator.method = method;
                c.integrator.h = h;
                c.integrator.t_end = t_end;
                c.verify.range = range.map(|(a, b)| [a, b]);
                c.verify.d4 = d4;
                c
            },
        )
}

proptest! {
    #[test]
    fn parse_serialize_parse_is_identity(c in config()) {
        let text = c.to_toml();
        let back = ScenarioConfig::from_toml(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(ScenarioConfig::from_toml(&back.to_toml()).unwrap(), back);
    }
}

#[test]
fn demo_configs_roundtrip() {
    for c in [
        ScenarioConfig::furuta_demo(),
        ScenarioConfig::pendubot_demo(),
    ] {
        assert_eq!(ScenarioConfig::from_toml(&c.to_toml()).unwrap(), c);
    }
}

#[test]
fn shipped_scenarios_match_demos() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    for (file, demo) in [
        ("furuta.toml", ScenarioConfig::furuta_demo()),
        ("pendubot.toml", ScenarioConfig::pendubot_demo()),
    ] {
        assert_eq!(
            ScenarioConfig::load(&dir.join(file)).unwrap(),
            demo,
            "{file}"
        );
    }
}
