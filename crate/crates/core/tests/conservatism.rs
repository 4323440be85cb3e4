use austen::{conservatism_experiment, simulate, BootstrapConfig, Estimand, FitConfig, GroupSpec, SimConfig};
use indexmap::IndexMap;

fn one_group(name: &str, cols: &[&str]) -> GroupSpec {
    let map: IndexMap<String, Vec<String>> =
        [(name.to_string(), cols.iter().map(|c| c.to_string()).collect())].into_iter().collect();
    GroupSpec::new(map)
}

#[test]
fn no_confounding_means_no_bias_either_way() {
    let data = simulate(&SimConfig::monotone(3000, 0.3, 0.0, 41)).unwrap().dataset().unwrap();
    let r = conservatism_experiment(&data, &FitConfig::default(), &one_group("z", &["z"]), Estimand::Ate, None).unwrap();
    assert!(r.nonparametric_bias.abs() < 0.15, "{r:?}");
    assert!(r.sensitivity_bias.abs() < 0.15, "{r:?}");
    assert!(r.difference_interval.is_none());
    assert!(!r.agrees_within_interval());
}

#[test]
fn cancelling_confounder_is_overstated() {
    let data = simulate(&SimConfig::cancellation(3000, 42)).unwrap().dataset().unwrap();
    let r = conservatism_experiment(
        &data,
        &FitConfig::default(),
        &one_group("z", &["z", "z_sq"]),
        Estimand::Ate,
        None,
    )
    .unwrap();
    assert!(r.is_conservative(), "{r:?}");
    assert_eq!(r.nonparametric_bias, r.tau_full - r.tau_without);
}

#[test]
fn monotone_confounder_reports_interval() {
    let data = simulate(&SimConfig::monotone(2000, 0.3, 1.0, 43)).unwrap().dataset().unwrap();
    let boot = BootstrapConfig {
        replicates: 30,
        seed: 2,
        ..BootstrapConfig::default()
    };
    let r = conservatism_experiment(&data, &FitConfig::default(), &one_group("z", &["z"]), Estimand::Ate, Some(&boot))
        .unwrap();
    let (lo, hi) = r.difference_interval.unwrap();
    assert!(lo <= hi);
    assert!(r.alpha_hat > 0.0 && r.r2_hat > 0.0, "{r:?}");
}

#[test]
fn exactly_one_group_required() {
    let data = simulate(&SimConfig::standard(200, 0.3, 1.0, 44)).unwrap().dataset().unwrap();
    let mut map: IndexMap<String, Vec<String>> = IndexMap::new();
    map.insert("a".into(), vec!["x1".into()]);
    map.insert("b".into(), vec!["x2".into()]);
    assert!(conservatism_experiment(&data, &FitConfig::default(), &GroupSpec::new(map), Estimand::Ate, None).is_err());
}
