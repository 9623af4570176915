use cuspbranch::config::{log_grid, Experiment, RunConfig};
use cuspbranch::run::config_hash;
use proptest::prelude::*;

proptest! {
    #[test]
    fn prop_log_grid_exact_endpoints(lo in 1e-4f64..0.1, span in 1.5f64..100.0, n in 2usize..60) {
        let hi = lo * span;
        let g = log_grid(hi, lo, n);
        prop_assert_eq!(g.len(), n);
        prop_assert_eq!(g[0], hi);
        prop_assert_eq!(g[n - 1], lo);
        prop_assert!(g.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn prop_parse_never_panics(text in "[a-z_ =.,0-9#\n-]{0,80}") {
        for e in Experiment::ALL {
            let _ = RunConfig::parse(e, &text);
        }
    }

    #[test]
    fn prop_echo_round_trips(beta in 1.3f64..1.9, t_min in 0.005f64..0.05, ratio in 2.0f64..10.0) {
        let text = format!("beta = {beta}\nt_min = {t_min}\nt_max = {}\n", t_min * ratio);
        let a = RunConfig::parse(Experiment::Degenerate, &text).unwrap();
        let echoed: String = a
            .echo()
            .into_iter()
            .filter(|(k, _)| *k != "experiment")
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        let b = RunConfig::parse(Experiment::Degenerate, &echoed).unwrap();
        prop_assert_eq!(a.echo(), b.echo());
    }

    #[test]
    fn prop_hash_separates_experiments(text in "[a-z =0-9\n]{0,40}") {
        let h = config_hash(Experiment::Crossings, &text);
        prop_assert_eq!(h.len(), 12);
        prop_assert_eq!(&h, &config_hash(Experiment::Crossings, &text));
        prop_assert_ne!(h, config_hash(Experiment::Sweep, &text));
    }
}

#[test]
fn shipped_configs_validate() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for e in Experiment::ALL {
        let text = std::fs::read_to_string(dir.join(format!("{}.cfg", e.name()))).unwrap();
        RunConfig::parse(e, &text).unwrap();
    }
}
