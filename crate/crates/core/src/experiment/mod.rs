//! Config-driven experiments: versioned JSON documents, built-in presets,
//! the train → hedge → report pipeline and the exchange option check.

mod config;
mod margrabe;
mod pipeline;
mod presets;
mod report;

pub use config::{Evaluation, ExperimentConfig, GreeksMode, HedgePlan, InstrumentSolver, CONFIG_VERSION};
pub use margrabe::{
    margrabe_check, margrabe_row, random_inputs, MargrabeCheck, FD_TOLERANCE, HOMOGENEITY_TOLERANCE, MARGRABE_HEADER,
    SYMMETRY_TOLERANCE,
};
pub use pipeline::{
    evaluation_seed, hedge_stage, hedge_stage_from, hedge_with, load_compatible, train_stage, OutputLayout, TrainSummary,
};
pub use presets::{basket_instruments, basket_portfolio, portfolio_case, preset, CATALOG, HESTON_REBALANCES, STANDARD_REBALANCES};
pub use report::{collect_reports, merge_reports, read_report, render_markdown, write_merged_csv, MergedRow, MERGED_HEADER};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_json() {
        for (name, _) in CATALOG.iter().take(3) {
            let cfg = preset(name).unwrap();
            let text = cfg.to_json().unwrap();
            let back = ExperimentConfig::from_json(&text).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.to_json().unwrap(), text);
        }
    }

    #[test]
    fn unknown_fields_and_versions_are_rejected() {
        let cfg = preset("fig1-bs-1d").unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&cfg.to_json().unwrap()).unwrap();
        v["surprise"] = 1.into();
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
        let bad = ExperimentConfig { version: 2, ..cfg.clone() };
        assert!(bad.validate().is_err());
        let mut uneven = cfg;
        uneven.hedges[0].rebalances = vec![3];
        assert!(uneven.validate().is_err());
    }

    #[test]
    fn parse_errors_report_line_numbers() {
        let err = ExperimentConfig::from_json("{\n\"version\": 1,\n\"name\": }").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }
}
