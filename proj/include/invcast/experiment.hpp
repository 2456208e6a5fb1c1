#pragma once

#include <optional>
#include <string>
#include <vector>

#include "invcast/trainloop.hpp"

namespace invcast {

struct SynthSpec {
    int n = 20;
    int t_len = 120;
    int period = 12;
    double base = 100.0;
    double amplitude = 30.0;
    double trend = 0.1;
    double noise_sd = 8.0;
};

/// Everything a `run` needs: data source, model, objectives, unit-cost
/// grid, and training hyperparameters.
struct ExperimentSpec {
    std::string data_path;  // empty = synthesize
    CsvSchema schema = CsvSchema::Wide;
    std::string covariates_path;
    SynthSpec synth;

    std::string model_kind = "seasonal-scaler";
    std::vector<Objective> objectives{Objective::TotalCost, Objective::Mse};
    std::vector<double> grid_holding{1.0};
    std::vector<double> grid_stockout{1.0};
    std::vector<double> grid_order_var{1e-5};
    double service_level = 0.5;
    int lead_time = 6;
    int horizon = 12;
    int window = 24;
    int period = 12;
    int train_cutoff = 0;  // 0 = keep the panel's cutoffs
    int val_cutoff = 0;
    uint64_t seed = 1;
    double learning_rate = 0.01;
    int steps_per_update = 5;
    int train_steps = 150;
    int val_every = 10;
    int batch_size = 0;
    int hidden = 20;
    bool autoregressive = true;
    bool global_mode = false;  // local: per-series models, double rollout
    bool sum_across_series = false;
    bool save_checkpoints = false;
    int jobs = 1;
    std::string out_dir = "out";

    void validate() const;
};

struct RunOutcome {
    int cells_expected = 0;
    int cells_completed = 0;
    std::vector<MetricRow> rows;
    bool ok() const { return cells_completed == cells_expected; }
};

/// Trains per spec over the unit-cost grid, evaluates by roll-forward on
/// the test range, and writes metrics.csv, improvement.csv, betas.csv,
/// lead_demand_avg.csv, forecast dumps, panel.csv and manifest.json into
/// out_dir. Failed cells are skipped and reported in the outcome.
RunOutcome cmd_run(const ExperimentSpec& spec);

/// Scores externally produced forecasts through the identical inventory
/// pipeline. The demand file must cover the forecasts' origin range.
EvalResult cmd_evaluate(const std::string& forecasts_path, const std::string& demand_path,
                        CsvSchema schema, int period, const CostParams& costs,
                        bool sum_across_series, const std::string& trace_out = "",
                        const std::string& report_out = "");

/// Rebuilds the improvement table from an existing metrics.csv.
void cmd_report(const std::string& out_dir);

/// Loads or synthesizes the experiment's panel (cutoff overrides applied).
DemandPanel load_panel(const ExperimentSpec& spec);

}  // namespace invcast
