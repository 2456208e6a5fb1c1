// Command-line front end: synthesize or ingest demand panels, train
// forecasters against business-aware or generic objectives over a unit-cost
// grid, evaluate forecasts through the inventory pipeline, and emit report
// tables as CSV.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "invcast/csvio.hpp"
#include "invcast/experiment.hpp"

namespace {

using namespace invcast;

CsvSchema parse_schema(const std::string& s) {
    if (s == "long") return CsvSchema::Long;
    if (s == "wide") return CsvSchema::Wide;
    throw Error(strfmt("unknown schema '%s' (expected long or wide)", s.c_str()));
}

std::vector<Objective> parse_objectives(const std::string& csv) {
    std::vector<Objective> out;
    std::string cur;
    for (char c : csv + ",") {
        if (c == ',') {
            if (!cur.empty()) out.push_back(parse_objective(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    require(!out.empty(), "no objectives given");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"invcast: demand forecasting trained against inventory costs"};
    app.require_subcommand(1);

    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "Generate a synthetic seasonal demand panel");
    SynthSpec synth_spec;
    uint64_t synth_seed = 1;
    std::string synth_out = "panel.csv";
    std::string synth_schema = "wide";
    synth->add_option("--n", synth_spec.n, "Number of series");
    synth->add_option("--t", synth_spec.t_len, "Timesteps per series");
    synth->add_option("--period", synth_spec.period, "Season length");
    synth->add_option("--base", synth_spec.base, "Demand base level");
    synth->add_option("--amplitude", synth_spec.amplitude, "Seasonal amplitude");
    synth->add_option("--trend", synth_spec.trend, "Linear trend per timestep");
    synth->add_option("--noise-sd", synth_spec.noise_sd, "Gaussian noise std dev");
    synth->add_option("--seed", synth_seed, "RNG seed");
    synth->add_option("--schema", synth_schema, "Output schema: long or wide");
    synth->add_option("--out", synth_out, "Output CSV path");

    // ---- ingest ----
    auto* ingest = app.add_subcommand("ingest", "Validate a demand CSV and emit canonical form");
    std::string ingest_in, ingest_out = "canonical.csv";
    std::string ingest_schema = "long", ingest_out_schema = "wide";
    int ingest_period = 12, ingest_train = 0, ingest_val = 0;
    ingest->add_option("--in", ingest_in, "Input CSV")->required();
    ingest->add_option("--schema", ingest_schema, "Input schema: long or wide");
    ingest->add_option("--out-schema", ingest_out_schema, "Output schema: long or wide");
    ingest->add_option("--period", ingest_period, "Season length");
    ingest->add_option("--train-cutoff", ingest_train, "Training cutoff")->required();
    ingest->add_option("--val-cutoff", ingest_val, "Validation cutoff")->required();
    ingest->add_option("--out", ingest_out, "Output CSV path");

    // ---- run ----
    auto* run = app.add_subcommand("run", "Train over a unit-cost grid and report test metrics");
    ExperimentSpec spec;
    std::string run_schema = "wide", run_objectives = "TC,MSE";
    std::vector<double> ch{1.0}, cs{1.0}, cv{1e-5};
    run->add_option("--data", spec.data_path, "Demand CSV (omit to synthesize)");
    run->add_option("--schema", run_schema, "Demand schema: long or wide");
    run->add_option("--covariates", spec.covariates_path, "Covariate sidecar CSV");
    run->add_option("--synth-n", spec.synth.n, "Synthetic series count");
    run->add_option("--synth-t", spec.synth.t_len, "Synthetic series length");
    run->add_option("--synth-base", spec.synth.base, "Synthetic base level");
    run->add_option("--synth-amplitude", spec.synth.amplitude, "Synthetic amplitude");
    run->add_option("--synth-trend", spec.synth.trend, "Synthetic trend");
    run->add_option("--synth-noise-sd", spec.synth.noise_sd, "Synthetic noise std dev");
    run->add_option("--model", spec.model_kind, "seasonal-scaler, naive, or lstm");
    run->add_option("--objective", run_objectives, "Comma list of MSE, TC, RRMS");
    run->add_option("--ch", ch, "Unit holding cost grid")->delimiter(',');
    run->add_option("--cs", cs, "Unit stockout cost grid")->delimiter(',');
    run->add_option("--cv", cv, "Unit order-variance cost grid")->delimiter(',');
    run->add_option("--service-level", spec.service_level, "Target service level in (0,1)");
    run->add_option("--lead-time", spec.lead_time, "Lead time L");
    run->add_option("--horizon", spec.horizon, "Rollout horizon H");
    run->add_option("--window", spec.window, "Encode window W");
    run->add_option("--period", spec.period, "Season length P");
    run->add_option("--train-cutoff", spec.train_cutoff, "Training cutoff (0 = panel default)");
    run->add_option("--val-cutoff", spec.val_cutoff, "Validation cutoff (0 = panel default)");
    run->add_option("--seed", spec.seed, "Seed for all randomness");
    run->add_option("--lr", spec.learning_rate, "Learning rate");
    run->add_option("--steps-per-update", spec.steps_per_update,
                    "Fine-tune steps per roll-forward timestep");
    run->add_option("--train-steps", spec.train_steps, "Initial training steps");
    run->add_option("--val-every", spec.val_every, "Validation cadence");
    run->add_option("--batch", spec.batch_size, "Origin/series minibatch size (0 = all)");
    run->add_option("--hidden", spec.hidden, "LSTM hidden size");
    run->add_flag("--global", spec.global_mode,
                  "One global model with single-rollout supervision");
    run->add_flag("--no-autoregressive", [&spec](size_t) { spec.autoregressive = false; },
                  "Feed the decoder the last observation instead of its own output");
    run->add_flag("--sum", spec.sum_across_series,
                  "Aggregate panel costs by sum instead of mean");
    run->add_flag("--save-checkpoints", spec.save_checkpoints, "Write model checkpoints");
    run->add_option("--jobs", spec.jobs, "Concurrent jobs");
    run->add_option("--outdir", spec.out_dir, "Output directory");

    // ---- evaluate ----
    auto* ev = app.add_subcommand("evaluate", "Score a forecast CSV through the inventory pipeline");
    std::string ev_forecasts, ev_demand, ev_schema = "wide";
    std::string ev_trace, ev_report;
    CostParams ev_costs;
    int ev_period = 12;
    bool ev_sum = false;
    ev->add_option("--forecasts", ev_forecasts, "Forecast CSV (series_id,t,k,forecast)")
        ->required();
    ev->add_option("--demand", ev_demand, "Demand CSV")->required();
    ev->add_option("--schema", ev_schema, "Demand schema: long or wide");
    ev->add_option("--period", ev_period, "Season length (naive baseline)");
    ev->add_option("--ch", ev_costs.holding, "Unit holding cost");
    ev->add_option("--cs", ev_costs.stockout, "Unit stockout cost");
    ev->add_option("--cv", ev_costs.order_variance, "Unit order-variance cost");
    ev->add_option("--service-level", ev_costs.service_level, "Target service level");
    ev->add_option("--lead-time", ev_costs.lead_time, "Lead time L");
    ev->add_flag("--sum", ev_sum, "Aggregate panel costs by sum instead of mean");
    ev->add_option("--trace", ev_trace, "Write the inventory trace CSV here");
    ev->add_option("--report", ev_report, "Write a metric report CSV here");

    // ---- report ----
    auto* rep = app.add_subcommand("report", "Rebuild tables from an existing metrics.csv");
    std::string rep_dir = "out";
    rep->add_option("--outdir", rep_dir, "Run output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            const DemandPanel panel =
                synth_seasonal(synth_spec.n, synth_spec.t_len, synth_spec.period,
                               synth_spec.base, synth_spec.amplitude, synth_spec.trend,
                               synth_spec.noise_sd, synth_seed);
            emit_csv_file(panel, parse_schema(synth_schema), synth_out);
            std::printf("wrote %s (%d series x %d timesteps)\n", synth_out.c_str(), panel.n(),
                        panel.t_len());
        } else if (ingest->parsed()) {
            const DemandPanel panel = ingest_csv(ingest_in, parse_schema(ingest_schema),
                                                 ingest_period, {ingest_train, ingest_val});
            emit_csv_file(panel, parse_schema(ingest_out_schema), ingest_out);
            std::printf("wrote %s (%d series x %d timesteps)\n", ingest_out.c_str(), panel.n(),
                        panel.t_len());
        } else if (run->parsed()) {
            spec.schema = parse_schema(run_schema);
            spec.objectives = parse_objectives(run_objectives);
            spec.grid_holding = ch;
            spec.grid_stockout = cs;
            spec.grid_order_var = cv;
            const RunOutcome outcome = cmd_run(spec);
            std::printf("completed %d/%d grid cells; reports in %s\n", outcome.cells_completed,
                        outcome.cells_expected, spec.out_dir.c_str());
            if (!outcome.ok()) return 1;
        } else if (ev->parsed()) {
            const EvalResult res =
                cmd_evaluate(ev_forecasts, ev_demand, parse_schema(ev_schema), ev_period,
                             ev_costs, ev_sum, ev_trace, ev_report);
            std::printf("C_h=%s C_s=%s C_v=%s TC=%s RRMS=%s MSE=%s sMAPE=%s\n",
                        fmt_double(res.breakdown.holding_agg).c_str(),
                        fmt_double(res.breakdown.stockout_agg).c_str(),
                        fmt_double(res.breakdown.order_var_agg).c_str(),
                        fmt_double(res.breakdown.total_agg).c_str(),
                        fmt_double(res.rrms_value).c_str(),
                        fmt_double(res.mse_value).c_str(),
                        fmt_double(res.smape_value).c_str());
            std::printf("negative orders: %.1f%%\n", 100.0 * res.negative_order_share);
        } else if (rep->parsed()) {
            cmd_report(rep_dir);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
