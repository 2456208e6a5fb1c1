#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "invcast/csvio.hpp"
#include "invcast/experiment.hpp"

using namespace invcast;

namespace {

namespace fs = std::filesystem;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

ExperimentSpec small_spec(const std::string& out_dir) {
    ExperimentSpec spec;
    spec.synth = {3, 48, 4, 40.0, 10.0, 0.1, 4.0};
    spec.model_kind = "seasonal-scaler";
    spec.objectives = {Objective::TotalCost, Objective::Mse};
    spec.grid_holding = {1.0};
    spec.grid_stockout = {5.0};
    spec.grid_order_var = {1e-4};
    spec.lead_time = 2;
    spec.horizon = 4;
    spec.window = 4;
    spec.period = 4;
    spec.train_cutoff = 24;
    spec.val_cutoff = 36;
    spec.seed = 11;
    spec.train_steps = 20;
    spec.steps_per_update = 2;
    spec.out_dir = out_dir;
    return spec;
}

}  // namespace

TEST_CASE("cmd_run writes one metric row per objective per grid cell") {
    const auto dir = (fs::temp_directory_path() / "invcast_run_shape").string();
    fs::remove_all(dir);
    ExperimentSpec spec = small_spec(dir);
    // A 3 x 3 x 2 grid.
    spec.objectives = {Objective::TotalCost};
    spec.grid_holding = {1.0, 2.0, 10.0};
    spec.grid_stockout = {1.0, 2.0, 10.0};
    spec.grid_order_var = {1e-6, 1e-5};
    spec.train_steps = 2;
    spec.steps_per_update = 0;

    const RunOutcome outcome = cmd_run(spec);
    CHECK(outcome.ok());
    int tc_rows = 0;
    for (const MetricRow& r : outcome.rows)
        if (r.objective == "TC") ++tc_rows;
    CHECK(tc_rows == 18);

    const auto lines = read_lines((fs::path(dir) / "metrics.csv").string());
    CHECK(lines.size() == 1 + 18);
}

TEST_CASE("cmd_run is byte-identical under the same seed") {
    const auto dir1 = (fs::temp_directory_path() / "invcast_det1").string();
    const auto dir2 = (fs::temp_directory_path() / "invcast_det2").string();
    fs::remove_all(dir1);
    fs::remove_all(dir2);
    ExperimentSpec s1 = small_spec(dir1);
    ExperimentSpec s2 = small_spec(dir2);
    s2.out_dir = dir2;
    REQUIRE(cmd_run(s1).ok());
    REQUIRE(cmd_run(s2).ok());

    for (const std::string name :
         {"metrics.csv", "improvement.csv", "betas.csv", "lead_demand_avg.csv", "panel.csv"}) {
        CHECK(read_file((fs::path(dir1) / name).string()) ==
              read_file((fs::path(dir2) / name).string()));
    }
    // The manifests differ only in the out_dir they echo.
    std::string m1 = read_file((fs::path(dir1) / "manifest.json").string());
    std::string m2 = read_file((fs::path(dir2) / "manifest.json").string());
    const auto scrub = [](std::string s, const std::string& dir) {
        const auto pos = s.find(dir);
        while (s.find(dir) != std::string::npos) s.replace(s.find(dir), dir.size(), "X");
        return s;
    };
    CHECK(scrub(m1, dir1) == scrub(m2, dir2));

    // A different seed produces different metrics.
    const auto dir3 = (fs::temp_directory_path() / "invcast_det3").string();
    fs::remove_all(dir3);
    ExperimentSpec s3 = small_spec(dir3);
    s3.seed = 12;
    REQUIRE(cmd_run(s3).ok());
    CHECK(read_file((fs::path(dir1) / "metrics.csv").string()) !=
          read_file((fs::path(dir3) / "metrics.csv").string()));
}

TEST_CASE("cmd_evaluate reproduces the run's reported test metrics bit-for-bit") {
    const auto dir = (fs::temp_directory_path() / "invcast_roundtrip").string();
    fs::remove_all(dir);
    const ExperimentSpec spec = small_spec(dir);
    const RunOutcome outcome = cmd_run(spec);
    REQUIRE(outcome.ok());

    for (const MetricRow& row : outcome.rows) {
        const std::string tag =
            strfmt("ch%s_cs%s_cv%s", fmt_double(row.c_h).c_str(), fmt_double(row.c_s).c_str(),
                   fmt_double(row.c_v).c_str());
        const std::string fpath =
            (fs::path(dir) / strfmt("forecasts_%s_%s_%s.csv", row.model.c_str(),
                                    row.objective.c_str(), tag.c_str()))
                .string();
        REQUIRE(fs::exists(fpath));
        CostParams costs;
        costs.holding = row.c_h;
        costs.stockout = row.c_s;
        costs.order_variance = row.c_v;
        costs.lead_time = spec.lead_time;
        costs.service_level = spec.service_level;
        const EvalResult ev = cmd_evaluate(fpath, (fs::path(dir) / "panel.csv").string(),
                                           CsvSchema::Wide, spec.period, costs, false);
        CHECK(ev.breakdown.holding_agg == row.holding);
        CHECK(ev.breakdown.stockout_agg == row.stockout);
        CHECK(ev.breakdown.order_var_agg == row.order_var);
        CHECK(ev.breakdown.total_agg == row.total);
        CHECK(ev.rrms_value == row.rrms);
        CHECK(ev.mse_value == row.mse);
        CHECK(ev.smape_value == row.smape);
    }
}

TEST_CASE("naive forecasts evaluated against themselves hit the RRMS fixed point") {
    const auto dir = (fs::temp_directory_path() / "invcast_naive_eval").string();
    fs::remove_all(dir);
    ExperimentSpec spec = small_spec(dir);
    spec.model_kind = "naive";
    spec.objectives = {Objective::Mse};
    REQUIRE(cmd_run(spec).ok());
    const std::string fpath =
        (fs::path(dir) / "forecasts_naive_MSE_ch1_cs5_cv0.0001.csv").string();
    REQUIRE(fs::exists(fpath));
    CostParams costs;
    costs.holding = 1.0;
    costs.stockout = 5.0;
    costs.order_variance = 1e-4;
    costs.lead_time = spec.lead_time;
    const EvalResult ev = cmd_evaluate(fpath, (fs::path(dir) / "panel.csv").string(),
                                       CsvSchema::Wide, spec.period, costs, false);
    CHECK(ev.rrms_value == doctest::Approx(std::sqrt(0.75)).epsilon(1e-12));
}

TEST_CASE("cmd_evaluate: zero demand and zero forecasts cost nothing") {
    namespace fs = std::filesystem;
    const auto ddir = fs::temp_directory_path();
    const auto dpath = (ddir / "invcast_zero_demand.csv").string();
    {
        std::ofstream out(dpath, std::ios::trunc);
        out << "series_id,d0,d1,d2,d3,d4,d5\nA,0,0,0,0,0,0\n";
    }
    const auto fpath = (ddir / "invcast_zero_forecast.csv").string();
    {
        std::ofstream out(fpath, std::ios::trunc);
        out << "series_id,t,k,forecast\n";
        for (int t = 1; t <= 4; ++t)
            for (int k = 1; k <= 2; ++k) out << "A," << t << ',' << k << ",0\n";
    }
    CostParams costs;
    costs.lead_time = 2;
    // The naive baseline's components are all zero here, which exercises
    // the epsilon fallback inside rel (with a logged warning).
    const EvalResult ev = cmd_evaluate(fpath, dpath, CsvSchema::Wide, 2, costs, false);
    CHECK(ev.breakdown.total_agg == 0.0);
}

TEST_CASE("cmd_evaluate validates forecast/demand shape agreement") {
    namespace fs = std::filesystem;
    const auto ddir = fs::temp_directory_path();
    const auto dpath = (ddir / "invcast_ev_demand.csv").string();
    {
        std::ofstream out(dpath, std::ios::trunc);
        out << "series_id,d0,d1,d2,d3\nA,1,2,3,4\n";
    }
    const auto fpath = (ddir / "invcast_ev_forecast.csv").string();
    {
        std::ofstream out(fpath, std::ios::trunc);
        out << "series_id,t,k,forecast\nB,2,1,5\n";  // unknown series
    }
    CostParams costs;
    costs.lead_time = 1;
    CHECK_THROWS_AS(cmd_evaluate(fpath, dpath, CsvSchema::Wide, 2, costs, false), Error);
}

TEST_CASE("run outcome reports failed cells without losing the rest") {
    const auto dir = (fs::temp_directory_path() / "invcast_partial").string();
    fs::remove_all(dir);
    ExperimentSpec spec = small_spec(dir);
    // A horizon too long for the training range starves every origin and
    // fails training for the TC cell; the MSE cell shares the same fate, so
    // force only one bad objective via an over-long horizon.
    spec.horizon = 30;
    const RunOutcome outcome = cmd_run(spec);
    CHECK_FALSE(outcome.ok());
    CHECK(fs::exists(fs::path(dir) / "metrics.csv"));
}

TEST_CASE("global LSTM run with covariates end to end") {
    const auto dir = (fs::temp_directory_path() / "invcast_lstm_cov").string();
    fs::remove_all(dir);

    // Write a small panel and a covariate sidecar keyed to its series ids.
    const DemandPanel panel = synth_seasonal(2, 36, 4, 40.0, 8.0, 0.1, 3.0, 5);
    const auto dpath = (fs::temp_directory_path() / "invcast_lstm_cov_panel.csv").string();
    emit_csv_file(panel, CsvSchema::Wide, dpath);
    const auto cpath = (fs::temp_directory_path() / "invcast_lstm_cov_side.csv").string();
    {
        std::ofstream out(cpath, std::ios::trunc);
        out << "series_id,t,num_level,cat_phase\n";
        for (int i = 0; i < panel.n(); ++i)
            for (int t = 0; t < panel.t_len(); ++t)
                out << panel.series_ids[static_cast<size_t>(i)] << ',' << t << ','
                    << fmt_double(0.1 * t) << ',' << (t % 4) << '\n';
    }

    ExperimentSpec spec;
    spec.data_path = dpath;
    spec.schema = CsvSchema::Wide;
    spec.covariates_path = cpath;
    spec.model_kind = "lstm";
    spec.objectives = {Objective::TotalCost};
    spec.grid_holding = {1.0};
    spec.grid_stockout = {2.0};
    spec.grid_order_var = {1e-4};
    spec.lead_time = 2;
    spec.horizon = 4;
    spec.window = 6;
    spec.period = 4;
    spec.hidden = 4;
    spec.train_cutoff = 18;
    spec.val_cutoff = 28;
    spec.seed = 3;
    spec.train_steps = 4;
    spec.steps_per_update = 1;
    spec.global_mode = true;
    spec.out_dir = dir;

    const RunOutcome outcome = cmd_run(spec);
    CHECK(outcome.ok());
    REQUIRE(outcome.rows.size() == 1);
    CHECK(std::isfinite(outcome.rows[0].total));
    const std::string manifest = read_file((fs::path(dir) / "manifest.json").string());
    CHECK(manifest.find("covariates_hash") != std::string::npos);
}

TEST_CASE("report rebuilds the improvement table from metrics.csv") {
    const auto dir = (fs::temp_directory_path() / "invcast_report").string();
    fs::remove_all(dir);
    const ExperimentSpec spec = small_spec(dir);
    REQUIRE(cmd_run(spec).ok());
    const std::string before = read_file((fs::path(dir) / "improvement.csv").string());
    CHECK(before.find("improvement_pct") != std::string::npos);
    CHECK(before.find("\n") != before.rfind("\n"));  // has at least one data row
    fs::remove(fs::path(dir) / "improvement.csv");
    cmd_report(dir);
    CHECK(read_file((fs::path(dir) / "improvement.csv").string()) == before);
}
