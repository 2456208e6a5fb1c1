#include "invcast/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>

#include <json.hpp>

#include "invcast/csvio.hpp"

namespace invcast {

namespace {

namespace fs = std::filesystem;

std::string cell_tag(const CostParams& c) {
    return strfmt("ch%s_cs%s_cv%s", fmt_double(c.holding).c_str(), fmt_double(c.stockout).c_str(),
                  fmt_double(c.order_variance).c_str());
}

struct PipelineResult {
    ForecastTensor tensor;
    std::vector<double> betas;                          // per series, scaler only
    std::vector<std::unique_ptr<Forecaster>> models;    // per series (local) or one (global)
};

TrainConfig make_train_config(const ExperimentSpec& spec, const DemandPanel& panel,
                              Objective objective, const CostParams& costs) {
    TrainConfig cfg;
    cfg.objective = objective;
    cfg.costs = costs;
    cfg.window = spec.window;
    cfg.horizon = spec.horizon;
    cfg.period = spec.period;
    cfg.learning_rate = spec.learning_rate;
    cfg.steps_per_update = spec.steps_per_update;
    cfg.batch_size = spec.batch_size > 0 ? spec.batch_size
                                         : (spec.model_kind == "lstm" ? 16 : 0);
    cfg.seed = spec.seed;
    cfg.train_cutoff = panel.train_cutoff;
    cfg.val_cutoff = panel.val_cutoff;
    cfg.train_steps = spec.train_steps;
    cfg.val_every = spec.val_every;
    return cfg;
}

PipelineResult run_pipeline(const ExperimentSpec& spec, const DemandPanel& panel,
                            const CovariatePanel* cov, Objective objective,
                            const CostParams& costs) {
    const TrainConfig cfg = make_train_config(spec, panel, objective, costs);
    cfg.validate();
    RecurrentConfig rnn;
    rnn.hidden = spec.hidden;
    rnn.window = spec.window;
    rnn.autoregressive = spec.autoregressive;
    const auto proto = make_forecaster(spec.model_kind, spec.period, rnn, cov, spec.seed);

    PipelineResult res;
    res.tensor =
        ForecastTensor::make(panel.n(), panel.t_len(), spec.lead_time, HorizonKind::Lead);
    const int t0 = panel.val_cutoff;
    const int t1 = panel.t_len();

    if (spec.global_mode) {
        auto model = proto->clone();
        AdamState state;
        state.init(model->params(), cfg.learning_rate);
        if (!model->params().empty() && cfg.train_steps > 0)
            fit_global(*model, state, panel, cov, cfg);
        roll_forward_global(*model, state, panel, cov, cfg, t0, t1, res.tensor);
        if (const auto* sc = dynamic_cast<const SeasonalScaler*>(model.get()))
            res.betas.assign(static_cast<size_t>(panel.n()), sc->beta());
        res.models.push_back(std::move(model));
    } else {
        res.betas.assign(static_cast<size_t>(panel.n()), 0.0);
        res.models.resize(static_cast<size_t>(panel.n()));
        run_jobs(spec.jobs, panel.n(), [&](int i) {
            auto model = proto->clone();
            AdamState state;
            state.init(model->params(), cfg.learning_rate);
            if (!model->params().empty() && cfg.train_steps > 0)
                fit_local(*model, state, panel, cov, i, cfg);
            roll_forward_series(*model, state, panel, cov, i, cfg, t0, t1, res.tensor);
            if (const auto* sc = dynamic_cast<const SeasonalScaler*>(model.get()))
                res.betas[static_cast<size_t>(i)] = sc->beta();
            res.models[static_cast<size_t>(i)] = std::move(model);
        });
        if (dynamic_cast<const SeasonalScaler*>(proto.get()) == nullptr) res.betas.clear();
    }
    return res;
}

MetricRow make_row(const ExperimentSpec& spec, Objective objective, const CostParams& costs,
                   const EvalResult& ev) {
    MetricRow row;
    row.model = spec.model_kind;
    row.objective = objective_name(objective);
    row.c_h = costs.holding;
    row.c_s = costs.stockout;
    row.c_v = costs.order_variance;
    row.holding = ev.breakdown.holding_agg;
    row.stockout = ev.breakdown.stockout_agg;
    row.order_var = ev.breakdown.order_var_agg;
    row.total = ev.breakdown.total_agg;
    row.rrms = ev.rrms_value;
    row.mse = ev.mse_value;
    row.smape = ev.smape_value;
    return row;
}

std::string improvement_csv(const std::vector<MetricRow>& rows) {
    std::ostringstream out;
    out << "model,c_h,c_s,c_v,ratio,tc_mse,tc_tc,improvement_pct\n";
    for (const MetricRow& r : rows) {
        if (r.objective != "TC") continue;
        for (const MetricRow& m : rows) {
            if (m.objective != "MSE" || m.model != r.model || m.c_h != r.c_h ||
                m.c_s != r.c_s || m.c_v != r.c_v)
                continue;
            const double pct = m.total != 0.0 ? 100.0 * (m.total - r.total) / m.total : 0.0;
            out << r.model << ',' << fmt_double(r.c_h) << ',' << fmt_double(r.c_s) << ','
                << fmt_double(r.c_v) << ',' << fmt_double(r.c_h / r.c_s) << ','
                << fmt_double(m.total) << ',' << fmt_double(r.total) << ',' << fmt_double(pct)
                << '\n';
        }
    }
    return out.str();
}

nlohmann::json spec_json(const ExperimentSpec& spec) {
    nlohmann::json j;
    j["data_path"] = spec.data_path;
    j["schema"] = spec.schema == CsvSchema::Long ? "long" : "wide";
    j["covariates_path"] = spec.covariates_path;
    j["synth"] = {{"n", spec.synth.n},         {"t_len", spec.synth.t_len},
                  {"period", spec.synth.period}, {"base", spec.synth.base},
                  {"amplitude", spec.synth.amplitude}, {"trend", spec.synth.trend},
                  {"noise_sd", spec.synth.noise_sd}};
    j["model"] = spec.model_kind;
    std::vector<std::string> objs;
    for (Objective o : spec.objectives) objs.push_back(objective_name(o));
    j["objectives"] = objs;
    j["grid"] = {{"c_h", spec.grid_holding},
                 {"c_s", spec.grid_stockout},
                 {"c_v", spec.grid_order_var}};
    j["service_level"] = spec.service_level;
    j["lead_time"] = spec.lead_time;
    j["horizon"] = spec.horizon;
    j["window"] = spec.window;
    j["period"] = spec.period;
    j["train_cutoff"] = spec.train_cutoff;
    j["val_cutoff"] = spec.val_cutoff;
    j["seed"] = spec.seed;
    j["learning_rate"] = spec.learning_rate;
    j["steps_per_update"] = spec.steps_per_update;
    j["train_steps"] = spec.train_steps;
    j["val_every"] = spec.val_every;
    j["batch_size"] = spec.batch_size;
    j["hidden"] = spec.hidden;
    j["autoregressive"] = spec.autoregressive;
    j["global_mode"] = spec.global_mode;
    j["sum_across_series"] = spec.sum_across_series;
    j["jobs"] = spec.jobs;
    j["out_dir"] = spec.out_dir;
    return j;
}

}  // namespace

void ExperimentSpec::validate() const {
    require(!grid_holding.empty() && !grid_stockout.empty() && !grid_order_var.empty(),
            "spec: unit-cost grid must be non-empty");
    require(!objectives.empty(), "spec: objectives must be non-empty");
    require(lead_time >= 1, "spec: lead_time must be >= 1, got %d", lead_time);
    require(horizon >= lead_time, "spec: horizon H=%d must be >= lead time L=%d", horizon,
            lead_time);
    require(window >= 1, "spec: window must be >= 1, got %d", window);
    require(period >= 1, "spec: period must be >= 1, got %d", period);
    require(service_level > 0.0 && service_level < 1.0,
            "spec: service_level must lie in (0,1), got %g", service_level);
    require(jobs >= 1, "spec: jobs must be >= 1, got %d", jobs);
    if (!data_path.empty())
        require(fs::exists(data_path), "spec: data_path '%s' does not exist", data_path.c_str());
    if (!covariates_path.empty())
        require(fs::exists(covariates_path), "spec: covariates_path '%s' does not exist",
                covariates_path.c_str());
}

DemandPanel load_panel(const ExperimentSpec& spec) {
    DemandPanel panel;
    if (spec.data_path.empty()) {
        panel = synth_seasonal(spec.synth.n, spec.synth.t_len, spec.synth.period,
                               spec.synth.base, spec.synth.amplitude, spec.synth.trend,
                               spec.synth.noise_sd, spec.seed);
        panel.period = spec.period;
    } else {
        const int t = spec.train_cutoff > 0 ? spec.train_cutoff : 1;
        const int v = spec.val_cutoff > 0 ? spec.val_cutoff : t + 1;
        panel = ingest_csv(spec.data_path, spec.schema, spec.period, {t, v});
    }
    if (spec.train_cutoff > 0 && spec.val_cutoff > 0)
        panel.set_cutoffs(spec.train_cutoff, spec.val_cutoff);
    panel.validate();
    return panel;
}

RunOutcome cmd_run(const ExperimentSpec& spec) {
    spec.validate();
    const DemandPanel panel = load_panel(spec);
    CovariatePanel cov_data;
    const CovariatePanel* cov = nullptr;
    if (!spec.covariates_path.empty()) {
        cov_data = ingest_covariates_csv(spec.covariates_path, panel);
        cov = &cov_data;
    }

    fs::create_directories(spec.out_dir);
    const auto out_path = [&](const std::string& name) {
        return (fs::path(spec.out_dir) / name).string();
    };
    emit_csv_file(panel, CsvSchema::Wide, out_path("panel.csv"));

    {
        nlohmann::json manifest;
        manifest["spec"] = spec_json(spec);
        manifest["seed"] = spec.seed;
        manifest["panel"] = {{"n", panel.n()},
                             {"t_len", panel.t_len()},
                             {"period", panel.period},
                             {"train_cutoff", panel.train_cutoff},
                             {"val_cutoff", panel.val_cutoff},
                             {"content_hash", strfmt("%016llx", static_cast<unsigned long long>(
                                                                    panel.content_hash()))}};
        if (cov != nullptr) {
            uint64_t h = fnv1a("covariates");
            h = fnv1a(cov->numeric.data(), cov->numeric.size() * sizeof(double), h);
            h = fnv1a(cov->categorical.data(), cov->categorical.size() * sizeof(int), h);
            manifest["covariates_hash"] = strfmt("%016llx", static_cast<unsigned long long>(h));
        }
        atomic_write(out_path("manifest.json"), manifest.dump(2) + "\n");
    }

    std::vector<CostParams> cells;
    for (double ch : spec.grid_holding)
        for (double cs : spec.grid_stockout)
            for (double cv : spec.grid_order_var) {
                CostParams c;
                c.holding = ch;
                c.stockout = cs;
                c.order_variance = cv;
                c.service_level = spec.service_level;
                c.lead_time = spec.lead_time;
                c.validate();
                cells.push_back(c);
            }

    RunOutcome outcome;
    outcome.cells_expected = static_cast<int>(cells.size() * spec.objectives.size());

    struct BetaRec {
        std::string objective;
        CostParams costs;
        std::vector<double> betas;
    };
    std::vector<BetaRec> beta_records;
    std::ostringstream lead_dump;
    lead_dump << "objective,c_h,c_s,c_v,t,true_lead_mean,forecast_lead_mean\n";

    const auto save_models = [&](const PipelineResult& pr, Objective obj, const CostParams& c) {
        if (!spec.save_checkpoints) return;
        if (pr.models.size() == 1) {
            save_checkpoint(*pr.models[0], out_path(strfmt("checkpoint_%s_%s.csv",
                                                           objective_name(obj).c_str(),
                                                           cell_tag(c).c_str())));
        } else {
            const std::string dir = out_path(strfmt("checkpoints_%s_%s",
                                                    objective_name(obj).c_str(),
                                                    cell_tag(c).c_str()));
            fs::create_directories(dir);
            for (size_t i = 0; i < pr.models.size(); ++i)
                save_checkpoint(*pr.models[i],
                                (fs::path(dir) / (panel.series_ids[i] + ".csv")).string());
        }
    };

    const auto evaluate_cell = [&](const PipelineResult& pr, Objective obj,
                                   const CostParams& c) {
        const EvalResult ev =
            evaluate_forecasts(pr.tensor, panel, c, spec.period, spec.sum_across_series);
        outcome.rows.push_back(make_row(spec, obj, c, ev));
        write_forecast_csv(pr.tensor, panel,
                           out_path(strfmt("forecasts_%s_%s_%s.csv", spec.model_kind.c_str(),
                                           objective_name(obj).c_str(), cell_tag(c).c_str())));
        if (!pr.betas.empty()) beta_records.push_back({objective_name(obj), c, pr.betas});

        // Lead demand averaged across series per origin, for plotting.
        const auto [fc_lead, fc_valid] = lead_demand(pr.tensor, c.lead_time);
        const auto [true_lead, true_valid] = true_lead_demand(panel, c.lead_time);
        for (int t = panel.val_cutoff; t < panel.t_len(); ++t) {
            double fsum = 0.0, tsum = 0.0;
            int fcount = 0, tcount = 0;
            for (int i = 0; i < panel.n(); ++i) {
                const size_t idx = static_cast<size_t>(i) * panel.t_len() + t;
                if (fc_valid[idx]) {
                    fsum += fc_lead.at(i, t);
                    ++fcount;
                }
                if (true_valid[idx]) {
                    tsum += true_lead.at(i, t);
                    ++tcount;
                }
            }
            if (fcount == 0 || tcount == 0) continue;
            lead_dump << objective_name(obj) << ',' << fmt_double(c.holding) << ','
                      << fmt_double(c.stockout) << ',' << fmt_double(c.order_variance) << ','
                      << t << ',' << fmt_double(tsum / tcount) << ','
                      << fmt_double(fsum / fcount) << '\n';
        }
        ++outcome.cells_completed;
    };

    for (const Objective obj : spec.objectives) {
        if (obj == Objective::TotalCost) {
            // TC training depends on the unit costs: one model per cell. In
            // global mode each cell is a single-threaded pipeline, so the
            // cells themselves fan out across jobs; in local mode the
            // per-series jobs inside a cell already use them.
            std::vector<std::unique_ptr<PipelineResult>> trained(cells.size());
            std::vector<std::string> cell_errors(cells.size());
            const int cell_jobs = spec.global_mode ? spec.jobs : 1;
            run_jobs(cell_jobs, static_cast<int>(cells.size()), [&](int ci) {
                try {
                    trained[static_cast<size_t>(ci)] = std::make_unique<PipelineResult>(
                        run_pipeline(spec, panel, cov, obj, cells[static_cast<size_t>(ci)]));
                } catch (const std::exception& e) {
                    cell_errors[static_cast<size_t>(ci)] = e.what();
                }
            });
            for (size_t ci = 0; ci < cells.size(); ++ci) {
                const CostParams& c = cells[ci];
                if (trained[ci] == nullptr) {
                    warn(strfmt("cell %s/%s failed: %s", objective_name(obj).c_str(),
                                cell_tag(c).c_str(), cell_errors[ci].c_str()));
                    continue;
                }
                try {
                    save_models(*trained[ci], obj, c);
                    evaluate_cell(*trained[ci], obj, c);
                } catch (const std::exception& e) {
                    warn(strfmt("cell %s/%s failed: %s", objective_name(obj).c_str(),
                                cell_tag(c).c_str(), e.what()));
                }
            }
        } else {
            // MSE and RRMS are unit-cost free: train once, evaluate per cell.
            try {
                const PipelineResult pr = run_pipeline(spec, panel, cov, obj, cells.front());
                save_models(pr, obj, cells.front());
                for (const CostParams& c : cells) {
                    try {
                        evaluate_cell(pr, obj, c);
                    } catch (const std::exception& e) {
                        warn(strfmt("cell %s/%s failed: %s", objective_name(obj).c_str(),
                                    cell_tag(c).c_str(), e.what()));
                    }
                }
            } catch (const std::exception& e) {
                warn(strfmt("training %s failed: %s", objective_name(obj).c_str(), e.what()));
            }
        }
    }

    atomic_write(out_path("metrics.csv"), metric_report_csv(outcome.rows));
    atomic_write(out_path("improvement.csv"), improvement_csv(outcome.rows));
    {
        std::ostringstream betas;
        betas << "objective,c_h,c_s,c_v,ratio,beta_mean,beta_min,beta_max\n";
        for (const auto& rec : beta_records) {
            double lo = rec.betas[0], hi = rec.betas[0], acc = 0.0;
            for (double b : rec.betas) {
                lo = std::min(lo, b);
                hi = std::max(hi, b);
                acc += b;
            }
            betas << rec.objective << ',' << fmt_double(rec.costs.holding) << ','
                  << fmt_double(rec.costs.stockout) << ','
                  << fmt_double(rec.costs.order_variance) << ','
                  << fmt_double(rec.costs.holding / rec.costs.stockout) << ','
                  << fmt_double(acc / static_cast<double>(rec.betas.size())) << ','
                  << fmt_double(lo) << ',' << fmt_double(hi) << '\n';
        }
        atomic_write(out_path("betas.csv"), betas.str());
    }
    atomic_write(out_path("lead_demand_avg.csv"), lead_dump.str());
    return outcome;
}

EvalResult cmd_evaluate(const std::string& forecasts_path, const std::string& demand_path,
                        CsvSchema schema, int period, const CostParams& costs,
                        bool sum_across_series, const std::string& trace_out,
                        const std::string& report_out) {
    costs.validate();
    DemandPanel panel = ingest_csv(demand_path, schema, period, {1, 2});
    const ForecastTensor ft = read_forecast_csv(forecasts_path, panel);
    const EvalResult ev = evaluate_forecasts(ft, panel, costs, period, sum_across_series);
    if (!trace_out.empty())
        atomic_write(trace_out, trace_csv(ev.traces, panel.series_ids, ev.slice_start));
    if (!report_out.empty()) {
        MetricRow row;
        row.model = "external";
        row.objective = "evaluate";
        row.c_h = costs.holding;
        row.c_s = costs.stockout;
        row.c_v = costs.order_variance;
        row.holding = ev.breakdown.holding_agg;
        row.stockout = ev.breakdown.stockout_agg;
        row.order_var = ev.breakdown.order_var_agg;
        row.total = ev.breakdown.total_agg;
        row.rrms = ev.rrms_value;
        row.mse = ev.mse_value;
        row.smape = ev.smape_value;
        atomic_write(report_out, metric_report_csv({row}));
    }
    return ev;
}

void cmd_report(const std::string& out_dir) {
    const std::string metrics_path = (fs::path(out_dir) / "metrics.csv").string();
    const auto lines = read_lines(metrics_path);
    require(!lines.empty() && split_csv(lines[0]).size() == 12,
            "%s: not a metric report", metrics_path.c_str());
    std::vector<MetricRow> rows;
    for (size_t ln = 1; ln < lines.size(); ++ln) {
        if (lines[ln].empty()) continue;
        const auto f = split_csv(lines[ln]);
        const std::string ctx = strfmt("%s:%zu", metrics_path.c_str(), ln + 1);
        require(f.size() == 12, "%s: expected 12 fields, got %zu", ctx.c_str(), f.size());
        MetricRow r;
        r.model = f[0];
        r.objective = f[1];
        r.c_h = parse_double(f[2], ctx);
        r.c_s = parse_double(f[3], ctx);
        r.c_v = parse_double(f[4], ctx);
        r.holding = parse_double(f[5], ctx);
        r.stockout = parse_double(f[6], ctx);
        r.order_var = parse_double(f[7], ctx);
        r.total = parse_double(f[8], ctx);
        r.rrms = parse_double(f[9], ctx);
        r.mse = parse_double(f[10], ctx);
        r.smape = parse_double(f[11], ctx);
        rows.push_back(std::move(r));
    }
    atomic_write((fs::path(out_dir) / "improvement.csv").string(), improvement_csv(rows));
    std::printf("%s", metric_report_csv(rows).c_str());
}

}  // namespace invcast
