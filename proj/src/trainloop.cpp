#include "invcast/trainloop.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <mutex>
#include <thread>

namespace invcast {

std::string objective_name(Objective o) {
    switch (o) {
        case Objective::Mse: return "MSE";
        case Objective::TotalCost: return "TC";
        case Objective::Rrms: return "RRMS";
    }
    return "?";
}

Objective parse_objective(const std::string& name) {
    std::string up;
    for (char c : name) up.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (up == "MSE") return Objective::Mse;
    if (up == "TC") return Objective::TotalCost;
    if (up == "RRMS") return Objective::Rrms;
    throw Error(strfmt("unknown objective '%s' (expected MSE, TC, or RRMS)", name.c_str()));
}

void TrainConfig::validate() const {
    costs.validate();
    require(window >= 1, "train config: encode window must be >= 1, got %d", window);
    require(period >= 1, "train config: period must be >= 1, got %d", period);
    require(horizon >= costs.lead_time,
            "train config: horizon H=%d must be >= lead time L=%d", horizon, costs.lead_time);
    require(learning_rate > 0.0, "train config: learning rate must be > 0, got %g",
            learning_rate);
    require(steps_per_update >= 0, "train config: steps per update must be >= 0, got %d",
            steps_per_update);
    require(batch_size >= 0, "train config: batch size must be >= 0, got %d", batch_size);
    require(train_steps >= 0, "train config: train steps must be >= 0, got %d", train_steps);
    require(val_every >= 1, "train config: validation cadence must be >= 1, got %d", val_every);
    require(0 < train_cutoff && train_cutoff < val_cutoff,
            "train config: cutoffs (%d,%d) violate 0 < train < val", train_cutoff, val_cutoff);
}

SliceData slice_data(const DemandPanel& panel, int series, int start, int len) {
    require(start >= 0 && len >= 1 && start + len <= panel.t_len(),
            "slice [%d,%d) out of panel range T=%d", start, start + len, panel.t_len());
    SliceData s;
    s.start = start;
    s.demand.resize(static_cast<size_t>(len));
    s.valid.resize(static_cast<size_t>(len));
    for (int t = 0; t < len; ++t) {
        s.demand[static_cast<size_t>(t)] = panel.at(series, start + t);
        s.valid[static_cast<size_t>(t)] = panel.valid(series, start + t) ? 1 : 0;
    }
    return s;
}

namespace {

using ad::DiffValue;
using ad::Tape;

/// Closed-form trace of plain forecast rows (constants on the tape), used
/// for the naive baseline inside RRMS and for evaluation.
InventoryTrace closed_form_values(Tape& tape, const SliceData& slice,
                                  const std::vector<std::vector<double>>& rows,
                                  const CostParams& costs) {
    SliceDiff sd;
    sd.demand = &slice.demand;
    sd.demand_valid = &slice.valid;
    for (const auto& r : rows) sd.rows.push_back(tape.constant(Tensor::from_vector(r)));
    const TraceNodes nodes = closed_form_trace(tape, sd, costs);
    return trace_values(nodes, sd, costs);
}

/// Mean squared error over pairs whose targets realize inside the slice.
DiffValue rows_mse(Tape& tape, const SliceData& slice, const std::vector<DiffValue>& rows) {
    const int s_len = static_cast<int>(slice.demand.size());
    DiffValue acc;
    long count = 0;
    for (size_t s = 0; s < rows.size(); ++s) {
        const int k_len = rows[s].value().dim(0);
        std::vector<double> targets(static_cast<size_t>(k_len), 0.0);
        std::vector<double> mask(static_cast<size_t>(k_len), 0.0);
        bool any = false;
        for (int k = 0; k < k_len; ++k) {
            const int target = static_cast<int>(s) + k + 1;
            if (target >= s_len || !slice.valid[static_cast<size_t>(target)]) continue;
            targets[static_cast<size_t>(k)] = slice.demand[static_cast<size_t>(target)];
            mask[static_cast<size_t>(k)] = 1.0;
            ++count;
            any = true;
        }
        if (!any) continue;
        const DiffValue err = ad::sub(rows[s], tape.constant(Tensor::from_vector(std::move(targets))));
        const DiffValue masked =
            ad::mul(ad::square(err), tape.constant(Tensor::from_vector(std::move(mask))));
        const DiffValue part = ad::sum(masked);
        acc = acc.valid() ? ad::add(acc, part) : part;
    }
    require(count > 0, "mse: no realized forecast targets in the slice");
    return ad::mul_const(acc, 1.0 / static_cast<double>(count));
}

}  // namespace

DiffValue rollout_objective(Tape& tape, const SliceData& slice,
                            const std::vector<DiffValue>& rows,
                            const std::vector<std::vector<double>>& naive_rows,
                            Objective objective, const CostParams& costs) {
    if (objective == Objective::Mse) return rows_mse(tape, slice, rows);

    SliceDiff sd;
    sd.demand = &slice.demand;
    sd.demand_valid = &slice.valid;
    sd.rows = rows;
    const TraceNodes trace = closed_form_trace(tape, sd, costs);
    const CostNodes own = cost_nodes(tape, trace, costs);
    if (objective == Objective::TotalCost) return own.total;

    require(naive_rows.size() == rows.size(),
            "rrms objective: %zu naive rows for %zu model rows", naive_rows.size(), rows.size());
    const InventoryTrace naive_trace = closed_form_values(tape, slice, naive_rows, costs);
    return rrms_node(tape, own, holding_cost(naive_trace.net_inventory, costs.holding),
                     stockout_cost(naive_trace.net_inventory, costs.stockout),
                     order_variance_cost(naive_trace.orders, costs.order_variance));
}

std::vector<int> rollout_origins(const Forecaster& model, const DemandPanel& panel, int series,
                                 int horizon, int data_end) {
    const int first = panel.valid_start(series) + model.min_history() - 1;
    const int last = std::min(data_end, panel.t_len()) - 1 - horizon;
    std::vector<int> origins;
    for (int u = first; u <= last; ++u) origins.push_back(u);
    return origins;
}

DiffValue double_rollout_loss(Tape& tape, const Forecaster& model, const BoundParams& bound,
                              const DemandPanel& panel, const CovariatePanel* cov, int series,
                              const std::vector<int>& origins, const TrainConfig& cfg) {
    require(!origins.empty(), "double rollout: no eligible origin");
    const int horizon = cfg.horizon;
    const int lead = cfg.costs.lead_time;
    const NaiveSeasonal naive(cfg.period);

    DiffValue acc;
    for (const int u : origins) {
        require(u + horizon < panel.t_len(),
                "double rollout: origin t=%d needs %d future targets, series has T=%d", u,
                horizon, panel.t_len());
        const DiffValue hvec = model.forecast(tape, bound, panel, cov, series, u, horizon);
        DiffValue value;
        if (cfg.objective == Objective::Mse) {
            // Plain multi-horizon MSE over the H points.
            std::vector<DiffValue> row{hvec};
            value = rows_mse(tape, slice_data(panel, series, u, horizon + 1), row);
        } else {
            // Horizon anchored at the origin: the window sliding by s orders
            // at slice time s, H-L+1 windows in all.
            const SliceData slice = slice_data(panel, series, u, horizon + 1);
            std::vector<DiffValue> rows;
            for (int s = 0; s + lead <= horizon; ++s) rows.push_back(ad::slice1(hvec, s, lead));
            std::vector<std::vector<double>> naive_rows;
            if (cfg.objective == Objective::Rrms) {
                const std::vector<double> nvec =
                    naive.forecast_values(panel, nullptr, series, u, horizon);
                for (int s = 0; s + lead <= horizon; ++s)
                    naive_rows.emplace_back(nvec.begin() + s, nvec.begin() + s + lead);
            }
            value = rollout_objective(tape, slice, rows, naive_rows, cfg.objective, cfg.costs);
        }
        acc = acc.valid() ? ad::add(acc, value) : value;
    }
    return ad::mul_const(acc, 1.0 / static_cast<double>(origins.size()));
}

namespace {

DiffValue single_rollout_subset(Tape& tape, const Forecaster& model, const BoundParams& bound,
                                const DemandPanel& panel, const CovariatePanel* cov,
                                const std::vector<int>& series_list, int range_start,
                                int range_end, const TrainConfig& cfg) {
    require(range_end > range_start, "single rollout: empty range [%d,%d)", range_start,
            range_end);
    require(!series_list.empty(), "single rollout: no series");
    const int lead = cfg.costs.lead_time;
    const NaiveSeasonal naive(cfg.period);

    DiffValue acc;
    for (const int i : series_list) {
        const SliceData slice = slice_data(panel, i, range_start, range_end - range_start);
        std::vector<DiffValue> rows;
        std::vector<std::vector<double>> naive_rows;
        for (int t = range_start; t < range_end; ++t) {
            rows.push_back(model.forecast(tape, bound, panel, cov, i, t, lead));
            if (cfg.objective == Objective::Rrms)
                naive_rows.push_back(naive.forecast_values(panel, nullptr, i, t, lead));
        }
        const DiffValue value =
            rollout_objective(tape, slice, rows, naive_rows, cfg.objective, cfg.costs);
        acc = acc.valid() ? ad::add(acc, value) : value;
    }
    return ad::mul_const(acc, 1.0 / static_cast<double>(series_list.size()));
}

}  // namespace

DiffValue single_rollout_loss(Tape& tape, const Forecaster& model, const BoundParams& bound,
                              const DemandPanel& panel, const CovariatePanel* cov,
                              int range_start, int range_end, const TrainConfig& cfg) {
    std::vector<int> all(static_cast<size_t>(panel.n()));
    for (int i = 0; i < panel.n(); ++i) all[static_cast<size_t>(i)] = i;
    return single_rollout_subset(tape, model, bound, panel, cov, all, range_start, range_end,
                                 cfg);
}

void AdamState::init(const ParamSet& params, double learning_rate) {
    lr = learning_rate;
    step_count = 0;
    m.clear();
    v.clear();
    for (const auto& [name, t] : params.entries) {
        m.push_back(Tensor::zeros(t.dims().empty() ? std::vector<int>{} : t.dims()));
        v.push_back(Tensor::zeros(t.dims().empty() ? std::vector<int>{} : t.dims()));
    }
}

double optimize_step(Forecaster& model, AdamState& state, const LossClosure& make_loss) {
    ParamSet& params = model.params();
    if (params.empty()) {
        Tape tape;
        const BoundParams bound = bind_constants(tape, params);
        return make_loss(tape, bound).value().scalar_value();
    }
    require(state.m.size() == params.entries.size(),
            "optimizer state covers %zu parameters, model has %zu", state.m.size(),
            params.entries.size());

    for (int attempt = 0; attempt < 2; ++attempt) {
        Tape tape;
        const BoundParams bound = bind_params(tape, params);
        const DiffValue loss = make_loss(tape, bound);
        double loss_value = loss.value().scalar_value();
        bool ok = std::isfinite(loss_value);

        std::vector<Tensor> grads;
        if (ok) {
            tape.backward(loss);
            double sq_norm = 0.0;
            for (size_t p = 0; p < params.entries.size(); ++p) {
                grads.push_back(bound.values[p].grad());
                for (size_t i = 0; i < grads.back().size(); ++i)
                    sq_norm += grads.back()[i] * grads.back()[i];
            }
            ok = std::isfinite(sq_norm);
            if (ok) {
                const double norm = std::sqrt(sq_norm);
                const double scale = norm > state.clip_norm ? state.clip_norm / norm : 1.0;
                state.step_count += 1;
                const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
                const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
                for (size_t p = 0; p < params.entries.size(); ++p) {
                    Tensor& theta = params.entries[p].second;
                    Tensor& mp = state.m[p];
                    Tensor& vp = state.v[p];
                    for (size_t i = 0; i < theta.size(); ++i) {
                        const double g = grads[p][i] * scale;
                        mp[i] = state.beta1 * mp[i] + (1.0 - state.beta1) * g;
                        vp[i] = state.beta2 * vp[i] + (1.0 - state.beta2) * g * g;
                        const double m_hat = mp[i] / bc1;
                        const double v_hat = vp[i] / bc2;
                        theta[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
                    }
                }
                return loss_value;
            }
        }
        require(attempt == 0, "optimize step: non-finite loss persisted after halving the "
                              "learning rate");
        warn(strfmt("optimize step: non-finite loss %g, halving learning rate to %g", loss_value,
                    state.lr * 0.5));
        state.lr *= 0.5;
    }
    return 0.0;  // unreachable
}

namespace {

std::vector<int> pick_batch(const std::vector<int>& pool, int batch_size, Rng& rng) {
    if (batch_size <= 0 || batch_size >= static_cast<int>(pool.size())) return pool;
    std::vector<int> shuffled = pool;
    for (size_t i = 0; i < static_cast<size_t>(batch_size); ++i) {
        const size_t j = i + static_cast<size_t>(rng.below(shuffled.size() - i));
        std::swap(shuffled[i], shuffled[j]);
    }
    shuffled.resize(static_cast<size_t>(batch_size));
    std::sort(shuffled.begin(), shuffled.end());
    return shuffled;
}

ParamSet snapshot_params(const Forecaster& model) { return model.params(); }

void restore_params(Forecaster& model, const ParamSet& snap) { model.params() = snap; }

uint64_t series_seed(const DemandPanel& panel, int series, uint64_t seed) {
    return fnv1a(panel.series_ids[static_cast<size_t>(series)], seed ^ 0x9e3779b97f4a7c15ull);
}

}  // namespace

void fit_local(Forecaster& model, AdamState& state, const DemandPanel& panel,
               const CovariatePanel* cov, int series, const TrainConfig& cfg) {
    cfg.validate();
    const std::vector<int> train_origins =
        rollout_origins(model, panel, series, cfg.horizon, cfg.train_cutoff);
    require(!train_origins.empty(),
            "fit: series %s has no eligible training origin (history %d, horizon %d, "
            "train cutoff %d)",
            panel.series_ids[static_cast<size_t>(series)].c_str(), model.min_history(),
            cfg.horizon, cfg.train_cutoff);
    std::vector<int> val_origins =
        rollout_origins(model, panel, series, cfg.horizon, cfg.val_cutoff);
    std::erase_if(val_origins, [&](int u) { return u < cfg.train_cutoff; });

    Rng rng(series_seed(panel, series, cfg.seed));
    ParamSet best = snapshot_params(model);
    double best_val = std::numeric_limits<double>::infinity();
    bool have_best = false;

    auto validation_loss = [&]() {
        Tape tape;
        const BoundParams bound = bind_constants(tape, model.params());
        return double_rollout_loss(tape, model, bound, panel, cov, series, val_origins, cfg)
            .value()
            .scalar_value();
    };

    for (int step = 1; step <= cfg.train_steps; ++step) {
        const std::vector<int> batch = pick_batch(train_origins, cfg.batch_size, rng);
        optimize_step(model, state, [&](Tape& tape, const BoundParams& bound) {
            return double_rollout_loss(tape, model, bound, panel, cov, series, batch, cfg);
        });
        if (!val_origins.empty() && (step % cfg.val_every == 0 || step == cfg.train_steps)) {
            const double vl = validation_loss();
            if (!have_best || vl < best_val) {
                best_val = vl;
                best = snapshot_params(model);
                have_best = true;
            }
        }
    }
    if (have_best) restore_params(model, best);
}

void fit_global(Forecaster& model, AdamState& state, const DemandPanel& panel,
                const CovariatePanel* cov, const TrainConfig& cfg) {
    cfg.validate();
    const int s0 = model.min_history() - 1;
    require(s0 < cfg.train_cutoff,
            "fit: train cutoff %d leaves no room after the model's minimum history %d",
            cfg.train_cutoff, model.min_history());

    std::vector<int> all_series(static_cast<size_t>(panel.n()));
    for (int i = 0; i < panel.n(); ++i) all_series[static_cast<size_t>(i)] = i;

    Rng rng(cfg.seed ^ 0x5851f42d4c957f2dull);
    ParamSet best = snapshot_params(model);
    double best_val = std::numeric_limits<double>::infinity();
    bool have_best = false;

    auto validation_loss = [&]() {
        Tape tape;
        const BoundParams bound = bind_constants(tape, model.params());
        return single_rollout_loss(tape, model, bound, panel, cov, cfg.train_cutoff,
                                   cfg.val_cutoff, cfg)
            .value()
            .scalar_value();
    };

    const bool can_validate = cfg.train_cutoff >= model.min_history() - 1 + 1;
    for (int step = 1; step <= cfg.train_steps; ++step) {
        const std::vector<int> batch = pick_batch(all_series, cfg.batch_size, rng);
        optimize_step(model, state, [&](Tape& tape, const BoundParams& bound) {
            return single_rollout_subset(tape, model, bound, panel, cov, batch, s0,
                                         cfg.train_cutoff, cfg);
        });
        if (can_validate && (step % cfg.val_every == 0 || step == cfg.train_steps)) {
            const double vl = validation_loss();
            if (!have_best || vl < best_val) {
                best_val = vl;
                best = snapshot_params(model);
                have_best = true;
            }
        }
    }
    if (have_best) restore_params(model, best);
}

void roll_forward_series(Forecaster& model, AdamState& state, const DemandPanel& panel,
                         const CovariatePanel* cov, int series, const TrainConfig& cfg, int t0,
                         int t1, ForecastTensor& out) {
    cfg.validate();
    require(t0 < t1 && t1 <= panel.t_len(), "roll forward: bad range [%d,%d), T=%d", t0, t1,
            panel.t_len());
    const int lead = cfg.costs.lead_time;
    require(out.k >= lead && out.n == panel.n() && out.t_len == panel.t_len(),
            "roll forward: output tensor shape mismatch");
    Rng rng(series_seed(panel, series, cfg.seed) ^ 0xa076bc9d8fefccdull);

    for (int t = t0; t < t1; ++t) {
        if (cfg.steps_per_update > 0 && !model.params().empty()) {
            // Fine-tune on everything observed through t: rollout targets
            // must lie at or before t.
            const std::vector<int> origins =
                rollout_origins(model, panel, series, cfg.horizon, t + 1);
            if (!origins.empty()) {
                for (int j = 0; j < cfg.steps_per_update; ++j) {
                    const std::vector<int> batch = pick_batch(origins, cfg.batch_size, rng);
                    optimize_step(model, state, [&](Tape& tape, const BoundParams& bound) {
                        return double_rollout_loss(tape, model, bound, panel, cov, series, batch,
                                                   cfg);
                    });
                }
            }
        }
        const std::vector<double> vals = model.forecast_values(panel, cov, series, t, lead);
        for (int k = 0; k < lead; ++k) out.at(series, t, k) = vals[static_cast<size_t>(k)];
        out.set_origin(series, t);
    }
}

void roll_forward_global(Forecaster& model, AdamState& state, const DemandPanel& panel,
                         const CovariatePanel* cov, const TrainConfig& cfg, int t0, int t1,
                         ForecastTensor& out) {
    cfg.validate();
    require(t0 < t1 && t1 <= panel.t_len(), "roll forward: bad range [%d,%d), T=%d", t0, t1,
            panel.t_len());
    const int lead = cfg.costs.lead_time;
    require(out.k >= lead && out.n == panel.n() && out.t_len == panel.t_len(),
            "roll forward: output tensor shape mismatch");
    const int s0 = model.min_history() - 1;
    std::vector<int> all_series(static_cast<size_t>(panel.n()));
    for (int i = 0; i < panel.n(); ++i) all_series[static_cast<size_t>(i)] = i;
    Rng rng(cfg.seed ^ 0x2545f4914f6cdd1dull);

    for (int t = t0; t < t1; ++t) {
        if (cfg.steps_per_update > 0 && !model.params().empty() && s0 < t) {
            for (int j = 0; j < cfg.steps_per_update; ++j) {
                const std::vector<int> batch = pick_batch(all_series, cfg.batch_size, rng);
                optimize_step(model, state, [&](Tape& tape, const BoundParams& bound) {
                    return single_rollout_subset(tape, model, bound, panel, cov, batch, s0,
                                                 t + 1, cfg);
                });
            }
        }
        for (int i = 0; i < panel.n(); ++i) {
            const std::vector<double> vals = model.forecast_values(panel, cov, i, t, lead);
            for (int k = 0; k < lead; ++k) out.at(i, t, k) = vals[static_cast<size_t>(k)];
            out.set_origin(i, t);
        }
    }
}

EvalResult evaluate_forecasts(const ForecastTensor& ft, const DemandPanel& panel,
                              const CostParams& costs, int naive_period,
                              bool sum_across_series) {
    costs.validate();
    require(ft.n == panel.n() && ft.t_len == panel.t_len(),
            "evaluate: forecast tensor %dx%d does not match panel %dx%d", ft.n, ft.t_len,
            panel.n(), panel.t_len());
    require(ft.k >= costs.lead_time, "evaluate: forecast depth K=%d below lead time L=%d", ft.k,
            costs.lead_time);

    // The origin range must be one contiguous block shared by all series.
    int t0 = -1, t1 = -1;
    for (int t = 0; t < ft.t_len; ++t) {
        bool any = false, all = true;
        for (int i = 0; i < ft.n; ++i) {
            if (ft.origin_at(i, t)) any = true;
            else all = false;
        }
        require(any == all, "evaluate: at t=%d only part of the series carry forecasts", t);
        if (any) {
            if (t0 < 0) t0 = t;
            require(t1 < 0 || t1 == t, "evaluate: forecast origins are not contiguous (gap "
                                       "before t=%d)", t);
            t1 = t + 1;
        }
    }
    require(t0 >= 0, "evaluate: forecast tensor has no origins");
    require(t0 >= naive_period - 1,
            "evaluate: first origin t=%d predates the naive baseline's period %d", t0,
            naive_period);

    const NaiveSeasonal naive(naive_period);
    const int len = t1 - t0;
    EvalResult res;
    res.slice_start = t0;
    std::vector<InventoryTrace> naive_traces;
    long total_orders = 0, negative_orders = 0;
    for (int i = 0; i < ft.n; ++i) {
        const SliceData slice = slice_data(panel, i, t0, len);
        std::vector<std::vector<double>> rows, nrows;
        for (int t = t0; t < t1; ++t) {
            std::vector<double> row(static_cast<size_t>(costs.lead_time));
            for (int k = 0; k < costs.lead_time; ++k) row[static_cast<size_t>(k)] = ft.at(i, t, k);
            rows.push_back(std::move(row));
            nrows.push_back(naive.forecast_values(panel, nullptr, i, t, costs.lead_time));
        }
        Tape tape;
        res.traces.push_back(closed_form_values(tape, slice, rows, costs));
        naive_traces.push_back(closed_form_values(tape, slice, nrows, costs));
        total_orders += static_cast<long>(res.traces.back().orders.size());
        negative_orders += res.traces.back().negative_orders;
    }
    res.breakdown = breakdown_from_traces(res.traces, costs, sum_across_series);
    res.naive_breakdown = breakdown_from_traces(naive_traces, costs, sum_across_series);
    res.rrms_value = rrms(res.breakdown, res.naive_breakdown);
    res.mse_value = mse(ft, panel);
    res.smape_value = smape(ft, panel);
    res.negative_order_share =
        total_orders > 0 ? static_cast<double>(negative_orders) / static_cast<double>(total_orders)
                         : 0.0;
    return res;
}

void run_jobs(int n_jobs, int n_tasks, const std::function<void(int)>& task) {
    if (n_tasks <= 0) return;
    if (n_jobs <= 1 || n_tasks == 1) {
        for (int i = 0; i < n_tasks; ++i) task(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&]() {
        while (true) {
            const int i = next.fetch_add(1);
            if (i >= n_tasks) return;
            try {
                task(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> threads;
    const int count = std::min(n_jobs, n_tasks);
    threads.reserve(static_cast<size_t>(count));
    for (int j = 0; j < count; ++j) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace invcast
