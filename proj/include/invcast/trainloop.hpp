#pragma once

#include <functional>
#include <string>
#include <vector>

#include "invcast/forecast.hpp"
#include "invcast/objectives.hpp"

namespace invcast {

enum class Objective { Mse, TotalCost, Rrms };

std::string objective_name(Objective o);
Objective parse_objective(const std::string& name);

struct TrainConfig {
    Objective objective = Objective::TotalCost;
    CostParams costs;
    int window = 24;   // encode window W
    int horizon = 12;  // rollout horizon H
    int period = 12;
    double learning_rate = 0.01;
    int steps_per_update = 5;  // fine-tune steps per roll-forward timestep
    int batch_size = 0;        // 0 = all eligible origins (or all series)
    uint64_t seed = 1;
    int train_cutoff = 0;  // training data ends here (exclusive)
    int val_cutoff = 0;    // validation data ends here (exclusive)
    int train_steps = 150;  // initial training budget
    int val_every = 10;     // validation cadence during initial training

    void validate() const;
};

/// One series' demand over [start, start+len), copied with its validity.
struct SliceData {
    std::vector<double> demand;
    std::vector<uint8_t> valid;
    int start = 0;
};
SliceData slice_data(const DemandPanel& panel, int series, int start, int len);

/// The rollout kernel: runs the closed-form inventory system over a fresh
/// slice (rows[s] orders at slice time s) and returns the objective as a
/// tape scalar. naive_rows are only consulted for the RRMS objective.
ad::DiffValue rollout_objective(ad::Tape& tape, const SliceData& slice,
                                const std::vector<ad::DiffValue>& rows,
                                const std::vector<std::vector<double>>& naive_rows,
                                Objective objective, const CostParams& costs);

/// Origins whose history and rollout targets fit inside [0, data_end).
std::vector<int> rollout_origins(const Forecaster& model, const DemandPanel& panel, int series,
                                 int horizon, int data_end);

/// Per-origin horizon rollout: forecast H steps, slide length-L windows
/// over them (H-L+1 windows), and score the inventory system over the
/// horizon anchored at the origin. Mean over origins. The MSE objective
/// skips the inventory system and scores the horizon forecasts directly.
ad::DiffValue double_rollout_loss(ad::Tape& tape, const Forecaster& model,
                                  const BoundParams& bound, const DemandPanel& panel,
                                  const CovariatePanel* cov, int series,
                                  const std::vector<int>& origins, const TrainConfig& cfg);

/// Lead-time forecasts at every origin in [range_start, range_end) across
/// all series; inventory system over that range; objective averaged across
/// series.
ad::DiffValue single_rollout_loss(ad::Tape& tape, const Forecaster& model,
                                  const BoundParams& bound, const DemandPanel& panel,
                                  const CovariatePanel* cov, int range_start, int range_end,
                                  const TrainConfig& cfg);

struct AdamState {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 10.0;
    long step_count = 0;
    std::vector<Tensor> m, v;

    void init(const ParamSet& params, double learning_rate);
};

using LossClosure = std::function<ad::DiffValue(ad::Tape&, const BoundParams&)>;

/// One Adam step with global gradient-norm clipping. A non-finite loss or
/// gradient aborts the step, halves the learning rate once and retries;
/// a second failure throws. Returns the loss value.
double optimize_step(Forecaster& model, AdamState& state, const LossClosure& make_loss);

/// Initial training on [0, train_cutoff) with periodic validation-range
/// checks; the parameters with the lowest validation loss win.
void fit_local(Forecaster& model, AdamState& state, const DemandPanel& panel,
               const CovariatePanel* cov, int series, const TrainConfig& cfg);
void fit_global(Forecaster& model, AdamState& state, const DemandPanel& panel,
                const CovariatePanel* cov, const TrainConfig& cfg);

/// Roll-forward sweep over [t0, t1): fine-tune on data through t, then emit
/// the next L forecasts at origin t. Optimizer state persists across steps.
void roll_forward_series(Forecaster& model, AdamState& state, const DemandPanel& panel,
                         const CovariatePanel* cov, int series, const TrainConfig& cfg, int t0,
                         int t1, ForecastTensor& out);
void roll_forward_global(Forecaster& model, AdamState& state, const DemandPanel& panel,
                         const CovariatePanel* cov, const TrainConfig& cfg, int t0, int t1,
                         ForecastTensor& out);

/// Scores an emitted forecast tensor through the inventory pipeline over
/// its (contiguous) origin range, against the seasonal-naive baseline.
struct EvalResult {
    CostBreakdown breakdown;
    CostBreakdown naive_breakdown;
    double rrms_value = 0.0;
    double mse_value = 0.0;
    double smape_value = 0.0;
    std::vector<InventoryTrace> traces;
    int slice_start = 0;
    double negative_order_share = 0.0;
};

EvalResult evaluate_forecasts(const ForecastTensor& ft, const DemandPanel& panel,
                              const CostParams& costs, int naive_period,
                              bool sum_across_series = false);

/// Runs tasks 0..n_tasks-1 on up to n_jobs threads; rethrows the first
/// task exception after joining.
void run_jobs(int n_jobs, int n_tasks, const std::function<void(int)>& task);

}  // namespace invcast
