#pragma once

#include <string>
#include <vector>

#include "invcast/inventory.hpp"

namespace invcast {

/// Per-series cost components plus a panel aggregate (unweighted mean
/// across series, or sum when requested).
struct CostBreakdown {
    std::vector<double> holding, stockout, order_var, total;
    double holding_agg = 0.0, stockout_agg = 0.0, order_var_agg = 0.0, total_agg = 0.0;

    int n_series() const { return static_cast<int>(holding.size()); }
    void aggregate(bool sum_across_series);
};

/// c_h * mean_t max(0, i_t) over the whole trace range.
double holding_cost(const std::vector<double>& net_inventory, double c_h);
/// c_s * mean_t max(0, -i_t).
double stockout_cost(const std::vector<double>& net_inventory, double c_s);
/// c_v * population variance of the orders.
double order_variance_cost(const std::vector<double>& orders, double c_v);

CostBreakdown breakdown_from_traces(const std::vector<InventoryTrace>& traces,
                                    const CostParams& params, bool sum_across_series = false);

/// sigmoid((x - x_naive) / x_naive); a non-positive naive component falls
/// back to an epsilon denominator with a logged warning.
double rel(double x, double x_naive);
/// Per-series sqrt(rel(C_h)^2 + rel(C_s)^2 + rel(C_v)^2), averaged across
/// series.
double rrms(const CostBreakdown& own, const CostBreakdown& naive);

/// Mean squared error over valid (origin, horizon) pairs whose targets lie
/// inside the series.
double mse(const ForecastTensor& ft, const DemandPanel& panel);
/// Symmetric MAPE in [0, 2]; a 0/0 term counts as 0.
double smape(const ForecastTensor& ft, const DemandPanel& panel);

// Differentiable mirrors used by the training objectives.
struct CostNodes {
    ad::DiffValue holding, stockout, order_var, total;
};
CostNodes cost_nodes(ad::Tape& tape, const TraceNodes& trace, const CostParams& params);
ad::DiffValue rel_node(ad::Tape& tape, ad::DiffValue x, double x_naive);
ad::DiffValue rrms_node(ad::Tape& tape, const CostNodes& own, double naive_holding,
                        double naive_stockout, double naive_order_var);

struct MetricRow {
    std::string model;
    std::string objective;
    double c_h = 0.0, c_s = 0.0, c_v = 0.0;
    double holding = 0.0, stockout = 0.0, order_var = 0.0, total = 0.0;
    double rrms = 0.0, mse = 0.0, smape = 0.0;
};
std::string metric_report_csv(const std::vector<MetricRow>& rows);

}  // namespace invcast
