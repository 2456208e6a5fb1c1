#pragma once

#include <utility>
#include <vector>

#include "invcast/forecast_tensor.hpp"
#include "invcast/panel.hpp"
#include "invcast/tape.hpp"

namespace invcast {

/// Unit costs and replenishment parameters of the inventory system.
struct CostParams {
    double holding = 1.0;          // money per unit held per timestep
    double stockout = 1.0;         // money per unit short per timestep
    double order_variance = 1e-5;  // money per squared unit of order variance
    double service_level = 0.5;    // target probability that stock covers demand
    int lead_time = 6;             // timesteps between order and arrival

    void validate() const;
    /// Inverse normal CDF of the service level; exactly 0 at 0.5.
    double service_z() const;
};

/// Inverse CDF of the standard normal distribution, accurate to better
/// than 1e-9 in probability (rational approximation plus a Newton step).
double inv_norm_cdf(double p);

/// One series' slice of the inventory problem. Local time runs 0..S-1 and
/// all quantities before 0 are zero. Forecast rows exist at local times
/// 0..n_orders-1 (n_orders = rows.size()); row entry k predicts demand at
/// s+k+1. Rows must have at least lead_time entries; only the first
/// lead_time entries feed the inventory system.
struct SliceValues {
    std::vector<double> demand;
    std::vector<uint8_t> demand_valid;
    std::vector<std::vector<double>> rows;

    int len() const { return static_cast<int>(demand.size()); }
    int n_orders() const { return static_cast<int>(rows.size()); }
};

/// Per-series state trajectories of the inventory system.
struct InventoryTrace {
    std::vector<double> orders;         // length n_orders
    std::vector<double> net_inventory;  // length S
    std::vector<double> position;       // length S
    std::vector<double> wip;            // length S
    std::vector<double> safety_stock;   // length S
    std::vector<double> lead_forecast;  // length n_orders
    int negative_orders = 0;            // diagnostic: orders below zero
};

/// Literal per-step replenishment recursions (order-up-to policy). The
/// non-differentiable reference path; no order is placed once forecast
/// rows run out.
InventoryTrace simulate_recursive(const SliceValues& slice, const CostParams& params);

/// Rolling standard deviation of realized forecast errors per local time,
/// computed with running sums; an empty error set yields 0.
std::vector<double> forecast_error_std(const SliceValues& slice, int lead_time);

/// Safety stock per timestep: the inverse normal CDF of the service level
/// times the rolling error deviation.
std::vector<double> safety_stock(const std::vector<double>& error_std, double service_level);

/// Differentiable closed-form counterpart of simulate_recursive.
struct SliceDiff {
    const std::vector<double>* demand = nullptr;
    const std::vector<uint8_t>* demand_valid = nullptr;
    std::vector<ad::DiffValue> rows;  // rank-1, length >= lead_time each

    int len() const { return static_cast<int>(demand->size()); }
    int n_orders() const { return static_cast<int>(rows.size()); }
};

struct TraceNodes {
    ad::DiffValue lead_forecast;  // rank-1 n_orders
    ad::DiffValue error_std;      // rank-1 S (guarded sqrt; unset when z == 0)
    ad::DiffValue orders;         // rank-1 n_orders
    ad::DiffValue net_inventory;  // rank-1 S
    ad::DiffValue position;       // rank-1 min(S, n_orders+1)
    ad::DiffValue wip;            // same length as position
    int slice_len = 0;
    int n_orders = 0;
};

TraceNodes closed_form_trace(ad::Tape& tape, const SliceDiff& slice, const CostParams& params);

/// Extracts plain values from the closed-form nodes (positions beyond the
/// closed-form range are completed by the order/demand recursion).
InventoryTrace trace_values(const TraceNodes& nodes, const SliceDiff& slice,
                            const CostParams& params);

/// Forecasted lead-time demand per origin: sum of the first L row entries.
/// Validity follows the origin mask.
std::pair<Tensor, std::vector<uint8_t>> lead_demand(const ForecastTensor& ft, int lead_time);

/// Realized lead-time demand; entries needing demand beyond T are invalid.
std::pair<Tensor, std::vector<uint8_t>> true_lead_demand(const DemandPanel& panel,
                                                         int lead_time);

/// CSV export: series_id,t,order,net_inventory,inventory_position,wip,safety_stock.
std::string trace_csv(const std::vector<InventoryTrace>& traces,
                      const std::vector<std::string>& series_ids, int t_start);

}  // namespace invcast
