#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "invcast/panel.hpp"

namespace invcast {

enum class HorizonKind { Lead, Rollout };

/// N x T x K forecasts: entry (i, t, k) predicts demand at time t+k+1 given
/// data through t. K = L for lead-time forecasts, K = H for rollouts. The
/// origin mask records at which (i, t) a forecast was actually emitted.
struct ForecastTensor {
    int n = 0;
    int t_len = 0;
    int k = 0;
    HorizonKind kind = HorizonKind::Lead;
    std::vector<double> values;   // n*t_len*k row-major
    std::vector<uint8_t> origin;  // n*t_len

    static ForecastTensor make(int n, int t_len, int k, HorizonKind kind);

    double at(int i, int t, int kk) const {
        return values[(static_cast<size_t>(i) * t_len + t) * k + kk];
    }
    double& at(int i, int t, int kk) {
        return values[(static_cast<size_t>(i) * t_len + t) * k + kk];
    }
    bool origin_at(int i, int t) const {
        return origin[static_cast<size_t>(i) * t_len + t] != 0;
    }
    void set_origin(int i, int t) { origin[static_cast<size_t>(i) * t_len + t] = 1; }
};

/// Interchange format: `series_id,t,k,forecast` with k in 1..K, t in the
/// source file's time indexing (panel offsets are applied on both sides).
std::string forecast_csv(const ForecastTensor& ft, const DemandPanel& panel);
void write_forecast_csv(const ForecastTensor& ft, const DemandPanel& panel,
                        const std::string& path);
ForecastTensor read_forecast_csv(const std::string& path, const DemandPanel& panel);

}  // namespace invcast
