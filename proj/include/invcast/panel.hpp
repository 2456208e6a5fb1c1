#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "invcast/tensor.hpp"

namespace invcast {

enum class CsvSchema { Long, Wide };

/// N series by T timesteps of demand with a validity mask. Series of
/// different lengths are front-padded so their most recent observations
/// align at column T-1. Invalid entries are stored as 0. Immutable after
/// construction by convention; safe to share across readers.
struct DemandPanel {
    std::vector<std::string> series_ids;
    Tensor values;               // rank-2, N x T
    std::vector<uint8_t> mask;   // N*T row-major, 1 = valid
    std::vector<int> t_offsets;  // panel column = source t + offset, per series
    int period = 1;
    int train_cutoff = 0;
    int val_cutoff = 0;

    int n() const { return values.rank() == 2 ? values.dim(0) : 0; }
    int t_len() const { return values.rank() == 2 ? values.dim(1) : 0; }

    double at(int i, int t) const { return values.at(i, t); }
    bool valid(int i, int t) const {
        return mask[static_cast<size_t>(i) * t_len() + t] != 0;
    }
    /// First valid column of a series (t_len() if the series is empty).
    int valid_start(int i) const;

    void set_cutoffs(int train, int val);
    /// Checks the structural invariants, including cutoff ordering.
    void validate() const;

    uint64_t content_hash() const;
};

/// Covariates aligned with a DemandPanel: numeric channels plus integer
/// categorical codes with per-column cardinalities.
struct CovariatePanel {
    std::vector<std::string> numeric_names;
    std::vector<std::string> categorical_names;
    std::vector<double> numeric;     // N*T*C_num row-major
    std::vector<int> categorical;    // N*T*C_cat row-major
    std::vector<int> cardinalities;  // per categorical column
    int n = 0;
    int t_len = 0;

    int n_numeric() const { return static_cast<int>(numeric_names.size()); }
    int n_categorical() const { return static_cast<int>(categorical_names.size()); }
    bool empty() const { return n_numeric() == 0 && n_categorical() == 0; }

    double numeric_at(int i, int t, int c) const {
        return numeric[(static_cast<size_t>(i) * t_len + t) * n_numeric() + c];
    }
    int categorical_at(int i, int t, int c) const {
        return categorical[(static_cast<size_t>(i) * t_len + t) * n_categorical() + c];
    }
};

/// Seasonal sine panel with linear trend and Gaussian noise, clamped at 0.
/// Identical seeds produce bit-identical panels.
DemandPanel synth_seasonal(int n, int t_len, int period, double base, double amplitude,
                           double trend, double noise_sd, uint64_t seed);

/// Long schema: header `series_id,t,demand`. Wide schema: header
/// `series_id,d0,d1,...` with empty cells marking invalid entries.
DemandPanel ingest_csv(const std::string& path, CsvSchema schema, int period,
                       std::pair<int, int> cutoffs);

std::string emit_csv(const DemandPanel& panel, CsvSchema schema);
void emit_csv_file(const DemandPanel& panel, CsvSchema schema, const std::string& path);

/// Sidecar covariates keyed by (series_id, t); columns named num_* or cat_*.
CovariatePanel ingest_covariates_csv(const std::string& path, const DemandPanel& panel);

}  // namespace invcast
