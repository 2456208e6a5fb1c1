#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "invcast/forecast_tensor.hpp"
#include "invcast/panel.hpp"
#include "invcast/tape.hpp"

namespace invcast {

/// Named parameter tensors of a model, in a stable order.
struct ParamSet {
    std::vector<std::pair<std::string, Tensor>> entries;

    void add(std::string name, Tensor t) { entries.emplace_back(std::move(name), std::move(t)); }
    Tensor* find(const std::string& name);
    const Tensor* find(const std::string& name) const;
    bool empty() const { return entries.empty(); }
};

/// Parameters materialized as nodes on a tape for one forward/backward pass.
struct BoundParams {
    const ParamSet* set = nullptr;
    std::vector<ad::DiffValue> values;

    ad::DiffValue at(const std::string& name) const;
    bool empty() const { return values.empty(); }
};

BoundParams bind_params(ad::Tape& tape, const ParamSet& params);
/// Binds parameters as constants (no gradient bookkeeping); used when only
/// forecast values are needed.
BoundParams bind_constants(ad::Tape& tape, const ParamSet& params);

/// A trainable forecaster. forecast() returns a rank-1 tensor of length
/// `horizon` whose entry k predicts demand at origin+k+1; it reads demand
/// only at times <= origin.
class Forecaster {
public:
    virtual ~Forecaster() = default;

    virtual std::string kind() const = 0;
    virtual ParamSet& params() = 0;
    const ParamSet& params() const { return const_cast<Forecaster*>(this)->params(); }
    /// Observations required at or before an origin (P for seasonal models,
    /// W for the recurrent model).
    virtual int min_history() const = 0;
    virtual ad::DiffValue forecast(ad::Tape& tape, const BoundParams& bound,
                                   const DemandPanel& panel, const CovariatePanel* cov,
                                   int series, int origin, int horizon) const = 0;
    virtual std::unique_ptr<Forecaster> clone() const = 0;

    void check_origin(int origin) const;
    /// Plain forecast values via a scratch tape.
    std::vector<double> forecast_values(const DemandPanel& panel, const CovariatePanel* cov,
                                        int series, int origin, int horizon) const;
};

/// One learnable scale on the demand observed a period ago; horizons past
/// one period reapply the scale to the lagged forecast (beta^m on the
/// demand m periods back).
class SeasonalScaler : public Forecaster {
public:
    explicit SeasonalScaler(int period);

    std::string kind() const override { return "seasonal-scaler"; }
    ParamSet& params() override { return params_; }
    int min_history() const override { return period_; }
    ad::DiffValue forecast(ad::Tape& tape, const BoundParams& bound, const DemandPanel& panel,
                           const CovariatePanel* cov, int series, int origin,
                           int horizon) const override;
    std::unique_ptr<Forecaster> clone() const override {
        return std::make_unique<SeasonalScaler>(*this);
    }

    double beta() const;
    int period() const { return period_; }

private:
    int period_;
    ParamSet params_;
};

/// Parameter-free baseline: repeats the observation one period ago.
class NaiveSeasonal : public Forecaster {
public:
    explicit NaiveSeasonal(int period);

    std::string kind() const override { return "naive"; }
    ParamSet& params() override { return params_; }
    int min_history() const override { return period_; }
    ad::DiffValue forecast(ad::Tape& tape, const BoundParams& bound, const DemandPanel& panel,
                           const CovariatePanel* cov, int series, int origin,
                           int horizon) const override;
    std::unique_ptr<Forecaster> clone() const override {
        return std::make_unique<NaiveSeasonal>(*this);
    }

private:
    int period_;
    ParamSet params_;
};

struct RecurrentConfig {
    int hidden = 20;
    int window = 24;
    bool autoregressive = true;  // decoder feeds back its previous output
    int embed_dim = 10;
};

/// LSTM encoder over a normalized input window, LSTM decoder unrolled for
/// the requested horizon, linear head. Covariates, when present, are
/// embedded to embed_dim per channel group and concatenated with the
/// demand input.
class RecurrentEncoderDecoder : public Forecaster {
public:
    RecurrentEncoderDecoder(RecurrentConfig config, const CovariatePanel* cov_schema,
                            uint64_t seed);

    std::string kind() const override { return "lstm"; }
    ParamSet& params() override { return params_; }
    int min_history() const override { return config_.window; }
    ad::DiffValue forecast(ad::Tape& tape, const BoundParams& bound, const DemandPanel& panel,
                           const CovariatePanel* cov, int series, int origin,
                           int horizon) const override;
    std::unique_ptr<Forecaster> clone() const override {
        return std::make_unique<RecurrentEncoderDecoder>(*this);
    }

    const RecurrentConfig& config() const { return config_; }

private:
    ad::DiffValue covariate_input(ad::Tape& tape, const BoundParams& bound,
                                  const CovariatePanel* cov, int series, int t) const;

    RecurrentConfig config_;
    int n_numeric_ = 0;
    std::vector<int> cardinalities_;
    int input_dim_ = 1;
    ParamSet params_;
};

std::unique_ptr<Forecaster> make_forecaster(const std::string& kind, int period,
                                            const RecurrentConfig& config,
                                            const CovariatePanel* cov_schema, uint64_t seed);

/// Checkpoints: one CSV line per tensor (name, rank, dims, values); loading
/// requires matching names and shapes and round-trips bit-exactly.
std::string checkpoint_csv(const ParamSet& params);
void save_checkpoint(const Forecaster& model, const std::string& path);
void load_checkpoint(Forecaster& model, const std::string& path);

}  // namespace invcast
