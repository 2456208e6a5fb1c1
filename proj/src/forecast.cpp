#include "invcast/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "invcast/csvio.hpp"

namespace invcast {

Tensor* ParamSet::find(const std::string& name) {
    for (auto& [n, t] : entries)
        if (n == name) return &t;
    return nullptr;
}

const Tensor* ParamSet::find(const std::string& name) const {
    return const_cast<ParamSet*>(this)->find(name);
}

ad::DiffValue BoundParams::at(const std::string& name) const {
    for (size_t i = 0; i < set->entries.size(); ++i)
        if (set->entries[i].first == name) return values[i];
    throw Error(strfmt("bound params: unknown parameter '%s'", name.c_str()));
}

BoundParams bind_params(ad::Tape& tape, const ParamSet& params) {
    BoundParams b;
    b.set = &params;
    for (const auto& [name, t] : params.entries) b.values.push_back(tape.param(t));
    return b;
}

BoundParams bind_constants(ad::Tape& tape, const ParamSet& params) {
    BoundParams b;
    b.set = &params;
    for (const auto& [name, t] : params.entries) b.values.push_back(tape.constant(t));
    return b;
}

void Forecaster::check_origin(int origin) const {
    require(origin >= min_history() - 1,
            "%s: origin t=%d has insufficient history; minimum t is %d", kind().c_str(), origin,
            min_history() - 1);
}

std::vector<double> Forecaster::forecast_values(const DemandPanel& panel,
                                                const CovariatePanel* cov, int series,
                                                int origin, int horizon) const {
    ad::Tape tape;
    const BoundParams bound = bind_constants(tape, params());
    const ad::DiffValue out = forecast(tape, bound, panel, cov, series, origin, horizon);
    return out.value().data();
}

namespace {

/// Lag of the seasonal source value for 1-based horizon step k: the demand
/// ceil(k/P) periods back, which always lands at or before the origin.
int seasonal_lag(int origin, int k, int period) {
    const int m = (k + period - 1) / period;
    return origin + k - m * period;
}

int seasonal_wraps(int k, int period) { return (k + period - 1) / period; }

}  // namespace

SeasonalScaler::SeasonalScaler(int period) : period_(period) {
    require(period >= 1, "seasonal-scaler: period must be >= 1, got %d", period);
    params_.add("beta", Tensor::scalar(1.0));
}

double SeasonalScaler::beta() const { return params_.find("beta")->scalar_value(); }

ad::DiffValue SeasonalScaler::forecast(ad::Tape& tape, const BoundParams& bound,
                                       const DemandPanel& panel, const CovariatePanel*,
                                       int series, int origin, int horizon) const {
    check_origin(origin);
    require(horizon >= 1, "seasonal-scaler: horizon must be >= 1, got %d", horizon);
    const ad::DiffValue beta = bound.at("beta");

    // Group horizon entries by how many periods the lag wraps; each group
    // contributes beta^m times the lagged demand.
    const int max_m = seasonal_wraps(horizon, period_);
    ad::DiffValue out;
    ad::DiffValue beta_pow = beta;
    for (int m = 1; m <= max_m; ++m) {
        std::vector<double> lagged(static_cast<size_t>(horizon), 0.0);
        bool any = false;
        for (int k = 1; k <= horizon; ++k) {
            if (seasonal_wraps(k, period_) != m) continue;
            lagged[static_cast<size_t>(k - 1)] = panel.at(series, seasonal_lag(origin, k, period_));
            any = true;
        }
        if (any) {
            const ad::DiffValue part =
                ad::mul(beta_pow, tape.constant(Tensor::from_vector(std::move(lagged))));
            out = out.valid() ? ad::add(out, part) : part;
        }
        if (m < max_m) beta_pow = ad::mul(beta_pow, beta);
    }
    return out;
}

NaiveSeasonal::NaiveSeasonal(int period) : period_(period) {
    require(period >= 1, "naive: period must be >= 1, got %d", period);
}

ad::DiffValue NaiveSeasonal::forecast(ad::Tape& tape, const BoundParams&,
                                      const DemandPanel& panel, const CovariatePanel*,
                                      int series, int origin, int horizon) const {
    check_origin(origin);
    require(horizon >= 1, "naive: horizon must be >= 1, got %d", horizon);
    std::vector<double> vals(static_cast<size_t>(horizon), 0.0);
    for (int k = 1; k <= horizon; ++k)
        vals[static_cast<size_t>(k - 1)] = panel.at(series, seasonal_lag(origin, k, period_));
    return tape.constant(Tensor::from_vector(std::move(vals)));
}

namespace {

Tensor uniform_init(Rng& rng, std::vector<int> dims, double bound) {
    Tensor t = Tensor::zeros(std::move(dims));
    for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

struct LstmGates {
    ad::DiffValue w_ih, w_hh, b;
};

std::pair<ad::DiffValue, ad::DiffValue> lstm_cell(int hidden, const LstmGates& g,
                                                  ad::DiffValue x, ad::DiffValue h,
                                                  ad::DiffValue c) {
    const ad::DiffValue z = ad::add(ad::add(ad::matmul(g.w_ih, x), ad::matmul(g.w_hh, h)), g.b);
    const ad::DiffValue in_gate = ad::sigmoid(ad::slice1(z, 0, hidden));
    const ad::DiffValue forget_gate = ad::sigmoid(ad::slice1(z, hidden, hidden));
    const ad::DiffValue cell_in = ad::tanh(ad::slice1(z, 2 * hidden, hidden));
    const ad::DiffValue out_gate = ad::sigmoid(ad::slice1(z, 3 * hidden, hidden));
    const ad::DiffValue c_next = ad::add(ad::mul(forget_gate, c), ad::mul(in_gate, cell_in));
    const ad::DiffValue h_next = ad::mul(out_gate, ad::tanh(c_next));
    return {h_next, c_next};
}

}  // namespace

RecurrentEncoderDecoder::RecurrentEncoderDecoder(RecurrentConfig config,
                                                 const CovariatePanel* cov_schema,
                                                 uint64_t seed)
    : config_(config) {
    require(config_.hidden >= 1, "lstm: hidden size must be >= 1, got %d", config_.hidden);
    require(config_.window >= 1, "lstm: encode window must be >= 1, got %d", config_.window);
    require(config_.embed_dim >= 1, "lstm: embed dim must be >= 1, got %d", config_.embed_dim);

    if (cov_schema != nullptr && !cov_schema->empty()) {
        n_numeric_ = cov_schema->n_numeric();
        cardinalities_ = cov_schema->cardinalities;
    }
    input_dim_ = 1 + (n_numeric_ > 0 ? config_.embed_dim : 0) +
                 static_cast<int>(cardinalities_.size()) * config_.embed_dim;

    const int h = config_.hidden;
    const double bound = 1.0 / std::sqrt(static_cast<double>(h));
    Rng rng(seed);
    params_.add("enc.w_ih", uniform_init(rng, {4 * h, input_dim_}, bound));
    params_.add("enc.w_hh", uniform_init(rng, {4 * h, h}, bound));
    params_.add("enc.b", Tensor::zeros({4 * h}));
    params_.add("dec.w_ih", uniform_init(rng, {4 * h, input_dim_}, bound));
    params_.add("dec.w_hh", uniform_init(rng, {4 * h, h}, bound));
    params_.add("dec.b", Tensor::zeros({4 * h}));
    params_.add("head.w", uniform_init(rng, {1, h}, bound));
    params_.add("head.b", Tensor::zeros({1}));
    if (n_numeric_ > 0) {
        params_.add("cov.num.w", uniform_init(rng, {config_.embed_dim, n_numeric_}, bound));
        params_.add("cov.num.b", Tensor::zeros({config_.embed_dim}));
    }
    for (size_t j = 0; j < cardinalities_.size(); ++j) {
        require(cardinalities_[j] >= 1, "lstm: categorical column %zu has cardinality %d", j,
                cardinalities_[j]);
        // One extra row serves as the reserved unknown embedding.
        params_.add(strfmt("cov.cat%zu.table", j),
                    uniform_init(rng, {cardinalities_[j] + 1, config_.embed_dim}, bound));
    }
}

ad::DiffValue RecurrentEncoderDecoder::covariate_input(ad::Tape& tape, const BoundParams& bound,
                                                       const CovariatePanel* cov, int series,
                                                       int t) const {
    require(cov != nullptr && cov->n_numeric() == n_numeric_ &&
                static_cast<int>(cardinalities_.size()) == cov->n_categorical(),
            "lstm: covariate panel does not match the schema the model was built with");
    const bool in_range = t >= 0 && t < cov->t_len;
    std::vector<ad::DiffValue> parts;
    if (n_numeric_ > 0) {
        std::vector<double> vals(static_cast<size_t>(n_numeric_), 0.0);
        if (in_range)
            for (int c = 0; c < n_numeric_; ++c) vals[static_cast<size_t>(c)] = cov->numeric_at(series, t, c);
        parts.push_back(ad::add(
            ad::matmul(bound.at("cov.num.w"), tape.constant(Tensor::from_vector(std::move(vals)))),
            bound.at("cov.num.b")));
    }
    for (size_t j = 0; j < cardinalities_.size(); ++j) {
        int code = in_range ? cov->categorical_at(series, t, static_cast<int>(j))
                            : cardinalities_[j];
        // Unseen codes map to the reserved unknown row.
        if (code < 0 || code > cardinalities_[j]) code = cardinalities_[j];
        parts.push_back(ad::embed_lookup(bound.at(strfmt("cov.cat%zu.table", j)), code));
    }
    return parts.size() == 1 ? parts[0] : ad::concat1(parts);
}

ad::DiffValue RecurrentEncoderDecoder::forecast(ad::Tape& tape, const BoundParams& bound,
                                                const DemandPanel& panel,
                                                const CovariatePanel* cov, int series,
                                                int origin, int horizon) const {
    check_origin(origin);
    require(horizon >= 1, "lstm: horizon must be >= 1, got %d", horizon);
    const bool use_cov = input_dim_ > 1;
    require(!use_cov || cov != nullptr, "lstm: model was built with covariates but none given");

    const int h = config_.hidden;
    const int w = config_.window;

    // Inputs are normalized by the encode-window mean so scales are
    // comparable across series; outputs are de-normalized at the end.
    double window_mean = 0.0;
    for (int t = origin - w + 1; t <= origin; ++t) window_mean += panel.at(series, t);
    window_mean /= static_cast<double>(w);
    if (std::fabs(window_mean) < 1e-8) window_mean = 1.0;

    const LstmGates enc{bound.at("enc.w_ih"), bound.at("enc.w_hh"), bound.at("enc.b")};
    const LstmGates dec{bound.at("dec.w_ih"), bound.at("dec.w_hh"), bound.at("dec.b")};

    // Hidden state starts from zeros at every encode call.
    ad::DiffValue hs = tape.constant(Tensor::zeros({h}));
    ad::DiffValue cs = tape.constant(Tensor::zeros({h}));
    for (int t = origin - w + 1; t <= origin; ++t) {
        ad::DiffValue x = tape.constant(
            Tensor::from_vector({panel.at(series, t) / window_mean}));
        if (use_cov) x = ad::concat1({x, covariate_input(tape, bound, cov, series, t)});
        std::tie(hs, cs) = lstm_cell(h, enc, x, hs, cs);
    }

    ad::DiffValue prev = tape.constant(Tensor::from_vector({panel.at(series, origin) / window_mean}));
    std::vector<ad::DiffValue> outputs;
    for (int k = 1; k <= horizon; ++k) {
        ad::DiffValue x = prev;
        if (use_cov) x = ad::concat1({x, covariate_input(tape, bound, cov, series, origin + k)});
        std::tie(hs, cs) = lstm_cell(h, dec, x, hs, cs);
        const ad::DiffValue y = ad::add(ad::matmul(bound.at("head.w"), hs), bound.at("head.b"));
        outputs.push_back(y);
        if (config_.autoregressive) prev = y;
        // otherwise the decoder keeps feeding the last observation
    }
    return ad::mul_const(ad::concat1(outputs), window_mean);
}

std::unique_ptr<Forecaster> make_forecaster(const std::string& kind, int period,
                                            const RecurrentConfig& config,
                                            const CovariatePanel* cov_schema, uint64_t seed) {
    if (kind == "seasonal-scaler") return std::make_unique<SeasonalScaler>(period);
    if (kind == "naive") return std::make_unique<NaiveSeasonal>(period);
    if (kind == "lstm")
        return std::make_unique<RecurrentEncoderDecoder>(config, cov_schema, seed);
    throw Error(strfmt("unknown model kind '%s' (expected seasonal-scaler, naive, or lstm)",
                       kind.c_str()));
}

std::string checkpoint_csv(const ParamSet& params) {
    std::ostringstream out;
    for (const auto& [name, t] : params.entries) {
        out << name << ',' << t.rank();
        for (int d : t.dims()) out << ',' << d;
        for (size_t i = 0; i < t.size(); ++i) out << ',' << fmt_double(t[i]);
        out << '\n';
    }
    return out.str();
}

void save_checkpoint(const Forecaster& model, const std::string& path) {
    atomic_write(path, checkpoint_csv(model.params()));
}

void load_checkpoint(Forecaster& model, const std::string& path) {
    const auto lines = read_lines(path);
    size_t loaded = 0;
    for (size_t ln = 0; ln < lines.size(); ++ln) {
        if (lines[ln].empty()) continue;
        const auto f = split_csv(lines[ln]);
        const std::string ctx = strfmt("%s:%zu", path.c_str(), ln + 1);
        require(f.size() >= 2, "%s: malformed checkpoint line", ctx.c_str());
        const std::string& name = f[0];
        const int rank = static_cast<int>(parse_long(f[1], ctx));
        require(rank >= 0 && rank <= 3, "%s: bad rank %d", ctx.c_str(), rank);
        std::vector<int> dims;
        for (int d = 0; d < rank; ++d)
            dims.push_back(static_cast<int>(parse_long(f[static_cast<size_t>(2 + d)], ctx)));
        size_t count = 1;
        for (int d : dims) count *= static_cast<size_t>(d);
        require(f.size() == 2 + static_cast<size_t>(rank) + count,
                "%s: expected %zu values for %s", ctx.c_str(), count, name.c_str());
        std::vector<double> vals(count);
        for (size_t i = 0; i < count; ++i)
            vals[i] = parse_double(f[2 + static_cast<size_t>(rank) + i], ctx);

        Tensor* dst = model.params().find(name);
        require(dst != nullptr, "%s: model has no parameter '%s'", ctx.c_str(), name.c_str());
        Tensor t = rank == 0 ? Tensor::scalar(vals[0]) : Tensor::from_data(dims, std::move(vals));
        require(dst->same_shape(t), "%s: shape mismatch for '%s': %s vs %s", ctx.c_str(),
                name.c_str(), dst->shape_str().c_str(), t.shape_str().c_str());
        *dst = std::move(t);
        ++loaded;
    }
    require(loaded == model.params().entries.size(),
            "%s: checkpoint has %zu parameters, model expects %zu", path.c_str(), loaded,
            model.params().entries.size());
}

}  // namespace invcast
