#include "invcast/panel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "invcast/csvio.hpp"

namespace invcast {

int DemandPanel::valid_start(int i) const {
    for (int t = 0; t < t_len(); ++t)
        if (valid(i, t)) return t;
    return t_len();
}

void DemandPanel::set_cutoffs(int train, int val) {
    require(0 < train && train < val && val <= t_len(),
            "panel: cutoffs (%d,%d) violate 0 < train < val <= T=%d", train, val, t_len());
    train_cutoff = train;
    val_cutoff = val;
}

void DemandPanel::validate() const {
    require(values.rank() == 2, "panel: values must be rank-2, got %s",
            values.shape_str().c_str());
    require(static_cast<int>(series_ids.size()) == n(), "panel: %zu ids for %d series",
            series_ids.size(), n());
    require(mask.size() == values.size(), "panel: mask size mismatch");
    require(period >= 1, "panel: period must be >= 1, got %d", period);
    require(0 < train_cutoff && train_cutoff < val_cutoff && val_cutoff <= t_len(),
            "panel: cutoffs (%d,%d) violate 0 < train < val <= T=%d", train_cutoff, val_cutoff,
            t_len());
    for (int i = 0; i < n(); ++i)
        for (int t = 0; t < t_len(); ++t)
            require(valid(i, t) || at(i, t) == 0.0,
                    "panel: invalid entry (%d,%d) must be stored as 0", i, t);
}

uint64_t DemandPanel::content_hash() const {
    uint64_t h = fnv1a("demand-panel");
    for (const auto& id : series_ids) h = fnv1a(id, h);
    h = fnv1a(values.data().data(), values.size() * sizeof(double), h);
    h = fnv1a(mask.data(), mask.size(), h);
    const int meta[3] = {period, train_cutoff, val_cutoff};
    return fnv1a(meta, sizeof(meta), h);
}

DemandPanel synth_seasonal(int n, int t_len, int period, double base, double amplitude,
                           double trend, double noise_sd, uint64_t seed) {
    require(n >= 1 && t_len >= 1 && period >= 1,
            "synth_seasonal: n, t_len, period must be >= 1 (got %d, %d, %d)", n, t_len, period);
    require(noise_sd >= 0.0, "synth_seasonal: noise_sd must be >= 0, got %g", noise_sd);
    require(base > amplitude, "synth_seasonal: base (%g) must exceed amplitude (%g)", base,
            amplitude);

    DemandPanel p;
    p.values = Tensor::zeros({n, t_len});
    p.mask.assign(static_cast<size_t>(n) * t_len, 1);
    p.t_offsets.assign(static_cast<size_t>(n), 0);
    p.period = period;
    Rng rng(seed);
    const double tau = 6.283185307179586476925286766559;
    for (int i = 0; i < n; ++i) {
        p.series_ids.push_back(strfmt("S%03d", i));
        for (int t = 0; t < t_len; ++t) {
            const double eps = noise_sd > 0.0 ? noise_sd * rng.gaussian() : 0.0;
            const double v = base + amplitude * std::sin(tau * t / period) + trend * t + eps;
            p.values.at(i, t) = std::max(0.0, v);
        }
    }
    if (t_len >= 2) {
        const int train = std::max(1, t_len / 2);
        const int val = std::min(t_len, std::max(train + 1, (3 * t_len) / 4));
        p.train_cutoff = train;
        p.val_cutoff = val;
    }
    return p;
}

namespace {

struct RawSeries {
    // (t, value, valid) triples in increasing t; gaps become masked zeros.
    int t_min = 0;
    std::vector<double> vals;
    std::vector<uint8_t> valid;
};

DemandPanel assemble(std::map<std::string, RawSeries> series, int period,
                     std::pair<int, int> cutoffs) {
    require(!series.empty(), "ingest: no series found");
    int t_len = 0;
    for (const auto& [id, s] : series) t_len = std::max(t_len, static_cast<int>(s.vals.size()));

    DemandPanel p;
    const int n = static_cast<int>(series.size());
    p.values = Tensor::zeros({n, t_len});
    p.mask.assign(static_cast<size_t>(n) * t_len, 0);
    p.period = period;
    int i = 0;
    // std::map iteration gives deterministic ordering by series id.
    for (auto& [id, s] : series) {
        p.series_ids.push_back(id);
        const int len = static_cast<int>(s.vals.size());
        const int pad = t_len - len;  // shorter series are front-padded
        for (int j = 0; j < len; ++j) {
            if (!s.valid[static_cast<size_t>(j)]) continue;
            p.values.at(i, pad + j) = s.vals[static_cast<size_t>(j)];
            p.mask[static_cast<size_t>(i) * t_len + pad + j] = 1;
        }
        p.t_offsets.push_back(pad - s.t_min);
        ++i;
    }
    p.set_cutoffs(cutoffs.first, cutoffs.second);
    p.validate();
    return p;
}

DemandPanel ingest_long(const std::vector<std::string>& lines, const std::string& path,
                        int period, std::pair<int, int> cutoffs) {
    require(!lines.empty(), "%s: empty file", path.c_str());
    require(split_csv(lines[0]) == std::vector<std::string>({"series_id", "t", "demand"}),
            "%s:1: expected header 'series_id,t,demand', got '%s'", path.c_str(),
            lines[0].c_str());

    // First pass: collect (t, value) per series, checking order as we go.
    std::map<std::string, std::vector<std::pair<long, double>>> rows;
    for (size_t ln = 1; ln < lines.size(); ++ln) {
        if (lines[ln].empty()) continue;
        const auto f = split_csv(lines[ln]);
        const std::string ctx = strfmt("%s:%zu", path.c_str(), ln + 1);
        require(f.size() == 3, "%s: expected 3 fields, got %zu", ctx.c_str(), f.size());
        require(!f[0].empty(), "%s: empty series_id", ctx.c_str());
        const long t = parse_long(f[1], ctx);
        const double d = parse_double(f[2], ctx);
        auto& r = rows[f[0]];
        if (!r.empty()) {
            require(t != r.back().first, "%s: duplicate key (series_id=%s, t=%ld)", ctx.c_str(),
                    f[0].c_str(), t);
            require(t > r.back().first, "%s: non-monotone t=%ld after t=%ld in series %s",
                    ctx.c_str(), t, r.back().first, f[0].c_str());
        }
        r.emplace_back(t, d);
    }

    std::map<std::string, RawSeries> series;
    for (auto& [id, r] : rows) {
        RawSeries s;
        s.t_min = static_cast<int>(r.front().first);
        const long span = r.back().first - r.front().first + 1;
        require(span <= 1000000, "ingest: series %s spans %ld timesteps", id.c_str(), span);
        s.vals.assign(static_cast<size_t>(span), 0.0);
        s.valid.assign(static_cast<size_t>(span), 0);
        for (const auto& [t, d] : r) {
            const auto j = static_cast<size_t>(t - r.front().first);
            s.vals[j] = d;
            s.valid[j] = 1;
        }
        series.emplace(id, std::move(s));
    }
    return assemble(std::move(series), period, cutoffs);
}

DemandPanel ingest_wide(const std::vector<std::string>& lines, const std::string& path,
                        int period, std::pair<int, int> cutoffs) {
    require(!lines.empty(), "%s: empty file", path.c_str());
    const auto header = split_csv(lines[0]);
    require(header.size() >= 2 && header[0] == "series_id" && header[1] == "d0",
            "%s:1: expected header 'series_id,d0,d1,...', got '%s'", path.c_str(),
            lines[0].c_str());
    const int t_len = static_cast<int>(header.size()) - 1;

    std::map<std::string, RawSeries> series;
    for (size_t ln = 1; ln < lines.size(); ++ln) {
        if (lines[ln].empty()) continue;
        const auto f = split_csv(lines[ln]);
        const std::string ctx = strfmt("%s:%zu", path.c_str(), ln + 1);
        require(!f[0].empty(), "%s: empty series_id", ctx.c_str());
        require(f.size() <= header.size(), "%s: row has %zu fields, header has %zu", ctx.c_str(),
                f.size(), header.size());
        require(series.find(f[0]) == series.end(), "%s: duplicate key (series_id=%s)",
                ctx.c_str(), f[0].c_str());

        RawSeries s;
        if (f.size() == header.size()) {
            // Full-width row: positions are significant, empty cells invalid.
            s.vals.assign(static_cast<size_t>(t_len), 0.0);
            s.valid.assign(static_cast<size_t>(t_len), 0);
            for (int t = 0; t < t_len; ++t) {
                const std::string& cell = f[static_cast<size_t>(t) + 1];
                if (cell.empty()) continue;
                s.vals[static_cast<size_t>(t)] = parse_double(cell, ctx);
                s.valid[static_cast<size_t>(t)] = 1;
            }
        } else {
            // Short row: observations in order, to be front-padded.
            for (size_t j = 1; j < f.size(); ++j) {
                if (f[j].empty()) {
                    s.vals.push_back(0.0);
                    s.valid.push_back(0);
                } else {
                    s.vals.push_back(parse_double(f[j], ctx));
                    s.valid.push_back(1);
                }
            }
        }
        series.emplace(f[0], std::move(s));
    }
    return assemble(std::move(series), period, cutoffs);
}

}  // namespace

DemandPanel ingest_csv(const std::string& path, CsvSchema schema, int period,
                       std::pair<int, int> cutoffs) {
    const auto lines = read_lines(path);
    return schema == CsvSchema::Long ? ingest_long(lines, path, period, cutoffs)
                                     : ingest_wide(lines, path, period, cutoffs);
}

std::string emit_csv(const DemandPanel& panel, CsvSchema schema) {
    std::ostringstream out;
    if (schema == CsvSchema::Long) {
        out << "series_id,t,demand\n";
        for (int i = 0; i < panel.n(); ++i)
            for (int t = 0; t < panel.t_len(); ++t) {
                if (!panel.valid(i, t)) continue;
                out << panel.series_ids[static_cast<size_t>(i)] << ','
                    << (t - panel.t_offsets[static_cast<size_t>(i)]) << ','
                    << fmt_double(panel.at(i, t)) << '\n';
            }
    } else {
        out << "series_id";
        for (int t = 0; t < panel.t_len(); ++t) out << ",d" << t;
        out << '\n';
        for (int i = 0; i < panel.n(); ++i) {
            out << panel.series_ids[static_cast<size_t>(i)];
            for (int t = 0; t < panel.t_len(); ++t) {
                out << ',';
                if (panel.valid(i, t)) out << fmt_double(panel.at(i, t));
            }
            out << '\n';
        }
    }
    return out.str();
}

void emit_csv_file(const DemandPanel& panel, CsvSchema schema, const std::string& path) {
    atomic_write(path, emit_csv(panel, schema));
}

CovariatePanel ingest_covariates_csv(const std::string& path, const DemandPanel& panel) {
    const auto lines = read_lines(path);
    require(!lines.empty(), "%s: empty file", path.c_str());
    const auto header = split_csv(lines[0]);
    require(header.size() >= 3 && header[0] == "series_id" && header[1] == "t",
            "%s:1: expected header 'series_id,t,<num_*|cat_*>...', got '%s'", path.c_str(),
            lines[0].c_str());

    CovariatePanel cov;
    cov.n = panel.n();
    cov.t_len = panel.t_len();
    std::vector<int> kinds;  // 0 = numeric, 1 = categorical, per data column
    for (size_t c = 2; c < header.size(); ++c) {
        if (header[c].rfind("num_", 0) == 0) {
            cov.numeric_names.push_back(header[c]);
            kinds.push_back(0);
        } else if (header[c].rfind("cat_", 0) == 0) {
            cov.categorical_names.push_back(header[c]);
            kinds.push_back(1);
        } else {
            throw Error(strfmt("%s:1: covariate column '%s' must start with num_ or cat_",
                               path.c_str(), header[c].c_str()));
        }
    }
    const int cn = cov.n_numeric();
    const int cc = cov.n_categorical();
    cov.numeric.assign(static_cast<size_t>(cov.n) * cov.t_len * cn, 0.0);
    cov.categorical.assign(static_cast<size_t>(cov.n) * cov.t_len * cc, -1);
    cov.cardinalities.assign(static_cast<size_t>(cc), 0);

    std::map<std::string, int> id_index;
    for (int i = 0; i < panel.n(); ++i) id_index[panel.series_ids[static_cast<size_t>(i)]] = i;

    for (size_t ln = 1; ln < lines.size(); ++ln) {
        if (lines[ln].empty()) continue;
        const auto f = split_csv(lines[ln]);
        const std::string ctx = strfmt("%s:%zu", path.c_str(), ln + 1);
        require(f.size() == header.size(), "%s: expected %zu fields, got %zu", ctx.c_str(),
                header.size(), f.size());
        const auto it = id_index.find(f[0]);
        require(it != id_index.end(), "%s: unknown series_id '%s'", ctx.c_str(), f[0].c_str());
        const int i = it->second;
        const long t_src = parse_long(f[1], ctx);
        const long col = t_src + panel.t_offsets[static_cast<size_t>(i)];
        require(col >= 0 && col < panel.t_len(), "%s: t=%ld outside panel range for series %s",
                ctx.c_str(), t_src, f[0].c_str());
        int ni = 0, ci = 0;
        for (size_t c = 2; c < f.size(); ++c) {
            if (kinds[c - 2] == 0) {
                cov.numeric[(static_cast<size_t>(i) * cov.t_len + col) * cn + ni] =
                    parse_double(f[c], ctx);
                ++ni;
            } else {
                const long v = parse_long(f[c], ctx);
                require(v >= 0, "%s: categorical value must be >= 0, got %ld", ctx.c_str(), v);
                cov.categorical[(static_cast<size_t>(i) * cov.t_len + col) * cc + ci] =
                    static_cast<int>(v);
                cov.cardinalities[static_cast<size_t>(ci)] = std::max(
                    cov.cardinalities[static_cast<size_t>(ci)], static_cast<int>(v) + 1);
                ++ci;
            }
        }
    }
    // Entries never mentioned in the file map to the reserved unknown code,
    // which sits one past the last observed value.
    for (int i = 0; i < cov.n; ++i)
        for (int t = 0; t < cov.t_len; ++t)
            for (int c = 0; c < cc; ++c) {
                auto& v = cov.categorical[(static_cast<size_t>(i) * cov.t_len + t) * cc + c];
                if (v < 0) v = cov.cardinalities[static_cast<size_t>(c)];
            }
    return cov;
}

}  // namespace invcast
