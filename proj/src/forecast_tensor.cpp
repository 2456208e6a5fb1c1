#include "invcast/forecast_tensor.hpp"

#include <map>
#include <sstream>

#include "invcast/csvio.hpp"

namespace invcast {

ForecastTensor ForecastTensor::make(int n, int t_len, int k, HorizonKind kind) {
    require(n >= 1 && t_len >= 1 && k >= 1, "forecast tensor: bad shape %dx%dx%d", n, t_len, k);
    ForecastTensor ft;
    ft.n = n;
    ft.t_len = t_len;
    ft.k = k;
    ft.kind = kind;
    ft.values.assign(static_cast<size_t>(n) * t_len * k, 0.0);
    ft.origin.assign(static_cast<size_t>(n) * t_len, 0);
    return ft;
}

std::string forecast_csv(const ForecastTensor& ft, const DemandPanel& panel) {
    require(ft.n == panel.n() && ft.t_len == panel.t_len(),
            "forecast csv: tensor %dx%d does not match panel %dx%d", ft.n, ft.t_len, panel.n(),
            panel.t_len());
    std::ostringstream out;
    out << "series_id,t,k,forecast\n";
    for (int i = 0; i < ft.n; ++i)
        for (int t = 0; t < ft.t_len; ++t) {
            if (!ft.origin_at(i, t)) continue;
            for (int k = 0; k < ft.k; ++k)
                out << panel.series_ids[static_cast<size_t>(i)] << ','
                    << (t - panel.t_offsets[static_cast<size_t>(i)]) << ',' << (k + 1) << ','
                    << fmt_double(ft.at(i, t, k)) << '\n';
        }
    return out.str();
}

void write_forecast_csv(const ForecastTensor& ft, const DemandPanel& panel,
                        const std::string& path) {
    atomic_write(path, forecast_csv(ft, panel));
}

ForecastTensor read_forecast_csv(const std::string& path, const DemandPanel& panel) {
    const auto lines = read_lines(path);
    require(!lines.empty(), "%s: empty file", path.c_str());
    require(split_csv(lines[0]) ==
                std::vector<std::string>({"series_id", "t", "k", "forecast"}),
            "%s:1: expected header 'series_id,t,k,forecast', got '%s'", path.c_str(),
            lines[0].c_str());

    std::map<std::string, int> id_index;
    for (int i = 0; i < panel.n(); ++i) id_index[panel.series_ids[static_cast<size_t>(i)]] = i;

    struct Entry {
        int i, t, k;
        double v;
    };
    std::vector<Entry> entries;
    int max_k = 0;
    for (size_t ln = 1; ln < lines.size(); ++ln) {
        if (lines[ln].empty()) continue;
        const auto f = split_csv(lines[ln]);
        const std::string ctx = strfmt("%s:%zu", path.c_str(), ln + 1);
        require(f.size() == 4, "%s: expected 4 fields, got %zu", ctx.c_str(), f.size());
        const auto it = id_index.find(f[0]);
        require(it != id_index.end(), "%s: unknown series_id '%s'", ctx.c_str(), f[0].c_str());
        const int i = it->second;
        const long t_src = parse_long(f[1], ctx);
        const long col = t_src + panel.t_offsets[static_cast<size_t>(i)];
        require(col >= 0 && col < panel.t_len(), "%s: t=%ld outside panel range", ctx.c_str(),
                t_src);
        const int k = static_cast<int>(parse_long(f[2], ctx));
        require(k >= 1, "%s: k must be >= 1, got %d", ctx.c_str(), k);
        entries.push_back({i, static_cast<int>(col), k, parse_double(f[3], ctx)});
        max_k = std::max(max_k, k);
    }
    require(!entries.empty(), "%s: no forecast rows", path.c_str());

    ForecastTensor ft = ForecastTensor::make(panel.n(), panel.t_len(), max_k, HorizonKind::Lead);
    std::vector<uint8_t> seen(static_cast<size_t>(panel.n()) * panel.t_len() * max_k, 0);
    for (const Entry& e : entries) {
        auto& flag = seen[(static_cast<size_t>(e.i) * panel.t_len() + e.t) * max_k + (e.k - 1)];
        require(!flag, "%s: duplicate forecast for (series %s, t=%d, k=%d)", path.c_str(),
                panel.series_ids[static_cast<size_t>(e.i)].c_str(),
                e.t - panel.t_offsets[static_cast<size_t>(e.i)], e.k);
        flag = 1;
        ft.at(e.i, e.t, e.k - 1) = e.v;
        ft.set_origin(e.i, e.t);
    }
    // Every announced origin must carry the full horizon.
    for (int i = 0; i < ft.n; ++i)
        for (int t = 0; t < ft.t_len; ++t) {
            if (!ft.origin_at(i, t)) continue;
            for (int k = 0; k < max_k; ++k)
                require(seen[(static_cast<size_t>(i) * ft.t_len + t) * max_k + k],
                        "%s: series %s origin t=%d is missing horizon k=%d", path.c_str(),
                        panel.series_ids[static_cast<size_t>(i)].c_str(),
                        t - panel.t_offsets[static_cast<size_t>(i)], k + 1);
        }
    return ft;
}

}  // namespace invcast
