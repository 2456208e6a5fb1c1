#include "invcast/inventory.hpp"

#include <cmath>
#include <sstream>

#include "invcast/csvio.hpp"

namespace invcast {

void CostParams::validate() const {
    require(holding >= 0.0 && stockout >= 0.0 && order_variance >= 0.0,
            "cost params: unit costs must be >= 0 (got %g, %g, %g)", holding, stockout,
            order_variance);
    require(service_level > 0.0 && service_level < 1.0,
            "cost params: service level must lie in (0,1), got %g", service_level);
    require(lead_time >= 1, "cost params: lead time must be >= 1, got %d", lead_time);
}

double CostParams::service_z() const { return inv_norm_cdf(service_level); }

double inv_norm_cdf(double p) {
    require(p > 0.0 && p < 1.0, "inv_norm_cdf: p must lie in (0,1), got %g", p);

    // Acklam's rational approximation, then one Newton step against the
    // erfc-based CDF. p = 0.5 maps to exactly 0.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    const double err = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(6.283185307179586476925286766559);
    x -= err / pdf;
    return x;
}

namespace {

void check_slice(int s_len, int n_orders, const std::vector<size_t>& row_sizes, int lead_time) {
    require(s_len >= 1, "inventory: empty slice");
    require(n_orders >= 1 && n_orders <= s_len,
            "inventory: n_orders=%d must lie in [1, slice length %d]", n_orders, s_len);
    require(s_len <= n_orders + lead_time,
            "inventory: slice length %d exceeds n_orders+L=%d; net inventory would need "
            "forecasts that were never made",
            s_len, n_orders + lead_time);
    for (size_t s = 0; s < row_sizes.size(); ++s)
        require(static_cast<int>(row_sizes[s]) >= lead_time,
                "inventory: forecast row %zu has %zu entries, lead time %d requires at least that many",
                s, row_sizes[s], lead_time);
}

}  // namespace

std::vector<double> forecast_error_std(const SliceValues& slice, int lead_time) {
    const int s_len = slice.len();
    const int n_orders = slice.n_orders();
    std::vector<double> sq_by_target(static_cast<size_t>(s_len), 0.0);
    std::vector<int> cnt_by_target(static_cast<size_t>(s_len), 0);
    for (int s = 0; s < n_orders; ++s)
        for (int k = 0; k < lead_time; ++k) {
            const int target = s + k + 1;
            if (target >= s_len || !slice.demand_valid[static_cast<size_t>(target)]) continue;
            const double e =
                slice.demand[static_cast<size_t>(target)] - slice.rows[static_cast<size_t>(s)][static_cast<size_t>(k)];
            sq_by_target[static_cast<size_t>(target)] += e * e;
            cnt_by_target[static_cast<size_t>(target)] += 1;
        }
    std::vector<double> sigma(static_cast<size_t>(s_len), 0.0);
    double run_sq = 0.0;
    long run_cnt = 0;
    for (int t = 0; t < s_len; ++t) {
        run_sq += sq_by_target[static_cast<size_t>(t)];
        run_cnt += cnt_by_target[static_cast<size_t>(t)];
        sigma[static_cast<size_t>(t)] = run_cnt > 0 ? std::sqrt(run_sq / static_cast<double>(run_cnt)) : 0.0;
    }
    return sigma;
}

std::vector<double> safety_stock(const std::vector<double>& error_std, double service_level) {
    const double z = inv_norm_cdf(service_level);
    std::vector<double> ss(error_std.size(), 0.0);
    for (size_t t = 0; t < ss.size(); ++t) ss[t] = z * error_std[t];
    return ss;
}

InventoryTrace simulate_recursive(const SliceValues& slice, const CostParams& params) {
    params.validate();
    const int s_len = slice.len();
    const int n_orders = slice.n_orders();
    const int lead = params.lead_time;
    {
        std::vector<size_t> sizes;
        for (const auto& r : slice.rows) sizes.push_back(r.size());
        check_slice(s_len, n_orders, sizes, lead);
    }
    require(slice.demand_valid.size() == slice.demand.size(),
            "inventory: demand validity size mismatch");

    const std::vector<double> ss_vec =
        safety_stock(forecast_error_std(slice, lead), params.service_level);

    InventoryTrace tr;
    tr.orders.assign(static_cast<size_t>(n_orders), 0.0);
    tr.net_inventory.assign(static_cast<size_t>(s_len), 0.0);
    tr.position.assign(static_cast<size_t>(s_len), 0.0);
    tr.wip.assign(static_cast<size_t>(s_len), 0.0);
    tr.safety_stock.assign(static_cast<size_t>(s_len), 0.0);
    tr.lead_forecast.assign(static_cast<size_t>(n_orders), 0.0);

    auto order_at = [&](int t) { return t >= 0 && t < n_orders ? tr.orders[static_cast<size_t>(t)] : 0.0; };

    double ip_prev = 0.0, inv_prev = 0.0, wip_prev = 0.0;
    for (int t = 0; t < s_len; ++t) {
        const double d = slice.demand[static_cast<size_t>(t)];
        const double ss = ss_vec[static_cast<size_t>(t)];
        tr.safety_stock[static_cast<size_t>(t)] = ss;

        const double ip = ip_prev + order_at(t - 1) - d;
        tr.position[static_cast<size_t>(t)] = ip;
        if (t < n_orders) {
            double lead_fc = 0.0;
            for (int k = 0; k < lead; ++k) lead_fc += slice.rows[static_cast<size_t>(t)][static_cast<size_t>(k)];
            tr.lead_forecast[static_cast<size_t>(t)] = lead_fc;
            const double o = lead_fc + ss - ip;
            tr.orders[static_cast<size_t>(t)] = o;
            if (o < 0.0) ++tr.negative_orders;
        }
        const double inv = inv_prev + order_at(t - lead) - d;
        tr.net_inventory[static_cast<size_t>(t)] = inv;
        const double wip = wip_prev + order_at(t - 1) - order_at(t - lead);
        tr.wip[static_cast<size_t>(t)] = wip;

        ip_prev = ip;
        inv_prev = inv;
        wip_prev = wip;
    }
    return tr;
}

namespace {

using ad::DiffValue;
using ad::Tape;

/// sigma_e on the tape: scatter realized squared errors into target-time
/// buckets, prefix-sum, divide by counts, and take a guarded sqrt. The
/// 1e-12 inside the sqrt is the only epsilon on the closed-form path; it
/// keeps the gradient finite when errors vanish. Times with no realized
/// error are forced to exactly 0.
DiffValue error_std_nodes(Tape& tape, const SliceDiff& slice, int lead_time) {
    const int s_len = slice.len();
    const int n_orders = slice.n_orders();

    std::vector<int> cnt(static_cast<size_t>(s_len), 0);
    DiffValue acc;
    for (int s = 0; s < n_orders; ++s) {
        std::vector<double> targets(static_cast<size_t>(lead_time), 0.0);
        std::vector<double> mask(static_cast<size_t>(lead_time), 0.0);
        std::vector<int> bins(static_cast<size_t>(lead_time), -1);
        bool any = false;
        for (int k = 0; k < lead_time; ++k) {
            const int target = s + k + 1;
            if (target >= s_len || !(*slice.demand_valid)[static_cast<size_t>(target)]) continue;
            targets[static_cast<size_t>(k)] = (*slice.demand)[static_cast<size_t>(target)];
            mask[static_cast<size_t>(k)] = 1.0;
            bins[static_cast<size_t>(k)] = target;
            cnt[static_cast<size_t>(target)] += 1;
            any = true;
        }
        if (!any) continue;
        DiffValue row = slice.rows[static_cast<size_t>(s)];
        if (row.value().dim(0) > lead_time) row = ad::slice1(row, 0, lead_time);
        const DiffValue err = ad::sub(tape.constant(Tensor::from_vector(std::move(targets))), row);
        const DiffValue masked = ad::mul(ad::square(err), tape.constant(Tensor::from_vector(std::move(mask))));
        const DiffValue bucket = ad::scatter_sum(masked, std::move(bins), s_len);
        acc = acc.valid() ? ad::add(acc, bucket) : bucket;
    }
    if (!acc.valid()) return tape.constant(Tensor::zeros({s_len}));

    std::vector<double> inv_cnt(static_cast<size_t>(s_len), 0.0);
    std::vector<double> nonzero(static_cast<size_t>(s_len), 0.0);
    long running = 0;
    for (int t = 0; t < s_len; ++t) {
        running += cnt[static_cast<size_t>(t)];
        if (running > 0) {
            inv_cnt[static_cast<size_t>(t)] = 1.0 / static_cast<double>(running);
            nonzero[static_cast<size_t>(t)] = 1.0;
        }
    }
    const DiffValue mean_sq =
        ad::mul(ad::cumsum(acc), tape.constant(Tensor::from_vector(std::move(inv_cnt))));
    const DiffValue guarded = ad::sqrt(ad::add_const(mean_sq, 1e-12));
    return ad::mul(guarded, tape.constant(Tensor::from_vector(std::move(nonzero))));
}

}  // namespace

TraceNodes closed_form_trace(ad::Tape& tape, const SliceDiff& slice, const CostParams& params) {
    params.validate();
    const int s_len = slice.len();
    const int n_orders = slice.n_orders();
    const int lead = params.lead_time;
    {
        std::vector<size_t> sizes;
        for (const auto& r : slice.rows) sizes.push_back(static_cast<size_t>(r.value().dim(0)));
        check_slice(s_len, n_orders, sizes, lead);
    }
    require(slice.demand_valid->size() == slice.demand->size(),
            "inventory: demand validity size mismatch");
    const double z = params.service_z();

    TraceNodes out;
    out.slice_len = s_len;
    out.n_orders = n_orders;

    // Lead-time demand forecast per order step.
    std::vector<DiffValue> lead_parts;
    for (int s = 0; s < n_orders; ++s) {
        DiffValue row = slice.rows[static_cast<size_t>(s)];
        if (row.value().dim(0) > lead) row = ad::slice1(row, 0, lead);
        lead_parts.push_back(ad::sum(row));
    }
    out.lead_forecast = ad::concat1(lead_parts);

    if (z != 0.0) out.error_std = error_std_nodes(tape, slice, lead);

    const DiffValue demand_orders = tape.constant(Tensor::from_vector(std::vector<double>(
        slice.demand->begin(), slice.demand->begin() + n_orders)));

    // o_t = (lead_t - lead_{t-1}) + z (sigma_t - sigma_{t-1}) + d_t
    DiffValue orders = ad::add(
        ad::sub(out.lead_forecast, ad::shift1(out.lead_forecast, 1)), demand_orders);
    if (z != 0.0) {
        const DiffValue sig_o = n_orders == s_len ? out.error_std : ad::slice1(out.error_std, 0, n_orders);
        orders = ad::add(orders, ad::mul_const(ad::sub(sig_o, ad::shift1(sig_o, 1)), z));
    }
    out.orders = orders;

    // i_t = lead_{t-L} + z sigma_{t-L} - sum_{a=t-L+1..t} d_a
    std::vector<double> window_sum(static_cast<size_t>(s_len), 0.0);
    {
        double acc = 0.0;
        for (int t = 0; t < s_len; ++t) {
            acc += (*slice.demand)[static_cast<size_t>(t)];
            if (t - lead >= 0) acc -= (*slice.demand)[static_cast<size_t>(t - lead)];
            window_sum[static_cast<size_t>(t)] = acc;
        }
    }
    DiffValue inv = tape.constant(Tensor::from_vector(std::move(window_sum)));
    if (s_len > lead) {
        const DiffValue zeros_l = tape.constant(Tensor::zeros({lead}));
        const DiffValue lagged_lead =
            ad::concat1({zeros_l, ad::slice1(out.lead_forecast, 0, s_len - lead)});
        DiffValue target = lagged_lead;
        if (z != 0.0) {
            const DiffValue lagged_sig =
                ad::concat1({zeros_l, ad::slice1(out.error_std, 0, s_len - lead)});
            target = ad::add(target, ad::mul_const(lagged_sig, z));
        }
        out.net_inventory = ad::sub(target, inv);
    } else {
        out.net_inventory = ad::mul_const(inv, -1.0);
    }

    // ip_t = lead_{t-1} + z sigma_{t-1} - d_t, defined while orders were
    // still being placed at t-1.
    const int p_len = std::min(s_len, n_orders + 1);
    const DiffValue zero1 = tape.constant(Tensor::zeros({1}));
    DiffValue pos = p_len == 1
                        ? zero1
                        : ad::concat1({zero1, ad::slice1(out.lead_forecast, 0, p_len - 1)});
    if (z != 0.0 && p_len > 1) {
        const DiffValue sig_lag = ad::concat1({zero1, ad::slice1(out.error_std, 0, p_len - 1)});
        pos = ad::add(pos, ad::mul_const(sig_lag, z));
    }
    out.position = ad::sub(pos, tape.constant(Tensor::from_vector(std::vector<double>(
                                    slice.demand->begin(), slice.demand->begin() + p_len))));
    out.wip = ad::sub(out.position, s_len == p_len ? out.net_inventory
                                                   : ad::slice1(out.net_inventory, 0, p_len));
    return out;
}

InventoryTrace trace_values(const TraceNodes& nodes, const SliceDiff& slice,
                            const CostParams& params) {
    const int s_len = nodes.slice_len;
    const int n_orders = nodes.n_orders;
    const double z = params.service_z();

    InventoryTrace tr;
    tr.orders = nodes.orders.value().data();
    tr.net_inventory = nodes.net_inventory.value().data();
    tr.lead_forecast = nodes.lead_forecast.value().data();
    tr.safety_stock.assign(static_cast<size_t>(s_len), 0.0);
    if (z != 0.0) {
        const auto& sig = nodes.error_std.value().data();
        for (int t = 0; t < s_len; ++t) tr.safety_stock[static_cast<size_t>(t)] = z * sig[static_cast<size_t>(t)];
    }
    for (double o : tr.orders)
        if (o < 0.0) ++tr.negative_orders;

    // The closed form covers positions while ordering is live; afterwards
    // the position just drains with demand.
    tr.position = nodes.position.value().data();
    tr.position.resize(static_cast<size_t>(s_len), 0.0);
    for (int t = std::min(s_len, n_orders + 1); t < s_len; ++t)
        tr.position[static_cast<size_t>(t)] =
            tr.position[static_cast<size_t>(t - 1)] - (*slice.demand)[static_cast<size_t>(t)];
    tr.wip.assign(static_cast<size_t>(s_len), 0.0);
    for (int t = 0; t < s_len; ++t)
        tr.wip[static_cast<size_t>(t)] =
            tr.position[static_cast<size_t>(t)] - tr.net_inventory[static_cast<size_t>(t)];
    return tr;
}

std::pair<Tensor, std::vector<uint8_t>> lead_demand(const ForecastTensor& ft, int lead_time) {
    require(ft.k >= lead_time, "lead_demand: forecast depth K=%d is below lead time L=%d", ft.k,
            lead_time);
    Tensor out = Tensor::zeros({ft.n, ft.t_len});
    std::vector<uint8_t> valid(static_cast<size_t>(ft.n) * ft.t_len, 0);
    for (int i = 0; i < ft.n; ++i)
        for (int t = 0; t < ft.t_len; ++t) {
            if (!ft.origin_at(i, t)) continue;
            double acc = 0.0;
            for (int k = 0; k < lead_time; ++k) acc += ft.at(i, t, k);
            out.at(i, t) = acc;
            valid[static_cast<size_t>(i) * ft.t_len + t] = 1;
        }
    return {std::move(out), std::move(valid)};
}

std::pair<Tensor, std::vector<uint8_t>> true_lead_demand(const DemandPanel& panel,
                                                         int lead_time) {
    const int n = panel.n(), t_len = panel.t_len();
    Tensor out = Tensor::zeros({n, t_len});
    std::vector<uint8_t> valid(static_cast<size_t>(n) * t_len, 0);
    for (int i = 0; i < n; ++i)
        for (int t = 0; t < t_len; ++t) {
            if (t + lead_time >= t_len) continue;  // needs demand beyond the series
            double acc = 0.0;
            for (int k = 1; k <= lead_time; ++k) acc += panel.at(i, t + k);
            out.at(i, t) = acc;
            valid[static_cast<size_t>(i) * t_len + t] = 1;
        }
    return {std::move(out), std::move(valid)};
}

std::string trace_csv(const std::vector<InventoryTrace>& traces,
                      const std::vector<std::string>& series_ids, int t_start) {
    require(traces.size() == series_ids.size(), "trace_csv: %zu traces for %zu series ids",
            traces.size(), series_ids.size());
    std::ostringstream out;
    out << "series_id,t,order,net_inventory,inventory_position,wip,safety_stock\n";
    for (size_t i = 0; i < traces.size(); ++i) {
        const InventoryTrace& tr = traces[i];
        for (size_t t = 0; t < tr.net_inventory.size(); ++t) {
            out << series_ids[i] << ',' << (t_start + static_cast<int>(t)) << ','
                << (t < tr.orders.size() ? fmt_double(tr.orders[t]) : std::string()) << ','
                << fmt_double(tr.net_inventory[t]) << ',' << fmt_double(tr.position[t]) << ','
                << fmt_double(tr.wip[t]) << ',' << fmt_double(tr.safety_stock[t]) << '\n';
        }
    }
    return out.str();
}

}  // namespace invcast
