#include "invcast/objectives.hpp"

#include <cmath>
#include <sstream>

#include "invcast/csvio.hpp"

namespace invcast {

namespace {

double sigmoid_scalar(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double mean_of(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

}  // namespace

void CostBreakdown::aggregate(bool sum_across_series) {
    require(n_series() >= 1, "cost breakdown: no series");
    const double scale = sum_across_series ? 1.0 : 1.0 / static_cast<double>(n_series());
    holding_agg = stockout_agg = order_var_agg = total_agg = 0.0;
    for (int i = 0; i < n_series(); ++i) {
        holding_agg += holding[static_cast<size_t>(i)] * scale;
        stockout_agg += stockout[static_cast<size_t>(i)] * scale;
        order_var_agg += order_var[static_cast<size_t>(i)] * scale;
        total_agg += total[static_cast<size_t>(i)] * scale;
    }
}

double holding_cost(const std::vector<double>& net_inventory, double c_h) {
    require(!net_inventory.empty(), "holding_cost: empty evaluation range");
    double acc = 0.0;
    for (double x : net_inventory) acc += std::max(0.0, x);
    return c_h * acc / static_cast<double>(net_inventory.size());
}

double stockout_cost(const std::vector<double>& net_inventory, double c_s) {
    require(!net_inventory.empty(), "stockout_cost: empty evaluation range");
    double acc = 0.0;
    for (double x : net_inventory) acc += std::max(0.0, -x);
    return c_s * acc / static_cast<double>(net_inventory.size());
}

double order_variance_cost(const std::vector<double>& orders, double c_v) {
    require(!orders.empty(), "order_variance_cost: empty evaluation range");
    const double m = mean_of(orders);
    double acc = 0.0;
    for (double x : orders) acc += (x - m) * (x - m);
    return c_v * acc / static_cast<double>(orders.size());
}

CostBreakdown breakdown_from_traces(const std::vector<InventoryTrace>& traces,
                                    const CostParams& params, bool sum_across_series) {
    require(!traces.empty(), "breakdown: no traces");
    CostBreakdown b;
    for (const InventoryTrace& tr : traces) {
        const double ch = holding_cost(tr.net_inventory, params.holding);
        const double cs = stockout_cost(tr.net_inventory, params.stockout);
        const double cv = order_variance_cost(tr.orders, params.order_variance);
        b.holding.push_back(ch);
        b.stockout.push_back(cs);
        b.order_var.push_back(cv);
        b.total.push_back(ch + cs + cv);
    }
    b.aggregate(sum_across_series);
    return b;
}

double rel(double x, double x_naive) {
    if (x_naive <= 0.0) {
        warn_once(strfmt("rel: naive component is %g, falling back to epsilon denominator", x_naive));
        const double eps = 1e-8;
        return sigmoid_scalar((x - eps) / eps);
    }
    return sigmoid_scalar((x - x_naive) / x_naive);
}

double rrms(const CostBreakdown& own, const CostBreakdown& naive) {
    require(own.n_series() == naive.n_series() && own.n_series() >= 1,
            "rrms: breakdowns cover %d vs %d series", own.n_series(), naive.n_series());
    double acc = 0.0;
    for (int i = 0; i < own.n_series(); ++i) {
        const double rh = rel(own.holding[static_cast<size_t>(i)], naive.holding[static_cast<size_t>(i)]);
        const double rs = rel(own.stockout[static_cast<size_t>(i)], naive.stockout[static_cast<size_t>(i)]);
        const double rv = rel(own.order_var[static_cast<size_t>(i)], naive.order_var[static_cast<size_t>(i)]);
        acc += std::sqrt(rh * rh + rs * rs + rv * rv);
    }
    return acc / static_cast<double>(own.n_series());
}

namespace {

template <typename Term>
double forecast_metric(const ForecastTensor& ft, const DemandPanel& panel, Term term,
                       const char* name) {
    require(ft.n == panel.n() && ft.t_len == panel.t_len(),
            "%s: forecast tensor %dx%d does not match panel %dx%d", name, ft.n, ft.t_len,
            panel.n(), panel.t_len());
    double acc = 0.0;
    long count = 0;
    for (int i = 0; i < ft.n; ++i)
        for (int t = 0; t < ft.t_len; ++t) {
            if (!ft.origin_at(i, t)) continue;
            for (int k = 0; k < ft.k; ++k) {
                const int target = t + k + 1;
                if (target >= panel.t_len() || !panel.valid(i, target)) continue;
                acc += term(panel.at(i, target), ft.at(i, t, k));
                ++count;
            }
        }
    require(count > 0, "%s: no valid (origin, horizon) pairs", name);
    return acc / static_cast<double>(count);
}

}  // namespace

double mse(const ForecastTensor& ft, const DemandPanel& panel) {
    return forecast_metric(
        ft, panel, [](double d, double f) { return (d - f) * (d - f); }, "mse");
}

double smape(const ForecastTensor& ft, const DemandPanel& panel) {
    return forecast_metric(
        ft, panel,
        [](double d, double f) {
            const double den = std::fabs(d) + std::fabs(f);
            return den > 0.0 ? 2.0 * std::fabs(d - f) / den : 0.0;
        },
        "smape");
}

CostNodes cost_nodes(ad::Tape&, const TraceNodes& trace, const CostParams& params) {
    CostNodes c;
    c.holding = ad::mul_const(ad::mean(ad::relu(trace.net_inventory)), params.holding);
    c.stockout =
        ad::mul_const(ad::mean(ad::relu(ad::mul_const(trace.net_inventory, -1.0))), params.stockout);
    c.order_var = ad::mul_const(ad::variance(trace.orders), params.order_variance);
    c.total = ad::add(ad::add(c.holding, c.stockout), c.order_var);
    return c;
}

ad::DiffValue rel_node(ad::Tape&, ad::DiffValue x, double x_naive) {
    double denom = x_naive;
    if (x_naive <= 0.0) {
        warn_once(strfmt("rel: naive component is %g, falling back to epsilon denominator", x_naive));
        denom = 1e-8;
    }
    return ad::sigmoid(ad::mul_const(ad::add_const(x, -denom), 1.0 / denom));
}

ad::DiffValue rrms_node(ad::Tape& tape, const CostNodes& own, double naive_holding,
                        double naive_stockout, double naive_order_var) {
    const ad::DiffValue rh = rel_node(tape, own.holding, naive_holding);
    const ad::DiffValue rs = rel_node(tape, own.stockout, naive_stockout);
    const ad::DiffValue rv = rel_node(tape, own.order_var, naive_order_var);
    return ad::sqrt(ad::add(ad::add(ad::square(rh), ad::square(rs)), ad::square(rv)));
}

std::string metric_report_csv(const std::vector<MetricRow>& rows) {
    std::ostringstream out;
    out << "model,objective,c_h,c_s,c_v,C_h,C_s,C_v,TC,RRMS,MSE,sMAPE\n";
    for (const MetricRow& r : rows) {
        out << r.model << ',' << r.objective << ',' << fmt_double(r.c_h) << ','
            << fmt_double(r.c_s) << ',' << fmt_double(r.c_v) << ',' << fmt_double(r.holding)
            << ',' << fmt_double(r.stockout) << ',' << fmt_double(r.order_var) << ','
            << fmt_double(r.total) << ',' << fmt_double(r.rrms) << ',' << fmt_double(r.mse)
            << ',' << fmt_double(r.smape) << '\n';
    }
    return out.str();
}

}  // namespace invcast
