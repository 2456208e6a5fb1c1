#pragma once

// Independent reference implementations used to pin expected test values.
// These deliberately avoid the library's computation paths: quadrature and
// bisection for the normal inverse CDF, a literal four-dimensional mask for
// the rolling error deviations, plain loops for lead demand, and central
// finite differences for gradients.

#include <functional>
#include <vector>

#include "invcast/common.hpp"
#include "invcast/inventory.hpp"

namespace invcast::testing {

/// Standard normal CDF by composite Simpson quadrature of the density.
double normal_cdf_quadrature(double x);

/// Inverts normal_cdf_quadrature by bisection on [-10, 10].
double inv_cdf_bisection(double p);

/// sigma_e via the literal mask construction: repeat the per-entry squared
/// errors T times, threshold entry times against each t', and divide the
/// masked sums. O(S^2 * L) work and memory.
std::vector<double> mask_sigma_oracle(const SliceValues& slice, int lead_time);

/// Lead demand by naive per-entry loop over a ForecastTensor.
std::vector<double> lead_demand_loop(const ForecastTensor& ft, int lead_time);

/// Central finite difference df/dx_i with step h for a scalar function of a
/// flat vector.
std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                std::vector<double> x, double h = 1e-4);

/// Symmetric relative error with an absolute floor for near-zero pairs.
double rel_err(double a, double b);

/// Random inventory slice: demand in [0, 10), forecast entries in [0, 10),
/// all rows present (n_orders = len).
SliceValues random_slice(Rng& rng, int len, int k, double demand_scale = 10.0);

}  // namespace invcast::testing
