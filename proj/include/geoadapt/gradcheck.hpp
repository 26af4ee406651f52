#pragma once

#include <functional>

#include "geoadapt/graph.hpp"

namespace geoadapt {

// Central-difference gradient verification. `build` records the forward
// computation against the current parameter values and returns the scalar
// loss node. Returns max over all parameter elements of
// |g_autodiff - g_fd| / max(1, |g_fd|).
double grad_check(const std::function<ValueRef(Graph&)>& build, ParameterStore& params,
                  double eps = 1e-5);

}  // namespace geoadapt
