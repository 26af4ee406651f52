#include "geoadapt/gradcheck.hpp"

#include <cmath>
#include <vector>

namespace geoadapt {

double grad_check(const std::function<ValueRef(Graph&)>& build, ParameterStore& params,
                  double eps) {
  std::vector<Tensor> ad_grads;
  ad_grads.reserve(params.size());
  {
    Graph g;
    ValueRef loss = build(g);
    g.backward(loss);
    for (size_t i = 0; i < params.size(); ++i) ad_grads.push_back(g.param_grad(params.at(i)));
  }

  auto loss_at = [&]() {
    Graph g;
    return g.value(build(g)).scalar_value();
  };

  double worst = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    ParamTensor& p = params.at(pi);
    for (size_t i = 0; i < p.value.numel(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + eps;
      const double up = loss_at();
      p.value[i] = orig - eps;
      const double down = loss_at();
      p.value[i] = orig;
      const double fd = (up - down) / (2.0 * eps);
      const double err = std::abs(ad_grads[pi][i] - fd) / std::max(1.0, std::abs(fd));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace geoadapt
