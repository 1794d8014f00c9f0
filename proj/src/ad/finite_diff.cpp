#include "flowleak/ad/finite_diff.hpp"

#include <cmath>

#include "flowleak/ad/grad.hpp"
#include "flowleak/ad/graph.hpp"
#include "flowleak/common/error.hpp"

namespace flowleak::ad {

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double h) {
  if (!(h > 0)) throw ValueError("finite_diff_check: step must be positive");

  Tensor g_ad;
  {
    Graph g;
    GraphContext ctx(g);
    Tensor xw = watch(x);
    Tensor y = f(xw);
    if (y.numel() != 1) throw GradError("finite_diff_check: f must be scalar-valued");
    if (!y.all_finite()) throw ValueError("finite_diff_check: f is non-finite at x");
    g_ad = grad(y, {xw})[0];
  }

  auto eval = [&](const Tensor& p) {
    double v = f(p).item();
    if (!std::isfinite(v)) throw ValueError("finite_diff_check: f is non-finite near x");
    return v;
  };

  double worst = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    Tensor xp = x.clone();
    Tensor xm = x.clone();
    xp.mutable_data()[i] += h;
    xm.mutable_data()[i] -= h;
    double g_fd = (eval(xp) - eval(xm)) / (2.0 * h);
    double err = std::fabs(g_ad.at(i) - g_fd) / (std::fabs(g_fd) + 1e-8);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace flowleak::ad
