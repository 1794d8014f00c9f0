#pragma once

#include <functional>

#include "flowleak/ad/tensor.hpp"

namespace flowleak::ad {

// Compares the reverse-mode gradient of f at x against central finite
// differences with step h. Returns the maximum over coordinates of
//   |g_ad - g_fd| / (|g_fd| + 1e-8).
// f must be a pure scalar-valued tensor function. ValueError when any
// evaluation of f is non-finite.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double h);

}  // namespace flowleak::ad
