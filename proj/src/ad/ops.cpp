#include "flowleak/ad/ops.hpp"

#include <cmath>
#include <cstddef>
#include <string>

#include "flowleak/common/error.hpp"
#include "flowleak/common/format.hpp"

namespace flowleak::ad {

namespace {

void need_defined(const char* op, const Tensor& t) {
  if (!t.defined()) throw ValueError(std::string(op) + ": undefined tensor");
}

void need_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  need_defined(op, a);
  need_defined(op, b);
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

void need_rank(const char* op, const Tensor& t, std::size_t rank) {
  need_defined(op, t);
  if (t.ndim() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     shape_str(t.shape()));
}

Tensor map1(const char* op, const Tensor& x, double (*f)(double)) {
  need_defined(op, x);
  Tensor out = Tensor::zeros(x.shape());
  auto d = out.mutable_data();
  auto s = x.data();
  for (std::size_t i = 0; i < s.size(); ++i) d[i] = f(s[i]);
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  need_same_shape("add", a, b);
  Tensor out = Tensor::zeros(a.shape());
  auto d = out.mutable_data();
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = da[i] + db[i];
  return record_op("add", std::move(out), {a, b},
                   [](const Tensor& g) { return std::vector<Tensor>{g, g}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  need_same_shape("sub", a, b);
  Tensor out = Tensor::zeros(a.shape());
  auto d = out.mutable_data();
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = da[i] - db[i];
  return record_op("sub", std::move(out), {a, b},
                   [](const Tensor& g) { return std::vector<Tensor>{g, neg(g)}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  need_same_shape("mul", a, b);
  Tensor out = Tensor::zeros(a.shape());
  auto d = out.mutable_data();
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = da[i] * db[i];
  return record_op("mul", std::move(out), {a, b}, [a, b](const Tensor& g) {
    return std::vector<Tensor>{mul(g, b), mul(g, a)};
  });
}

Tensor cmul(const Tensor& a, double c) {
  need_defined("cmul", a);
  Tensor out = Tensor::zeros(a.shape());
  auto d = out.mutable_data();
  auto da = a.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = da[i] * c;
  return record_op("cmul", std::move(out), {a},
                   [c](const Tensor& g) { return std::vector<Tensor>{cmul(g, c)}; });
}

Tensor cadd(const Tensor& a, double c) {
  need_defined("cadd", a);
  Tensor out = Tensor::zeros(a.shape());
  auto d = out.mutable_data();
  auto da = a.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = da[i] + c;
  return record_op("cadd", std::move(out), {a},
                   [](const Tensor& g) { return std::vector<Tensor>{g}; });
}

Tensor neg(const Tensor& a) { return cmul(a, -1.0); }

Tensor smul(const Tensor& s, const Tensor& a) {
  need_defined("smul", s);
  need_defined("smul", a);
  if (s.numel() != 1)
    throw ShapeError("smul: scalar operand has shape " + shape_str(s.shape()));
  double sv = s.at(0);
  Tensor out = Tensor::zeros(a.shape());
  auto d = out.mutable_data();
  auto da = a.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = sv * da[i];
  return record_op("smul", std::move(out), {s, a}, [s, a](const Tensor& g) {
    return std::vector<Tensor>{sum(mul(g, a)), smul(s, g)};
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  need_rank("matmul", a, 2);
  need_rank("matmul", b, 2);
  int m = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2)
    throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  Tensor out = Tensor::zeros({m, n});
  auto d = out.mutable_data();
  auto da = a.data();
  auto db = b.data();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      double av = da[static_cast<std::size_t>(i) * k + p];
      if (av == 0.0) continue;
      const double* brow = &db[static_cast<std::size_t>(p) * n];
      double* drow = &d[static_cast<std::size_t>(i) * n];
      for (int j = 0; j < n; ++j) drow[j] += av * brow[j];
    }
  }
  return record_op("matmul", std::move(out), {a, b}, [a, b](const Tensor& g) {
    return std::vector<Tensor>{matmul(g, transpose(b)), matmul(transpose(a), g)};
  });
}

Tensor transpose(const Tensor& a) {
  need_rank("transpose", a, 2);
  int m = a.shape()[0], n = a.shape()[1];
  Tensor out = Tensor::zeros({n, m});
  auto d = out.mutable_data();
  auto da = a.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      d[static_cast<std::size_t>(j) * m + i] = da[static_cast<std::size_t>(i) * n + j];
  return record_op("transpose", std::move(out), {a},
                   [](const Tensor& g) { return std::vector<Tensor>{transpose(g)}; });
}

namespace {

// Shared shape checks for the convolution family.
void conv_check(const char* op, const Tensor& x, const Tensor& k, bool k_is_kernel) {
  need_rank(op, x, 4);
  need_rank(op, k, 4);
  if (k_is_kernel) {
    if (k.shape()[2] != 3 || k.shape()[3] != 3)
      throw ShapeError(std::string(op) + ": only 3x3 kernels are supported, got " +
                       shape_str(k.shape()));
    if (k.shape()[1] != x.shape()[1])
      throw ShapeError(std::string(op) + ": kernel expects " + std::to_string(k.shape()[1]) +
                       " input channels, image has " + std::to_string(x.shape()[1]));
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& k) {
  conv_check("conv2d", x, k, true);
  int bn = x.shape()[0], ci = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  int co = k.shape()[0];
  Tensor out = Tensor::zeros({bn, co, h, w});
  auto d = out.mutable_data();
  auto dx = x.data();
  auto dk = k.data();
  auto xat = [&](int n, int c, int i, int j) -> double {
    if (i < 0 || j < 0 || i >= h || j >= w) return 0.0;
    return dx[((static_cast<std::size_t>(n) * ci + c) * h + i) * w + j];
  };
  for (int n = 0; n < bn; ++n)
    for (int o = 0; o < co; ++o)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          double acc = 0.0;
          for (int c = 0; c < ci; ++c)
            for (int a = 0; a < 3; ++a)
              for (int b = 0; b < 3; ++b)
                acc += xat(n, c, i + a - 1, j + b - 1) *
                       dk[((static_cast<std::size_t>(o) * ci + c) * 3 + a) * 3 + b];
          d[((static_cast<std::size_t>(n) * co + o) * h + i) * w + j] = acc;
        }
  return record_op("conv2d", std::move(out), {x, k}, [x, k](const Tensor& g) {
    return std::vector<Tensor>{conv2d(g, conv_kernel_flip(k)), conv2d_kernel_grad(x, g)};
  });
}

Tensor conv2d_kernel_grad(const Tensor& x, const Tensor& g) {
  conv_check("conv2d_kernel_grad", x, g, false);
  if (x.shape()[0] != g.shape()[0] || x.shape()[2] != g.shape()[2] ||
      x.shape()[3] != g.shape()[3])
    throw ShapeError("conv2d_kernel_grad: image and adjoint disagree, " + shape_str(x.shape()) +
                     " vs " + shape_str(g.shape()));
  int bn = x.shape()[0], ci = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  int co = g.shape()[1];
  Tensor out = Tensor::zeros({co, ci, 3, 3});
  auto d = out.mutable_data();
  auto dx = x.data();
  auto dg = g.data();
  auto xat = [&](int n, int c, int i, int j) -> double {
    if (i < 0 || j < 0 || i >= h || j >= w) return 0.0;
    return dx[((static_cast<std::size_t>(n) * ci + c) * h + i) * w + j];
  };
  for (int o = 0; o < co; ++o)
    for (int c = 0; c < ci; ++c)
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
          double acc = 0.0;
          for (int n = 0; n < bn; ++n)
            for (int i = 0; i < h; ++i)
              for (int j = 0; j < w; ++j)
                acc += xat(n, c, i + a - 1, j + b - 1) *
                       dg[((static_cast<std::size_t>(n) * co + o) * h + i) * w + j];
          d[((static_cast<std::size_t>(o) * ci + c) * 3 + a) * 3 + b] = acc;
        }
  return record_op("conv2d_kernel_grad", std::move(out), {x, g}, [x, g](const Tensor& q) {
    return std::vector<Tensor>{conv2d(g, conv_kernel_flip(q)), conv2d(x, q)};
  });
}

Tensor conv_kernel_flip(const Tensor& k) {
  need_rank("conv_kernel_flip", k, 4);
  if (k.shape()[2] != 3 || k.shape()[3] != 3)
    throw ShapeError("conv_kernel_flip: expected 3x3 kernel, got " + shape_str(k.shape()));
  int o = k.shape()[0], c = k.shape()[1];
  Tensor out = Tensor::zeros({c, o, 3, 3});
  auto d = out.mutable_data();
  auto dk = k.data();
  for (int i = 0; i < o; ++i)
    for (int j = 0; j < c; ++j)
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
          d[((static_cast<std::size_t>(j) * o + i) * 3 + (2 - a)) * 3 + (2 - b)] =
              dk[((static_cast<std::size_t>(i) * c + j) * 3 + a) * 3 + b];
  return record_op("conv_kernel_flip", std::move(out), {k},
                   [](const Tensor& g) { return std::vector<Tensor>{conv_kernel_flip(g)}; });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
  need_rank("add_channel_bias", x, 4);
  need_rank("add_channel_bias", b, 1);
  int bn = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  if (b.shape()[0] != c)
    throw ShapeError("add_channel_bias: bias " + shape_str(b.shape()) + " vs channels " +
                     std::to_string(c));
  Tensor out = Tensor::zeros(x.shape());
  auto d = out.mutable_data();
  auto dx = x.data();
  auto db = b.data();
  std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int n = 0; n < bn; ++n)
    for (int ch = 0; ch < c; ++ch) {
      std::size_t base = (static_cast<std::size_t>(n) * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) d[base + i] = dx[base + i] + db[ch];
    }
  return record_op("add_channel_bias", std::move(out), {x, b}, [](const Tensor& g) {
    return std::vector<Tensor>{g, channel_sum(g)};
  });
}

Tensor channel_sum(const Tensor& x) {
  need_rank("channel_sum", x, 4);
  int bn = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  Tensor out = Tensor::zeros({c});
  auto d = out.mutable_data();
  auto dx = x.data();
  std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int n = 0; n < bn; ++n)
    for (int ch = 0; ch < c; ++ch) {
      std::size_t base = (static_cast<std::size_t>(n) * c + ch) * hw;
      double acc = 0.0;
      for (std::size_t i = 0; i < hw; ++i) acc += dx[base + i];
      d[ch] += acc;
    }
  std::vector<int> xshape = x.shape();
  return record_op("channel_sum", std::move(out), {x}, [xshape](const Tensor& g) {
    return std::vector<Tensor>{add_channel_bias(Tensor::zeros(xshape), g)};
  });
}

namespace {

// For rules that differentiate through the op's own output: the closure keeps
// the data plus a weak node reference, avoiding a node -> closure -> node
// ownership cycle. The node outlives the closure call by construction.
Tensor set_self_backward(
    Tensor out, std::function<std::vector<Tensor>(const Tensor& y, const Tensor& g)> rule) {
  if (out.on_graph()) {
    Tensor data = out.detached();
    std::weak_ptr<Node> wn = out.node();
    out.node()->backward = [data, wn, rule](const Tensor& g) {
      return rule(attach_node(data, wn.lock()), g);
    };
  }
  return out;
}

}  // namespace

Tensor tanh(const Tensor& x) {
  Tensor y = map1("tanh", x, [](double v) { return std::tanh(v); });
  return set_self_backward(
      record_op("tanh", std::move(y), {x}, nullptr), [](const Tensor& y, const Tensor& g) {
        return std::vector<Tensor>{mul(g, sub(Tensor::ones(y.shape()), mul(y, y)))};
      });
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = map1("sigmoid", x, [](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    double e = std::exp(v);
    return e / (1.0 + e);
  });
  return set_self_backward(
      record_op("sigmoid", std::move(y), {x}, nullptr), [](const Tensor& y, const Tensor& g) {
        return std::vector<Tensor>{mul(g, mul(y, sub(Tensor::ones(y.shape()), y)))};
      });
}

Tensor softplus(const Tensor& x) {
  Tensor y = map1("softplus", x, [](double v) {
    // max(v, 0) + log1p(exp(-|v|)): overflow-free for any v.
    return (v > 0 ? v : 0.0) + std::log1p(std::exp(-std::fabs(v)));
  });
  return record_op("softplus", std::move(y), {x}, [x](const Tensor& g) {
    return std::vector<Tensor>{mul(g, sigmoid(x))};
  });
}

Tensor exp(const Tensor& x) {
  Tensor y = map1("exp", x, [](double v) { return std::exp(v); });
  return set_self_backward(record_op("exp", std::move(y), {x}, nullptr),
                           [](const Tensor& y, const Tensor& g) {
                             return std::vector<Tensor>{mul(g, y)};
                           });
}

Tensor sqrt(const Tensor& x) {
  need_defined("sqrt", x);
  for (double v : x.data())
    if (v <= 0.0) throw ValueError("sqrt: non-positive element " + fmt_g(v));
  Tensor y = map1("sqrt", x, [](double v) { return std::sqrt(v); });
  return set_self_backward(record_op("sqrt", std::move(y), {x}, nullptr),
                           [](const Tensor& y, const Tensor& g) {
                             return std::vector<Tensor>{mul(g, reciprocal(cmul(y, 2.0)))};
                           });
}

Tensor reciprocal(const Tensor& x) {
  need_defined("reciprocal", x);
  for (double v : x.data())
    if (v == 0.0) throw ValueError("reciprocal: zero element");
  Tensor y = map1("reciprocal", x, [](double v) { return 1.0 / v; });
  return set_self_backward(record_op("reciprocal", std::move(y), {x}, nullptr),
                           [](const Tensor& y, const Tensor& g) {
                             return std::vector<Tensor>{neg(mul(g, mul(y, y)))};
                           });
}

Tensor abs(const Tensor& x) {
  need_defined("abs", x);
  Tensor y = Tensor::zeros(x.shape());
  Tensor sign = Tensor::zeros(x.shape());
  auto dy = y.mutable_data();
  auto ds = sign.mutable_data();
  auto dx = x.data();
  for (std::size_t i = 0; i < dx.size(); ++i) {
    dy[i] = std::fabs(dx[i]);
    ds[i] = dx[i] > 0 ? 1.0 : (dx[i] < 0 ? -1.0 : 0.0);
  }
  // sign is a constant: d|x|/dx contributes no curvature here.
  return record_op("abs", std::move(y), {x}, [sign](const Tensor& g) {
    return std::vector<Tensor>{mul(g, sign)};
  });
}

Tensor log_softmax(const Tensor& x) {
  need_rank("log_softmax", x, 2);
  int bn = x.shape()[0], c = x.shape()[1];
  Tensor y = Tensor::zeros(x.shape());
  auto d = y.mutable_data();
  auto dx = x.data();
  for (int i = 0; i < bn; ++i) {
    const double* row = &dx[static_cast<std::size_t>(i) * c];
    double m = row[0];
    for (int j = 1; j < c; ++j) m = std::max(m, row[j]);
    double s = 0.0;
    for (int j = 0; j < c; ++j) s += std::exp(row[j] - m);
    double lse = m + std::log(s);
    double* out = &d[static_cast<std::size_t>(i) * c];
    for (int j = 0; j < c; ++j) out[j] = row[j] - lse;
  }
  int cols = c;
  return set_self_backward(record_op("log_softmax", std::move(y), {x}, nullptr),
                           [cols](const Tensor& y, const Tensor& g) {
                             // Row sums of g broadcast over columns via a ones matrix.
                             Tensor rowsum = matmul(g, Tensor::ones({cols, cols}));
                             return std::vector<Tensor>{sub(g, mul(exp(y), rowsum))};
                           });
}

Tensor sum(const Tensor& x) {
  need_defined("sum", x);
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  std::vector<int> xshape = x.shape();
  return record_op("sum", Tensor::scalar(acc), {x}, [xshape](const Tensor& g) {
    return std::vector<Tensor>{smul(g, Tensor::ones(xshape))};
  });
}

Tensor mean(const Tensor& x) {
  need_defined("mean", x);
  return cmul(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sqnorm(const Tensor& x) { return sum(mul(x, x)); }

Tensor dot(const Tensor& a, const Tensor& b) { return sum(mul(a, b)); }

Tensor reshape(const Tensor& x, const std::vector<int>& shape) {
  need_defined("reshape", x);
  std::size_t n = checked_numel(shape);
  if (n != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  Tensor out = Tensor::from_data(shape, std::vector<double>(x.data().begin(), x.data().end()));
  std::vector<int> orig = x.shape();
  return record_op("reshape", std::move(out), {x}, [orig](const Tensor& g) {
    return std::vector<Tensor>{reshape(g, orig)};
  });
}

Tensor slice1d(const Tensor& x, std::size_t start, std::size_t len) {
  need_rank("slice1d", x, 1);
  if (len < 1 || start + len > x.numel())
    throw ShapeError("slice1d: [" + std::to_string(start) + ", " + std::to_string(start + len) +
                     ") out of range for length " + std::to_string(x.numel()));
  auto s = x.data();
  Tensor out = Tensor::from_data({static_cast<int>(len)},
                                 std::vector<double>(s.begin() + start, s.begin() + start + len));
  std::size_t total = x.numel();
  return record_op("slice1d", std::move(out), {x}, [start, total](const Tensor& g) {
    return std::vector<Tensor>{embed1d(g, start, total)};
  });
}

Tensor embed1d(const Tensor& x, std::size_t start, std::size_t total) {
  need_rank("embed1d", x, 1);
  if (start + x.numel() > total)
    throw ShapeError("embed1d: [" + std::to_string(start) + ", " +
                     std::to_string(start + x.numel()) + ") out of range for length " +
                     std::to_string(total));
  Tensor out = Tensor::zeros({static_cast<int>(total)});
  auto d = out.mutable_data();
  auto s = x.data();
  for (std::size_t i = 0; i < s.size(); ++i) d[start + i] = s[i];
  std::size_t len = x.numel();
  return record_op("embed1d", std::move(out), {x}, [start, len](const Tensor& g) {
    return std::vector<Tensor>{slice1d(g, start, len)};
  });
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ValueError("concat: no parts");
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    need_rank("concat", p, 1);
    total += p.numel();
  }
  Tensor out = Tensor::zeros({static_cast<int>(total)});
  auto d = out.mutable_data();
  std::size_t off = 0;
  std::vector<std::size_t> offsets(parts.size());
  std::vector<std::size_t> lens(parts.size());
  for (std::size_t i = 0; i < parts.size(); ++i) {
    auto s = parts[i].data();
    offsets[i] = off;
    lens[i] = s.size();
    for (std::size_t j = 0; j < s.size(); ++j) d[off + j] = s[j];
    off += s.size();
  }
  return record_op("concat", std::move(out), parts, [offsets, lens](const Tensor& g) {
    std::vector<Tensor> gs;
    gs.reserve(offsets.size());
    for (std::size_t i = 0; i < offsets.size(); ++i)
      gs.push_back(slice1d(g, offsets[i], lens[i]));
    return gs;
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  need_same_shape("div", a, b);
  return mul(a, reciprocal(b));
}

}  // namespace flowleak::ad
