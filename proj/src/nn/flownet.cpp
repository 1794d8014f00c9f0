#include "flowleak/nn/flownet.hpp"

#include <cmath>

#include "flowleak/ad/ops.hpp"
#include "flowleak/common/error.hpp"
#include "flowleak/common/format.hpp"

namespace flowleak::nn {

using ad::ParamSet;
using ad::Tensor;

void FlowNetSpec::validate() const {
  if (dim < 1) throw ValueError("flownet: bad dim " + std::to_string(dim));
  if (time_embed != 3)
    throw ValueError("flownet: time embedding is fixed at 3 features, got " +
                     std::to_string(time_embed));
  if (hidden.empty()) throw ValueError("flownet: needs at least one hidden width");
  for (int h : hidden)
    if (h < 1) throw ValueError("flownet: bad hidden width " + std::to_string(h));
}

std::string FlowNetSpec::id() const {
  std::string s = "flownet:d" + std::to_string(dim) + ":h";
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(hidden[i]);
  }
  return s;
}

FlowNetSpec FlowNetSpec::from_id(const std::string& id) {
  FlowNetSpec spec;
  auto fail = [&] { throw ParseError("flownet id: cannot parse '" + id + "'"); };
  if (id.rfind("flownet:d", 0) != 0) fail();
  std::size_t hpos = id.find(":h");
  if (hpos == std::string::npos) fail();
  try {
    spec.dim = std::stoi(id.substr(9, hpos - 9));
    spec.hidden.clear();
    std::string rest = id.substr(hpos + 2);
    std::size_t start = 0;
    while (start <= rest.size()) {
      std::size_t pos = rest.find(',', start);
      std::string tok =
          rest.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
      spec.hidden.push_back(std::stoi(tok));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
  } catch (const std::exception&) {
    fail();
  }
  spec.validate();
  return spec;
}

ParamSet flownet_param_structure(const FlowNetSpec& spec) {
  spec.validate();
  ParamSet ps;
  ps.add("in.w", Tensor::zeros({spec.dim, spec.hidden[0]}));
  ps.add("t.w", Tensor::zeros({spec.time_embed, spec.hidden[0]}));
  ps.add("in.b", Tensor::zeros({1, spec.hidden[0]}));
  for (std::size_t i = 1; i < spec.hidden.size(); ++i) {
    std::string p = "fc" + std::to_string(i);
    ps.add(p + ".w", Tensor::zeros({spec.hidden[i - 1], spec.hidden[i]}));
    ps.add(p + ".b", Tensor::zeros({1, spec.hidden[i]}));
  }
  ps.add("out.w", Tensor::zeros({spec.hidden.back(), spec.dim}));
  ps.add("out.b", Tensor::zeros({1, spec.dim}));
  return ps;
}

ParamSet init_flownet(const FlowNetSpec& spec, Rng& rng) {
  ParamSet ps = flownet_param_structure(spec);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& [name, t] = ps.entry(i);
    const auto& shape = t.shape();
    if (shape.size() != 2 || shape[0] == 1) continue;  // biases stay zero
    double s = 1.0 / std::sqrt(static_cast<double>(shape[0]));
    for (double& v : t.mutable_data()) v = rng.uniform(-s, s);
  }
  return ps;
}

namespace {

Tensor time_feature_rows(const std::vector<double>& ts) {
  const double two_pi = 6.283185307179586476925286766559;
  Tensor f = Tensor::zeros({static_cast<int>(ts.size()), 3});
  auto d = f.mutable_data();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (!(ts[i] >= 0.0 && ts[i] <= 1.0))
      throw ValueError("flownet: time " + fmt_g(ts[i]) + " outside [0, 1]");
    d[i * 3 + 0] = ts[i];
    d[i * 3 + 1] = std::sin(two_pi * ts[i]);
    d[i * 3 + 2] = std::cos(two_pi * ts[i]);
  }
  return f;
}

Tensor forward_rows(const FlowNetSpec& spec, const ParamSet& params, const Tensor& x2,
                    const Tensor& tfeat) {
  int bn = x2.shape()[0];
  Tensor ones_col = Tensor::ones({bn, 1});
  Tensor h = ad::add(ad::add(ad::matmul(x2, params.get("in.w")),
                             ad::matmul(tfeat, params.get("t.w"))),
                     ad::matmul(ones_col, params.get("in.b")));
  h = ad::tanh(h);
  for (std::size_t i = 1; i < spec.hidden.size(); ++i) {
    std::string p = "fc" + std::to_string(i);
    h = ad::tanh(ad::add(ad::matmul(h, params.get(p + ".w")),
                         ad::matmul(ones_col, params.get(p + ".b"))));
  }
  return ad::add(ad::matmul(h, params.get("out.w")),
                 ad::matmul(ones_col, params.get("out.b")));
}

Tensor as_rows(const FlowNetSpec& spec, const Tensor& x, bool& was_flat) {
  was_flat = x.ndim() == 1;
  Tensor x2 = was_flat ? ad::reshape(x, {1, spec.dim}) : x;
  if (x2.ndim() != 2 || x2.shape()[1] != spec.dim)
    throw ShapeError("flownet: input " + shape_str(x.shape()) + " does not match dim " +
                     std::to_string(spec.dim));
  return x2;
}

}  // namespace

Tensor forward_flow(const FlowNetSpec& spec, const ParamSet& params, const Tensor& x, double t) {
  bool was_flat = false;
  Tensor x2 = as_rows(spec, x, was_flat);
  Tensor v = forward_rows(spec, params, x2, time_feature_rows(std::vector<double>(
                                                x2.shape()[0], t)));
  return was_flat ? ad::reshape(v, {spec.dim}) : v;
}

Tensor forward_flow_times(const FlowNetSpec& spec, const ParamSet& params, const Tensor& x,
                          const std::vector<double>& ts) {
  bool was_flat = false;
  Tensor x2 = as_rows(spec, x, was_flat);
  if (static_cast<int>(ts.size()) != x2.shape()[0])
    throw ShapeError("flownet: " + std::to_string(ts.size()) + " times for batch " +
                     std::to_string(x2.shape()[0]));
  Tensor v = forward_rows(spec, params, x2, time_feature_rows(ts));
  return was_flat ? ad::reshape(v, {spec.dim}) : v;
}

}  // namespace flowleak::nn
