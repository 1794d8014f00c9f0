#include "flowleak/nn/classifier.hpp"

#include <cmath>
#include <cstdio>

#include "flowleak/ad/graph.hpp"
#include "flowleak/ad/ops.hpp"
#include "flowleak/common/error.hpp"
#include "flowleak/common/format.hpp"

namespace flowleak::nn {

using ad::ParamSet;
using ad::Tensor;

void ClassifierSpec::validate() const {
  if (in_c < 1 || in_h < 1 || in_w < 1)
    throw ValueError("classifier: bad input dims " + std::to_string(in_c) + "x" +
                     std::to_string(in_h) + "x" + std::to_string(in_w));
  if (classes < 2) throw ValueError("classifier: needs at least 2 classes");
  if (kind == ClassifierKind::mlp) {
    if (hidden.empty()) throw ValueError("classifier: mlp needs at least one hidden width");
    for (int h : hidden)
      if (h < 1) throw ValueError("classifier: bad hidden width " + std::to_string(h));
  } else {
    if (hidden.size() != 2)
      throw ValueError("classifier: convnet expects exactly two conv channel counts");
    for (int h : hidden)
      if (h < 1) throw ValueError("classifier: bad channel count " + std::to_string(h));
  }
}

std::string ClassifierSpec::id() const {
  std::string s = kind == ClassifierKind::mlp ? "mlp:" : "convnet:";
  s += std::to_string(in_c) + "x" + std::to_string(in_h) + "x" + std::to_string(in_w) + ":h";
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(hidden[i]);
  }
  s += ":c" + std::to_string(classes);
  return s;
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string::npos ? pos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

int parse_int(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(std::string("arch id: bad ") + what + " '" + s + "'");
  }
}

}  // namespace

ClassifierSpec ClassifierSpec::from_id(const std::string& id) {
  auto parts = split(id, ':');
  if (parts.size() != 4) throw ParseError("arch id: expected 4 fields in '" + id + "'");
  ClassifierSpec spec;
  if (parts[0] == "mlp")
    spec.kind = ClassifierKind::mlp;
  else if (parts[0] == "convnet")
    spec.kind = ClassifierKind::convnet;
  else
    throw ParseError("arch id: unknown kind '" + parts[0] + "'");
  auto dims = split(parts[1], 'x');
  if (dims.size() != 3) throw ParseError("arch id: bad input dims '" + parts[1] + "'");
  spec.in_c = parse_int(dims[0], "channel count");
  spec.in_h = parse_int(dims[1], "height");
  spec.in_w = parse_int(dims[2], "width");
  if (parts[2].empty() || parts[2][0] != 'h')
    throw ParseError("arch id: bad hidden field '" + parts[2] + "'");
  spec.hidden.clear();
  for (const auto& h : split(parts[2].substr(1), ','))
    spec.hidden.push_back(parse_int(h, "hidden width"));
  if (parts[3].empty() || parts[3][0] != 'c')
    throw ParseError("arch id: bad class field '" + parts[3] + "'");
  spec.classes = parse_int(parts[3].substr(1), "class count");
  spec.validate();
  return spec;
}

namespace {

void add_dense(ParamSet& ps, const std::string& prefix, int in, int out) {
  ps.add(prefix + ".w", Tensor::zeros({in, out}));
  ps.add(prefix + ".b", Tensor::zeros({1, out}));
}

}  // namespace

ParamSet classifier_param_structure(const ClassifierSpec& spec) {
  spec.validate();
  ParamSet ps;
  if (spec.kind == ClassifierKind::mlp) {
    int in = spec.input_dim();
    for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
      add_dense(ps, "fc" + std::to_string(i), in, spec.hidden[i]);
      in = spec.hidden[i];
    }
    add_dense(ps, "head", in, spec.classes);
  } else {
    int c0 = spec.hidden[0], c1 = spec.hidden[1];
    ps.add("conv0.k", Tensor::zeros({c0, spec.in_c, 3, 3}));
    ps.add("conv0.b", Tensor::zeros({c0}));
    ps.add("conv1.k", Tensor::zeros({c1, c0, 3, 3}));
    ps.add("conv1.b", Tensor::zeros({c1}));
    add_dense(ps, "head", c1 * spec.in_h * spec.in_w, spec.classes);
  }
  return ps;
}

ParamSet init_classifier(const ClassifierSpec& spec, Rng& rng) {
  ParamSet ps = classifier_param_structure(spec);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& [name, t] = ps.entry(i);
    const auto& shape = t.shape();
    double fan_in;
    if (shape.size() == 4)
      fan_in = static_cast<double>(shape[1]) * shape[2] * shape[3];  // conv kernel
    else if (shape.size() == 2 && shape[0] > 1)
      fan_in = static_cast<double>(shape[0]);  // dense weight
    else
      continue;  // biases stay zero
    double s = 1.0 / std::sqrt(fan_in);
    auto d = t.mutable_data();
    for (double& v : d) v = rng.uniform(-s, s);
  }
  return ps;
}

namespace {

// x (B, in) @ w (in, out) + broadcast bias via a ones column.
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  int bn = x.shape()[0];
  return ad::add(ad::matmul(x, w), ad::matmul(Tensor::ones({bn, 1}), b));
}

void check_batch(const ClassifierSpec& spec, const Tensor& batch) {
  if (batch.ndim() != 4 || batch.shape()[1] != spec.in_c || batch.shape()[2] != spec.in_h ||
      batch.shape()[3] != spec.in_w)
    throw ShapeError("classifier: batch " + shape_str(batch.shape()) + " does not match input " +
                     std::to_string(spec.in_c) + "x" + std::to_string(spec.in_h) + "x" +
                     std::to_string(spec.in_w));
}

Tensor hidden_stack(const ClassifierSpec& spec, const ParamSet& params, const Tensor& batch) {
  check_batch(spec, batch);
  int bn = batch.shape()[0];
  if (spec.kind == ClassifierKind::mlp) {
    Tensor h = ad::reshape(batch, {bn, spec.input_dim()});
    for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
      std::string p = "fc" + std::to_string(i);
      h = ad::tanh(dense(h, params.get(p + ".w"), params.get(p + ".b")));
    }
    return h;
  }
  Tensor h = ad::tanh(ad::add_channel_bias(ad::conv2d(batch, params.get("conv0.k")),
                                           params.get("conv0.b")));
  h = ad::tanh(ad::add_channel_bias(ad::conv2d(h, params.get("conv1.k")), params.get("conv1.b")));
  return ad::reshape(h, {bn, spec.hidden[1] * spec.in_h * spec.in_w});
}

}  // namespace

int feature_dim(const ClassifierSpec& spec) {
  return spec.kind == ClassifierKind::mlp ? spec.hidden.back()
                                          : spec.hidden[1] * spec.in_h * spec.in_w;
}

Tensor forward_features(const ClassifierSpec& spec, const ParamSet& params, const Tensor& batch) {
  return hidden_stack(spec, params, batch);
}

Tensor forward_classifier(const ClassifierSpec& spec, const ParamSet& params,
                          const Tensor& batch) {
  Tensor h = hidden_stack(spec, params, batch);
  return dense(h, params.get("head.w"), params.get("head.b"));
}

Tensor cross_entropy(const ad::Tensor& logits, const std::vector<int>& labels) {
  if (logits.ndim() != 2)
    throw ShapeError("cross_entropy: logits must be 2-D, got " + shape_str(logits.shape()));
  int bn = logits.shape()[0], c = logits.shape()[1];
  if (static_cast<int>(labels.size()) != bn)
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                     std::to_string(bn));
  Tensor onehot = Tensor::zeros({bn, c});
  auto d = onehot.mutable_data();
  for (int i = 0; i < bn; ++i) {
    if (labels[i] < 0 || labels[i] >= c)
      throw ValueError("cross_entropy: label " + std::to_string(labels[i]) +
                       " outside [0, " + std::to_string(c) + ")");
    d[static_cast<std::size_t>(i) * c + labels[i]] = 1.0;
  }
  return ad::cmul(ad::sum(ad::mul(ad::log_softmax(logits), onehot)), -1.0 / bn);
}

Tensor cross_entropy_soft(const ad::Tensor& logits, const ad::Tensor& targets) {
  if (!logits.same_shape(targets))
    throw ShapeError("cross_entropy_soft: logits " + shape_str(logits.shape()) + " vs targets " +
                     shape_str(targets.shape()));
  int bn = logits.shape()[0];
  return ad::cmul(ad::sum(ad::mul(ad::log_softmax(logits), targets)), -1.0 / bn);
}

Tensor stack_images(const std::vector<Tensor>& images) {
  if (images.empty()) throw ValueError("stack_images: empty batch");
  const auto& s0 = images[0].shape();
  if (s0.size() != 3) throw ShapeError("stack_images: images must be (C, H, W)");
  std::vector<int> shape{static_cast<int>(images.size()), s0[0], s0[1], s0[2]};
  Tensor out = Tensor::zeros(shape);
  auto d = out.mutable_data();
  std::size_t per = images[0].numel();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != s0) throw ShapeError("stack_images: mixed image shapes");
    auto s = images[i].data();
    for (std::size_t j = 0; j < per; ++j) d[i * per + j] = s[j];
  }
  return out;
}

double accuracy(const ClassifierSpec& spec, const ParamSet& params,
                const std::vector<Tensor>& images, const std::vector<int>& labels) {
  if (images.size() != labels.size())
    throw ShapeError("accuracy: image and label counts disagree");
  if (images.empty()) throw ValueError("accuracy: empty evaluation set");
  ad::NoRecord quiet;
  std::size_t hits = 0;
  const std::size_t chunk = 256;
  for (std::size_t start = 0; start < images.size(); start += chunk) {
    std::size_t stop = std::min(images.size(), start + chunk);
    std::vector<Tensor> part(images.begin() + start, images.begin() + stop);
    Tensor logits = forward_classifier(spec, params, stack_images(part));
    int c = logits.shape()[1];
    for (std::size_t i = 0; i < part.size(); ++i) {
      int best = 0;
      for (int j = 1; j < c; ++j)
        if (logits.at(i * c + j) > logits.at(i * c + best)) best = j;
      if (best == labels[start + i]) ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(images.size());
}

}  // namespace flowleak::nn
