#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "flowleak/ad/ops.hpp"
#include "flowleak/ad/paramset.hpp"
#include "flowleak/ad/tensor.hpp"
#include "flowleak/common/error.hpp"
#include "flowleak/common/rng.hpp"

using namespace flowleak;
using namespace flowleak::ad;

namespace {

bool bytes_equal(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) return false;
  return std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("factories and element access") {
  Tensor z = Tensor::zeros({2, 3});
  CHECK(z.numel() == 6);
  CHECK(z.shape() == std::vector<int>{2, 3});
  for (std::size_t i = 0; i < 6; ++i) CHECK(z.at(i) == 0.0);

  Tensor f = Tensor::full({2}, 1.5);
  CHECK(f.at(0) == 1.5);
  CHECK(f.at(1) == 1.5);

  Tensor s = Tensor::scalar(-2.0);
  CHECK(s.item() == -2.0);
  CHECK_THROWS_AS((void)z.item(), ShapeError);

  Tensor id = Tensor::eye(3);
  CHECK(id.at(0) == 1.0);
  CHECK(id.at(1) == 0.0);
  CHECK(id.at(4) == 1.0);
  CHECK(id.at(8) == 1.0);

  CHECK_THROWS_AS(Tensor::zeros({}), ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1.0, 2.0}), ShapeError);
}

TEST_CASE("copies share data, clone does not") {
  Tensor a = Tensor::from_data({2}, {1.0, 2.0});
  Tensor b = a;
  b.mutable_data()[0] = 7.0;
  CHECK(a.at(0) == 7.0);
  Tensor c = a.clone();
  c.mutable_data()[0] = -1.0;
  CHECK(a.at(0) == 7.0);
}

TEST_CASE("elementwise op values") {
  Tensor a = Tensor::from_data({3}, {1.0, -2.0, 3.0});
  Tensor b = Tensor::from_data({3}, {0.5, 4.0, -1.0});

  Tensor s = add(a, b);
  CHECK(s.at(0) == 1.5);
  CHECK(s.at(1) == 2.0);
  CHECK(s.at(2) == 2.0);

  Tensor d = sub(a, b);
  CHECK(d.at(0) == 0.5);
  CHECK(d.at(1) == -6.0);
  CHECK(d.at(2) == 4.0);

  Tensor m = mul(a, b);
  CHECK(m.at(0) == 0.5);
  CHECK(m.at(1) == -8.0);
  CHECK(m.at(2) == -3.0);

  Tensor c = cmul(a, 2.0);
  CHECK(c.at(1) == -4.0);
  CHECK(cadd(a, 1.0).at(1) == -1.0);
  CHECK(neg(a).at(2) == -3.0);

  Tensor sm = smul(Tensor::scalar(3.0), a);
  CHECK(sm.at(0) == 3.0);
  CHECK(sm.at(2) == 9.0);

  CHECK_THROWS_AS(add(a, Tensor::zeros({2})), ShapeError);
  CHECK_THROWS_AS(smul(Tensor::zeros({2}), a), ShapeError);
}

TEST_CASE("matmul against hand-computed products") {
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from_data({2, 2}, {5, 6, 7, 8});
  Tensor p = matmul(a, b);
  CHECK(p.at(0) == 19.0);
  CHECK(p.at(1) == 22.0);
  CHECK(p.at(2) == 43.0);
  CHECK(p.at(3) == 50.0);

  // Identity is exact.
  Tensor m = Tensor::from_data({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor im = matmul(Tensor::eye(3), m);
  CHECK(bytes_equal(im, m));

  Tensor t = transpose(Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6}));
  CHECK(t.shape() == std::vector<int>{3, 2});
  CHECK(t.at(0) == 1.0);
  CHECK(t.at(1) == 4.0);
  CHECK(t.at(2) == 2.0);

  CHECK_THROWS_AS(matmul(a, Tensor::zeros({3, 2})), ShapeError);
  CHECK_THROWS_AS(transpose(Tensor::zeros({2})), ShapeError);
}

TEST_CASE("activation values") {
  Tensor x = Tensor::from_data({3}, {0.0, 1.0, -1.0});
  CHECK(ad::tanh(x).at(0) == 0.0);
  CHECK(ad::tanh(x).at(1) == doctest::Approx(std::tanh(1.0)).epsilon(1e-15));
  CHECK(sigmoid(x).at(0) == 0.5);
  CHECK(softplus(x).at(0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  // softplus stays finite and linear-ish for large inputs.
  CHECK(softplus(Tensor::scalar(800.0)).item() == 800.0);
  CHECK(softplus(Tensor::scalar(-800.0)).item() == 0.0);
  CHECK(ad::exp(x).at(1) == doctest::Approx(std::exp(1.0)).epsilon(1e-15));
  CHECK(ad::sqrt(Tensor::scalar(4.0)).item() == 2.0);
  CHECK(reciprocal(Tensor::scalar(4.0)).item() == 0.25);
  CHECK(ad::abs(x).at(2) == 1.0);
  CHECK_THROWS_AS(ad::sqrt(Tensor::scalar(-1.0)), ValueError);
  CHECK_THROWS_AS(reciprocal(Tensor::scalar(0.0)), ValueError);
}

TEST_CASE("log_softmax rows") {
  // Uniform logits give -ln(C) everywhere.
  Tensor u = Tensor::zeros({2, 4});
  Tensor lu = log_softmax(u);
  for (std::size_t i = 0; i < 8; ++i)
    CHECK(lu.at(i) == doctest::Approx(-std::log(4.0)).epsilon(1e-15));

  // Rows exponentiate to a distribution.
  Tensor x = Tensor::from_data({1, 3}, {1.0, 2.0, 3.0});
  Tensor lx = log_softmax(x);
  double total = std::exp(lx.at(0)) + std::exp(lx.at(1)) + std::exp(lx.at(2));
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  // Shift invariance.
  Tensor ls = log_softmax(cadd(x, 100.0));
  for (int i = 0; i < 3; ++i) CHECK(ls.at(i) == doctest::Approx(lx.at(i)).epsilon(1e-12));
}

TEST_CASE("reductions") {
  Tensor x = Tensor::from_data({4}, {1.0, 2.0, 3.0, 4.0});
  CHECK(sum(x).item() == 10.0);
  CHECK(mean(x).item() == 2.5);
  CHECK(sqnorm(x).item() == 30.0);
  Tensor y = Tensor::from_data({4}, {1.0, 0.0, -1.0, 2.0});
  CHECK(dot(x, y).item() == 6.0);
}

TEST_CASE("conv2d neighborhood sums, hand-enumerated") {
  // 3x3 image 1..9, all-ones kernel, zero padding: each output is the sum of
  // the 3x3 neighborhood that falls inside the image.
  Tensor x = Tensor::from_data({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor k = Tensor::ones({1, 1, 3, 3});
  Tensor y = conv2d(x, k);
  std::vector<double> want{12, 21, 16, 27, 45, 33, 24, 39, 28};
  for (std::size_t i = 0; i < 9; ++i) CHECK(y.at(i) == want[i]);

  // Centered delta kernel reproduces the image exactly.
  Tensor delta = Tensor::zeros({1, 1, 3, 3});
  delta.mutable_data()[4] = 1.0;
  CHECK(bytes_equal(conv2d(x, delta), x));

  CHECK_THROWS_AS(conv2d(x, Tensor::ones({1, 1, 2, 2})), ShapeError);
  CHECK_THROWS_AS(conv2d(x, Tensor::ones({1, 2, 3, 3})), ShapeError);
}

TEST_CASE("conv kernel flip is an involution") {
  Rng rng(7);
  Tensor k = Tensor::uniform({2, 3, 3, 3}, -1.0, 1.0, rng);
  Tensor f = conv_kernel_flip(k);
  CHECK(f.shape() == std::vector<int>{3, 2, 3, 3});
  Tensor ff = conv_kernel_flip(f);
  CHECK(bytes_equal(ff, k));
}

TEST_CASE("conv2d_kernel_grad matches a direct correlation") {
  // For a single batch and channel with unit adjoint, each kernel entry
  // accumulates the sum of the padded image over the window offset.
  Tensor x = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor g = Tensor::zeros({1, 1, 2, 2});
  g.mutable_data()[0] = 1.0;  // only output (0,0) active
  Tensor dk = conv2d_kernel_grad(x, g);
  // Window around (0,0): offsets into the zero-padded image.
  std::vector<double> want{0, 0, 0, 0, 1, 2, 0, 3, 4};
  for (std::size_t i = 0; i < 9; ++i) CHECK(dk.at(i) == want[i]);
}

TEST_CASE("channel bias and channel sum") {
  Tensor x = Tensor::from_data({1, 2, 1, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from_data({2}, {10.0, 20.0});
  Tensor y = add_channel_bias(x, b);
  CHECK(y.at(0) == 11.0);
  CHECK(y.at(1) == 12.0);
  CHECK(y.at(2) == 23.0);
  CHECK(y.at(3) == 24.0);
  Tensor cs = channel_sum(x);
  CHECK(cs.at(0) == 3.0);
  CHECK(cs.at(1) == 7.0);
  CHECK_THROWS_AS(add_channel_bias(x, Tensor::zeros({3})), ShapeError);
}

TEST_CASE("shape plumbing") {
  Tensor x = Tensor::from_data({6}, {1, 2, 3, 4, 5, 6});
  Tensor r = reshape(x, {2, 3});
  CHECK(r.shape() == std::vector<int>{2, 3});
  CHECK(r.at(4) == 5.0);
  CHECK_THROWS_AS(reshape(x, {4}), ShapeError);

  Tensor s = slice1d(x, 2, 3);
  CHECK(s.numel() == 3);
  CHECK(s.at(0) == 3.0);
  CHECK(s.at(2) == 5.0);
  CHECK_THROWS_AS(slice1d(x, 4, 3), ShapeError);

  Tensor e = embed1d(s, 1, 5);
  CHECK(e.numel() == 5);
  CHECK(e.at(0) == 0.0);
  CHECK(e.at(1) == 3.0);
  CHECK(e.at(3) == 5.0);
  CHECK(e.at(4) == 0.0);

  Tensor c = concat({slice1d(x, 0, 2), slice1d(x, 4, 2)});
  CHECK(c.numel() == 4);
  CHECK(c.at(0) == 1.0);
  CHECK(c.at(2) == 5.0);
  CHECK_THROWS_AS(concat({}), ValueError);
}

TEST_CASE("ops are deterministic bit for bit") {
  auto pipeline = [] {
    Rng rng(123);
    Tensor a = Tensor::uniform({4, 4}, -1.0, 1.0, rng);
    Tensor b = Tensor::normal({4, 4}, 0.0, 1.0, rng);
    Tensor y = matmul(ad::tanh(a), transpose(sigmoid(b)));
    y = add(y, mul(a, b));
    return log_softmax(y);
  };
  CHECK(bytes_equal(pipeline(), pipeline()));
}

TEST_CASE("finiteness probe") {
  Tensor ok = Tensor::from_data({2}, {1.0, -2.0});
  CHECK(ok.all_finite());
  Tensor bad = Tensor::from_data({2}, {1.0, std::numeric_limits<double>::infinity()});
  CHECK_FALSE(bad.all_finite());
}

TEST_CASE("paramset ordering, lookup and flatten round trip") {
  ParamSet ps;
  ps.add("w", Tensor::from_data({2, 2}, {1, 2, 3, 4}));
  ps.add("b", Tensor::from_data({2}, {5, 6}));
  CHECK(ps.size() == 2);
  CHECK(ps.total_params() == 6);
  CHECK(ps.get("b").at(1) == 6.0);
  CHECK_THROWS_AS(ps.add("w", Tensor::zeros({1})), ValueError);
  CHECK_THROWS_AS((void)ps.get("missing"), ValueError);

  Tensor flat = ps.flatten();
  CHECK(flat.numel() == 6);
  // Entry order, row-major within an entry.
  for (std::size_t i = 0; i < 6; ++i) CHECK(flat.at(i) == static_cast<double>(i + 1));

  ParamSet back = ps.unflatten(flat);
  CHECK(back.same_structure(ps));
  CHECK(bytes_equal(back.get("w"), ps.get("w")));
  CHECK(bytes_equal(back.get("b"), ps.get("b")));

  CHECK_THROWS_AS(ps.unflatten(Tensor::zeros({5})), ShapeError);
}

TEST_CASE("rng determinism and distribution sanity") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng r(1);
  double lo = 1.0, hi = 0.0, acc = 0.0;
  for (int i = 0; i < 10000; ++i) {
    double v = r.uniform01();
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    acc += v;
  }
  CHECK(lo >= 0.0);
  CHECK(hi < 1.0);
  CHECK(acc / 10000.0 == doctest::Approx(0.5).epsilon(0.05));

  double m = 0.0, m2 = 0.0;
  for (int i = 0; i < 10000; ++i) {
    double v = r.normal();
    m += v;
    m2 += v * v;
  }
  m /= 10000.0;
  m2 /= 10000.0;
  CHECK(m == doctest::Approx(0.0).epsilon(1.0).scale(0.05));
  CHECK(m2 == doctest::Approx(1.0).epsilon(0.05));

  // Derived seeds differ.
  CHECK(mix_seed(1, 2) != mix_seed(1, 3));
  CHECK(mix_seed(1, 2) != mix_seed(2, 2));
}
