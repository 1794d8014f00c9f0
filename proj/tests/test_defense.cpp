#include "flowleak/defense/defense.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "doctest.h"
#include "flowleak/ad/ops.hpp"
#include "flowleak/common/error.hpp"
#include "flowleak/common/rng.hpp"
#include "flowleak/fl/client.hpp"
#include "flowleak/fl/fedavg.hpp"
#include "flowleak/nn/classifier.hpp"

using namespace flowleak;
using ad::Tensor;
using defense::DefenseKind;
using defense::DefenseSpec;

namespace {

DefenseSpec make_spec(DefenseKind kind, double parameter, std::uint64_t seed = 0) {
  DefenseSpec s;
  s.kind = kind;
  s.parameter = parameter;
  s.seed = seed;
  return s;
}

Tensor random_update(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from_data({static_cast<int>(n)}, std::move(v));
}

// Sort-based selection oracle: the zeroed set must be exactly the first
// ceil(frac*n) positions of the magnitude-then-index ordering.
std::vector<double> ref_sparsify(const std::vector<double>& in, double fraction) {
  const std::size_t n = in.size();
  std::vector<std::pair<double, std::size_t>> keyed(n);
  for (std::size_t i = 0; i < n; ++i) keyed[i] = {std::fabs(in[i]), i};
  std::stable_sort(keyed.begin(), keyed.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::size_t k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
  k = std::min(k, n);
  std::vector<double> out = in;
  for (std::size_t i = 0; i < k; ++i) out[keyed[i].second] = 0.0;
  return out;
}

}  // namespace

TEST_CASE("defense kind names round trip") {
  for (DefenseKind k : {DefenseKind::none, DefenseKind::gaussian_noise, DefenseKind::clipping,
                        DefenseKind::sparsification}) {
    CHECK(defense::defense_kind_from_name(defense::defense_kind_name(k)) == k);
  }
  CHECK_THROWS_AS(defense::defense_kind_from_name("dropout"), ParseError);
}

TEST_CASE("defense specs validate their parameter") {
  CHECK_NOTHROW(make_spec(DefenseKind::none, 0.0).validate());
  CHECK_NOTHROW(make_spec(DefenseKind::gaussian_noise, 0.0).validate());
  CHECK_NOTHROW(make_spec(DefenseKind::clipping, 0.05).validate());
  CHECK_NOTHROW(make_spec(DefenseKind::sparsification, 1.0).validate());

  CHECK_THROWS_AS(make_spec(DefenseKind::gaussian_noise, -1e-6).validate(), ValueError);
  CHECK_THROWS_AS(make_spec(DefenseKind::clipping, 0.0).validate(), ValueError);
  CHECK_THROWS_AS(make_spec(DefenseKind::clipping, -0.05).validate(), ValueError);
  CHECK_THROWS_AS(make_spec(DefenseKind::sparsification, 1.5).validate(), ValueError);
  CHECK_THROWS_AS(make_spec(DefenseKind::sparsification, -0.1).validate(), ValueError);
}

TEST_CASE("identity defenses return the input tensor") {
  Tensor d = random_update(20, 5);
  Tensor none = defense::apply_defense(d, make_spec(DefenseKind::none, 0.0));
  Tensor quiet = defense::apply_defense(d, make_spec(DefenseKind::gaussian_noise, 0.0, 7));
  for (std::size_t i = 0; i < d.numel(); ++i) {
    CHECK(none.at(i) == d.at(i));
    CHECK(quiet.at(i) == d.at(i));
  }
  CHECK(make_spec(DefenseKind::none, 0.0).is_identity());
  CHECK(make_spec(DefenseKind::gaussian_noise, 0.0).is_identity());
  CHECK_FALSE(make_spec(DefenseKind::gaussian_noise, 1e-8).is_identity());
  CHECK_FALSE(make_spec(DefenseKind::clipping, 0.05).is_identity());
}

TEST_CASE("defenses reject malformed updates") {
  DefenseSpec clip = make_spec(DefenseKind::clipping, 0.05);
  CHECK_THROWS_AS(defense::apply_defense(Tensor::ones({2, 3}), clip), ShapeError);
  Tensor bad = Tensor::zeros({4});
  bad.mutable_data()[2] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(defense::apply_defense(bad, clip), ValueError);
}

TEST_CASE("clipping clamps symmetrically and is idempotent") {
  Tensor d = Tensor::from_data({5}, {0.1, -0.1, 0.03, -0.02, 0.05});
  Tensor c = defense::apply_defense(d, make_spec(DefenseKind::clipping, 0.05));
  CHECK(c.at(0) == 0.05);
  CHECK(c.at(1) == -0.05);
  CHECK(c.at(2) == 0.03);
  CHECK(c.at(3) == -0.02);
  CHECK(c.at(4) == 0.05);

  Tensor big = random_update(200, 8);
  Tensor once = defense::apply_defense(big, make_spec(DefenseKind::clipping, 0.3));
  Tensor twice = defense::apply_defense(once, make_spec(DefenseKind::clipping, 0.3));
  for (std::size_t i = 0; i < big.numel(); ++i) {
    CHECK(once.at(i) == twice.at(i));
    CHECK(std::fabs(once.at(i)) <= 0.3);
  }
}

TEST_CASE("sparsification zeroes the smallest magnitudes") {
  Tensor d = Tensor::from_data({4}, {3.0, -1.0, 0.5, -4.0});
  Tensor s = defense::apply_defense(d, make_spec(DefenseKind::sparsification, 0.5));
  CHECK(s.at(0) == 3.0);
  CHECK(s.at(1) == 0.0);
  CHECK(s.at(2) == 0.0);
  CHECK(s.at(3) == -4.0);

  // Equal magnitudes: the earlier index is dropped first.
  Tensor ties = Tensor::from_data({3}, {0.5, -0.5, 0.5});
  Tensor st = defense::apply_defense(ties, make_spec(DefenseKind::sparsification, 1.0 / 3.0));
  CHECK(st.at(0) == 0.0);
  CHECK(st.at(1) == -0.5);
  CHECK(st.at(2) == 0.5);

  Tensor all = defense::apply_defense(d, make_spec(DefenseKind::sparsification, 1.0));
  for (std::size_t i = 0; i < 4; ++i) CHECK(all.at(i) == 0.0);
}

TEST_CASE("sparsification matches a sort-based oracle on random vectors") {
  Rng rng(99);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 1000;
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-2.0, 2.0);
    // A few duplicated magnitudes to exercise the index tie-break.
    for (int k = 0; k < 20; ++k) v[rng.below(n)] = (k % 2 ? 0.25 : -0.25);
    const double fraction = rng.uniform(0.0, 1.0);
    Tensor got = defense::apply_defense(Tensor::from_data({static_cast<int>(n)}, v),
                                        make_spec(DefenseKind::sparsification, fraction));
    std::vector<double> want = ref_sparsify(v, fraction);
    for (std::size_t i = 0; i < n; ++i) CHECK(got.at(i) == want[i]);

    std::size_t zeros_introduced = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (got.at(i) == 0.0 && v[i] != 0.0) ++zeros_introduced;
    const std::size_t expected =
        std::min<std::size_t>(n, static_cast<std::size_t>(std::ceil(fraction * 1000.0)));
    CHECK(zeros_introduced <= expected);
    std::size_t total_zeros = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (got.at(i) == 0.0) ++total_zeros;
    CHECK(total_zeros >= expected);
  }
}

TEST_CASE("keep-mode sparsification retains only the largest entries") {
  Tensor d = Tensor::from_data({4}, {3.0, -1.0, 0.5, -4.0});
  DefenseSpec spec = make_spec(DefenseKind::sparsification, 0.25);
  spec.keep_mode = true;
  Tensor s = defense::apply_defense(d, spec);
  CHECK(s.at(0) == 0.0);
  CHECK(s.at(1) == 0.0);
  CHECK(s.at(2) == 0.0);
  CHECK(s.at(3) == -4.0);
}

TEST_CASE("noise defense is seed-deterministic and mean-centered") {
  Tensor d = random_update(10, 12);
  DefenseSpec spec = make_spec(DefenseKind::gaussian_noise, 0.1, 77);
  Tensor a = defense::apply_defense(d, spec);
  Tensor b = defense::apply_defense(d, spec);
  bool changed = false;
  for (std::size_t i = 0; i < d.numel(); ++i) {
    CHECK(a.at(i) == b.at(i));
    if (a.at(i) != d.at(i)) changed = true;
  }
  CHECK(changed);

  // Across seeds the added noise averages out to the clean update.
  std::vector<double> mean(d.numel(), 0.0);
  const int draws = 1000;
  for (int k = 0; k < draws; ++k) {
    DefenseSpec per_draw = spec;
    per_draw.seed = mix_seed(1234, static_cast<std::uint64_t>(k));
    Tensor noisy = defense::apply_defense(d, per_draw);
    for (std::size_t i = 0; i < d.numel(); ++i) mean[i] += noisy.at(i);
  }
  for (std::size_t i = 0; i < d.numel(); ++i) {
    mean[i] /= draws;
    CHECK(std::fabs(mean[i] - d.at(i)) < 1e-2);
  }
}

TEST_CASE("defense transforms plug into federated rounds") {
  nn::ClassifierSpec spec;
  spec.kind = nn::ClassifierKind::mlp;
  spec.in_c = 1;
  spec.in_h = 4;
  spec.in_w = 4;
  spec.hidden = {8};
  spec.classes = 3;
  Rng rng(31);
  ad::ParamSet init = nn::init_classifier(spec, rng);

  fl::ClientDataset data;
  for (int i = 0; i < 6; ++i) {
    data.images.push_back(Tensor::uniform({1, 4, 4}, 0.0, 1.0, rng));
    data.labels.push_back(static_cast<int>(rng.below(3)));
  }
  fl::LocalTrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 2;
  cfg.lr = 0.05;

  // Identity spec: empty hook, so the run matches the undefended one
  // bit for bit.
  CHECK_FALSE(static_cast<bool>(
      defense::defense_transform(make_spec(DefenseKind::gaussian_noise, 0.0, 9))));
  auto plain = fl::run_global_rounds(spec, init, {data}, cfg, 2, data);
  auto quiet = fl::run_global_rounds(spec, init, {data}, cfg, 2, data,
                                     defense::defense_transform(make_spec(DefenseKind::none, 0.0)));
  Tensor pw = plain[2].global.flatten();
  Tensor qw = quiet[2].global.flatten();
  for (std::size_t i = 0; i < pw.numel(); ++i) CHECK(pw.at(i) == qw.at(i));

  // A live defense changes the trajectory but stays reproducible.
  DefenseSpec noisy = make_spec(DefenseKind::gaussian_noise, 0.05, 42);
  auto run1 = fl::run_global_rounds(spec, init, {data}, cfg, 2, data,
                                    defense::defense_transform(noisy));
  auto run2 = fl::run_global_rounds(spec, init, {data}, cfg, 2, data,
                                    defense::defense_transform(noisy));
  Tensor n1 = run1[2].global.flatten();
  Tensor n2 = run2[2].global.flatten();
  bool differs_from_plain = false;
  for (std::size_t i = 0; i < n1.numel(); ++i) {
    CHECK(n1.at(i) == n2.at(i));
    if (n1.at(i) != pw.at(i)) differs_from_plain = true;
  }
  CHECK(differs_from_plain);

  // Different rounds of the same client draw different noise vectors.
  Tensor base = random_update(12, 3);
  auto hook = defense::defense_transform(noisy);
  Tensor r1 = hook(base, 1, 0);
  Tensor r2 = hook(base, 2, 0);
  Tensor c1 = hook(base, 1, 1);
  bool round_varies = false, client_varies = false;
  for (std::size_t i = 0; i < base.numel(); ++i) {
    if (r1.at(i) != r2.at(i)) round_varies = true;
    if (r1.at(i) != c1.at(i)) client_varies = true;
  }
  CHECK(round_varies);
  CHECK(client_varies);
}
