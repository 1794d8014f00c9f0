#include "flowleak/metrics/metrics.hpp"

#include <cmath>
#include <cstddef>
#include <vector>

#include "doctest.h"
#include "flowleak/ad/finite_diff.hpp"
#include "flowleak/ad/graph.hpp"
#include "flowleak/ad/ops.hpp"
#include "flowleak/common/error.hpp"
#include "flowleak/common/rng.hpp"
#include "flowleak/nn/classifier.hpp"

using namespace flowleak;
using ad::Tensor;

namespace {

// Oracle implementations built independently of the library code paths:
// explicit padded buffers and mean-then-deviation moment passes instead
// of on-the-fly index mirroring and raw second moments.

double ref_mse(const Tensor& a, const Tensor& b) {
  auto pa = a.data();
  auto pb = b.data();
  double acc = 0.0;
  for (std::size_t k = 0; k < pa.size(); ++k) acc += (pa[k] - pb[k]) * (pa[k] - pb[k]);
  return acc / static_cast<double>(pa.size());
}

double ref_psnr(const Tensor& a, const Tensor& b) {
  const double m = ref_mse(a, b);
  return m == 0.0 ? 60.0 : 10.0 * std::log10(1.0 / m);
}

// Pads one channel by `r` on every side, mirroring across the border
// pixel without repeating it.
std::vector<double> ref_pad(const double* src, int h, int w, int r) {
  const int ph = h + 2 * r;
  const int pw = w + 2 * r;
  std::vector<double> out(static_cast<std::size_t>(ph) * pw);
  for (int i = 0; i < ph; ++i) {
    int si = i - r;
    if (si < 0) si = -si;
    if (si >= h) si = 2 * h - 2 - si;
    for (int j = 0; j < pw; ++j) {
      int sj = j - r;
      if (sj < 0) sj = -sj;
      if (sj >= w) sj = 2 * w - 2 - sj;
      out[static_cast<std::size_t>(i) * pw + j] = src[si * w + sj];
    }
  }
  return out;
}

double ref_ssim_window(const std::vector<double>& wa, const std::vector<double>& wb) {
  const double c1 = 0.0001;
  const double c2 = 0.0009;
  const double n = static_cast<double>(wa.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t k = 0; k < wa.size(); ++k) {
    ma += wa[k];
    mb += wb[k];
  }
  ma /= n;
  mb /= n;
  double va = 0.0, vb = 0.0, cab = 0.0;
  for (std::size_t k = 0; k < wa.size(); ++k) {
    va += (wa[k] - ma) * (wa[k] - ma);
    vb += (wb[k] - mb) * (wb[k] - mb);
    cab += (wa[k] - ma) * (wb[k] - mb);
  }
  va /= n;
  vb /= n;
  cab /= n;
  return ((2.0 * ma * mb + c1) * (2.0 * cab + c2)) /
         ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

double ref_ssim(const Tensor& a, const Tensor& b) {
  const auto& s = a.shape();
  const int c = s.size() == 3 ? s[0] : 1;
  const int h = s.size() == 3 ? s[1] : s[0];
  const int w = s.size() == 3 ? s[2] : s[1];
  auto pa = a.data();
  auto pb = b.data();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  double total = 0.0;
  for (int ch = 0; ch < c; ++ch) {
    const double* ca = pa.data() + ch * plane;
    const double* cb = pb.data() + ch * plane;
    if (h < 7 || w < 7) {
      std::vector<double> wa(ca, ca + plane), wb(cb, cb + plane);
      total += ref_ssim_window(wa, wb);
      continue;
    }
    const int r = 3;
    const int pw = w + 2 * r;
    std::vector<double> qa = ref_pad(ca, h, w, r);
    std::vector<double> qb = ref_pad(cb, h, w, r);
    double chan = 0.0;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        std::vector<double> wa, wb;
        for (int di = 0; di < 7; ++di) {
          for (int dj = 0; dj < 7; ++dj) {
            wa.push_back(qa[static_cast<std::size_t>(i + di) * pw + j + dj]);
            wb.push_back(qb[static_cast<std::size_t>(i + di) * pw + j + dj]);
          }
        }
        chan += ref_ssim_window(wa, wb);
      }
    }
    total += chan / static_cast<double>(h * w);
  }
  return total / static_cast<double>(c);
}

double ref_tv(const Tensor& a) {
  const auto& s = a.shape();
  const int c = s.size() == 3 ? s[0] : 1;
  const int h = s.size() == 3 ? s[1] : s[0];
  const int w = s.size() == 3 ? s[2] : s[1];
  auto p = a.data();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  double acc = 0.0;
  std::size_t pairs = 0;
  for (int ch = 0; ch < c; ++ch) {
    const double* x = p.data() + ch * plane;
    for (int i = 0; i + 1 < h; ++i)
      for (int j = 0; j < w; ++j) {
        acc += std::fabs(x[(i + 1) * w + j] - x[i * w + j]);
        ++pairs;
      }
    for (int i = 0; i < h; ++i)
      for (int j = 0; j + 1 < w; ++j) {
        acc += std::fabs(x[i * w + j + 1] - x[i * w + j]);
        ++pairs;
      }
  }
  return acc / static_cast<double>(pairs);
}

Tensor random_image(const std::vector<int>& shape, std::uint64_t seed) {
  Rng rng(seed);
  return Tensor::uniform(shape, 0.0, 1.0, rng);
}

nn::ClassifierSpec tiny_spec() {
  nn::ClassifierSpec spec;
  spec.kind = nn::ClassifierKind::mlp;
  spec.in_c = 1;
  spec.in_h = 4;
  spec.in_w = 4;
  spec.hidden = {6};
  spec.classes = 3;
  return spec;
}

}  // namespace

TEST_CASE("mse basics and shape checking") {
  Tensor a = random_image({2, 5, 5}, 11);
  CHECK(metrics::mse(a, a) == 0.0);
  CHECK(metrics::mse(a, a.clone()) == 0.0);

  Tensor b = random_image({2, 5, 5}, 12);
  CHECK(metrics::mse(a, b) == doctest::Approx(ref_mse(a, b)).epsilon(1e-12));
  CHECK(metrics::mse(a, b) == metrics::mse(b, a));

  CHECK_THROWS_AS(metrics::mse(a, random_image({5, 5}, 1)), ShapeError);
}

TEST_CASE("psnr closed forms") {
  // Every pixel differs by 0.1, so MSE is exactly 0.01 and PSNR 20 dB.
  Tensor a = Tensor::zeros({4, 4});
  Tensor b = Tensor::full({4, 4}, 0.1);
  CHECK(metrics::psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));

  CHECK(metrics::psnr(a, a) == 60.0);
  CHECK(metrics::psnr(b, b.clone()) == 60.0);

  // A tiny but nonzero error stays on the formula branch even above the
  // cap, so the cap value identifies exact matches only.
  Tensor c = a.clone();
  c.mutable_data()[0] = 1e-6;
  CHECK(metrics::psnr(a, c) > 60.0);
  CHECK(metrics::psnr(a, c) == doctest::Approx(10.0 * std::log10(16.0 / 1e-12)).epsilon(1e-9));
}

TEST_CASE("psnr matches an independent evaluation on random pairs") {
  for (std::uint64_t s = 0; s < 6; ++s) {
    Tensor a = random_image({3, 8, 8}, 100 + s);
    Tensor b = random_image({3, 8, 8}, 200 + s);
    CHECK(metrics::psnr(a, b) == doctest::Approx(ref_psnr(a, b)).epsilon(1e-9));
    CHECK(metrics::psnr(a, b) == metrics::psnr(b, a));
  }
}

TEST_CASE("ssim identity and symmetry are exact") {
  Tensor a = random_image({8, 9}, 21);
  CHECK(metrics::ssim(a, a) == 1.0);
  CHECK(metrics::ssim(a, a.clone()) == 1.0);

  Tensor b = random_image({8, 9}, 22);
  CHECK(metrics::ssim(a, b) == metrics::ssim(b, a));

  Tensor small = random_image({4, 5}, 23);
  CHECK(metrics::ssim(small, small) == 1.0);
}

TEST_CASE("ssim separates constant black from constant white") {
  Tensor black = Tensor::zeros({8, 8});
  Tensor white = Tensor::ones({8, 8});
  const double got = metrics::ssim(black, white);
  // Means 0 and 1 with zero variance in every window collapse the local
  // score to C1 / (1 + C1).
  CHECK(got == doctest::Approx(0.0001 / 1.0001).epsilon(1e-12));
  CHECK(got < 0.01);
}

TEST_CASE("ssim matches an independent reimplementation") {
  const std::vector<std::vector<int>> shapes = {{8, 8}, {3, 9, 9}, {12, 16}, {2, 7, 10}};
  std::uint64_t seed = 300;
  for (const auto& shape : shapes) {
    Tensor a = random_image(shape, seed++);
    Tensor b = random_image(shape, seed++);
    CHECK(metrics::ssim(a, b) == doctest::Approx(ref_ssim(a, b)).epsilon(1e-9));
    // Correlated pair: reconstruction-like, mostly similar.
    Tensor c = a.clone();
    {
      auto m = c.mutable_data();
      Rng rng(seed++);
      for (auto& v : m) v = std::min(1.0, std::max(0.0, v + rng.uniform(-0.1, 0.1)));
    }
    CHECK(metrics::ssim(a, c) == doctest::Approx(ref_ssim(a, c)).epsilon(1e-9));
    CHECK(metrics::ssim(a, c) > metrics::ssim(a, b));
  }
}

TEST_CASE("ssim stays within its score range") {
  for (std::uint64_t s = 0; s < 8; ++s) {
    Tensor a = random_image({7, 8}, 400 + s);
    Tensor b = random_image({7, 8}, 500 + s);
    const double v = metrics::ssim(a, b);
    CHECK(std::fabs(v) <= 1.0 + 1e-12);
  }
}

TEST_CASE("ssim falls back to one window for images smaller than 7x7") {
  Tensor a = random_image({4, 5}, 31);
  Tensor b = random_image({4, 5}, 32);
  auto pa = a.data();
  auto pb = b.data();
  const double got = metrics::ssim(a, b);
  CHECK(got == doctest::Approx(ref_ssim_window(std::vector<double>(pa.begin(), pa.end()),
                                               std::vector<double>(pb.begin(), pb.end())))
                   .epsilon(1e-12));
}

TEST_CASE("ssim rejects bad shapes") {
  Tensor a = random_image({8, 8}, 41);
  CHECK_THROWS_AS(metrics::ssim(a, random_image({8, 9}, 42)), ShapeError);
  Tensor flat = random_image({64}, 43);
  CHECK_THROWS_AS(metrics::ssim(flat, flat), ShapeError);
}

TEST_CASE("ssim of a multichannel pair averages the per-channel scores") {
  Tensor a = random_image({3, 8, 8}, 51);
  Tensor b = random_image({3, 8, 8}, 52);
  auto pa = a.data();
  auto pb = b.data();
  double acc = 0.0;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> ca(pa.begin() + c * 64, pa.begin() + (c + 1) * 64);
    std::vector<double> cb(pb.begin() + c * 64, pb.begin() + (c + 1) * 64);
    acc += metrics::ssim(Tensor::from_data({8, 8}, ca), Tensor::from_data({8, 8}, cb));
  }
  CHECK(metrics::ssim(a, b) == doctest::Approx(acc / 3.0).epsilon(1e-12));
}

TEST_CASE("tv closed forms") {
  CHECK(metrics::tv(Tensor::full({5, 6}, 0.3)) == 0.0);

  // Left column 0, right column 1. The four adjacent pairs are two
  // vertical ones with equal values and two horizontal ones across the
  // step, so the mean is (0 + 0 + 1 + 1) / 4.
  Tensor step = Tensor::from_data({2, 2}, {0.0, 1.0, 0.0, 1.0});
  CHECK(metrics::tv(step) == 0.5);

  CHECK_THROWS_AS(metrics::tv(Tensor::ones({1, 4})), ShapeError);
  CHECK_THROWS_AS(metrics::tv(Tensor::ones({16})), ShapeError);
}

TEST_CASE("tv ignores global intensity shifts") {
  // Dyadic values keep the shifted subtraction exact, so the scores
  // match bit for bit.
  Rng rng(61);
  std::vector<double> vals(48);
  for (auto& v : vals) v = static_cast<double>(rng.below(128)) / 256.0;
  Tensor a = Tensor::from_data({3, 4, 4}, vals);
  for (auto& v : vals) v += 0.25;
  Tensor shifted = Tensor::from_data({3, 4, 4}, vals);
  CHECK(metrics::tv(a) == metrics::tv(shifted));
}

TEST_CASE("tv matches a brute-force oracle") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    Tensor a = random_image({3, 5, 7}, 600 + s);
    CHECK(metrics::tv(a) == doctest::Approx(ref_tv(a)).epsilon(1e-12));
  }
  Tensor g = random_image({9, 4}, 700);
  CHECK(metrics::tv(g) == doctest::Approx(ref_tv(g)).epsilon(1e-12));
}

TEST_CASE("tv pools channels with equal weight") {
  Tensor a = random_image({2, 6, 5}, 71);
  auto p = a.data();
  std::vector<double> c0(p.begin(), p.begin() + 30);
  std::vector<double> c1(p.begin() + 30, p.end());
  const double mean_of_channels = 0.5 * (metrics::tv(Tensor::from_data({6, 5}, c0)) +
                                         metrics::tv(Tensor::from_data({6, 5}, c1)));
  CHECK(metrics::tv(a) == doctest::Approx(mean_of_channels).epsilon(1e-12));
}

TEST_CASE("tv_term agrees with tv and is differentiable") {
  Tensor img = random_image({2, 5, 5}, 81);
  {
    ad::NoRecord guard;
    CHECK(metrics::tv_term(img).item() == metrics::tv(img));
  }

  // Keep neighboring values well separated so the absolute values are
  // away from their kinks and central differences are trustworthy.
  std::vector<double> vals(16);
  Rng rng(82);
  for (std::size_t k = 0; k < vals.size(); ++k)
    vals[k] = (static_cast<double>(k % 2 ? k : 15 - k) + rng.uniform(0.1, 0.4)) / 20.0;
  Tensor x = Tensor::from_data({4, 4}, vals);

  auto f = [](const Tensor& probe) { return metrics::tv_term(probe); };
  CHECK(ad::finite_diff_check(f, x, 1e-6) < 1e-3);
}

TEST_CASE("fmse zero cases") {
  nn::ClassifierSpec spec = tiny_spec();
  Rng rng(91);
  ad::ParamSet params = nn::init_classifier(spec, rng);
  Tensor a = random_image({1, 4, 4}, 92);
  CHECK(metrics::fmse(spec, params, a, a) == 0.0);
  CHECK(metrics::fmse(spec, params, a, a.clone()) == 0.0);

  // All-zero weights give constant features, so every pair collapses.
  ad::ParamSet zero = params.unflatten(Tensor::zeros({static_cast<int>(params.total_params())}));
  Tensor b = random_image({1, 4, 4}, 93);
  CHECK(metrics::fmse(spec, zero, a, b) == 0.0);
}

TEST_CASE("fmse equals features plus mse composed by hand") {
  nn::ClassifierSpec spec = tiny_spec();
  Rng rng(94);
  ad::ParamSet params = nn::init_classifier(spec, rng);
  for (std::uint64_t s = 0; s < 4; ++s) {
    Tensor a = random_image({1, 4, 4}, 800 + s);
    Tensor b = random_image({1, 4, 4}, 900 + s);
    ad::NoRecord guard;
    Tensor fa = nn::forward_features(spec, params, nn::stack_images({a}));
    Tensor fb = nn::forward_features(spec, params, nn::stack_images({b}));
    CHECK(metrics::fmse(spec, params, a, b) ==
          doctest::Approx(ref_mse(fa, fb)).epsilon(1e-10));
  }
  CHECK_THROWS_AS(metrics::fmse(spec, params, random_image({1, 4, 4}, 1),
                                random_image({1, 4, 5}, 2)),
                  ShapeError);
}

TEST_CASE("compute_panel bundles the individual metrics") {
  nn::ClassifierSpec spec = tiny_spec();
  Rng rng(95);
  ad::ParamSet params = nn::init_classifier(spec, rng);
  Tensor target = random_image({1, 4, 4}, 96);
  Tensor recon = random_image({1, 4, 4}, 97);

  metrics::MetricPanel p = metrics::compute_panel(spec, params, recon, target);
  CHECK(p.mse == metrics::mse(recon, target));
  CHECK(p.psnr == metrics::psnr(recon, target));
  CHECK(p.ssim == metrics::ssim(recon, target));
  CHECK(p.tv == metrics::tv(recon));
  CHECK(p.fmse == metrics::fmse(spec, params, recon, target));

  metrics::MetricPanel q = metrics::compute_panel(spec, params, recon, target);
  CHECK(p.psnr == q.psnr);
  CHECK(p.ssim == q.ssim);
  CHECK(p.fmse == q.fmse);

  metrics::MetricPanel self = metrics::compute_panel(spec, params, target, target);
  CHECK(self.mse == 0.0);
  CHECK(self.psnr == 60.0);
  CHECK(self.ssim == 1.0);
  CHECK(self.fmse == 0.0);
}
