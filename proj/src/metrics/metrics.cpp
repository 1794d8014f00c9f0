#include "flowleak/metrics/metrics.hpp"

#include <cmath>
#include <cstddef>
#include <vector>

#include "flowleak/ad/graph.hpp"
#include "flowleak/ad/ops.hpp"
#include "flowleak/common/error.hpp"
#include "flowleak/common/format.hpp"

namespace flowleak::metrics {
namespace {

struct ImageDims {
  int c = 0;
  int h = 0;
  int w = 0;
};

ImageDims image_dims(const ad::Tensor& t, const char* what) {
  const auto& s = t.shape();
  if (s.size() == 2) return {1, s[0], s[1]};
  if (s.size() == 3) return {s[0], s[1], s[2]};
  throw ShapeError(std::string(what) + ": expected (H,W) or (C,H,W), got " + shape_str(s));
}

void need_same(const ad::Tensor& a, const ad::Tensor& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

// Reflect an out-of-range index back into [0, n) without repeating the
// edge sample: -1 -> 1, n -> n-2.
int mirror(int i, int n) {
  if (i < 0) i = -i;
  if (i >= n) i = 2 * n - 2 - i;
  return i;
}

constexpr int kSsimWindow = 7;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

double ssim_from_moments(double sa, double sb, double saa, double sbb, double sab, double n) {
  const double mu_a = sa / n;
  const double mu_b = sb / n;
  const double var_a = saa / n - mu_a * mu_a;
  const double var_b = sbb / n - mu_b * mu_b;
  const double cov = sab / n - mu_a * mu_b;
  const double num = (2.0 * mu_a * mu_b + kSsimC1) * (2.0 * cov + kSsimC2);
  const double den = (mu_a * mu_a + mu_b * mu_b + kSsimC1) * (var_a + var_b + kSsimC2);
  return num / den;
}

// One channel, full sliding-window pass. Images here are at least as
// large as the window, so mirror() never needs more than one fold.
double ssim_channel(const double* a, const double* b, int h, int w) {
  const int r = kSsimWindow / 2;
  const double n = static_cast<double>(kSsimWindow * kSsimWindow);
  double total = 0.0;
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
      for (int di = -r; di <= r; ++di) {
        const int ii = mirror(i + di, h);
        for (int dj = -r; dj <= r; ++dj) {
          const int jj = mirror(j + dj, w);
          const double va = a[ii * w + jj];
          const double vb = b[ii * w + jj];
          sa += va;
          sb += vb;
          saa += va * va;
          sbb += vb * vb;
          sab += va * vb;
        }
      }
      total += ssim_from_moments(sa, sb, saa, sbb, sab, n);
    }
  }
  return total / static_cast<double>(h * w);
}

double ssim_channel_global(const double* a, const double* b, int h, int w) {
  double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
  const int n = h * w;
  for (int k = 0; k < n; ++k) {
    sa += a[k];
    sb += b[k];
    saa += a[k] * a[k];
    sbb += b[k] * b[k];
    sab += a[k] * b[k];
  }
  return ssim_from_moments(sa, sb, saa, sbb, sab, static_cast<double>(n));
}

// (H-1, H) forward-difference matrix: row i maps x to x[i+1] - x[i].
ad::Tensor diff_matrix(int n) {
  ad::Tensor d = ad::Tensor::zeros({n - 1, n});
  auto m = d.mutable_data();
  for (int i = 0; i + 1 < n; ++i) {
    m[static_cast<std::size_t>(i) * n + i] = -1.0;
    m[static_cast<std::size_t>(i) * n + i + 1] = 1.0;
  }
  return d;
}

}  // namespace

double mse(const ad::Tensor& a, const ad::Tensor& b) {
  need_same(a, b, "mse");
  if (a.numel() == 0) throw ShapeError("mse: empty tensor");
  auto pa = a.data();
  auto pb = b.data();
  double acc = 0.0;
  for (std::size_t k = 0; k < pa.size(); ++k) {
    const double d = pa[k] - pb[k];
    acc += d * d;
  }
  return acc / static_cast<double>(pa.size());
}

double psnr(const ad::Tensor& a, const ad::Tensor& b) {
  const double m = mse(a, b);
  if (m == 0.0) return 60.0;
  return 10.0 * std::log10(1.0 / m);
}

double ssim(const ad::Tensor& a, const ad::Tensor& b) {
  need_same(a, b, "ssim");
  const ImageDims d = image_dims(a, "ssim");
  auto pa = a.data();
  auto pb = b.data();
  const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
  const bool fits = d.h >= kSsimWindow && d.w >= kSsimWindow;
  double total = 0.0;
  for (int c = 0; c < d.c; ++c) {
    const double* ca = pa.data() + c * plane;
    const double* cb = pb.data() + c * plane;
    total += fits ? ssim_channel(ca, cb, d.h, d.w) : ssim_channel_global(ca, cb, d.h, d.w);
  }
  return total / static_cast<double>(d.c);
}

ad::Tensor tv_term(const ad::Tensor& x) {
  const ImageDims d = image_dims(x, "tv");
  if (d.h < 2 || d.w < 2)
    throw ShapeError("tv: image must be at least 2x2, got " + shape_str(x.shape()));
  const ad::Tensor dv = diff_matrix(d.h);
  const ad::Tensor dh = ad::transpose(diff_matrix(d.w));
  const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
  const ad::Tensor flat = ad::reshape(x, {static_cast<int>(x.numel())});
  ad::Tensor acc = ad::Tensor::scalar(0.0);
  for (int c = 0; c < d.c; ++c) {
    ad::Tensor ch = ad::reshape(ad::slice1d(flat, c * plane, plane), {d.h, d.w});
    acc = ad::add(acc, ad::sum(ad::abs(ad::matmul(dv, ch))));
    acc = ad::add(acc, ad::sum(ad::abs(ad::matmul(ch, dh))));
  }
  const std::size_t pairs =
      static_cast<std::size_t>(d.c) * ((d.h - 1) * d.w + d.h * (d.w - 1));
  return ad::cmul(acc, 1.0 / static_cast<double>(pairs));
}

double tv(const ad::Tensor& a) {
  ad::NoRecord guard;
  return tv_term(a).item();
}

double fmse(const nn::ClassifierSpec& spec, const ad::ParamSet& params,
            const ad::Tensor& a, const ad::Tensor& b) {
  need_same(a, b, "fmse");
  const ImageDims d = image_dims(a, "fmse");
  ad::NoRecord guard;
  const ad::Tensor ra = ad::reshape(a, {d.c, d.h, d.w});
  const ad::Tensor rb = ad::reshape(b, {d.c, d.h, d.w});
  const ad::Tensor fa = nn::forward_features(spec, params, nn::stack_images({ra}));
  const ad::Tensor fb = nn::forward_features(spec, params, nn::stack_images({rb}));
  return mse(fa, fb);
}

MetricPanel compute_panel(const nn::ClassifierSpec& spec, const ad::ParamSet& params,
                          const ad::Tensor& recon, const ad::Tensor& target) {
  MetricPanel p;
  p.mse = mse(recon, target);
  p.psnr = psnr(recon, target);
  p.ssim = ssim(recon, target);
  p.tv = tv(recon);
  p.fmse = fmse(spec, params, recon, target);
  return p;
}

}  // namespace flowleak::metrics
