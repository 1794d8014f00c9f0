#pragma once

#include "flowleak/ad/paramset.hpp"
#include "flowleak/ad/tensor.hpp"
#include "flowleak/nn/classifier.hpp"

namespace flowleak::metrics {

// Reconstruction quality summary for one image pair.
struct MetricPanel {
  double psnr = 0.0;
  double ssim = 0.0;
  double mse = 0.0;
  double tv = 0.0;
  double fmse = 0.0;
};

// Images are (H,W) or (C,H,W) tensors on the [0,1] intensity range.
double mse(const ad::Tensor& a, const ad::Tensor& b);

// 10*log10(1/MSE). A zero-MSE pair returns exactly the 60 dB cap;
// nothing else does, so the cap identifies perfect reconstructions.
double psnr(const ad::Tensor& a, const ad::Tensor& b);

// Mean local SSIM with a 7x7 uniform window, reflection padding, and
// C1=0.01^2, C2=0.03^2, averaged over channels. Images too small for
// the window are scored with a single whole-image window instead.
double ssim(const ad::Tensor& a, const ad::Tensor& b);

// Mean absolute difference over all vertically and horizontally
// adjacent pixel pairs, pooled over channels. Needs H,W >= 2.
double tv(const ad::Tensor& a);

// Graph-recorded total variation, identical in value to tv(); use this
// form when the image is an optimization variable.
ad::Tensor tv_term(const ad::Tensor& x);

// MSE between the penultimate-layer activations the classifier assigns
// to the two images.
double fmse(const nn::ClassifierSpec& spec, const ad::ParamSet& params,
            const ad::Tensor& a, const ad::Tensor& b);

// Full panel for a reconstruction against its target; tv scores the
// reconstruction, fmse uses the supplied classifier weights.
MetricPanel compute_panel(const nn::ClassifierSpec& spec, const ad::ParamSet& params,
                          const ad::Tensor& recon, const ad::Tensor& target);

}  // namespace flowleak::metrics
