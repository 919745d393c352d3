#pragma once

#include "crowdlocal/image.hpp"

namespace crowdlocal {

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) over all channels; identical images give kPsnrCap.
double psnr(const Image& a, const Image& b);

/// Mean SSIM over every 8x8 window of the luma planes (C1 = 0.01^2, C2 = 0.03^2).
double ssim(const Image& a, const Image& b);

struct NrTerms {
  double exposure = 0;
  double contrast = 0;
  double colorfulness = 0;
  double score() const { return 0.4 * exposure + 0.3 * contrast + 0.3 * colorfulness; }
};

/// No-reference proxy terms, each in [0,1].
NrTerms nr_terms(const Image& image);
inline double nr_score(const Image& image) { return nr_terms(image).score(); }

}  // namespace crowdlocal
