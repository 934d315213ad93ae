#pragma once

#include "dmlct/common.hpp"

#include <string>
#include <utility>
#include <vector>

namespace dmlct::wavelet {

/// Two-channel orthogonal filter bank. Coefficients follow the usual
/// convention: rec_lo is the scaling filter, dec_lo its reverse,
/// rec_hi[k] = (-1)^k dec_lo[k], dec_hi the reverse of rec_hi.
struct FilterBank {
  std::string name;
  std::vector<double> dec_lo, dec_hi, rec_lo, rec_hi;

  int length() const { return static_cast<int>(dec_lo.size()); }

  /// Known filters: haar (alias db1), db2, db3, db4. Throws Error("filter") otherwise.
  static const FilterBank& get(const std::string& name);
};

/// Multi-level 2D coefficient pyramid. details are stored coarsest-first:
/// details[0] sits at the same scale as approx, details.back() is the finest level.
struct WaveletBands {
  struct Detail {
    Mat horiz;  // highpass across rows, lowpass across columns
    Mat vert;   // lowpass across rows, highpass across columns
    Mat diag;   // highpass across both axes
  };

  Mat approx;
  std::vector<Detail> details;
  int level = 0;
  std::string filter_name;
  std::pair<int, int> original_shape{0, 0};
  // shape of the signal entering each analysis step, finest first;
  // recompose crops each synthesis result back to these
  std::vector<std::pair<int, int>> level_shapes;

  void validate() const;  // throws Error("structure") on inconsistent shapes
};

// Boundary handling is fixed to half-sample symmetric extension.

WaveletBands decompose(const Mat& image, int level, const std::string& filter_name);
Mat recompose(const WaveletBands& bands);

/// Reconstruction with the approximation band zeroed: structure and noise, no DC.
Mat high_freq(const Mat& image, int level, const std::string& filter_name);
/// Reconstruction with every detail band zeroed; high_freq + low_freq == image.
Mat low_freq(const Mat& image, int level, const std::string& filter_name);

/// Coefficient length of one analysis step.
inline int coeff_len(int n, int filter_len) { return (n + filter_len - 1) / 2; }

}  // namespace dmlct::wavelet
