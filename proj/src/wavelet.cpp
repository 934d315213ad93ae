#include "dmlct/wavelet.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace dmlct::wavelet {

namespace {

FilterBank make_bank(const std::string& name, std::vector<double> rec_lo) {
  FilterBank fb;
  fb.name = name;
  fb.rec_lo = std::move(rec_lo);
  const int f = static_cast<int>(fb.rec_lo.size());
  fb.dec_lo.assign(fb.rec_lo.rbegin(), fb.rec_lo.rend());
  fb.rec_hi.resize(f);
  for (int k = 0; k < f; ++k) fb.rec_hi[k] = (k % 2 == 0 ? 1.0 : -1.0) * fb.dec_lo[k];
  fb.dec_hi.assign(fb.rec_hi.rbegin(), fb.rec_hi.rend());
  return fb;
}

const std::map<std::string, FilterBank>& filter_table() {
  static const std::map<std::string, FilterBank> table = [] {
    std::map<std::string, FilterBank> t;
    const double s = std::sqrt(0.5);
    t.emplace("haar", make_bank("haar", {s, s}));
    t.emplace("db1", make_bank("db1", {s, s}));
    t.emplace("db2", make_bank("db2", {0.48296291314469025, 0.836516303737469,
                                       0.22414386804185735, -0.12940952255092145}));
    t.emplace("db3", make_bank("db3", {0.3326705529509569, 0.8068915093133388,
                                       0.4598775021193313, -0.13501102001039084,
                                       -0.08544127388224149, 0.035226291882100656}));
    t.emplace("db4", make_bank("db4", {0.23037781330885523, 0.7148465705525415,
                                       0.6308807679295904, -0.02798376941698385,
                                       -0.18703481171888114, 0.030841381835986965,
                                       0.032883011666982945, -0.010597401784997278}));
    return t;
  }();
  return table;
}

// half-sample symmetric index: ... x1 x0 | x0 .. xn-1 | xn-1 xn-2 ...
inline int sym_index(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

// One analysis step along a strided 1D signal.
// out[k] = sum_j dec[j] * x_sym[2k + 1 - j], k in [0, coeff_len).
void dwt1d(const double* x, int n, int stride, const FilterBank& fb, double* lo, double* hi,
           int out_stride) {
  const int f = fb.length();
  const int len = coeff_len(n, f);
  for (int k = 0; k < len; ++k) {
    double slo = 0.0, shi = 0.0;
    for (int j = 0; j < f; ++j) {
      const double v = x[static_cast<std::ptrdiff_t>(sym_index(2 * k + 1 - j, n)) * stride];
      slo += fb.dec_lo[j] * v;
      shi += fb.dec_hi[j] * v;
    }
    lo[static_cast<std::ptrdiff_t>(k) * out_stride] = slo;
    hi[static_cast<std::ptrdiff_t>(k) * out_stride] = shi;
  }
}

// One synthesis step: overlap-add of the upsampled coefficient sequences,
// trimmed by f-2 on the left, cropped to n_out.
void idwt1d(const double* lo, const double* hi, int len, int in_stride, const FilterBank& fb,
            double* out, int n_out, int out_stride) {
  const int f = fb.length();
  const int full = 2 * len - 1 + f - 1;
  std::vector<double> acc(static_cast<size_t>(full), 0.0);
  for (int i = 0; i < len; ++i) {
    const double a = lo[static_cast<std::ptrdiff_t>(i) * in_stride];
    const double d = hi[static_cast<std::ptrdiff_t>(i) * in_stride];
    for (int j = 0; j < f; ++j) acc[2 * i + j] += a * fb.rec_lo[j] + d * fb.rec_hi[j];
  }
  const int avail = 2 * len - f + 2;
  if (n_out > avail)
    fail("structure", "synthesis output shorter than requested (" + std::to_string(avail) +
                          " < " + std::to_string(n_out) + ")");
  for (int k = 0; k < n_out; ++k)
    out[static_cast<std::ptrdiff_t>(k) * out_stride] = acc[static_cast<size_t>(f - 2 + k)];
}

struct Subbands {
  Mat ll, hl, lh, hh;  // first letter: row axis, second: column axis
};

Subbands dwt2d(const Mat& x, const FilterBank& fb) {
  const int rows = static_cast<int>(x.rows());
  const int cols = static_cast<int>(x.cols());
  const int lc = coeff_len(cols, fb.length());
  const int lr = coeff_len(rows, fb.length());

  Mat row_lo(rows, lc), row_hi(rows, lc);
  for (int r = 0; r < rows; ++r)
    dwt1d(x.data() + static_cast<std::ptrdiff_t>(r) * cols, cols, 1, fb,
          row_lo.data() + static_cast<std::ptrdiff_t>(r) * lc,
          row_hi.data() + static_cast<std::ptrdiff_t>(r) * lc, 1);

  Subbands sb;
  sb.ll.resize(lr, lc);
  sb.hl.resize(lr, lc);
  sb.lh.resize(lr, lc);
  sb.hh.resize(lr, lc);
  for (int c = 0; c < lc; ++c) {
    dwt1d(row_lo.data() + c, rows, lc, fb, sb.ll.data() + c, sb.hl.data() + c, lc);
    dwt1d(row_hi.data() + c, rows, lc, fb, sb.lh.data() + c, sb.hh.data() + c, lc);
  }
  return sb;
}

Mat idwt2d(const Subbands& sb, const FilterBank& fb, int rows_out, int cols_out) {
  const int lr = static_cast<int>(sb.ll.rows());
  const int lc = static_cast<int>(sb.ll.cols());

  Mat row_lo(rows_out, lc), row_hi(rows_out, lc);
  for (int c = 0; c < lc; ++c) {
    idwt1d(sb.ll.data() + c, sb.hl.data() + c, lr, lc, fb, row_lo.data() + c, rows_out, lc);
    idwt1d(sb.lh.data() + c, sb.hh.data() + c, lr, lc, fb, row_hi.data() + c, rows_out, lc);
  }

  Mat out(rows_out, cols_out);
  for (int r = 0; r < rows_out; ++r)
    idwt1d(row_lo.data() + static_cast<std::ptrdiff_t>(r) * lc,
           row_hi.data() + static_cast<std::ptrdiff_t>(r) * lc, lc, 1, fb,
           out.data() + static_cast<std::ptrdiff_t>(r) * cols_out, cols_out, 1);
  return out;
}

}  // namespace

const FilterBank& FilterBank::get(const std::string& name) {
  const auto& table = filter_table();
  auto it = table.find(name);
  if (it == table.end()) fail("filter", "unknown wavelet filter '" + name + "'");
  return it->second;
}

void WaveletBands::validate() const {
  if (level < 1) fail("structure", "level must be >= 1");
  if (static_cast<int>(details.size()) != level)
    fail("structure", "expected " + std::to_string(level) + " detail levels, have " +
                          std::to_string(details.size()));
  if (static_cast<int>(level_shapes.size()) != level)
    fail("structure", "level_shapes must have one entry per level");
  FilterBank::get(filter_name);
  if (level_shapes.front() != original_shape)
    fail("structure", "level_shapes[0] must equal original_shape");

  // walking coarsest -> finest, each band triple must match the approx shape at its scale
  Eigen::Index r = approx.rows(), c = approx.cols();
  for (int i = 0; i < level; ++i) {
    const Detail& d = details[static_cast<size_t>(i)];
    if (d.horiz.rows() != r || d.horiz.cols() != c || d.vert.rows() != r || d.vert.cols() != c ||
        d.diag.rows() != r || d.diag.cols() != c)
      fail("structure", "detail band shapes at level index " + std::to_string(i) +
                            " do not match the approximation pyramid");
    const auto& next = level_shapes[static_cast<size_t>(level - 1 - i)];
    r = next.first;
    c = next.second;
  }
  if (std::make_pair(static_cast<int>(r), static_cast<int>(c)) != original_shape)
    fail("structure", "pyramid does not synthesize back to original_shape");
}

WaveletBands decompose(const Mat& image, int level, const std::string& filter_name) {
  const FilterBank& fb = FilterBank::get(filter_name);
  if (level < 1) fail("parameter", "decomposition level must be >= 1");
  if (image.rows() < 1 || image.cols() < 1) fail("parameter", "empty image");

  WaveletBands bands;
  bands.level = level;
  bands.filter_name = fb.name;
  bands.original_shape = {static_cast<int>(image.rows()), static_cast<int>(image.cols())};
  bands.details.resize(static_cast<size_t>(level));

  Mat current = image;
  for (int lvl = 1; lvl <= level; ++lvl) {
    const int r = static_cast<int>(current.rows());
    const int c = static_cast<int>(current.cols());
    if (std::min(r, c) < fb.length())
      fail("decomposition-depth",
           "level " + std::to_string(lvl) + " needs at least " + std::to_string(fb.length()) +
               " samples per axis, image provides " + std::to_string(std::min(r, c)));
    bands.level_shapes.emplace_back(r, c);
    Subbands sb = dwt2d(current, fb);
    auto& detail = bands.details[static_cast<size_t>(level - lvl)];
    detail.horiz = std::move(sb.hl);
    detail.vert = std::move(sb.lh);
    detail.diag = std::move(sb.hh);
    current = std::move(sb.ll);
  }
  bands.approx = std::move(current);
  return bands;
}

Mat recompose(const WaveletBands& bands) {
  bands.validate();
  const FilterBank& fb = FilterBank::get(bands.filter_name);

  Mat current = bands.approx;
  for (int i = 0; i < bands.level; ++i) {
    const auto& shape = bands.level_shapes[static_cast<size_t>(bands.level - 1 - i)];
    Subbands sb;
    sb.ll = std::move(current);
    sb.hl = bands.details[static_cast<size_t>(i)].horiz;
    sb.lh = bands.details[static_cast<size_t>(i)].vert;
    sb.hh = bands.details[static_cast<size_t>(i)].diag;
    current = idwt2d(sb, fb, shape.first, shape.second);
  }
  return current;
}

Mat high_freq(const Mat& image, int level, const std::string& filter_name) {
  WaveletBands bands = decompose(image, level, filter_name);
  bands.approx.setZero();
  return recompose(bands);
}

Mat low_freq(const Mat& image, int level, const std::string& filter_name) {
  WaveletBands bands = decompose(image, level, filter_name);
  for (auto& d : bands.details) {
    d.horiz.setZero();
    d.vert.setZero();
    d.diag.setZero();
  }
  return recompose(bands);
}

}  // namespace dmlct::wavelet
