#pragma once

#include "dmlct/common.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dmlct::eval {

/// 10*log10(range^2 / MSE); identical images give +infinity.
double psnr(const Mat& a, const Mat& b, double data_range);

inline constexpr int kSsimWindow = 7;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

/// Mean local SSIM over Gaussian-weighted windows fully inside the image.
double ssim(const Mat& a, const Mat& b, double data_range);

struct PatchStatConfig {
  int patch_size = 60;
  int num_patches = 300;
  std::uint64_t seed = 0;
};

struct PatchStats {
  std::vector<std::pair<double, double>> per_patch;  // (mean, population std)
  std::vector<std::pair<int, int>> positions;        // top-left corners
  double mean_of_means = 0.0;
  double mean_of_stds = 0.0;
};

/// Samples patch positions whose windows lie fully inside the mask
/// (mask > 0.5), without replacement. Error("capacity") reports how many
/// valid positions exist when there are fewer than requested.
PatchStats patch_stats(const Mat& img, const Mat& mask, const PatchStatConfig& cfg);

struct Circle {
  double center_r = 0.0;
  double center_c = 0.0;
  double radius = 0.0;
};

/// (mean, population std) over pixels with center distance <= radius.
std::pair<double, double> roi_stats(const Mat& img, const Circle& roi);

/// (a - b) clamped to [window.first, window.second], mapped affinely to [0, 1].
Mat difference_image(const Mat& a, const Mat& b, std::pair<double, double> window);

/// 8-bit binary PGM; input expected in [0, 1], clamped defensively.
void write_pgm(const Mat& gray01, const std::string& path);

struct RegionStat {
  std::string region_id;
  double mean_hu = 0.0;
  double std_hu = 0.0;
  long pixel_count = 0;
};

struct EvalReport {
  std::string image_id;
  std::optional<double> psnr_db;  // +infinity allowed
  std::optional<double> ssim;
  std::optional<double> psnr_data_range;
  std::vector<RegionStat> region_stats;
  std::pair<double, double> window{-50.0, 50.0};
  /// |mean(output region) - mean(reference region)| audit over homogeneous
  /// media; absent when no reference regions are supplied.
  std::optional<double> mean_shift_hu;
};

std::string report_to_json(const EvalReport& r);
EvalReport report_from_json(const std::string& line);

/// JSONL, one report per line. The aggregate document (averaged metrics,
/// image_id "aggregate") is appended by make_aggregate callers.
void write_reports(const std::vector<EvalReport>& reports, const std::string& path);
std::vector<EvalReport> read_reports(const std::string& path);

/// Average of per-image metrics; region stats averaged per region_id with
/// summed pixel counts. Infinite PSNR propagates to an infinite average.
EvalReport make_aggregate(const std::vector<EvalReport>& reports);

}  // namespace dmlct::eval
