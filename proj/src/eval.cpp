#include "dmlct/eval.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

namespace dmlct::eval {

namespace {

void require_same_shape(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    fail("shape", "image shapes differ: " + std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                      std::to_string(b.cols()));
  if (a.rows() < 1) fail("shape", "empty image");
}

std::vector<double> gaussian_kernel_1d(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const double half = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - half;
    k[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[static_cast<std::size_t>(i)];
  }
  for (double& v : k) v /= sum;
  return k;
}

// separable valid-mode weighted filter: rows then columns
Mat filter_valid(const Mat& x, const std::vector<double>& k) {
  const int f = static_cast<int>(k.size());
  Mat tmp(x.rows(), x.cols() - f + 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index c = 0; c < tmp.cols(); ++c) {
      double s = 0.0;
      for (int i = 0; i < f; ++i) s += k[static_cast<std::size_t>(i)] * x(r, c + i);
      tmp(r, c) = s;
    }
  Mat out(x.rows() - f + 1, tmp.cols());
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      double s = 0.0;
      for (int i = 0; i < f; ++i) s += k[static_cast<std::size_t>(i)] * tmp(r + i, c);
      out(r, c) = s;
    }
  return out;
}

}  // namespace

double psnr(const Mat& a, const Mat& b, double data_range) {
  require_same_shape(a, b);
  if (!(data_range > 0.0)) fail("parameter", "data_range must be positive");
  const double mse = (a - b).square().mean();
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(data_range * data_range / mse);
}

double ssim(const Mat& a, const Mat& b, double data_range) {
  require_same_shape(a, b);
  if (!(data_range > 0.0)) fail("parameter", "data_range must be positive");
  if (a.rows() < kSsimWindow || a.cols() < kSsimWindow)
    fail("shape", "image smaller than the SSIM window");
  const auto k = gaussian_kernel_1d(kSsimWindow, kSsimSigma);
  const Mat mu_a = filter_valid(a, k);
  const Mat mu_b = filter_valid(b, k);
  const Mat e_aa = filter_valid(a * a, k);
  const Mat e_bb = filter_valid(b * b, k);
  const Mat e_ab = filter_valid(a * b, k);
  const Mat var_a = e_aa - mu_a * mu_a;
  const Mat var_b = e_bb - mu_b * mu_b;
  const Mat cov = e_ab - mu_a * mu_b;
  const double c1 = (kSsimK1 * data_range) * (kSsimK1 * data_range);
  const double c2 = (kSsimK2 * data_range) * (kSsimK2 * data_range);
  const Mat num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
  const Mat den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
  return (num / den).mean();
}

PatchStats patch_stats(const Mat& img, const Mat& mask, const PatchStatConfig& cfg) {
  require_same_shape(img, mask);
  if (cfg.patch_size < 1 || cfg.num_patches < 1)
    fail("parameter", "patch_size and num_patches must be >= 1");
  const int ps = cfg.patch_size;
  const Eigen::Index rows = img.rows(), cols = img.cols();
  if (rows < ps || cols < ps) fail("capacity", "image smaller than the patch size");

  // summed-area table over the binarized mask; window valid iff its sum is ps^2
  Mat sat = Mat::Zero(rows + 1, cols + 1);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      sat(r + 1, c + 1) = (mask(r, c) > 0.5 ? 1.0 : 0.0) + sat(r, c + 1) + sat(r + 1, c) - sat(r, c);

  std::vector<std::pair<int, int>> valid;
  const double want = static_cast<double>(ps) * ps;
  for (Eigen::Index r = 0; r + ps <= rows; ++r)
    for (Eigen::Index c = 0; c + ps <= cols; ++c) {
      const double s = sat(r + ps, c + ps) - sat(r, c + ps) - sat(r + ps, c) + sat(r, c);
      if (s == want) valid.emplace_back(static_cast<int>(r), static_cast<int>(c));
    }
  if (static_cast<int>(valid.size()) < cfg.num_patches)
    fail("capacity", "only " + std::to_string(valid.size()) + " fully homogeneous positions for " +
                         std::to_string(cfg.num_patches) + " requested patches");

  Rng rng(Rng::mix({cfg.seed, 0x70617463ULL}));
  for (int i = 0; i < cfg.num_patches; ++i) {
    const int j = i + static_cast<int>(rng.uniform_int(static_cast<int>(valid.size()) - i));
    std::swap(valid[static_cast<std::size_t>(i)], valid[static_cast<std::size_t>(j)]);
  }
  valid.resize(static_cast<std::size_t>(cfg.num_patches));

  PatchStats out;
  out.positions = valid;
  for (const auto& [r0, c0] : valid) {
    const auto block = img.block(r0, c0, ps, ps);
    const double mean = block.mean();
    const double var = (block - mean).square().mean();
    out.per_patch.emplace_back(mean, std::sqrt(var));
    out.mean_of_means += mean;
    out.mean_of_stds += std::sqrt(var);
  }
  out.mean_of_means /= cfg.num_patches;
  out.mean_of_stds /= cfg.num_patches;
  return out;
}

std::pair<double, double> roi_stats(const Mat& img, const Circle& roi) {
  if (!(roi.radius >= 0.0)) fail("parameter", "radius must be non-negative");
  if (roi.center_r - roi.radius < -0.5 || roi.center_r + roi.radius > img.rows() - 0.5 ||
      roi.center_c - roi.radius < -0.5 || roi.center_c + roi.radius > img.cols() - 0.5)
    fail("index", "ROI extends outside the image");
  double sum = 0.0, sumsq = 0.0;
  long n = 0;
  const double r2 = roi.radius * roi.radius;
  for (Eigen::Index r = 0; r < img.rows(); ++r)
    for (Eigen::Index c = 0; c < img.cols(); ++c) {
      const double dr = r - roi.center_r, dc = c - roi.center_c;
      if (dr * dr + dc * dc <= r2) {
        sum += img(r, c);
        sumsq += img(r, c) * img(r, c);
        ++n;
      }
    }
  if (n == 0) fail("parameter", "ROI covers no pixels");
  const double mean = sum / n;
  return {mean, std::sqrt(std::max(0.0, sumsq / n - mean * mean))};
}

Mat difference_image(const Mat& a, const Mat& b, std::pair<double, double> window) {
  require_same_shape(a, b);
  const auto [lo, hi] = window;
  if (!(lo < hi)) fail("parameter", "window must satisfy lo < hi");
  Mat d = (a - b).min(hi).max(lo);
  return (d - lo) / (hi - lo);
}

void write_pgm(const Mat& gray01, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail("io", "cannot open for writing: " + path);
  f << "P5\n" << gray01.cols() << " " << gray01.rows() << "\n255\n";
  for (Eigen::Index r = 0; r < gray01.rows(); ++r)
    for (Eigen::Index c = 0; c < gray01.cols(); ++c) {
      const double v = std::clamp(gray01(r, c), 0.0, 1.0);
      f.put(static_cast<char>(static_cast<int>(std::lround(v * 255.0))));
    }
  if (!f) fail("io", "write failed: " + path);
}

namespace {

using nlohmann::json;

json metric_to_json(const std::optional<double>& v) {
  if (!v) return nullptr;
  if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
  return *v;
}

std::optional<double> metric_from_json(const json& j, const std::string& what) {
  if (j.is_null()) return std::nullopt;
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    fail("parse", "unrecognized " + what + " sentinel: " + s);
  }
  if (!j.is_number()) fail("parse", what + " is neither number, sentinel, nor null");
  return j.get<double>();
}

}  // namespace

std::string report_to_json(const EvalReport& r) {
  json j;
  j["image_id"] = r.image_id;
  j["psnr_db"] = metric_to_json(r.psnr_db);
  j["ssim"] = metric_to_json(r.ssim);
  j["psnr_data_range"] = metric_to_json(r.psnr_data_range);
  j["window"] = {r.window.first, r.window.second};
  j["mean_shift_hu"] = metric_to_json(r.mean_shift_hu);
  j["ssim_params"] = {{"window", kSsimWindow}, {"sigma", kSsimSigma}, {"k1", kSsimK1}, {"k2", kSsimK2}};
  json regions = json::array();
  for (const auto& s : r.region_stats)
    regions.push_back({{"region_id", s.region_id},
                       {"mean_hu", s.mean_hu},
                       {"std_hu", s.std_hu},
                       {"pixel_count", s.pixel_count}});
  j["region_stats"] = std::move(regions);
  return j.dump();
}

EvalReport report_from_json(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    fail("parse", std::string("bad report line: ") + e.what());
  }
  EvalReport r;
  try {
    r.image_id = j.at("image_id").get<std::string>();
    r.psnr_db = metric_from_json(j.at("psnr_db"), "psnr_db");
    r.ssim = metric_from_json(j.at("ssim"), "ssim");
    r.psnr_data_range = metric_from_json(j.at("psnr_data_range"), "psnr_data_range");
    r.window = {j.at("window").at(0).get<double>(), j.at("window").at(1).get<double>()};
    r.mean_shift_hu = metric_from_json(j.at("mean_shift_hu"), "mean_shift_hu");
    for (const auto& s : j.at("region_stats")) {
      RegionStat rs;
      rs.region_id = s.at("region_id").get<std::string>();
      rs.mean_hu = s.at("mean_hu").get<double>();
      rs.std_hu = s.at("std_hu").get<double>();
      rs.pixel_count = s.at("pixel_count").get<long>();
      r.region_stats.push_back(std::move(rs));
    }
  } catch (const json::exception& e) {
    fail("parse", std::string("report field error: ") + e.what());
  }
  return r;
}

void write_reports(const std::vector<EvalReport>& reports, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail("io", "cannot open for writing: " + path);
  for (const auto& r : reports) f << report_to_json(r) << "\n";
  if (!f) fail("io", "write failed: " + path);
}

std::vector<EvalReport> read_reports(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail("io", "cannot open: " + path);
  std::vector<EvalReport> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    out.push_back(report_from_json(line));
  }
  return out;
}

EvalReport make_aggregate(const std::vector<EvalReport>& reports) {
  if (reports.empty()) fail("parameter", "no reports to aggregate");
  EvalReport agg;
  agg.image_id = "aggregate";
  agg.window = reports.front().window;
  agg.psnr_data_range = reports.front().psnr_data_range;

  auto average_of = [&](auto pick) -> std::optional<double> {
    double sum = 0.0;
    int n = 0;
    for (const auto& r : reports) {
      const auto v = pick(r);
      if (v) {
        sum += *v;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return sum / n;
  };
  agg.psnr_db = average_of([](const EvalReport& r) { return r.psnr_db; });
  agg.ssim = average_of([](const EvalReport& r) { return r.ssim; });
  agg.mean_shift_hu = average_of([](const EvalReport& r) { return r.mean_shift_hu; });

  // per-region averages in first-seen order
  std::vector<std::string> order;
  std::map<std::string, std::pair<RegionStat, int>> by_id;
  for (const auto& r : reports)
    for (const auto& s : r.region_stats) {
      auto it = by_id.find(s.region_id);
      if (it == by_id.end()) {
        order.push_back(s.region_id);
        by_id[s.region_id] = {s, 1};
      } else {
        it->second.first.mean_hu += s.mean_hu;
        it->second.first.std_hu += s.std_hu;
        it->second.first.pixel_count += s.pixel_count;
        it->second.second += 1;
      }
    }
  for (const auto& id : order) {
    auto [stat, n] = by_id[id];
    stat.mean_hu /= n;
    stat.std_hu /= n;
    agg.region_stats.push_back(std::move(stat));
  }
  return agg;
}

}  // namespace dmlct::eval
