#include "dmlct/data.hpp"

#include "dmlct/wavelet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace dmlct::data {

namespace {

namespace fs = std::filesystem;

void put_u16(std::string& buf, std::uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_f32(std::string& buf, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

float get_f32(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) |
                             (static_cast<std::uint32_t>(p[3]) << 24);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

[[noreturn]] void parse_fail(const std::string& path, std::size_t offset, const std::string& what) {
  fail("parse", path + " at byte " + std::to_string(offset) + ": " + what);
}

double structure_reach(const PhantomStructure& s) {
  if (s.shape == "disk") return s.dim1;
  if (s.shape == "ring") return s.dim1;
  if (s.shape == "bar") return std::max(s.dim1, s.dim2);
  fail("parameter", "unknown structure shape '" + s.shape + "'");
}

void render_structure(Mat& img, const PhantomStructure& s, double dr, double dc) {
  const double cr = s.center_r + dr;
  const double cc = s.center_c + dc;
  const int size_r = static_cast<int>(img.rows());
  const int size_c = static_cast<int>(img.cols());
  const double reach = structure_reach(s) + 1.0;
  const int r_lo = std::max(0, static_cast<int>(std::floor(cr - reach)));
  const int r_hi = std::min(size_r - 1, static_cast<int>(std::ceil(cr + reach)));
  const int c_lo = std::max(0, static_cast<int>(std::floor(cc - reach)));
  const int c_hi = std::min(size_c - 1, static_cast<int>(std::ceil(cc + reach)));
  for (int r = r_lo; r <= r_hi; ++r)
    for (int c = c_lo; c <= c_hi; ++c) {
      const double dy = r - cr, dx = c - cc;
      bool inside = false;
      if (s.shape == "disk") {
        inside = dy * dy + dx * dx <= s.dim1 * s.dim1;
      } else if (s.shape == "ring") {
        const double d2 = dy * dy + dx * dx;
        const double inner = s.dim1 - s.dim2;
        inside = d2 <= s.dim1 * s.dim1 && d2 > inner * inner;
      } else {  // bar
        inside = std::abs(dy) <= s.dim1 && std::abs(dx) <= s.dim2;
      }
      if (inside) img(r, c) = s.hu_value;
    }
}

constexpr double kAirHu = -1000.0;
constexpr double kJitterFrac = 0.02;  // of image size, per axis

Mat render_phantom(const PhantomSpec& spec, Rng& rng) {
  Mat img = Mat::Constant(spec.size, spec.size, kAirHu);
  const double jit = kJitterFrac * spec.size;
  for (const auto& s : spec.structures) {
    const double dr = rng.uniform(-jit, jit);
    const double dc = rng.uniform(-jit, jit);
    render_structure(img, s, dr, dc);
  }
  return img;
}

Mat add_noise(const Mat& clean, double sigma, Rng& rng) {
  Mat out = clean;
  if (sigma > 0.0)
    for (Eigen::Index r = 0; r < out.rows(); ++r)
      for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) += rng.normal(0.0, sigma);
  return out;
}

std::string zero_pad(int v, int width) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%0*d", width, v);
  return buf;
}

}  // namespace

bool valid_domain_tag(const std::string& tag) {
  return tag == "ldct" || tag == "hdct" || tag == "output" || tag == "clean";
}

CtImage::HuReport CtImage::hu_report(double margin) const {
  HuReport rep;
  const double floor_hu = -1024.0 - margin;
  bool first = true;
  for (Eigen::Index r = 0; r < pixels.rows(); ++r)
    for (Eigen::Index c = 0; c < pixels.cols(); ++c) {
      const double v = pixels(r, c);
      if (!std::isfinite(v)) {
        ++rep.non_finite;
        continue;
      }
      if (first) {
        rep.min_hu = rep.max_hu = v;
        first = false;
      } else {
        rep.min_hu = std::min(rep.min_hu, v);
        rep.max_hu = std::max(rep.max_hu, v);
      }
      if (v < floor_hu) ++rep.below_floor;
      if (v > 4000.0) ++rep.above_ceiling;
    }
  return rep;
}

void save_slice(const CtImage& img, const std::string& path) {
  const Eigen::Index rows = img.pixels.rows(), cols = img.pixels.cols();
  if (rows < 1 || cols < 1) fail("parameter", "cannot save an empty image");
  if (rows > 65535 || cols > 65535) fail("parameter", "image exceeds the u16 header limit");
  if (!img.pixels.isFinite().all()) fail("non-finite", "image has non-finite pixels: " + img.id);

  const double lo = img.pixels.minCoeff();
  const double hi = img.pixels.maxCoeff();
  const float slope = hi > lo ? static_cast<float>((hi - lo) / 65535.0) : 1.0f;
  const float intercept = static_cast<float>(lo);

  std::string buf;
  buf.reserve(16 + static_cast<std::size_t>(rows) * cols * 2);
  buf += "CTHU";
  put_u16(buf, static_cast<std::uint16_t>(rows));
  put_u16(buf, static_cast<std::uint16_t>(cols));
  put_f32(buf, slope);
  put_f32(buf, intercept);
  const double s = slope, b = intercept;  // quantize against the stored f32 values
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double raw = std::round((img.pixels(r, c) - b) / s);
      const double clamped = std::min(65535.0, std::max(0.0, raw));
      put_u16(buf, static_cast<std::uint16_t>(clamped));
    }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("io", "cannot open for writing: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) fail("io", "short write: " + path);
}

CtImage load_slice(const std::string& path, const std::string& domain_tag) {
  if (!valid_domain_tag(domain_tag)) fail("parameter", "unknown domain tag '" + domain_tag + "'");
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("io", "cannot open: " + path);
  std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(raw.data());

  if (raw.size() < 16) parse_fail(path, raw.size(), "truncated header (need 16 bytes)");
  if (std::memcmp(p, "CTHU", 4) != 0) parse_fail(path, 0, "bad magic");
  const int rows = get_u16(p + 4);
  const int cols = get_u16(p + 6);
  if (rows < 1 || cols < 1) parse_fail(path, 4, "zero image dimension");
  const double slope = get_f32(p + 8);
  const double intercept = get_f32(p + 12);
  const std::size_t need = 16 + static_cast<std::size_t>(rows) * cols * 2;
  if (raw.size() < need)
    parse_fail(path, raw.size(),
               "truncated pixel data (need " + std::to_string(need) + " bytes)");

  CtImage img;
  img.pixels.resize(rows, cols);
  const unsigned char* px = p + 16;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      img.pixels(r, c) = slope * get_u16(px) + intercept;
      px += 2;
    }
  img.id = fs::path(path).stem().string();
  img.domain_tag = domain_tag;
  return img;
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("io", "cannot open manifest: " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
      fail("parse", path + ":" + std::to_string(lineno) + ": expected path<TAB>domain_tag");
    ManifestEntry e{line.substr(0, tab), line.substr(tab + 1)};
    if (!valid_domain_tag(e.domain_tag))
      fail("parse",
           path + ":" + std::to_string(lineno) + ": unknown domain tag '" + e.domain_tag + "'");
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail("io", "cannot open manifest for writing: " + path);
  for (const auto& e : entries) {
    if (!valid_domain_tag(e.domain_tag)) fail("parameter", "unknown domain tag '" + e.domain_tag + "'");
    out << e.path << '\t' << e.domain_tag << '\n';
  }
  if (!out) fail("io", "short write: " + path);
}

std::vector<CtImage> load_manifest_images(const std::string& manifest_path,
                                          const std::string& only_tag) {
  const auto entries = read_manifest(manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  std::vector<CtImage> images;
  for (const auto& e : entries) {
    if (!only_tag.empty() && e.domain_tag != only_tag) continue;
    const fs::path full = fs::path(e.path).is_absolute() ? fs::path(e.path) : base / e.path;
    images.push_back(load_slice(full.string(), e.domain_tag));
  }
  return images;
}

void PhantomSpec::validate() const {
  if (size < 8) fail("parameter", "phantom size too small");
  if (noise_sigma_ld < 0.0 || noise_sigma_hd < 0.0) fail("parameter", "noise sigma must be >= 0");
  const double jit = kJitterFrac * size + 1.0;
  for (const auto& s : structures) {
    const double reach = structure_reach(s) + jit;
    if (s.center_r - reach < 0 || s.center_r + reach > size || s.center_c - reach < 0 ||
        s.center_c + reach > size)
      fail("parameter", "structure does not fit inside the phantom with jitter margin");
    if (s.shape == "ring" && !(s.dim2 > 0.0 && s.dim2 < s.dim1))
      fail("parameter", "ring thickness must lie in (0, outer radius)");
  }
}

std::vector<PhantomStructure> default_structures(int size) {
  const double s = size;
  return {
      {"disk", 0.50 * s, 0.50 * s, 0.40 * s, 0.0, 35.0},           // tissue body
      {"ring", 0.50 * s, 0.50 * s, 0.46 * s, 0.06 * s, 700.0},     // skull
      {"disk", 0.38 * s, 0.42 * s, 0.055 * s, 0.0, 80.0},
      {"disk", 0.60 * s, 0.63 * s, 0.045 * s, 0.0, -60.0},
      {"ring", 0.40 * s, 0.62 * s, 0.07 * s, 0.022 * s, 90.0},
      {"bar", 0.63 * s, 0.38 * s, 0.028 * s, 0.085 * s, 120.0},
  };
}

PhantomSet make_phantom_pair(const PhantomSpec& spec, int n_ld, int n_hd) {
  spec.validate();
  if (n_ld < 0 || n_hd < 0) fail("parameter", "negative image count");
  PhantomSet set;
  for (int i = 0; i < n_ld; ++i) {
    Rng rng(Rng::mix({spec.seed, 0, static_cast<std::uint64_t>(i)}));
    Mat clean = render_phantom(spec, rng);
    CtImage noisy{add_noise(clean, spec.noise_sigma_ld, rng), std::nullopt,
                  "ld_" + zero_pad(i, 4), "ldct"};
    CtImage truth{std::move(clean), std::nullopt, "ld_" + zero_pad(i, 4) + "_clean", "clean"};
    set.ldct.push_back(std::move(noisy));
    set.ldct_clean.push_back(std::move(truth));
  }
  for (int i = 0; i < n_hd; ++i) {
    Rng rng(Rng::mix({spec.seed, 1, static_cast<std::uint64_t>(i)}));
    Mat clean = render_phantom(spec, rng) + spec.domain_mean_shift;
    CtImage noisy{add_noise(clean, spec.noise_sigma_hd, rng), std::nullopt,
                  "hd_" + zero_pad(i, 4), "hdct"};
    CtImage truth{std::move(clean), std::nullopt, "hd_" + zero_pad(i, 4) + "_clean", "clean"};
    set.hdct.push_back(std::move(noisy));
    set.hdct_clean.push_back(std::move(truth));
  }
  return set;
}

Mat homogeneous_mask(const Mat& clean, double hu_value, double tol) {
  Mat mask(clean.rows(), clean.cols());
  for (Eigen::Index r = 0; r < clean.rows(); ++r)
    for (Eigen::Index c = 0; c < clean.cols(); ++c)
      mask(r, c) = std::abs(clean(r, c) - hu_value) <= tol ? 1.0 : 0.0;
  return mask;
}

Mat random_crop(const Mat& img, int size, Rng& rng) {
  if (size < 1) fail("parameter", "crop size must be positive");
  if (img.rows() < size || img.cols() < size)
    fail("parameter", "image " + std::to_string(img.rows()) + "x" + std::to_string(img.cols()) +
                          " too small for a " + std::to_string(size) + " crop");
  const int r0 = rng.uniform_int(static_cast<int>(img.rows()) - size + 1);
  const int c0 = rng.uniform_int(static_cast<int>(img.cols()) - size + 1);
  return img.block(r0, c0, size, size);
}

HfCrop prepare_hf_crop(const Mat& slice, int crop_size, int level, const std::string& filter_name,
                       double hf_scale, Rng& rng) {
  if (!(hf_scale > 0.0)) fail("parameter", "hf_scale must be positive");
  if (slice.rows() < crop_size || slice.cols() < crop_size)
    fail("parameter", "slice too small for the requested crop");
  // split the whole slice first so crop windows never see boundary artifacts
  Mat hf_full = wavelet::high_freq(slice, level, filter_name);
  const int r0 = rng.uniform_int(static_cast<int>(slice.rows()) - crop_size + 1);
  const int c0 = rng.uniform_int(static_cast<int>(slice.cols()) - crop_size + 1);
  HfCrop crop;
  crop.row0 = r0;
  crop.col0 = c0;
  crop.hf = hf_full.block(r0, c0, crop_size, crop_size) / hf_scale;
  crop.lf = slice.block(r0, c0, crop_size, crop_size) - hf_full.block(r0, c0, crop_size, crop_size);
  return crop;
}

}  // namespace dmlct::data
