#pragma once

#include "dmlct/common.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dmlct::data {

/// One CT slice in Hounsfield Units.
struct CtImage {
  Mat pixels;  // HU
  std::optional<std::pair<double, double>> spacing;  // (row_mm, col_mm)
  std::string id;
  std::string domain_tag = "ldct";  // "ldct" | "hdct" | "output" | "clean"

  /// HU range report: values outside [-1024 - margin, 4000] are counted,
  /// never clipped. Default margin 76 puts the floor at -1100.
  struct HuReport {
    int below_floor = 0;
    int above_ceiling = 0;
    int non_finite = 0;
    double min_hu = 0.0, max_hu = 0.0;
    bool clean() const { return below_floor == 0 && above_ceiling == 0 && non_finite == 0; }
  };
  HuReport hu_report(double margin = 76.0) const;
};

bool valid_domain_tag(const std::string& tag);

// ---- storage ----
// Little-endian raster: magic "CTHU", u16 rows, u16 cols, f32 slope,
// f32 intercept, rows*cols u16 raw values; HU = slope*raw + intercept.
// Quantization error is bounded by 0.5 HU for any slice within HU sanity range.
CtImage load_slice(const std::string& path, const std::string& domain_tag = "ldct");
void save_slice(const CtImage& img, const std::string& path);

struct ManifestEntry {
  std::string path;        // relative to the manifest's directory
  std::string domain_tag;
};
// Line format: path<TAB>domain_tag. Parse failures carry the line number.
std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path);
// Loads every manifest image, resolving paths relative to the manifest file.
std::vector<CtImage> load_manifest_images(const std::string& manifest_path,
                                          const std::string& only_tag = "");

// ---- synthetic phantoms ----
struct PhantomStructure {
  std::string shape;  // "disk" | "ring" | "bar"
  double center_r = 0.0, center_c = 0.0;  // pixels
  double dim1 = 0.0, dim2 = 0.0;  // disk: radius,- / ring: outer radius, thickness / bar: half-h, half-w
  double hu_value = 0.0;
};

struct PhantomSpec {
  int size = 128;
  std::vector<PhantomStructure> structures;  // template; placement jittered per image
  double noise_sigma_ld = 60.0;
  double noise_sigma_hd = 10.0;
  double domain_mean_shift = 0.0;  // added to the whole clean HDCT image
  std::uint64_t seed = 0;

  void validate() const;  // Error("parameter") when structures poke outside or sigmas < 0
};

/// Head-like default: tissue disk, bone ring, and a few internal features over
/// -1000 HU air. Air and tissue regions stay exactly homogeneous for region stats.
std::vector<PhantomStructure> default_structures(int size);

struct PhantomSet {
  std::vector<CtImage> ldct, hdct;              // clean + Gaussian noise
  std::vector<CtImage> ldct_clean, hdct_clean;  // ground truth (HDCT clean carries the shift)
};
PhantomSet make_phantom_pair(const PhantomSpec& spec, int n_ld, int n_hd);

/// 0/1 mask of pixels whose clean value equals hu_value within tol.
Mat homogeneous_mask(const Mat& clean, double hu_value, double tol = 0.5);

// ---- crops ----
Mat random_crop(const Mat& img, int size, Rng& rng);

/// Wavelet split on the full slice, then the aligned crop from both halves.
/// hf comes back divided by hf_scale (network input units); lf stays in HU.
struct HfCrop {
  Mat hf, lf;
  int row0 = 0, col0 = 0;
};
HfCrop prepare_hf_crop(const Mat& slice, int crop_size, int level, const std::string& filter_name,
                       double hf_scale, Rng& rng);

}  // namespace dmlct::data
