#include "dmlct/pipeline.hpp"

#include "dmlct/networks.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace dmlct::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

int parse_int(const std::string& v, const std::string& where) {
  std::size_t used = 0;
  int out = 0;
  try {
    out = std::stoi(v, &used);
  } catch (const std::exception&) {
    fail("parse", where + ": '" + v + "' is not an integer");
  }
  if (used != v.size()) fail("parse", where + ": '" + v + "' is not an integer");
  return out;
}

double parse_double(const std::string& v, const std::string& where) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    fail("parse", where + ": '" + v + "' is not a number");
  }
  if (used != v.size()) fail("parse", where + ": '" + v + "' is not a number");
  return out;
}

bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail("parse", where + ": '" + v + "' is not a boolean (true/false/1/0)");
}

std::uint64_t parse_u64(const std::string& v, const std::string& where) {
  std::size_t used = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    fail("parse", where + ": '" + v + "' is not an unsigned integer");
  }
  if (used != v.size()) fail("parse", where + ": '" + v + "' is not an unsigned integer");
  return out;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("io", "cannot open '" + path + "' for writing");
  out << text;
  if (!out) fail("io", "write to '" + path + "' failed");
}

void write_snapshot(const std::string& out_dir, const json& j) {
  write_text_file(out_dir + "/resolved_config.json", j.dump(2) + "\n");
}

// Accepts either a manifest file or a directory containing manifest.tsv.
std::string resolve_manifest(const std::string& input) {
  if (fs::is_directory(input)) return (fs::path(input) / "manifest.tsv").string();
  return input;
}

struct Moments {
  double sum = 0.0, sum2 = 0.0;
  std::size_t n = 0;
  void add(double v) {
    sum += v;
    sum2 += v * v;
    ++n;
  }
  double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
  double stddev() const {
    if (!n) return 0.0;
    const double m = mean();
    return std::sqrt(std::max(0.0, sum2 / static_cast<double>(n) - m * m));
  }
};

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_kv_text(const std::string& text,
                                                               const std::string& src) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = src + ":" + std::to_string(lineno);
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) fail("parse", where + ": malformed section header");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) fail("parse", where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail("parse", where + ": empty key");
    for (const auto& [k, v] : out)
      if (k == key) fail("parse", where + ": duplicate key '" + key + "'");
    out.emplace_back(key, value);
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> read_kv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("io", "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_kv_text(buf.str(), path);
}

SynthSpec synth_spec_from_kv(const std::vector<std::pair<std::string, std::string>>& kv,
                             const std::string& src) {
  SynthSpec s;
  for (const auto& [key, value] : kv) {
    const std::string where = src + " key " + key;
    if (key == "n_ld")
      s.n_ld = parse_int(value, where);
    else if (key == "n_hd")
      s.n_hd = parse_int(value, where);
    else if (key == "size")
      s.phantom.size = parse_int(value, where);
    else if (key == "sigma_ld")
      s.phantom.noise_sigma_ld = parse_double(value, where);
    else if (key == "sigma_hd")
      s.phantom.noise_sigma_hd = parse_double(value, where);
    else if (key == "hd_shift")
      s.phantom.domain_mean_shift = parse_double(value, where);
    else if (key == "seed")
      s.phantom.seed = parse_u64(value, where);
    else
      fail("parse", src + ": unknown synth key '" + key + "'");
  }
  if (s.n_ld < 0 || s.n_hd < 0) fail("parameter", src + ": image counts must be non-negative");
  return s;
}

SynthSpec read_synth_spec(const std::string& path) {
  return synth_spec_from_kv(read_kv_file(path), path);
}

SynthSummary run_synth(const SynthSpec& spec, const std::string& out_dir) {
  data::PhantomSpec ph = spec.phantom;
  if (ph.structures.empty()) ph.structures = data::default_structures(ph.size);
  ph.validate();
  if (spec.n_ld < 0 || spec.n_hd < 0) fail("parameter", "image counts must be non-negative");

  const data::PhantomSet set = data::make_phantom_pair(ph, spec.n_ld, spec.n_hd);

  fs::create_directories(out_dir);
  std::vector<data::ManifestEntry> manifest;
  auto dump = [&](const data::CtImage& img) {
    const std::string name = img.id + ".cthu";
    data::save_slice(img, (fs::path(out_dir) / name).string());
    manifest.push_back({name, img.domain_tag});
  };
  for (const auto& img : set.ldct) dump(img);
  for (const auto& img : set.hdct) dump(img);
  for (const auto& img : set.ldct_clean) dump(img);
  data::write_manifest(manifest, (fs::path(out_dir) / "manifest.tsv").string());

  SynthSummary sum;
  sum.n_ld = spec.n_ld;
  sum.n_hd = spec.n_hd;
  sum.n_clean = spec.n_ld;

  Moments ld_noise, hd_noise, ld_air, hd_air;
  for (int i = 0; i < spec.n_ld; ++i) {
    const Mat resid = set.ldct[i].pixels - set.ldct_clean[i].pixels;
    for (Eigen::Index k = 0; k < resid.size(); ++k) ld_noise.add(resid.data()[k]);
    const Mat mask = data::homogeneous_mask(set.ldct_clean[i].pixels, -1000.0);
    for (Eigen::Index k = 0; k < mask.size(); ++k)
      if (mask.data()[k] > 0.5) ld_air.add(set.ldct[i].pixels.data()[k]);
  }
  for (int i = 0; i < spec.n_hd; ++i) {
    const Mat resid = set.hdct[i].pixels - set.hdct_clean[i].pixels;
    for (Eigen::Index k = 0; k < resid.size(); ++k) hd_noise.add(resid.data()[k]);
    const Mat mask =
        data::homogeneous_mask(set.hdct_clean[i].pixels, -1000.0 + ph.domain_mean_shift);
    for (Eigen::Index k = 0; k < mask.size(); ++k)
      if (mask.data()[k] > 0.5) hd_air.add(set.hdct[i].pixels.data()[k]);
  }
  sum.achieved_sigma_ld = ld_noise.stddev();
  sum.achieved_sigma_hd = hd_noise.stddev();
  sum.achieved_shift_hu =
      (ld_air.n && hd_air.n) ? hd_air.mean() - ld_air.mean() : 0.0;

  write_snapshot(out_dir, json{{"subcommand", "synth"},
                               {"n_ld", spec.n_ld},
                               {"n_hd", spec.n_hd},
                               {"size", ph.size},
                               {"sigma_ld", ph.noise_sigma_ld},
                               {"sigma_hd", ph.noise_sigma_hd},
                               {"hd_shift", ph.domain_mean_shift},
                               {"seed", ph.seed}});
  return sum;
}

void apply_config_kv(train::TrainConfig& cfg, const std::string& key, const std::string& value,
                     const std::string& src) {
  const std::string where = src + " key " + key;
  if (key == "epochs")
    cfg.epochs = parse_int(value, where);
  else if (key == "lr")
    cfg.lr = parse_double(value, where);
  else if (key == "beta1")
    cfg.beta1 = parse_double(value, where);
  else if (key == "beta2")
    cfg.beta2 = parse_double(value, where);
  else if (key == "batch_size")
    cfg.batch_size = parse_int(value, where);
  else if (key == "crop")
    cfg.crop = parse_int(value, where);
  else if (key == "wavelet_level")
    cfg.wavelet_level = parse_int(value, where);
  else if (key == "filter_name")
    cfg.filter_name = value;
  else if (key == "tau")
    cfg.tau = parse_double(value, where);
  else if (key == "lambda_idt")
    cfg.lambda_idt = parse_double(value, where);
  else if (key == "lambda_m")
    cfg.lambda_m = parse_double(value, where);
  else if (key == "proj_downsample")
    cfg.proj_downsample = parse_bool(value, where);
  else if (key == "num_anchor_locations")
    cfg.num_anchor_locations = parse_int(value, where);
  else if (key == "seed")
    cfg.seed = parse_u64(value, where);
  else if (key == "hf_scale")
    cfg.hf_scale = parse_double(value, where);
  else if (key == "steps_per_epoch")
    cfg.steps_per_epoch = parse_int(value, where);
  else if (key == "gen_base_channels")
    cfg.gen_base_channels = parse_int(value, where);
  else if (key == "gen_rrdb_blocks")
    cfg.gen_rrdb_blocks = parse_int(value, where);
  else if (key == "gen_growth_channels")
    cfg.gen_growth_channels = parse_int(value, where);
  else if (key == "disc_base_channels")
    cfg.disc_base_channels = parse_int(value, where);
  else if (key == "proj_hidden_dim")
    cfg.proj_hidden_dim = parse_int(value, where);
  else if (key == "embed_dim")
    cfg.embed_dim = parse_int(value, where);
  else if (key == "disable_adversarial")
    cfg.disable_adversarial = parse_bool(value, where);
  else if (key == "disable_metric")
    cfg.disable_metric = parse_bool(value, where);
  else if (key == "debug_pairing")
    cfg.debug_pairing = parse_bool(value, where);
  else
    fail("parse", src + ": unknown config key '" + key + "'");
}

void apply_preset(train::TrainConfig& cfg, const std::string& name) {
  if (name == "aapm") {
    cfg.epochs = 200;
    cfg.batch_size = 8;
    cfg.wavelet_level = 6;
    cfg.filter_name = "db3";
    cfg.tau = 0.15;
    cfg.lambda_idt = 5.0;
    cfg.lambda_m = 0.1;
    cfg.proj_downsample = false;
  } else if (name == "temporal") {
    cfg.epochs = 100;
    cfg.batch_size = 4;
    cfg.wavelet_level = 5;
    cfg.filter_name = "db3";
    cfg.tau = 0.12;
    cfg.lambda_idt = 5.0;
    cfg.lambda_m = 0.1;
    cfg.proj_downsample = true;
  } else {
    fail("parameter", "unknown preset '" + name + "' (expected aapm or temporal)");
  }
}

train::TrainConfig resolve_train_config(const std::string& preset, const std::string& config_path,
                                        const std::vector<std::string>& overrides) {
  train::TrainConfig cfg;
  if (!preset.empty()) apply_preset(cfg, preset);
  if (!config_path.empty())
    for (const auto& [k, v] : read_kv_file(config_path)) apply_config_kv(cfg, k, v, config_path);
  for (const std::string& ov : overrides) {
    const std::size_t eq = ov.find('=');
    if (eq == std::string::npos || eq == 0)
      fail("parse", "override '" + ov + "' is not of the form key=value");
    apply_config_kv(cfg, trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)), "override");
  }
  cfg.validate();
  return cfg;
}

std::vector<train::StepRecord> run_train(const train::TrainConfig& cfg,
                                         const std::vector<std::string>& data_manifests,
                                         const std::string& out_dir) {
  cfg.validate();
  if (data_manifests.empty()) fail("parameter", "at least one data manifest is required");

  std::vector<Mat> x, y;
  for (const std::string& m : data_manifests) {
    const std::string path = resolve_manifest(m);
    for (auto& img : data::load_manifest_images(path, "ldct")) x.push_back(std::move(img.pixels));
    for (auto& img : data::load_manifest_images(path, "hdct")) y.push_back(std::move(img.pixels));
  }

  train::Trainer trainer(cfg);
  trainer.set_data(std::move(x), std::move(y));

  fs::create_directories(out_dir);
  write_snapshot(out_dir, json{{"subcommand", "train"},
                               {"data", data_manifests},
                               {"config", json::parse(train::config_to_json_text(cfg))}});
  return trainer.fit(out_dir);
}

DenoiseSummary run_denoise(const std::string& checkpoint_path, const std::string& input,
                           const std::string& out_dir) {
  train::Trainer trainer = train::Trainer::load_checkpoint(checkpoint_path);
  const train::TrainConfig& cfg = trainer.config();
  const std::string manifest = resolve_manifest(input);
  const std::vector<data::CtImage> inputs = data::load_manifest_images(manifest, "ldct");
  if (inputs.empty()) fail("empty-set", "no ldct entries in '" + manifest + "'");

  fs::create_directories(out_dir);
  std::vector<data::ManifestEntry> out_manifest;
  for (const data::CtImage& img : inputs) {
    const data::CtImage out = net::denoise_full(img, trainer.generator(), cfg.wavelet_level,
                                                cfg.filter_name, cfg.hf_scale);
    const std::string name = out.id + ".cthu";
    data::save_slice(out, (fs::path(out_dir) / name).string());
    out_manifest.push_back({name, out.domain_tag});
  }
  data::write_manifest(out_manifest, (fs::path(out_dir) / "manifest.tsv").string());

  write_snapshot(out_dir, json{{"subcommand", "denoise"},
                               {"checkpoint", checkpoint_path},
                               {"input", input},
                               {"wavelet_level", cfg.wavelet_level},
                               {"filter_name", cfg.filter_name},
                               {"hf_scale", cfg.hf_scale}});
  return DenoiseSummary{static_cast<int>(inputs.size())};
}

std::vector<eval::EvalReport> run_eval(const std::string& pred, const std::string& ref,
                                       const std::string& out_dir, const EvalOptions& opt) {
  if (!(opt.window.second > opt.window.first)) fail("parameter", "window must be increasing");

  auto load_preferring = [](const std::string& where, const std::string& tag) {
    std::vector<data::CtImage> tagged = data::load_manifest_images(resolve_manifest(where), tag);
    if (!tagged.empty()) return tagged;
    return data::load_manifest_images(resolve_manifest(where));
  };
  const std::vector<data::CtImage> preds = load_preferring(pred, "output");
  const std::vector<data::CtImage> refs = load_preferring(ref, "clean");
  if (preds.size() != refs.size())
    fail("pairing", "pred has " + std::to_string(preds.size()) + " images, ref has " +
                        std::to_string(refs.size()));
  if (preds.empty()) fail("empty-set", "nothing to evaluate");

  fs::create_directories(out_dir);
  std::vector<eval::EvalReport> reports;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Mat& p = preds[i].pixels;
    const Mat& r = refs[i].pixels;
    double range = r.maxCoeff() - r.minCoeff();
    if (!(range > 0.0)) range = 1.0;

    eval::EvalReport rep;
    rep.image_id = preds[i].id;
    rep.psnr_db = eval::psnr(p, r, range);
    rep.ssim = eval::ssim(p, r, range);
    rep.psnr_data_range = range;
    rep.window = opt.window;
    rep.mean_shift_hu = p.mean() - r.mean();
    reports.push_back(std::move(rep));

    const Mat diff = eval::difference_image(p, r, opt.window);
    eval::write_pgm(diff, (fs::path(out_dir) / ("diff_" + preds[i].id + ".pgm")).string());
  }
  reports.push_back(eval::make_aggregate(reports));
  eval::write_reports(reports, (fs::path(out_dir) / "reports.jsonl").string());

  write_snapshot(out_dir, json{{"subcommand", "eval"},
                               {"pred", pred},
                               {"ref", ref},
                               {"window", {opt.window.first, opt.window.second}}});
  return reports;
}

}  // namespace dmlct::pipeline
