#include "dmlct/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using dmlct::Error;
namespace pipeline = dmlct::pipeline;

namespace {

void require_exists(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) dmlct::fail("io", what + " '" + path + "' does not exist");
}

std::string manifest_of(const std::string& input) {
  return fs::is_directory(input) ? (fs::path(input) / "manifest.tsv").string() : input;
}

std::pair<double, double> parse_window(const std::string& s) {
  const std::size_t colon = s.find(':');
  if (colon == std::string::npos)
    dmlct::fail("parameter", "--window expects LO:HI, got '" + s + "'");
  try {
    std::size_t used = 0;
    const double lo = std::stod(s.substr(0, colon), &used);
    if (used != colon) throw std::invalid_argument(s);
    const double hi = std::stod(s.substr(colon + 1), &used);
    if (used != s.size() - colon - 1) throw std::invalid_argument(s);
    return {lo, hi};
  } catch (const std::exception&) {
    dmlct::fail("parameter", "--window expects LO:HI, got '" + s + "'");
  }
}

int run_synth_cmd(const std::string& spec_path, const std::string& out,
                  const std::vector<std::string>& overrides) {
  pipeline::SynthSpec spec;
  try {
    require_exists(spec_path, "spec file");
    auto kv = pipeline::read_kv_file(spec_path);
    for (const std::string& ov : overrides) {
      const std::size_t eq = ov.find('=');
      if (eq == std::string::npos || eq == 0)
        dmlct::fail("parse", "override '" + ov + "' is not of the form key=value");
      kv.emplace_back(ov.substr(0, eq), ov.substr(eq + 1));
    }
    spec = pipeline::synth_spec_from_kv(kv, spec_path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  const pipeline::SynthSummary s = pipeline::run_synth(spec, out);
  std::printf("wrote %d ldct + %d hdct + %d clean slices to %s\n", s.n_ld, s.n_hd, s.n_clean,
              out.c_str());
  std::printf("achieved: sigma_ld=%.2f HU  sigma_hd=%.2f HU  domain shift=%.2f HU\n",
              s.achieved_sigma_ld, s.achieved_sigma_hd, s.achieved_shift_hu);
  return 0;
}

int run_train_cmd(const std::vector<std::string>& data, const std::string& out,
                  const std::string& preset, const std::string& config_path,
                  const std::vector<std::string>& overrides) {
  dmlct::train::TrainConfig cfg;
  try {
    if (!config_path.empty()) require_exists(config_path, "config file");
    for (const std::string& d : data) require_exists(manifest_of(d), "data manifest");
    cfg = pipeline::resolve_train_config(preset, config_path, overrides);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  const auto records = pipeline::run_train(cfg, data, out);
  std::printf("trained %d epochs (%zu steps this run); artifacts in %s\n", cfg.epochs,
              records.size(), out.c_str());
  if (!records.empty())
    std::printf("final losses: total=%.6f idt=%.6f gan_d=%.6f\n", records.back().total,
                records.back().idt, records.back().gan_d);
  return 0;
}

int run_denoise_cmd(const std::string& ckpt, const std::string& in, const std::string& out) {
  try {
    require_exists(ckpt, "checkpoint");
    require_exists(manifest_of(in), "input manifest");
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  const pipeline::DenoiseSummary s = pipeline::run_denoise(ckpt, in, out);
  std::printf("denoised %d slices into %s\n", s.count, out.c_str());
  return 0;
}

int run_eval_cmd(const std::string& pred, const std::string& ref, const std::string& out,
                 const std::string& window) {
  pipeline::EvalOptions opt;
  try {
    if (!window.empty()) opt.window = parse_window(window);
    require_exists(manifest_of(pred), "pred manifest");
    require_exists(manifest_of(ref), "ref manifest");
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  const auto reports = pipeline::run_eval(pred, ref, out, opt);
  const auto& agg = reports.back();
  std::printf("evaluated %zu image pairs; reports in %s\n", reports.size() - 1, out.c_str());
  std::printf("aggregate: psnr=%.3f dB  ssim=%.5f  mean_shift=%.3f HU\n",
              agg.psnr_db.value_or(0.0), agg.ssim.value_or(0.0),
              agg.mean_shift_hu.value_or(0.0));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wavelet-domain CT denoising: synthesize, train, denoise, evaluate.\n"
               "Every run writes a resolved_config.json snapshot into --out.\n"
               "Exit codes: 0 success, 2 usage or config error, 3 runtime failure."};
  app.require_subcommand(1);

  std::string spec_path, out, preset, config_path, ckpt, in, pred, ref, window;
  std::vector<std::string> data, overrides;

  CLI::App* synth = app.add_subcommand("synth", "generate a phantom dataset");
  synth->add_option("--spec", spec_path, "key = value spec file")->required();
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--set", overrides, "spec override key=value");

  CLI::App* train = app.add_subcommand("train", "train a denoiser");
  train->add_option("--data", data, "manifest file or dataset directory")->required();
  train->add_option("--out", out, "output directory")->required();
  train->add_option("--preset", preset, "aapm or temporal");
  train->add_option("--config", config_path, "key = value config file");
  train->add_option("--set", overrides, "config override key=value");

  CLI::App* denoise = app.add_subcommand("denoise", "apply a trained checkpoint");
  denoise->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  denoise->add_option("--in", in, "manifest file or dataset directory")->required();
  denoise->add_option("--out", out, "output directory")->required();

  CLI::App* eval = app.add_subcommand("eval", "compare predictions against references");
  eval->add_option("--pred", pred, "manifest file or directory")->required();
  eval->add_option("--ref", ref, "manifest file or directory")->required();
  eval->add_option("--out", out, "output directory")->required();
  eval->add_option("--window", window, "difference-image HU window LO:HI");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) return run_synth_cmd(spec_path, out, overrides);
    if (train->parsed()) return run_train_cmd(data, out, preset, config_path, overrides);
    if (denoise->parsed()) return run_denoise_cmd(ckpt, in, out);
    return run_eval_cmd(pred, ref, out, window);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
