#pragma once

#include "dmlct/data.hpp"
#include "dmlct/eval.hpp"
#include "dmlct/trainer.hpp"

#include <string>
#include <utility>
#include <vector>

namespace dmlct::pipeline {

// Flat key = value text. '#' starts a comment, [section] headers only group
// lines visually, keys are global and must be unique within one file.
std::vector<std::pair<std::string, std::string>> parse_kv_text(const std::string& text,
                                                               const std::string& src);
std::vector<std::pair<std::string, std::string>> read_kv_file(const std::string& path);

// ---- synth ----
struct SynthSpec {
  int n_ld = 16;
  int n_hd = 16;
  data::PhantomSpec phantom;  // structures default to default_structures(size) when empty
};

// Keys: n_ld n_hd size sigma_ld sigma_hd hd_shift seed. Later entries win,
// unknown keys are rejected.
SynthSpec synth_spec_from_kv(const std::vector<std::pair<std::string, std::string>>& kv,
                             const std::string& src);
SynthSpec read_synth_spec(const std::string& path);

struct SynthSummary {
  int n_ld = 0;
  int n_hd = 0;
  int n_clean = 0;
  double achieved_sigma_ld = 0.0;
  double achieved_sigma_hd = 0.0;
  double achieved_shift_hu = 0.0;  // air-region HDCT minus LDCT mean
};

/// Writes noisy LDCT/HDCT sets, the LDCT ground-truth set, manifest.tsv, and
/// a resolved_config.json snapshot. Same spec -> byte-identical files.
SynthSummary run_synth(const SynthSpec& spec, const std::string& out_dir);

// ---- train ----
void apply_config_kv(train::TrainConfig& cfg, const std::string& key, const std::string& value,
                     const std::string& src);
// "aapm" (the defaults, restated) or "temporal".
void apply_preset(train::TrainConfig& cfg, const std::string& name);
// Precedence: overrides > config file > preset > defaults. Overrides are
// raw "key=value" strings. Validates the final config.
train::TrainConfig resolve_train_config(const std::string& preset, const std::string& config_path,
                                        const std::vector<std::string>& overrides);

/// Loads ldct/hdct slices from the manifests, then trains into out_dir
/// (checkpoints, train_log.jsonl, resolved_config.json). Nothing is written
/// until all inputs have loaded.
std::vector<train::StepRecord> run_train(const train::TrainConfig& cfg,
                                         const std::vector<std::string>& data_manifests,
                                         const std::string& out_dir);

// ---- denoise ----
struct DenoiseSummary {
  int count = 0;
};

/// input: a manifest path or a directory holding manifest.tsv. Every ldct
/// entry is denoised with the checkpoint's generator and written as
/// <id>_output.cthu plus an output manifest. Reruns overwrite identically.
DenoiseSummary run_denoise(const std::string& checkpoint_path, const std::string& input,
                           const std::string& out_dir);

// ---- eval ----
struct EvalOptions {
  std::pair<double, double> window{-50.0, 50.0};  // difference-image HU window
};

/// Pairs pred and ref images by manifest order (pred prefers "output" entries,
/// ref prefers "clean" entries when present). Writes reports.jsonl with one
/// document per image plus an aggregate, and a windowed diff_<id>.pgm per
/// pair. Returns the reports, aggregate last.
std::vector<eval::EvalReport> run_eval(const std::string& pred, const std::string& ref,
                                       const std::string& out_dir, const EvalOptions& opt = {});

}  // namespace dmlct::pipeline
