#pragma once

#include "dmlct/networks.hpp"
#include "dmlct/objectives.hpp"

#include <memory>
#include <string>
#include <vector>

namespace dmlct::train {

struct TrainConfig {
  int epochs = 200;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int batch_size = 8;
  int crop = 128;
  int wavelet_level = 6;
  std::string filter_name = "db3";
  double tau = 0.15;
  double lambda_idt = 5.0;
  double lambda_m = 0.1;
  bool proj_downsample = false;
  int num_anchor_locations = 256;
  std::uint64_t seed = 0;
  double hf_scale = 3000.0;
  int steps_per_epoch = 0;  // 0 = ceil(|x| / batch_size)

  int gen_base_channels = 64;
  int gen_rrdb_blocks = 6;
  int gen_growth_channels = 32;
  int disc_base_channels = 64;
  int proj_hidden_dim = 256;
  int embed_dim = 256;

  // ablation switches: the affected terms become exact zeros and their
  // networks are neither evaluated nor updated
  bool disable_adversarial = false;
  bool disable_metric = false;
  // when set, each step record carries its per-item anchor locations
  bool debug_pairing = false;

  void validate() const;  // Error("parameter")
};

/// Constant for the first half of training, then linear to zero.
double lr_at_epoch(int epoch, const TrainConfig& cfg);

struct StepRecord {
  int epoch = 0;
  int step = 0;
  double lr = 0.0;
  double gan_g = 0.0;
  double gan_d = 0.0;
  double idt = 0.0;
  double m1 = 0.0;
  double m2 = 0.0;
  double total = 0.0;
  // one location list per batch item, shared by both feature taps and by
  // the x / G(x) branches; filled only under debug_pairing
  std::vector<std::vector<std::pair<int, int>>> anchor_locations;
};

std::string step_record_to_json(const StepRecord& r);
StepRecord step_record_from_json(const std::string& line);
std::vector<StepRecord> read_step_log(const std::string& path);

std::string config_to_json_text(const TrainConfig& cfg);
TrainConfig config_from_json_text(const std::string& text, const std::string& src);

/// Owns the four networks, both optimizers, and the cached normalized HF
/// slices. Batches are a pure function of (seed, epoch, step).
class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg);

  /// HU slices; the trainer caches high_freq(slice)/hf_scale per image.
  void set_data(std::vector<Mat> x_slices, std::vector<Mat> y_slices);

  /// One D update then one G update on internally sampled batches.
  StepRecord train_step(int epoch, int step);
  /// Same update on caller-supplied normalized HF crop batches.
  StepRecord train_step_on(const std::vector<Mat>& batch_x_hf,
                           const std::vector<Mat>& batch_y_hf, int epoch, int step);

  /// Runs from epochs_completed() to cfg.epochs; per-epoch checkpoints plus
  /// a JSONL step log in out_dir. Returns this run's records.
  std::vector<StepRecord> fit(const std::string& out_dir);

  void save_checkpoint(const std::string& path) const;
  static Trainer load_checkpoint(const std::string& path);

  const TrainConfig& config() const { return cfg_; }
  int epochs_completed() const { return epochs_completed_; }
  int resolved_steps_per_epoch() const;

  const net::Generator& generator() const { return *gen_; }
  const net::Discriminator& discriminator() const { return *disc_; }
  const net::ProjectionHead& head1() const { return *p1_; }
  const net::ProjectionHead& head2() const { return *p2_; }
  nn::Adam& gen_optimizer() { return *adam_g_; }
  nn::Adam& disc_optimizer() { return *adam_d_; }

 private:
  StepRecord step_impl(const std::vector<Mat>& bx, const std::vector<Mat>& by, int epoch,
                       int step);
  std::vector<Mat> sample_batch(const std::vector<Mat>& cache, int epoch, int step,
                                std::uint64_t domain_tag) const;

  TrainConfig cfg_;
  std::unique_ptr<net::Generator> gen_;
  std::unique_ptr<net::ProjectionHead> p1_, p2_;
  std::unique_ptr<net::Discriminator> disc_;
  std::unique_ptr<nn::Adam> adam_g_, adam_d_;
  std::vector<Mat> hx_, hy_;  // normalized HF slices
  int epochs_completed_ = 0;
};

/// Convenience wrapper: fresh trainer, attach data, run to completion.
std::vector<StepRecord> fit(const std::vector<Mat>& x_slices, const std::vector<Mat>& y_slices,
                            const TrainConfig& cfg, const std::string& out_dir);

}  // namespace dmlct::train
