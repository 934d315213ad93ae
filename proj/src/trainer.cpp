#include "dmlct/trainer.hpp"

#include "dmlct/bytes.hpp"
#include "dmlct/embedding.hpp"
#include "dmlct/wavelet.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

namespace dmlct::train {

namespace fs = std::filesystem;
using nlohmann::json;
using nn::Graph;
using nn::NodeRef;
using nn::Tensor;

void TrainConfig::validate() const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0)) fail("parameter", std::string(what) + " must be positive");
  };
  auto at_least_one = [](int v, const char* what) {
    if (v < 1) fail("parameter", std::string(what) + " must be >= 1");
  };
  at_least_one(epochs, "epochs");
  positive(lr, "lr");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    fail("parameter", "adam betas must lie in [0, 1)");
  at_least_one(batch_size, "batch_size");
  if (crop < 8 || crop % 4 != 0) fail("parameter", "crop must be >= 8 and divisible by 4");
  if (!disable_adversarial && crop % 8 != 0)
    fail("parameter", "crop must divide by 8 for the patch discriminator");
  at_least_one(wavelet_level, "wavelet_level");
  positive(tau, "tau");
  positive(lambda_idt, "lambda_idt");
  positive(lambda_m, "lambda_m");
  at_least_one(num_anchor_locations, "num_anchor_locations");
  positive(hf_scale, "hf_scale");
  if (steps_per_epoch < 0) fail("parameter", "steps_per_epoch must be >= 0");
  at_least_one(gen_base_channels, "gen_base_channels");
  at_least_one(gen_rrdb_blocks, "gen_rrdb_blocks");
  at_least_one(gen_growth_channels, "gen_growth_channels");
  at_least_one(disc_base_channels, "disc_base_channels");
  at_least_one(proj_hidden_dim, "proj_hidden_dim");
  at_least_one(embed_dim, "embed_dim");
  wavelet::FilterBank::get(filter_name);  // rejects unknown names
}

double lr_at_epoch(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch > cfg.epochs)
    fail("parameter", "epoch " + std::to_string(epoch) + " outside [0, " +
                          std::to_string(cfg.epochs) + "]");
  const double half = cfg.epochs / 2.0;
  if (epoch < half) return cfg.lr;
  return cfg.lr * (cfg.epochs - epoch) / (cfg.epochs - half);
}

namespace {

json config_to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"lr", c.lr},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"batch_size", c.batch_size},
              {"crop", c.crop},
              {"wavelet_level", c.wavelet_level},
              {"filter_name", c.filter_name},
              {"tau", c.tau},
              {"lambda_idt", c.lambda_idt},
              {"lambda_m", c.lambda_m},
              {"proj_downsample", c.proj_downsample},
              {"num_anchor_locations", c.num_anchor_locations},
              {"seed", c.seed},
              {"hf_scale", c.hf_scale},
              {"steps_per_epoch", c.steps_per_epoch},
              {"gen_base_channels", c.gen_base_channels},
              {"gen_rrdb_blocks", c.gen_rrdb_blocks},
              {"gen_growth_channels", c.gen_growth_channels},
              {"disc_base_channels", c.disc_base_channels},
              {"proj_hidden_dim", c.proj_hidden_dim},
              {"embed_dim", c.embed_dim},
              {"disable_adversarial", c.disable_adversarial},
              {"disable_metric", c.disable_metric},
              {"debug_pairing", c.debug_pairing}};
}

TrainConfig config_from_json(const json& j, const std::string& src) {
  TrainConfig c;
  try {
    j.at("epochs").get_to(c.epochs);
    j.at("lr").get_to(c.lr);
    j.at("beta1").get_to(c.beta1);
    j.at("beta2").get_to(c.beta2);
    j.at("batch_size").get_to(c.batch_size);
    j.at("crop").get_to(c.crop);
    j.at("wavelet_level").get_to(c.wavelet_level);
    j.at("filter_name").get_to(c.filter_name);
    j.at("tau").get_to(c.tau);
    j.at("lambda_idt").get_to(c.lambda_idt);
    j.at("lambda_m").get_to(c.lambda_m);
    j.at("proj_downsample").get_to(c.proj_downsample);
    j.at("num_anchor_locations").get_to(c.num_anchor_locations);
    j.at("seed").get_to(c.seed);
    j.at("hf_scale").get_to(c.hf_scale);
    j.at("steps_per_epoch").get_to(c.steps_per_epoch);
    j.at("gen_base_channels").get_to(c.gen_base_channels);
    j.at("gen_rrdb_blocks").get_to(c.gen_rrdb_blocks);
    j.at("gen_growth_channels").get_to(c.gen_growth_channels);
    j.at("disc_base_channels").get_to(c.disc_base_channels);
    j.at("proj_hidden_dim").get_to(c.proj_hidden_dim);
    j.at("embed_dim").get_to(c.embed_dim);
    j.at("disable_adversarial").get_to(c.disable_adversarial);
    j.at("disable_metric").get_to(c.disable_metric);
    j.at("debug_pairing").get_to(c.debug_pairing);
  } catch (const json::exception& e) {
    fail("parse", src + ": bad training config: " + e.what());
  }
  return c;
}

std::string adam_to_bytes(const nn::Adam& a) {
  std::string out;
  const auto& st = a.state();
  bytes::put_u64(out, static_cast<std::uint64_t>(st.t));
  bytes::put_u32(out, static_cast<std::uint32_t>(st.m.size()));
  for (std::size_t i = 0; i < st.m.size(); ++i) {
    bytes::put_u32(out, static_cast<std::uint32_t>(st.m[i].size()));
    for (double d : st.m[i].v) bytes::put_f64(out, d);
    for (double d : st.v[i].v) bytes::put_f64(out, d);
  }
  return out;
}

void adam_from_bytes(nn::Adam& a, const std::string& buf, const std::string& src) {
  bytes::Reader r{buf, 0, src};
  nn::Adam::State st;
  st.t = static_cast<std::int64_t>(r.u64("step counter"));
  const std::uint32_t n = r.u32("moment count");
  if (n != a.params().size())
    fail("checkpoint", src + ": optimizer holds " + std::to_string(n) + " moments, expected " +
                           std::to_string(a.params().size()));
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto& shape = a.params()[i]->value.shape;
    const std::uint32_t count = r.u32("moment size");
    if (count != a.params()[i]->value.size())
      fail("checkpoint", src + ": moment size mismatch at parameter " + std::to_string(i));
    Tensor m(shape), v(shape);
    for (double& d : m.v) d = r.f64("first moment");
    for (double& d : v.v) d = r.f64("second moment");
    st.m.push_back(std::move(m));
    st.v.push_back(std::move(v));
  }
  if (r.pos != buf.size()) fail("parse", src + ": trailing optimizer bytes");
  a.set_state(std::move(st));
}

net::GeneratorSpec gen_spec_of(const TrainConfig& c) {
  net::GeneratorSpec s;
  s.base_channels = c.gen_base_channels;
  s.num_rrdb_blocks = c.gen_rrdb_blocks;
  s.growth_channels = c.gen_growth_channels;
  return s;
}

net::ProjectionSpec proj_spec_of(const TrainConfig& c) {
  net::ProjectionSpec s;
  s.in_channels = c.gen_base_channels;
  s.hidden_dim = c.proj_hidden_dim;
  s.embed_dim = c.embed_dim;
  s.downsample_2x2 = c.proj_downsample;
  return s;
}

net::DiscriminatorSpec disc_spec_of(const TrainConfig& c) {
  net::DiscriminatorSpec s;
  s.base_channels = c.disc_base_channels;
  return s;
}

Tensor batch_to_tensor(const std::vector<Mat>& batch) {
  const int b = static_cast<int>(batch.size());
  const int h = static_cast<int>(batch[0].rows()), w = static_cast<int>(batch[0].cols());
  Tensor t({b, 1, h, w});
  for (int i = 0; i < b; ++i) {
    if (batch[static_cast<std::size_t>(i)].rows() != h ||
        batch[static_cast<std::size_t>(i)].cols() != w)
      fail("shape", "ragged batch");
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) t.at4(i, 0, r, c) = batch[static_cast<std::size_t>(i)](r, c);
  }
  return t;
}

NodeRef zero_scalar(Graph& g) { return g.track(Tensor({1}, 0.0), false); }

constexpr std::uint64_t kTagBatchX = 0x78ULL;
constexpr std::uint64_t kTagBatchY = 0x79ULL;
constexpr std::uint64_t kTagAnchor = 0x616eULL;

}  // namespace

std::string config_to_json_text(const TrainConfig& cfg) { return config_to_json(cfg).dump(2); }

TrainConfig config_from_json_text(const std::string& text, const std::string& src) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) fail("parse", src + ": malformed config JSON");
  return config_from_json(j, src);
}

Trainer::Trainer(const TrainConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  gen_ = std::make_unique<net::Generator>(gen_spec_of(cfg_), Rng::mix({cfg_.seed, 1}));
  p1_ = std::make_unique<net::ProjectionHead>(proj_spec_of(cfg_), Rng::mix({cfg_.seed, 2}));
  p2_ = std::make_unique<net::ProjectionHead>(proj_spec_of(cfg_), Rng::mix({cfg_.seed, 3}));
  disc_ = std::make_unique<net::Discriminator>(disc_spec_of(cfg_), Rng::mix({cfg_.seed, 4}));
  std::vector<NodeRef> gparams = gen_->params();
  gparams.insert(gparams.end(), p1_->params().begin(), p1_->params().end());
  gparams.insert(gparams.end(), p2_->params().begin(), p2_->params().end());
  adam_g_ = std::make_unique<nn::Adam>(std::move(gparams), cfg_.beta1, cfg_.beta2);
  adam_d_ = std::make_unique<nn::Adam>(disc_->params(), cfg_.beta1, cfg_.beta2);
}

void Trainer::set_data(std::vector<Mat> x_slices, std::vector<Mat> y_slices) {
  const bool need_x = !(cfg_.disable_adversarial && cfg_.disable_metric);
  if (need_x && x_slices.empty()) fail("parameter", "source domain is empty");
  if (y_slices.empty()) fail("parameter", "target domain is empty");
  auto to_hf = [&](const std::vector<Mat>& slices) {
    std::vector<Mat> out;
    out.reserve(slices.size());
    for (const auto& s : slices) {
      if (s.rows() < cfg_.crop || s.cols() < cfg_.crop)
        fail("parameter", "slice smaller than the crop size");
      out.push_back(wavelet::high_freq(s, cfg_.wavelet_level, cfg_.filter_name) / cfg_.hf_scale);
    }
    return out;
  };
  hx_ = to_hf(x_slices);
  hy_ = to_hf(y_slices);
}

int Trainer::resolved_steps_per_epoch() const {
  if (cfg_.steps_per_epoch > 0) return cfg_.steps_per_epoch;
  const std::size_t base =
      (cfg_.disable_adversarial && cfg_.disable_metric) ? hy_.size() : hx_.size();
  return static_cast<int>((base + cfg_.batch_size - 1) / cfg_.batch_size);
}

std::vector<Mat> Trainer::sample_batch(const std::vector<Mat>& cache, int epoch, int step,
                                       std::uint64_t domain_tag) const {
  Rng rng(Rng::mix({cfg_.seed, domain_tag, static_cast<std::uint64_t>(epoch),
                    static_cast<std::uint64_t>(step)}));
  std::vector<Mat> out;
  out.reserve(static_cast<std::size_t>(cfg_.batch_size));
  for (int i = 0; i < cfg_.batch_size; ++i) {
    const auto& img = cache[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(cache.size())))];
    const int r0 = rng.uniform_int(static_cast<int>(img.rows()) - cfg_.crop + 1);
    const int c0 = rng.uniform_int(static_cast<int>(img.cols()) - cfg_.crop + 1);
    out.push_back(img.block(r0, c0, cfg_.crop, cfg_.crop));
  }
  return out;
}

StepRecord Trainer::train_step(int epoch, int step) {
  const bool need_x = !(cfg_.disable_adversarial && cfg_.disable_metric);
  std::vector<Mat> bx;
  if (need_x) {
    if (hx_.empty()) fail("parameter", "trainer has no source data; call set_data first");
    bx = sample_batch(hx_, epoch, step, kTagBatchX);
  }
  if (hy_.empty()) fail("parameter", "trainer has no target data; call set_data first");
  std::vector<Mat> by = sample_batch(hy_, epoch, step, kTagBatchY);
  if (!need_x) bx = by;  // placeholder shapes; the x branch is not evaluated
  return step_impl(bx, by, epoch, step);
}

StepRecord Trainer::train_step_on(const std::vector<Mat>& batch_x_hf,
                                  const std::vector<Mat>& batch_y_hf, int epoch, int step) {
  if (batch_x_hf.empty() || batch_y_hf.empty()) fail("parameter", "empty batch");
  return step_impl(batch_x_hf, batch_y_hf, epoch, step);
}

StepRecord Trainer::step_impl(const std::vector<Mat>& bx, const std::vector<Mat>& by, int epoch,
                              int step) {
  const double lr = lr_at_epoch(epoch, cfg_);
  StepRecord rec;
  rec.epoch = epoch;
  rec.step = step;
  rec.lr = lr;

  Tensor xt = batch_to_tensor(bx);
  Tensor yt = batch_to_tensor(by);
  const int batch = xt.dim(0);

  if (!cfg_.disable_adversarial) {
    // discriminator update on detached generator outputs
    Tensor fake_v;
    {
      Graph g(false);
      fake_v = gen_->forward(g, g.track(xt, false)).y->value;
    }
    Graph g(true);
    NodeRef d_real = disc_->forward(g, g.track(yt, false));
    NodeRef d_fake = disc_->forward(g, g.track(std::move(fake_v), false));
    NodeRef loss_d = objectives::gan_loss_discriminator_node(g, d_real, d_fake);
    rec.gan_d = loss_d->value.scalar();
    if (!std::isfinite(rec.gan_d))
      fail("non-finite", "discriminator loss diverged at epoch " + std::to_string(epoch) +
                             " step " + std::to_string(step));
    adam_d_->zero_grad();
    g.backward(loss_d);
    adam_d_->step(lr);
  }

  // generator + projection update; discriminator participates frozen
  Graph g(true);
  NodeRef x = g.track(std::move(xt), false);
  NodeRef y = g.track(std::move(yt), false);

  const bool need_gx = !cfg_.disable_adversarial || !cfg_.disable_metric;
  net::GeneratorOut gx;
  if (need_gx) gx = gen_->forward(g, x);

  NodeRef gan = zero_scalar(g);
  if (!cfg_.disable_adversarial) {
    net::set_requires_grad(disc_->params(), false);
    gan = objectives::gan_loss_generator_node(g, disc_->forward(g, gx.y));
  }

  net::GeneratorOut gy = gen_->forward(g, y);
  NodeRef idt = objectives::identity_loss_node(g, gy.y, y);

  NodeRef m1 = zero_scalar(g), m2 = zero_scalar(g);
  if (!cfg_.disable_metric) {
    net::GeneratorOut gfake = gen_->forward(g, gx.y);
    NodeRef map1x = p1_->forward_map(g, gx.feat1);
    NodeRef map1f = p1_->forward_map(g, gfake.feat1);
    NodeRef map2x = p2_->forward_map(g, gx.feat2);
    NodeRef map2f = p2_->forward_map(g, gfake.feat2);
    const std::pair<int, int> grid{map1x->value.dim(2), map1x->value.dim(3)};
    NodeRef acc1, acc2;
    for (int i = 0; i < batch; ++i) {
      embedding::PairScheme scheme;
      scheme.num_locations = cfg_.num_anchor_locations;
      scheme.rng_seed = Rng::mix({cfg_.seed, kTagAnchor, static_cast<std::uint64_t>(epoch),
                                  static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(i)});
      auto locs = embedding::sample_anchor_locations(grid, scheme);
      if (cfg_.debug_pairing) rec.anchor_locations.push_back(locs);
      auto embed_at = [&](NodeRef map) {
        return nn::l2_normalize_rows(g, nn::gather_locations(g, map, i, locs));
      };
      NodeRef t1 = embedding::metric_loss_node(g, embed_at(map1x), embed_at(map1f), cfg_.tau);
      NodeRef t2 = embedding::metric_loss_node(g, embed_at(map2x), embed_at(map2f), cfg_.tau);
      acc1 = acc1 ? nn::add(g, acc1, t1) : t1;
      acc2 = acc2 ? nn::add(g, acc2, t2) : t2;
    }
    m1 = nn::scale(g, acc1, 1.0 / batch);
    m2 = nn::scale(g, acc2, 1.0 / batch);
  }

  objectives::LossWeights w;
  w.lambda_idt = cfg_.lambda_idt;
  w.lambda_m = cfg_.lambda_m;
  w.tau = cfg_.tau;
  NodeRef total = objectives::total_generator_loss_node(g, gan, idt, m1, m2, w);

  rec.gan_g = gan->value.scalar();
  rec.idt = idt->value.scalar();
  rec.m1 = m1->value.scalar();
  rec.m2 = m2->value.scalar();
  rec.total = total->value.scalar();

  adam_g_->zero_grad();
  g.backward(total);
  adam_g_->step(lr);
  if (!cfg_.disable_adversarial) net::set_requires_grad(disc_->params(), true);
  return rec;
}

std::string step_record_to_json(const StepRecord& r) {
  json j{{"epoch", r.epoch}, {"step", r.step}, {"lr", r.lr},   {"gan_g", r.gan_g},
         {"gan_d", r.gan_d}, {"idt", r.idt},   {"m1", r.m1},   {"m2", r.m2},
         {"total", r.total}};
  if (!r.anchor_locations.empty()) {
    json items = json::array();
    for (const auto& locs : r.anchor_locations) {
      json l = json::array();
      for (const auto& [a, b] : locs) l.push_back({a, b});
      items.push_back(std::move(l));
    }
    j["anchors"] = std::move(items);
  }
  return j.dump();
}

StepRecord step_record_from_json(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    fail("parse", std::string("bad log line: ") + e.what());
  }
  StepRecord r;
  try {
    j.at("epoch").get_to(r.epoch);
    j.at("step").get_to(r.step);
    j.at("lr").get_to(r.lr);
    j.at("gan_g").get_to(r.gan_g);
    j.at("gan_d").get_to(r.gan_d);
    j.at("idt").get_to(r.idt);
    j.at("m1").get_to(r.m1);
    j.at("m2").get_to(r.m2);
    j.at("total").get_to(r.total);
    if (j.contains("anchors"))
      for (const auto& item : j.at("anchors")) {
        std::vector<std::pair<int, int>> locs;
        for (const auto& l : item) locs.emplace_back(l.at(0).get<int>(), l.at(1).get<int>());
        r.anchor_locations.push_back(std::move(locs));
      }
  } catch (const json::exception& e) {
    fail("parse", std::string("log field error: ") + e.what());
  }
  return r;
}

std::vector<StepRecord> read_step_log(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail("io", "cannot open: " + path);
  std::vector<StepRecord> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    out.push_back(step_record_from_json(line));
  }
  return out;
}

namespace {
constexpr char kCkptMagic[4] = {'D', 'M', 'L', 'C'};

void append_section(std::string& out, const std::string& name, const std::string& payload) {
  bytes::put_u32(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  bytes::put_u64(out, payload.size());
  out += payload;
}
}  // namespace

void Trainer::save_checkpoint(const std::string& path) const {
  std::string out;
  out.append(kCkptMagic, 4);
  bytes::put_u32(out, 1);  // version
  bytes::put_u32(out, static_cast<std::uint32_t>(epochs_completed_));
  const std::string cfg_json = config_to_json(cfg_).dump();
  bytes::put_u64(out, cfg_json.size());
  out += cfg_json;
  bytes::put_u32(out, 6);
  append_section(out, "gen", net::params_to_bytes(gen_->params()));
  append_section(out, "p1", net::params_to_bytes(p1_->params()));
  append_section(out, "p2", net::params_to_bytes(p2_->params()));
  append_section(out, "disc", net::params_to_bytes(disc_->params()));
  append_section(out, "adam_g", adam_to_bytes(*adam_g_));
  append_section(out, "adam_d", adam_to_bytes(*adam_d_));

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) fail("io", "cannot open for writing: " + tmp);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) fail("io", "write failed: " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) fail("io", "cannot move checkpoint into place: " + ec.message());
}

Trainer Trainer::load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("io", "cannot open: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  bytes::Reader r{buf, 0, path};
  if (r.bytes(4, "magic") != std::string(kCkptMagic, 4))
    fail("parse", path + ": not a checkpoint");
  const std::uint32_t version = r.u32("version");
  if (version != 1) fail("checkpoint", path + ": unsupported version " + std::to_string(version));
  const int epochs_done = static_cast<int>(r.u32("epoch counter"));
  const std::uint64_t cfg_len = r.u64("config length");
  const std::string cfg_json = r.bytes(cfg_len, "config");
  json parsed;
  try {
    parsed = json::parse(cfg_json);
  } catch (const json::parse_error& e) {
    fail("parse", path + ": config payload: " + e.what());
  }
  Trainer t(config_from_json(parsed, path));
  t.epochs_completed_ = epochs_done;

  const std::uint32_t sections = r.u32("section count");
  for (std::uint32_t i = 0; i < sections; ++i) {
    const std::uint32_t name_len = r.u32("section name length");
    const std::string name = r.bytes(name_len, "section name");
    const std::uint64_t len = r.u64("section length");
    const std::string payload = r.bytes(len, "section payload");
    const std::string src = path + ":" + name;
    if (name == "gen")
      net::params_from_bytes(t.gen_->params(), payload, src);
    else if (name == "p1")
      net::params_from_bytes(t.p1_->params(), payload, src);
    else if (name == "p2")
      net::params_from_bytes(t.p2_->params(), payload, src);
    else if (name == "disc")
      net::params_from_bytes(t.disc_->params(), payload, src);
    else if (name == "adam_g")
      adam_from_bytes(*t.adam_g_, payload, src);
    else if (name == "adam_d")
      adam_from_bytes(*t.adam_d_, payload, src);
    else
      fail("checkpoint", path + ": unknown section '" + name + "'");
  }
  if (r.pos != buf.size()) fail("parse", path + ": trailing bytes");
  return t;
}

std::vector<StepRecord> Trainer::fit(const std::string& out_dir) {
  if (hy_.empty()) fail("parameter", "trainer has no data; call set_data first");
  fs::create_directories(out_dir);
  const std::string log_path = (fs::path(out_dir) / "train_log.jsonl").string();
  std::ofstream log(log_path, epochs_completed_ > 0 ? std::ios::app : std::ios::trunc);
  if (!log) fail("io", "cannot open for writing: " + log_path);

  const int steps = resolved_steps_per_epoch();
  std::vector<StepRecord> records;
  for (int epoch = epochs_completed_; epoch < cfg_.epochs; ++epoch) {
    for (int step = 0; step < steps; ++step) {
      StepRecord rec = train_step(epoch, step);
      log << step_record_to_json(rec) << "\n";
      log.flush();
      records.push_back(std::move(rec));
    }
    epochs_completed_ = epoch + 1;
    char name[32];
    std::snprintf(name, sizeof(name), "ckpt_epoch_%04d.bin", epochs_completed_);
    save_checkpoint((fs::path(out_dir) / name).string());
  }
  return records;
}

std::vector<StepRecord> fit(const std::vector<Mat>& x_slices, const std::vector<Mat>& y_slices,
                            const TrainConfig& cfg, const std::string& out_dir) {
  Trainer t(cfg);
  t.set_data(x_slices, y_slices);
  return t.fit(out_dir);
}

}  // namespace dmlct::train
