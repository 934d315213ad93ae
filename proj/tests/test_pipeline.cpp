#include <doctest.h>

#include "dmlct/networks.hpp"
#include "dmlct/pipeline.hpp"
#include "dmlct/wavelet.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <unistd.h>

using dmlct::Error;
using dmlct::Mat;
namespace data = dmlct::data;
namespace eval = dmlct::eval;
namespace pipeline = dmlct::pipeline;
namespace train = dmlct::train;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("dmlct_pipe_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << text;
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

pipeline::SynthSpec tiny_synth(int n_ld = 3, int n_hd = 2) {
  pipeline::SynthSpec s;
  s.n_ld = n_ld;
  s.n_hd = n_hd;
  s.phantom.size = 64;
  s.phantom.noise_sigma_ld = 60.0;
  s.phantom.noise_sigma_hd = 10.0;
  s.phantom.domain_mean_shift = -50.0;
  s.phantom.seed = 9;
  return s;
}

// small nets, one epoch of two steps
std::vector<std::string> tiny_train_overrides() {
  return {"epochs=1",         "batch_size=2",       "crop=16",
          "wavelet_level=2",  "gen_base_channels=4", "gen_rrdb_blocks=1",
          "gen_growth_channels=3", "disc_base_channels=4", "proj_hidden_dim=5",
          "embed_dim=6",      "num_anchor_locations=8", "steps_per_epoch=2",
          "seed=3"};
}

}  // namespace

TEST_CASE("key=value parsing") {
  SUBCASE("sections and comments are cosmetic") {
    auto kv = pipeline::parse_kv_text(
        "# header\n[train]\n epochs = 3 \n\n[loss]\ntau=0.2 # inline\n", "cfg");
    REQUIRE(kv.size() == 2);
    CHECK(kv[0] == std::pair<std::string, std::string>{"epochs", "3"});
    CHECK(kv[1] == std::pair<std::string, std::string>{"tau", "0.2"});
  }
  SUBCASE("malformed lines carry their location") {
    try {
      pipeline::parse_kv_text("epochs = 3\nnonsense line\n", "cfg");
      FAIL("expected parse error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("cfg:2") != std::string::npos);
    }
    CHECK_THROWS_AS(pipeline::parse_kv_text("[unterminated\n", "cfg"), Error);
    CHECK_THROWS_AS(pipeline::parse_kv_text("= 3\n", "cfg"), Error);
  }
  SUBCASE("duplicate keys within one file are rejected") {
    CHECK_THROWS_AS(pipeline::parse_kv_text("a = 1\na = 2\n", "cfg"), Error);
  }
  SUBCASE("empty text parses to nothing") {
    CHECK(pipeline::parse_kv_text("", "cfg").empty());
  }
}

TEST_CASE("train config resolution") {
  SUBCASE("defaults match the primary recipe") {
    train::TrainConfig c = pipeline::resolve_train_config("", "", {});
    CHECK(c.epochs == 200);
    CHECK(c.batch_size == 8);
    CHECK(c.wavelet_level == 6);
    CHECK(c.filter_name == "db3");
    CHECK(c.tau == doctest::Approx(0.15));
    CHECK(c.lambda_idt == doctest::Approx(5.0));
    CHECK(c.lambda_m == doctest::Approx(0.1));
    CHECK_FALSE(c.proj_downsample);
  }
  SUBCASE("aapm preset restates the defaults") {
    train::TrainConfig base = pipeline::resolve_train_config("", "", {});
    train::TrainConfig c = pipeline::resolve_train_config("aapm", "", {});
    CHECK(c.tau == base.tau);
    CHECK(c.epochs == base.epochs);
    CHECK(c.proj_downsample == base.proj_downsample);
  }
  SUBCASE("temporal preset") {
    train::TrainConfig c = pipeline::resolve_train_config("temporal", "", {});
    CHECK(c.tau == doctest::Approx(0.12));
    CHECK(c.wavelet_level == 5);
    CHECK(c.batch_size == 4);
    CHECK(c.epochs == 100);
    CHECK(c.proj_downsample);
  }
  SUBCASE("file beats preset, override beats file") {
    TempDir dir;
    write_file(dir.file("cfg.txt"), "[train]\nepochs = 42\ntau = 0.3\n");
    train::TrainConfig c =
        pipeline::resolve_train_config("temporal", dir.file("cfg.txt"), {"tau=0.25"});
    CHECK(c.epochs == 42);                    // file over preset's 100
    CHECK(c.tau == doctest::Approx(0.25));    // override over file's 0.3
    CHECK(c.batch_size == 4);                 // preset survives where unset
  }
  SUBCASE("unknown keys and bad values are rejected") {
    CHECK_THROWS_AS(pipeline::resolve_train_config("", "", {"cadence=9"}), Error);
    CHECK_THROWS_AS(pipeline::resolve_train_config("", "", {"epochs=ten"}), Error);
    CHECK_THROWS_AS(pipeline::resolve_train_config("", "", {"epochs"}), Error);
    CHECK_THROWS_AS(pipeline::resolve_train_config("nope", "", {}), Error);
  }
  SUBCASE("resolution validates the final config") {
    CHECK_THROWS_AS(pipeline::resolve_train_config("", "", {"tau=0"}), Error);
    CHECK_THROWS_AS(pipeline::resolve_train_config("", "", {"crop=36"}), Error);
  }
}

TEST_CASE("synth pipeline") {
  SUBCASE("file census and manifest") {
    TempDir dir;
    const auto sum = pipeline::run_synth(tiny_synth(), dir.path.string());
    CHECK(sum.n_ld == 3);
    CHECK(sum.n_hd == 2);
    CHECK(sum.n_clean == 3);
    int cthu = 0;
    for (const auto& e : fs::directory_iterator(dir.path))
      if (e.path().extension() == ".cthu") ++cthu;
    CHECK(cthu == 8);  // 3 ld + 2 hd + 3 clean
    CHECK(fs::exists(dir.file("resolved_config.json")));
    const auto entries = data::read_manifest(dir.file("manifest.tsv"));
    REQUIRE(entries.size() == 8);
    CHECK(entries[0].domain_tag == "ldct");
    CHECK(entries[3].domain_tag == "hdct");
    CHECK(entries[5].domain_tag == "clean");
    // the clean set loads back as denoising references
    CHECK(data::load_manifest_images(dir.file("manifest.tsv"), "clean").size() == 3);
  }
  SUBCASE("rerun with the same seed is byte-identical") {
    TempDir a, b;
    pipeline::run_synth(tiny_synth(), a.path.string());
    pipeline::run_synth(tiny_synth(), b.path.string());
    for (const std::string name : {"ld_0000.cthu", "hd_0001.cthu", "ld_0002_clean.cthu"})
      REQUIRE(read_bytes(a.file(name)) == read_bytes(b.file(name)));
  }
  SUBCASE("achieved statistics track the spec") {
    TempDir dir;
    const auto sum = pipeline::run_synth(tiny_synth(8, 8), dir.path.string());
    CHECK(std::abs(sum.achieved_sigma_ld - 60.0) < 3.0);  // 5%
    CHECK(std::abs(sum.achieved_sigma_hd - 10.0) < 0.5);
    CHECK(std::abs(sum.achieved_shift_hu - (-50.0)) < 8.0);
  }
  SUBCASE("spec file with overrides") {
    TempDir dir;
    write_file(dir.file("spec.txt"), "n_ld = 2\nn_hd = 1\nsize = 64\nsigma_ld = 40\nseed = 5\n");
    auto kv = pipeline::read_kv_file(dir.file("spec.txt"));
    kv.emplace_back("n_hd", "3");  // override wins by coming later
    const auto spec = pipeline::synth_spec_from_kv(kv, "spec");
    CHECK(spec.n_ld == 2);
    CHECK(spec.n_hd == 3);
    CHECK(spec.phantom.noise_sigma_ld == doctest::Approx(40.0));
    CHECK_THROWS_AS(pipeline::synth_spec_from_kv({{"radius", "3"}}, "spec"), Error);
    CHECK_THROWS_AS(pipeline::synth_spec_from_kv({{"n_ld", "-1"}}, "spec"), Error);
  }
}

TEST_CASE("train, denoise, eval pipeline") {
  TempDir data_dir, run_dir, out_dir, eval_dir;
  pipeline::run_synth(tiny_synth(3, 3), data_dir.path.string());
  const train::TrainConfig cfg = pipeline::resolve_train_config("", "", tiny_train_overrides());

  SUBCASE("missing manifest fails before any output appears") {
    TempDir empty;
    CHECK_THROWS_AS(
        pipeline::run_train(cfg, {empty.file("absent.tsv")}, run_dir.file("never")),
        Error);
    CHECK_FALSE(fs::exists(run_dir.file("never")));
  }

  SUBCASE("end to end") {
    const auto records =
        pipeline::run_train(cfg, {data_dir.path.string()}, run_dir.path.string());
    CHECK(records.size() == 2);  // 1 epoch, 2 steps
    CHECK(fs::exists(run_dir.file("resolved_config.json")));
    CHECK(fs::exists(run_dir.file("train_log.jsonl")));
    const std::string ckpt = run_dir.file("ckpt_epoch_0001.bin");
    REQUIRE(fs::exists(ckpt));

    const auto dsum = pipeline::run_denoise(ckpt, data_dir.path.string(), out_dir.path.string());
    CHECK(dsum.count == 3);
    for (const std::string name :
         {"ld_0000_output.cthu", "ld_0001_output.cthu", "ld_0002_output.cthu"})
      REQUIRE(fs::exists(out_dir.file(name)));
    const auto outs = data::load_manifest_images(out_dir.file("manifest.tsv"), "output");
    REQUIRE(outs.size() == 3);
    CHECK(outs[0].pixels.rows() == 64);
    CHECK(outs[0].pixels.cols() == 64);

    // rerun overwrites with identical bytes
    const std::string before = read_bytes(out_dir.file("ld_0001_output.cthu"));
    pipeline::run_denoise(ckpt, data_dir.path.string(), out_dir.path.string());
    CHECK(read_bytes(out_dir.file("ld_0001_output.cthu")) == before);

    const auto reports = pipeline::run_eval(out_dir.path.string(), data_dir.path.string(),
                                            eval_dir.path.string());
    REQUIRE(reports.size() == 4);  // three images + aggregate
    CHECK(reports.back().image_id == "aggregate");
    for (std::size_t i = 0; i < 3; ++i) {
      REQUIRE(reports[i].psnr_db.has_value());
      CHECK(std::isfinite(*reports[i].psnr_db));
      REQUIRE(reports[i].ssim.has_value());
      REQUIRE(reports[i].mean_shift_hu.has_value());
      CHECK(fs::exists(eval_dir.file("diff_" + reports[i].image_id + ".pgm")));
    }
    const auto loaded = eval::read_reports(eval_dir.file("reports.jsonl"));
    REQUIRE(loaded.size() == 4);
    CHECK(loaded[1].image_id == "ld_0001_output");
  }
}

TEST_CASE("denoise with a zeroed head restores the low band") {
  TempDir data_dir, run_dir, out_dir;
  pipeline::run_synth(tiny_synth(2, 2), data_dir.path.string());
  const train::TrainConfig cfg = pipeline::resolve_train_config("", "", tiny_train_overrides());

  train::Trainer t(cfg);
  for (const auto& p : t.generator().params())
    if (p->name == "g.c2.w" || p->name == "g.c2.b")
      std::fill(p->value.v.begin(), p->value.v.end(), 0.0);
  const std::string ckpt = run_dir.file("zero.bin");
  t.save_checkpoint(ckpt);

  pipeline::run_denoise(ckpt, data_dir.path.string(), out_dir.path.string());
  const auto inputs = data::load_manifest_images(data_dir.file("manifest.tsv"), "ldct");
  const auto outputs = data::load_manifest_images(out_dir.file("manifest.tsv"), "output");
  REQUIRE(outputs.size() == inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Mat lf = dmlct::wavelet::low_freq(inputs[i].pixels, cfg.wavelet_level, cfg.filter_name);
    // tolerance covers the file format's quantization step
    CHECK((outputs[i].pixels - lf).abs().maxCoeff() < 0.1);
  }
}

TEST_CASE("eval pairs and edge cases") {
  TempDir pred_dir, eval_dir;

  SUBCASE("identical inputs give the sentinel psnr and ssim 1") {
    data::CtImage img;
    img.pixels = Mat::Zero(16, 16);
    for (Eigen::Index r = 0; r < 16; ++r)
      for (Eigen::Index c = 0; c < 16; ++c) img.pixels(r, c) = 10.0 * r - 3.0 * c;
    img.id = "same";
    img.domain_tag = "output";
    data::save_slice(img, pred_dir.file("same.cthu"));
    data::write_manifest({{"same.cthu", "output"}}, pred_dir.file("manifest.tsv"));

    const auto reports = pipeline::run_eval(pred_dir.path.string(), pred_dir.path.string(),
                                            eval_dir.path.string());
    REQUIRE(reports.size() == 2);
    REQUIRE(reports[0].psnr_db.has_value());
    CHECK(std::isinf(*reports[0].psnr_db));
    CHECK(*reports[0].ssim == doctest::Approx(1.0));
    CHECK(*reports[0].mean_shift_hu == doctest::Approx(0.0));
    // equal images map to the window midpoint, so the diff image is flat gray
    const std::string pgm = read_bytes(eval_dir.file("diff_same.pgm"));
    const unsigned char mid = static_cast<unsigned char>(pgm[pgm.size() - 1]);
    CHECK(static_cast<int>(mid) == 128);
  }
  SUBCASE("count mismatch is a pairing error") {
    data::CtImage a;
    a.pixels = Mat::Constant(8, 8, 1.0);
    a.id = "a";
    data::save_slice(a, pred_dir.file("a.cthu"));
    data::save_slice(a, pred_dir.file("b.cthu"));
    data::write_manifest({{"a.cthu", "ldct"}}, pred_dir.file("one.tsv"));
    data::write_manifest({{"a.cthu", "ldct"}, {"b.cthu", "ldct"}}, pred_dir.file("two.tsv"));
    try {
      pipeline::run_eval(pred_dir.file("one.tsv"), pred_dir.file("two.tsv"),
                         eval_dir.path.string());
      FAIL("expected pairing error");
    } catch (const Error& e) {
      CHECK(e.kind() == "pairing");
    }
  }
}
