#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dmlct/data.hpp"
#include "dmlct/embedding.hpp"
#include "dmlct/eval.hpp"
#include "dmlct/networks.hpp"
#include "dmlct/pipeline.hpp"
#include "dmlct/trainer.hpp"
#include "dmlct/wavelet.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace py = pybind11;
using dmlct::Mat;
namespace data = dmlct::data;
namespace emb = dmlct::embedding;
namespace ev = dmlct::eval;
namespace net = dmlct::net;
namespace pipeline = dmlct::pipeline;
namespace train = dmlct::train;

namespace {

emb::PatchEmbeddingSet set_of(const Mat& vectors, const std::string& tag) {
  emb::PatchEmbeddingSet s;
  s.vectors = vectors;
  for (int i = 0; i < vectors.rows(); ++i) s.locations.emplace_back(i, 0);
  s.source_tag = tag;
  return s;
}

py::dict report_to_dict(const ev::EvalReport& r) {
  py::dict d;
  d["image_id"] = r.image_id;
  d["psnr_db"] = r.psnr_db ? py::cast(*r.psnr_db) : py::none();
  d["ssim"] = r.ssim ? py::cast(*r.ssim) : py::none();
  d["psnr_data_range"] = r.psnr_data_range ? py::cast(*r.psnr_data_range) : py::none();
  d["mean_shift_hu"] = r.mean_shift_hu ? py::cast(*r.mean_shift_hu) : py::none();
  d["window"] = py::make_tuple(r.window.first, r.window.second);
  return d;
}

// Loads a checkpoint once and applies its generator to full HU slices.
struct Denoiser {
  train::Trainer trainer;

  explicit Denoiser(const std::string& checkpoint_path)
      : trainer(train::Trainer::load_checkpoint(checkpoint_path)) {}

  Mat image(const Mat& hu_slice) const {
    data::CtImage img;
    img.pixels = hu_slice;
    img.id = "array";
    const train::TrainConfig& cfg = trainer.config();
    return net::denoise_full(img, trainer.generator(), cfg.wavelet_level, cfg.filter_name,
                             cfg.hf_scale)
        .pixels;
  }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Wavelet-domain CT denoising toolkit";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const dmlct::Error& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  // ---- wavelet bands ----
  m.def(
      "high_freq",
      [](const Mat& image, int level, const std::string& filter_name) {
        return dmlct::wavelet::high_freq(image, level, filter_name);
      },
      py::arg("image"), py::arg("level"), py::arg("filter_name") = "db3",
      "Detail-band reconstruction; image minus low_freq.");
  m.def(
      "low_freq",
      [](const Mat& image, int level, const std::string& filter_name) {
        return dmlct::wavelet::low_freq(image, level, filter_name);
      },
      py::arg("image"), py::arg("level"), py::arg("filter_name") = "db3",
      "Approximation-band reconstruction at the given level.");

  // ---- patch metric ----
  m.def(
      "metric_distance",
      [](const Eigen::VectorXd& z, const Eigen::VectorXd& w, double tau) {
        Mat zm(1, z.size()), wm(1, w.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) zm(0, i) = z[i];
        for (Eigen::Index i = 0; i < w.size(); ++i) wm(0, i) = w[i];
        return emb::metric_distance(zm, wm, tau);
      },
      py::arg("z"), py::arg("w"), py::arg("tau"),
      "(1 - z.w)/tau for unit vectors.");
  m.def(
      "metric_loss",
      [](const Mat& z, const Mat& w, double tau) {
        return emb::metric_loss(set_of(z, "x"), set_of(w, "y"), tau);
      },
      py::arg("z"), py::arg("w"), py::arg("tau"),
      "Pull-push loss over aligned unit-row matrices (row k of z pairs with row k of w).");
  m.def(
      "sample_anchor_locations",
      [](int rows, int cols, int count, std::uint64_t seed) {
        emb::PairScheme scheme;
        scheme.num_locations = count;
        scheme.rng_seed = seed;
        return emb::sample_anchor_locations({rows, cols}, scheme);
      },
      py::arg("rows"), py::arg("cols"), py::arg("count"), py::arg("seed") = 0,
      "Unique (row, col) anchors drawn without replacement, reproducible by seed.");
  m.def("normalize_rows", &emb::normalize_rows, py::arg("features"),
        "Scale each row to unit L2 norm.");

  // ---- evaluation ----
  m.def("psnr", &ev::psnr, py::arg("a"), py::arg("b"), py::arg("data_range"));
  m.def("ssim", &ev::ssim, py::arg("a"), py::arg("b"), py::arg("data_range"));
  m.def(
      "patch_stats",
      [](const Mat& img, const Mat& mask, int patch_size, int num_patches, std::uint64_t seed) {
        ev::PatchStatConfig cfg;
        cfg.patch_size = patch_size;
        cfg.num_patches = num_patches;
        cfg.seed = seed;
        const ev::PatchStats st = ev::patch_stats(img, mask, cfg);
        py::dict d;
        d["mean_of_means"] = st.mean_of_means;
        d["mean_of_stds"] = st.mean_of_stds;
        d["num_patches"] = st.per_patch.size();
        return d;
      },
      py::arg("image"), py::arg("mask"), py::arg("patch_size") = 60,
      py::arg("num_patches") = 300, py::arg("seed") = 0,
      "Mean/std over random fully-masked patches.");

  // ---- pipeline ----
  m.def(
      "synth",
      [](const std::string& out_dir, int n_ld, int n_hd, int size, double sigma_ld,
         double sigma_hd, double hd_shift, std::uint64_t seed) {
        pipeline::SynthSpec spec;
        spec.n_ld = n_ld;
        spec.n_hd = n_hd;
        spec.phantom.size = size;
        spec.phantom.noise_sigma_ld = sigma_ld;
        spec.phantom.noise_sigma_hd = sigma_hd;
        spec.phantom.domain_mean_shift = hd_shift;
        spec.phantom.seed = seed;
        const pipeline::SynthSummary s = pipeline::run_synth(spec, out_dir);
        py::dict d;
        d["n_ld"] = s.n_ld;
        d["n_hd"] = s.n_hd;
        d["n_clean"] = s.n_clean;
        d["achieved_sigma_ld"] = s.achieved_sigma_ld;
        d["achieved_sigma_hd"] = s.achieved_sigma_hd;
        d["achieved_shift_hu"] = s.achieved_shift_hu;
        return d;
      },
      py::arg("out_dir"), py::arg("n_ld") = 16, py::arg("n_hd") = 16, py::arg("size") = 128,
      py::arg("sigma_ld") = 60.0, py::arg("sigma_hd") = 10.0, py::arg("hd_shift") = 0.0,
      py::arg("seed") = 0,
      "Write a synthetic phantom dataset (noisy ldct/hdct, clean references, manifest).");
  m.def(
      "resolve_config_json",
      [](const std::string& preset, const std::string& config_path,
         const std::vector<std::string>& overrides) {
        return train::config_to_json_text(
            pipeline::resolve_train_config(preset, config_path, overrides));
      },
      py::arg("preset") = "", py::arg("config_path") = "",
      py::arg("overrides") = std::vector<std::string>{},
      "Resolved training config as JSON (overrides > file > preset > defaults).");
  m.def(
      "train",
      [](const std::vector<std::string>& data, const std::string& out_dir,
         const std::string& preset, const std::string& config_path,
         const std::vector<std::string>& overrides) {
        const train::TrainConfig cfg =
            pipeline::resolve_train_config(preset, config_path, overrides);
        const auto records = pipeline::run_train(cfg, data, out_dir);
        py::dict d;
        d["steps"] = records.size();
        if (!records.empty()) {
          py::dict last;
          last["total"] = records.back().total;
          last["idt"] = records.back().idt;
          last["gan_g"] = records.back().gan_g;
          last["gan_d"] = records.back().gan_d;
          last["m1"] = records.back().m1;
          last["m2"] = records.back().m2;
          d["final"] = last;
        }
        return d;
      },
      py::arg("data"), py::arg("out_dir"), py::arg("preset") = "", py::arg("config_path") = "",
      py::arg("overrides") = std::vector<std::string>{},
      "Train into out_dir (checkpoints, train_log.jsonl, resolved_config.json).");
  m.def(
      "denoise",
      [](const std::string& checkpoint, const std::string& input, const std::string& out_dir) {
        return pipeline::run_denoise(checkpoint, input, out_dir).count;
      },
      py::arg("checkpoint"), py::arg("input"), py::arg("out_dir"),
      "Denoise every ldct slice named by a manifest; returns the slice count.");
  m.def(
      "evaluate",
      [](const std::string& pred, const std::string& ref, const std::string& out_dir,
         std::pair<double, double> window) {
        pipeline::EvalOptions opt;
        opt.window = window;
        const auto reports = pipeline::run_eval(pred, ref, out_dir, opt);
        py::list out;
        for (const auto& r : reports) out.append(report_to_dict(r));
        return out;
      },
      py::arg("pred"), py::arg("ref"), py::arg("out_dir"),
      py::arg("window") = std::pair<double, double>{-50.0, 50.0},
      "Pairwise reports plus an aggregate; writes reports.jsonl and difference images.");

  py::class_<Denoiser>(m, "Denoiser",
                       "Loads a training checkpoint and denoises full HU slices in memory.")
      .def(py::init<const std::string&>(), py::arg("checkpoint_path"))
      .def("image", &Denoiser::image, py::arg("hu_slice"),
           "Denoise one 2D HU array; side lengths must be multiples of 4.")
      .def_property_readonly(
          "config_json",
          [](const Denoiser& d) { return train::config_to_json_text(d.trainer.config()); });

  // ---- file formats ----
  m.def(
      "load_slice",
      [](const std::string& path) {
        const data::CtImage img = data::load_slice(path);
        return py::make_tuple(img.pixels, img.id);
      },
      py::arg("path"), "Read one slice file; returns (hu_array, id).");
  m.def(
      "save_slice",
      [](const Mat& pixels, const std::string& path, const std::string& domain_tag) {
        data::CtImage img;
        img.pixels = pixels;
        img.id = std::filesystem::path(path).stem().string();
        img.domain_tag = domain_tag;
        data::save_slice(img, path);
      },
      py::arg("pixels"), py::arg("path"), py::arg("domain_tag") = "ldct",
      "Write one slice file with an affine HU mapping.");
}
