#pragma once

#include "dmlct/data.hpp"
#include "dmlct/embedding.hpp"
#include "dmlct/nn.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace dmlct::net {

using nn::Graph;
using nn::NodeRef;
using nn::Tensor;

struct GeneratorSpec {
  int in_channels = 1;
  int base_channels = 64;
  int num_rrdb_blocks = 6;
  int growth_channels = 32;
  int out_channels = 1;
  void validate() const;  // Error("parameter")
};

struct ProjectionSpec {
  int in_channels = 64;  // channel width of the feature tap it consumes
  int hidden_dim = 256;
  int embed_dim = 256;
  bool downsample_2x2 = false;
  void validate() const;
};

struct DiscriminatorSpec {
  int in_channels = 1;
  int base_channels = 64;
  int num_blocks = 3;  // stride-2 blocks; input sides must divide by 2^num_blocks
  void validate() const;
};

/// Same-padded conv parameters plus stride/pad captured at construction.
struct Conv {
  NodeRef w, b;
  int stride = 1;
  int pad = 1;
};

struct GeneratorOut {
  NodeRef y;      // HF residual output, same shape as input
  NodeRef feat1;  // encoder output (global-residual sum)
  NodeRef feat2;  // after the first refinement conv
};

/// Encoder of stacked residual-in-residual dense blocks with a global
/// residual, then two 3x3 convs: one with activation (feat2 tap), one
/// down to out_channels with no activation (signed HF residuals).
class Generator {
 public:
  Generator(const GeneratorSpec& spec, std::uint64_t seed);

  GeneratorOut forward(Graph& g, NodeRef x) const;
  /// No-grad single-image pass on a (H, W) matrix.
  Mat apply(const Mat& x_hf) const;

  const GeneratorSpec& spec() const { return spec_; }
  const std::vector<NodeRef>& params() const { return params_; }

 private:
  struct DenseBlock {
    Conv c1, c2, c3, c4, c5;
  };
  struct Rrdb {
    DenseBlock d1, d2, d3;
  };

  NodeRef dense_forward(Graph& g, NodeRef x, const DenseBlock& b) const;

  GeneratorSpec spec_;
  Conv conv_first_, trunk_, c1_, c2_;
  std::vector<Rrdb> blocks_;
  std::vector<NodeRef> params_;
};

/// 1x1 conv -> leaky relu -> 1x1 conv, optional 2x2 average pooling,
/// per-location L2 normalization.
class ProjectionHead {
 public:
  ProjectionHead(const ProjectionSpec& spec, std::uint64_t seed);

  /// Projected (and pooled) map before normalization: (N, embed_dim, H', W').
  NodeRef forward_map(Graph& g, NodeRef feat) const;
  /// Unit-norm embedding rows (K, embed_dim) for item `n` at `locations`
  /// on the post-pooling grid.
  NodeRef embed(Graph& g, NodeRef feat, int n,
                const std::vector<std::pair<int, int>>& locations) const;
  /// Value-level convenience producing a validated embedding set.
  embedding::PatchEmbeddingSet project(const Tensor& feat,
                                 const std::vector<std::pair<int, int>>& locations,
                                 int depth_tag, const std::string& source_tag) const;

  const ProjectionSpec& spec() const { return spec_; }
  const std::vector<NodeRef>& params() const { return params_; }

 private:
  ProjectionSpec spec_;
  Conv p1_, p2_;
  std::vector<NodeRef> params_;
};

/// Patch discriminator: num_blocks x (stride-2 conv + leaky relu), then a
/// 1x1 conv to a one-channel score map. No sigmoid.
/// Deliberately free of per-image activation norms: instance norm everywhere
/// would make D(a*x) == D(x) for a > 0, and for noise-texture inputs the
/// real/fake gap is a per-image amplitude statistic such norms erase.
/// Normalization lives in the fan-in scaled init of the conv weights.
class Discriminator {
 public:
  Discriminator(const DiscriminatorSpec& spec, std::uint64_t seed);

  NodeRef forward(Graph& g, NodeRef img) const;

  const DiscriminatorSpec& spec() const { return spec_; }
  const std::vector<NodeRef>& params() const { return params_; }

 private:
  struct Block {
    Conv conv;
  };

  DiscriminatorSpec spec_;
  std::vector<Block> blocks_;
  Conv final_;
  std::vector<NodeRef> params_;
};

void set_requires_grad(const std::vector<NodeRef>& params, bool on);

/// Binary parameter archive; load is shape-checked against the existing
/// parameter list and round-trips values bit-exactly. The byte forms back
/// checkpoint sections; `src` labels parse errors.
std::string params_to_bytes(const std::vector<NodeRef>& params);
void params_from_bytes(const std::vector<NodeRef>& params, const std::string& buf,
                       const std::string& src);
void save_params(const std::vector<NodeRef>& params, const std::string& path);
void load_params(const std::vector<NodeRef>& params, const std::string& path);

/// low_freq(x) + hf_scale * g_hf(high_freq(x) / hf_scale); g_hf maps a
/// normalized HF image to a normalized HF image.
data::CtImage denoise_full_with(const data::CtImage& x,
                                const std::function<Mat(const Mat&)>& g_hf, int level,
                                const std::string& filter_name, double hf_scale);
data::CtImage denoise_full(const data::CtImage& x, const Generator& gen, int level,
                           const std::string& filter_name, double hf_scale = 3000.0);

}  // namespace dmlct::net
