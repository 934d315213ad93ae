#include "dmlct/networks.hpp"

#include "dmlct/bytes.hpp"
#include "dmlct/wavelet.hpp"

#include <cstring>
#include <fstream>

namespace dmlct::net {

namespace {

using nn::init_normal_fan_in;
using nn::make_param;

Conv make_conv(std::vector<NodeRef>& params, Rng& rng, const std::string& name, int cin,
               int cout, int k, int stride, int pad) {
  Tensor w({cout, cin, k, k});
  init_normal_fan_in(w, cin * k * k, rng);
  // nonzero bias init: an all-zero-bias stack is positively homogeneous up
  // to the first norm layer, which would cancel input scale
  Tensor b({cout});
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
  for (double& v : b.v) v = rng.uniform(-bound, bound);
  Conv c;
  c.w = make_param(name + ".w", std::move(w));
  c.b = make_param(name + ".b", std::move(b));
  c.stride = stride;
  c.pad = pad;
  params.push_back(c.w);
  params.push_back(c.b);
  return c;
}

NodeRef run_conv(Graph& g, const Conv& c, NodeRef x) {
  return nn::conv2d(g, x, c.w, c.b, c.stride, c.pad);
}

void require_positive(int v, const char* what) {
  if (v < 1) fail("parameter", std::string(what) + " must be >= 1");
}

}  // namespace

void GeneratorSpec::validate() const {
  require_positive(in_channels, "in_channels");
  require_positive(base_channels, "base_channels");
  require_positive(num_rrdb_blocks, "num_rrdb_blocks");
  require_positive(growth_channels, "growth_channels");
  require_positive(out_channels, "out_channels");
}

void ProjectionSpec::validate() const {
  require_positive(in_channels, "in_channels");
  require_positive(hidden_dim, "hidden_dim");
  require_positive(embed_dim, "embed_dim");
}

void DiscriminatorSpec::validate() const {
  require_positive(in_channels, "in_channels");
  require_positive(base_channels, "base_channels");
  require_positive(num_blocks, "num_blocks");
}

Generator::Generator(const GeneratorSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  Rng rng(Rng::mix({seed, 0x67656eULL}));
  const int nf = spec_.base_channels, gc = spec_.growth_channels;
  conv_first_ = make_conv(params_, rng, "g.conv_first", spec_.in_channels, nf, 3, 1, 1);
  blocks_.resize(static_cast<std::size_t>(spec_.num_rrdb_blocks));
  for (int bi = 0; bi < spec_.num_rrdb_blocks; ++bi) {
    const std::string base = "g.rrdb" + std::to_string(bi);
    auto make_dense = [&](const std::string& dn) {
      DenseBlock d;
      d.c1 = make_conv(params_, rng, base + dn + ".c1", nf, gc, 3, 1, 1);
      d.c2 = make_conv(params_, rng, base + dn + ".c2", nf + gc, gc, 3, 1, 1);
      d.c3 = make_conv(params_, rng, base + dn + ".c3", nf + 2 * gc, gc, 3, 1, 1);
      d.c4 = make_conv(params_, rng, base + dn + ".c4", nf + 3 * gc, gc, 3, 1, 1);
      d.c5 = make_conv(params_, rng, base + dn + ".c5", nf + 4 * gc, nf, 3, 1, 1);
      return d;
    };
    auto& blk = blocks_[static_cast<std::size_t>(bi)];
    blk.d1 = make_dense(".d1");
    blk.d2 = make_dense(".d2");
    blk.d3 = make_dense(".d3");
  }
  trunk_ = make_conv(params_, rng, "g.trunk", nf, nf, 3, 1, 1);
  c1_ = make_conv(params_, rng, "g.c1", nf, nf, 3, 1, 1);
  c2_ = make_conv(params_, rng, "g.c2", nf, spec_.out_channels, 3, 1, 1);
}

NodeRef Generator::dense_forward(Graph& g, NodeRef x, const DenseBlock& b) const {
  NodeRef d1 = nn::leaky_relu(g, run_conv(g, b.c1, x));
  NodeRef d2 = nn::leaky_relu(g, run_conv(g, b.c2, nn::concat_channels(g, {x, d1})));
  NodeRef d3 = nn::leaky_relu(g, run_conv(g, b.c3, nn::concat_channels(g, {x, d1, d2})));
  NodeRef d4 = nn::leaky_relu(g, run_conv(g, b.c4, nn::concat_channels(g, {x, d1, d2, d3})));
  NodeRef d5 = run_conv(g, b.c5, nn::concat_channels(g, {x, d1, d2, d3, d4}));
  return nn::add_scaled(g, x, d5, 0.2);
}

GeneratorOut Generator::forward(Graph& g, NodeRef x) const {
  const Tensor& t = x->value;
  if (t.rank() != 4) fail("shape", "generator expects a 4D input");
  if (t.dim(1) != spec_.in_channels)
    fail("shape", "generator expects " + std::to_string(spec_.in_channels) + " channel(s)");
  if (t.dim(2) % 4 != 0 || t.dim(3) % 4 != 0)
    fail("shape", "generator input sides must divide by 4, got " + std::to_string(t.dim(2)) +
                      "x" + std::to_string(t.dim(3)));
  NodeRef fea = run_conv(g, conv_first_, x);
  NodeRef h = fea;
  for (const auto& blk : blocks_) {
    NodeRef r = dense_forward(g, h, blk.d1);
    r = dense_forward(g, r, blk.d2);
    r = dense_forward(g, r, blk.d3);
    h = nn::add_scaled(g, h, r, 0.2);
  }
  NodeRef feat1 = nn::add(g, fea, run_conv(g, trunk_, h));
  NodeRef feat2 = nn::leaky_relu(g, run_conv(g, c1_, feat1));
  NodeRef y = run_conv(g, c2_, feat2);
  return {y, feat1, feat2};
}

Mat Generator::apply(const Mat& x_hf) const {
  Graph g(false);
  NodeRef x = g.track(nn::tensor_from_mat(x_hf), false);
  return nn::mat_from_tensor(forward(g, x).y->value);
}

ProjectionHead::ProjectionHead(const ProjectionSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  Rng rng(Rng::mix({seed, 0x70726f6aULL}));
  p1_ = make_conv(params_, rng, "p.c1", spec_.in_channels, spec_.hidden_dim, 1, 1, 0);
  p2_ = make_conv(params_, rng, "p.c2", spec_.hidden_dim, spec_.embed_dim, 1, 1, 0);
}

NodeRef ProjectionHead::forward_map(Graph& g, NodeRef feat) const {
  const Tensor& t = feat->value;
  if (t.rank() != 4) fail("shape", "projection expects a 4D feature map");
  if (t.dim(1) != spec_.in_channels)
    fail("shape", "projection expects " + std::to_string(spec_.in_channels) + " channels, got " +
                      std::to_string(t.dim(1)));
  NodeRef h = nn::leaky_relu(g, run_conv(g, p1_, feat));
  NodeRef z = run_conv(g, p2_, h);
  if (spec_.downsample_2x2) {
    if (t.dim(2) % 2 != 0 || t.dim(3) % 2 != 0)
      fail("shape", "2x2 pooling needs even feature sides");
    z = nn::avg_pool2x2(g, z);
  }
  return z;
}

NodeRef ProjectionHead::embed(Graph& g, NodeRef feat, int n,
                              const std::vector<std::pair<int, int>>& locations) const {
  NodeRef map = forward_map(g, feat);
  NodeRef rows = nn::gather_locations(g, map, n, locations);
  return nn::l2_normalize_rows(g, rows);
}

embedding::PatchEmbeddingSet ProjectionHead::project(const Tensor& feat,
                                               const std::vector<std::pair<int, int>>& locations,
                                               int depth_tag,
                                               const std::string& source_tag) const {
  Graph g(false);
  NodeRef f = g.track(feat, false);
  NodeRef rows = embed(g, f, 0, locations);
  const Tensor& t = rows->value;
  Mat vec(t.dim(0), t.dim(1));
  for (Eigen::Index r = 0; r < vec.rows(); ++r)
    for (Eigen::Index c = 0; c < vec.cols(); ++c)
      vec(r, c) = t.at2(static_cast<int>(r), static_cast<int>(c));
  embedding::PatchEmbeddingSet set;
  set.vectors = std::move(vec);
  set.locations = locations;
  set.depth_tag = depth_tag;
  set.source_tag = source_tag;
  set.validate();
  return set;
}

Discriminator::Discriminator(const DiscriminatorSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  Rng rng(Rng::mix({seed, 0x64697363ULL}));
  int cin = spec_.in_channels;
  int cout = spec_.base_channels;
  for (int bi = 0; bi < spec_.num_blocks; ++bi) {
    const std::string base = "d.b" + std::to_string(bi);
    Block b;
    b.conv = make_conv(params_, rng, base + ".conv", cin, cout, 4, 2, 1);
    // no per-image activation norm anywhere in D: the real/fake gap for noise
    // textures lives in per-image feature statistics, which such norms cancel.
    // Weights are fan-in scale-normalized at init instead.
    blocks_.push_back(b);
    cin = cout;
    cout *= 2;
  }
  final_ = make_conv(params_, rng, "d.score", cin, 1, 1, 1, 0);
}

NodeRef Discriminator::forward(Graph& g, NodeRef img) const {
  const Tensor& t = img->value;
  if (t.rank() != 4) fail("shape", "discriminator expects a 4D input");
  if (t.dim(1) != spec_.in_channels)
    fail("shape", "discriminator expects " + std::to_string(spec_.in_channels) + " channel(s)");
  const int divisor = 1 << spec_.num_blocks;
  if (t.dim(2) % divisor != 0 || t.dim(3) % divisor != 0)
    fail("shape", "discriminator input sides must divide by " + std::to_string(divisor) +
                      ", got " + std::to_string(t.dim(2)) + "x" + std::to_string(t.dim(3)));
  NodeRef h = img;
  for (const auto& b : blocks_) {
    h = run_conv(g, b.conv, h);
    h = nn::leaky_relu(g, h);
  }
  return run_conv(g, final_, h);
}

void set_requires_grad(const std::vector<NodeRef>& params, bool on) {
  for (const auto& p : params) {
    p->requires_grad = on;
    if (on) p->ensure_grad();
  }
}

namespace {
constexpr char kParamMagic[4] = {'D', 'M', 'L', 'P'};
}  // namespace

std::string params_to_bytes(const std::vector<NodeRef>& params) {
  std::string out;
  out.append(kParamMagic, 4);
  bytes::put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    bytes::put_u32(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    bytes::put_u32(out, static_cast<std::uint32_t>(p->value.shape.size()));
    for (int d : p->value.shape) bytes::put_u32(out, static_cast<std::uint32_t>(d));
    for (double d : p->value.v) bytes::put_f64(out, d);
  }
  return out;
}

void params_from_bytes(const std::vector<NodeRef>& params, const std::string& buf,
                       const std::string& src) {
  bytes::Reader r{buf, 0, src};
  if (r.bytes(4, "magic") != std::string(kParamMagic, 4))
    fail("parse", src + ": not a parameter archive");
  const std::uint32_t count = r.u32("parameter count");
  if (count != params.size())
    fail("checkpoint", src + ": holds " + std::to_string(count) + " parameters, expected " +
                           std::to_string(params.size()));
  for (const auto& p : params) {
    const std::uint32_t name_len = r.u32("name length");
    const std::string name = r.bytes(name_len, "name");
    if (name != p->name)
      fail("checkpoint", src + ": parameter '" + name + "' where '" + p->name + "' expected");
    const std::uint32_t rank = r.u32("rank");
    std::vector<int> shape;
    for (std::uint32_t i = 0; i < rank; ++i)
      shape.push_back(static_cast<int>(r.u32("dimension")));
    if (shape != p->value.shape)
      fail("checkpoint", src + ": shape mismatch for '" + name + "'");
    for (double& d : p->value.v) d = r.f64("value");
  }
  if (r.pos != buf.size())
    fail("parse", src + ": " + std::to_string(buf.size() - r.pos) + " trailing bytes");
}

void save_params(const std::vector<NodeRef>& params, const std::string& path) {
  const std::string out = params_to_bytes(params);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail("io", "cannot open for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) fail("io", "write failed: " + path);
}

void load_params(const std::vector<NodeRef>& params, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("io", "cannot open: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  params_from_bytes(params, buf, path);
}

data::CtImage denoise_full_with(const data::CtImage& x,
                                const std::function<Mat(const Mat&)>& g_hf, int level,
                                const std::string& filter_name, double hf_scale) {
  if (hf_scale <= 0.0) fail("parameter", "hf_scale must be positive");
  Mat hf = wavelet::high_freq(x.pixels, level, filter_name);
  Mat lf = x.pixels - hf;
  Mat y = g_hf(hf / hf_scale);
  if (y.rows() != hf.rows() || y.cols() != hf.cols())
    fail("shape", "HF transform changed the image shape");
  data::CtImage out;
  out.pixels = lf + y * hf_scale;
  out.spacing = x.spacing;
  out.id = x.id + "_output";
  out.domain_tag = "output";
  return out;
}

data::CtImage denoise_full(const data::CtImage& x, const Generator& gen, int level,
                           const std::string& filter_name, double hf_scale) {
  return denoise_full_with(
      x, [&gen](const Mat& h) { return gen.apply(h); }, level, filter_name, hf_scale);
}

}  // namespace dmlct::net
