#include "dmlct/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace dmlct::embedding {

namespace {

void check_tau(double tau) {
  if (!(tau > 0.0)) fail("parameter", "temperature must be positive");
}

double dot_rows(const Mat& a, int i, const Mat& b, int j) {
  double s = 0.0;
  for (Eigen::Index c = 0; c < a.cols(); ++c) s += a(i, c) * b(j, c);
  return s;
}

void check_aligned(const PatchEmbeddingSet& z_set, const PatchEmbeddingSet& w_set) {
  z_set.validate();
  w_set.validate();
  if (z_set.count() == 0) fail("empty-set", "no embeddings to pair");
  if (z_set.count() != w_set.count() || z_set.vectors.cols() != w_set.vectors.cols())
    fail("pairing", "embedding sets differ in size");
  if (z_set.depth_tag != w_set.depth_tag)
    fail("pairing", "embedding sets come from different feature depths");
  if (z_set.locations != w_set.locations)
    fail("pairing", "paired sets must share locations in identical order");
}

}  // namespace

void PatchEmbeddingSet::validate() const {
  const int k = count();
  if (static_cast<int>(locations.size()) != k)
    fail("structure", "location count does not match vector count");
  if (depth_tag != 1 && depth_tag != 2) fail("structure", "depth_tag must be 1 or 2");
  if (source_tag != "x" && source_tag != "y") fail("structure", "source_tag must be x or y");
  for (int i = 0; i < k; ++i) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < vectors.cols(); ++c) s += vectors(i, c) * vectors(i, c);
    if (std::abs(std::sqrt(s) - 1.0) > 1e-5)
      fail("structure", "row " + std::to_string(i) + " is not unit norm");
  }
  std::set<std::pair<int, int>> seen(locations.begin(), locations.end());
  if (static_cast<int>(seen.size()) != k) fail("structure", "locations are not unique");
}

Mat normalize_rows(const Mat& features) {
  Mat out = features;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < out.cols(); ++c) s += out(i, c) * out(i, c);
    const double nrm = std::sqrt(s);
    if (nrm < 1e-12)
      fail("degenerate-embedding", "row " + std::to_string(i) + " has near-zero norm");
    for (Eigen::Index c = 0; c < out.cols(); ++c) out(i, c) /= nrm;
  }
  return out;
}

double metric_distance(const Mat& z, const Mat& w, double tau) {
  check_tau(tau);
  if (z.size() != w.size()) fail("parameter", "vectors differ in dimension");
  double nz = 0.0, nw = 0.0, d2 = 0.0;
  const double* zp = z.data();
  const double* wp = w.data();
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    nz += zp[i] * zp[i];
    nw += wp[i] * wp[i];
    const double d = zp[i] - wp[i];
    d2 += d * d;
  }
  if (std::abs(std::sqrt(nz) - 1.0) > 1e-5 || std::abs(std::sqrt(nw) - 1.0) > 1e-5)
    fail("parameter", "metric_distance expects unit vectors");
  return d2 / (2.0 * tau);
}

std::vector<std::pair<int, int>> sample_anchor_locations(std::pair<int, int> feat_shape,
                                                         const PairScheme& scheme) {
  const auto [h, w] = feat_shape;
  if (h < 1 || w < 1) fail("parameter", "empty feature grid");
  const int k = scheme.num_locations;
  if (k < 1) fail("parameter", "need at least one anchor");
  const long long cells = static_cast<long long>(h) * w;
  if (k > cells)
    fail("capacity", "requested " + std::to_string(k) + " anchors from a grid of " +
                         std::to_string(cells) + " cells");

  // partial Fisher-Yates: first k entries are a uniform sample without replacement
  std::vector<int> idx(static_cast<size_t>(cells));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(scheme.rng_seed);
  for (int i = 0; i < k; ++i) {
    const int j = i + rng.uniform_int(static_cast<int>(cells) - i);
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  std::vector<std::pair<int, int>> locs;
  locs.reserve(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) locs.emplace_back(idx[static_cast<size_t>(i)] / w, idx[static_cast<size_t>(i)] % w);
  return locs;
}

double metric_loss(const PatchEmbeddingSet& z_set, const PatchEmbeddingSet& w_set, double tau) {
  check_tau(tau);
  check_aligned(z_set, w_set);
  const int k = z_set.count();
  const Mat& z = z_set.vectors;
  const Mat& w = w_set.vectors;

  double pull = 0.0;
  for (int i = 0; i < k; ++i) pull += std::exp(dot_rows(z, i, w, i) / tau);
  pull /= k;

  double push = 0.0;
  if (k > 1) {
    double pz = 0.0, pw = 0.0;
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j)
        if (i != j) {
          pz += std::exp(dot_rows(z, i, z, j) / tau);
          pw += std::exp(dot_rows(w, i, w, j) / tau);
        }
    push = (pz + pw) / (static_cast<double>(k) * (k - 1));
  }
  return -pull + push;
}

double metric_loss_eq2_variant(const PatchEmbeddingSet& z_set, const PatchEmbeddingSet& w_set,
                               double tau) {
  check_tau(tau);
  check_aligned(z_set, w_set);
  const int k = z_set.count();
  const Mat& z = z_set.vectors;
  const Mat& w = w_set.vectors;
  auto exp_d = [tau](double dot) { return std::exp((1.0 - dot) / tau); };

  double pos = 0.0;
  for (int i = 0; i < k; ++i) pos += exp_d(dot_rows(z, i, w, i));
  pos /= k;

  double neg = 0.0;
  if (k > 1) {
    double nz = 0.0, nw = 0.0;
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j)
        if (i != j) {
          nz += exp_d(dot_rows(z, i, z, j));
          nw += exp_d(dot_rows(w, i, w, j));
        }
    neg = (nz + nw) / (static_cast<double>(k) * (k - 1));
  }
  return pos - neg;
}

nn::NodeRef metric_loss_node(nn::Graph& g, nn::NodeRef z_rows, nn::NodeRef w_rows, double tau) {
  check_tau(tau);
  if (z_rows->value.rank() != 2 || !z_rows->value.same_shape(w_rows->value))
    fail("pairing", "metric loss needs two (K, D) row sets of equal shape");
  const double inv_tau = 1.0 / tau;
  auto pull = nn::diag_mean(g, nn::exp_of(g, nn::scale(g, nn::matmul_nt(g, z_rows, w_rows), inv_tau)));
  auto push_z = nn::offdiag_mean(g, nn::exp_of(g, nn::scale(g, nn::matmul_nt(g, z_rows, z_rows), inv_tau)));
  auto push_w = nn::offdiag_mean(g, nn::exp_of(g, nn::scale(g, nn::matmul_nt(g, w_rows, w_rows), inv_tau)));
  return nn::add_scaled(g, nn::add(g, push_z, push_w), pull, -1.0);
}

}  // namespace dmlct::embedding
