#pragma once

#include "dmlct/common.hpp"
#include "dmlct/nn.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace dmlct::embedding {

/// How many anchor locations to sample per image, and with what seed.
struct PairScheme {
  int num_locations = 256;
  std::uint64_t rng_seed = 0;
};

/// K unit-norm embedding vectors tied to feature-grid locations.
/// Paired x/y sets share identical locations in identical order; that
/// alignment is what makes row k of one set the positive of row k of the other.
struct PatchEmbeddingSet {
  Mat vectors;                                // K x D, rows unit L2 norm
  std::vector<std::pair<int, int>> locations; // grid indices, unique
  int depth_tag = 1;                          // which feature tap: 1 or 2
  std::string source_tag = "x";               // "x" input domain, "y" output domain

  int count() const { return static_cast<int>(vectors.rows()); }
  void validate() const;  // Error("structure") on any violated invariant
};

/// Scale rows to unit L2 norm. Error("degenerate-embedding") when a row
/// norm is below 1e-12.
Mat normalize_rows(const Mat& features);

/// ||z - w||^2 / (2 tau) for unit vectors; equals (1 - z.w)/tau.
/// z, w are 1 x D (or D x 1) unit vectors within 1e-5.
double metric_distance(const Mat& z, const Mat& w, double tau);

/// K unique locations drawn uniformly without replacement, reproducible
/// under scheme.rng_seed. Error("capacity") when K exceeds H*W.
std::vector<std::pair<int, int>> sample_anchor_locations(std::pair<int, int> feat_shape,
                                                         const PairScheme& scheme);

/// Empirical pull-push loss over aligned sets:
///   -(1/K) sum_k exp(z_k.w_k / tau)
///   +(1/(K(K-1))) sum_{k != j} exp(z_k.z_j / tau)
///   +(1/(K(K-1))) sum_{k != j} exp(w_k.w_j / tau)
/// Negative terms are 0 when K = 1.
double metric_loss(const PatchEmbeddingSet& z_set, const PatchEmbeddingSet& w_set, double tau);

/// Exponentiated-distance variant kept for ablation:
///   E[exp(d(z,w))] - E[exp(d(z,z'))] - E[exp(d(w,w'))], d from metric_distance.
/// Not numerically equal to metric_loss; the trainer uses metric_loss.
double metric_loss_eq2_variant(const PatchEmbeddingSet& z_set, const PatchEmbeddingSet& w_set,
                               double tau);

/// Differentiable form of metric_loss over already-normalized (K, D) row nodes.
/// Gradients flow through both branches.
nn::NodeRef metric_loss_node(nn::Graph& g, nn::NodeRef z_rows, nn::NodeRef w_rows, double tau);

}  // namespace dmlct::embedding
