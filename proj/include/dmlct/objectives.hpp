#pragma once

#include "dmlct/common.hpp"
#include "dmlct/nn.hpp"

namespace dmlct::objectives {

struct LossWeights {
  double lambda_idt = 5.0;
  double lambda_m = 0.1;
  double tau = 0.15;

  void validate() const {
    if (!(lambda_idt > 0.0) || !(lambda_m > 0.0) || !(tau > 0.0))
      fail("parameter", "loss weights must be strictly positive");
  }
};

// Least-squares adversarial terms over patch score maps.
double gan_loss_generator(const Mat& d_fake);                       // mean (s - 1)^2
double gan_loss_discriminator(const Mat& d_real, const Mat& d_fake); // mean (r-1)^2 + mean f^2

// L1 reconstruction constraint on the target domain, per-pixel mean.
double identity_loss(const Mat& g_of_y, const Mat& y);

// gan + lambda_idt * idt + lambda_m * (m1 + m2). Error("non-finite") guards
// against NaN/inf leaking into an optimizer step.
double total_generator_loss(double gan, double idt, double m1, double m2, const LossWeights& w);

// Differentiable forms used by the trainer; same arithmetic as above.
nn::NodeRef gan_loss_generator_node(nn::Graph& g, nn::NodeRef d_fake);
nn::NodeRef gan_loss_discriminator_node(nn::Graph& g, nn::NodeRef d_real, nn::NodeRef d_fake);
nn::NodeRef identity_loss_node(nn::Graph& g, nn::NodeRef g_of_y, nn::NodeRef y);
nn::NodeRef total_generator_loss_node(nn::Graph& g, nn::NodeRef gan, nn::NodeRef idt,
                                      nn::NodeRef m1, nn::NodeRef m2, const LossWeights& w);

}  // namespace dmlct::objectives
