#include "dmlct/objectives.hpp"

#include <cmath>

namespace dmlct::objectives {

namespace {

void check_scores(const Mat& m, const char* who) {
  if (m.size() == 0) fail("parameter", std::string(who) + ": empty score map");
  if (!m.isFinite().all()) fail("non-finite", std::string(who) + ": non-finite score");
}

}  // namespace

double gan_loss_generator(const Mat& d_fake) {
  check_scores(d_fake, "gan_loss_generator");
  return (d_fake - 1.0).square().mean();
}

double gan_loss_discriminator(const Mat& d_real, const Mat& d_fake) {
  check_scores(d_real, "gan_loss_discriminator");
  check_scores(d_fake, "gan_loss_discriminator");
  return (d_real - 1.0).square().mean() + d_fake.square().mean();
}

double identity_loss(const Mat& g_of_y, const Mat& y) {
  if (g_of_y.rows() != y.rows() || g_of_y.cols() != y.cols())
    fail("shape", "identity loss operands differ in shape");
  if (y.size() == 0) fail("parameter", "identity loss on empty images");
  return (g_of_y - y).abs().mean();
}

double total_generator_loss(double gan, double idt, double m1, double m2, const LossWeights& w) {
  w.validate();
  for (double v : {gan, idt, m1, m2})
    if (!std::isfinite(v)) fail("non-finite", "loss component is not finite");
  return gan + w.lambda_idt * idt + w.lambda_m * (m1 + m2);
}

nn::NodeRef gan_loss_generator_node(nn::Graph& g, nn::NodeRef d_fake) {
  if (d_fake->value.size() == 0) fail("parameter", "empty score map");
  return nn::mean_all(g, nn::square(g, nn::add_const(g, d_fake, -1.0)));
}

nn::NodeRef gan_loss_discriminator_node(nn::Graph& g, nn::NodeRef d_real, nn::NodeRef d_fake) {
  auto real_term = nn::mean_all(g, nn::square(g, nn::add_const(g, d_real, -1.0)));
  auto fake_term = nn::mean_all(g, nn::square(g, d_fake));
  return nn::add(g, real_term, fake_term);
}

nn::NodeRef identity_loss_node(nn::Graph& g, nn::NodeRef g_of_y, nn::NodeRef y) {
  return nn::mean_abs_diff(g, g_of_y, y);
}

nn::NodeRef total_generator_loss_node(nn::Graph& g, nn::NodeRef gan, nn::NodeRef idt,
                                      nn::NodeRef m1, nn::NodeRef m2, const LossWeights& w) {
  w.validate();
  for (const auto& n : {gan, idt, m1, m2})
    if (!n->value.all_finite()) fail("non-finite", "loss component is not finite");
  auto with_idt = nn::add_scaled(g, gan, idt, w.lambda_idt);
  return nn::add_scaled(g, with_idt, nn::add(g, m1, m2), w.lambda_m);
}

}  // namespace dmlct::objectives
