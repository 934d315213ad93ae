#include <doctest.h>

#include "dmlct/objectives.hpp"

using dmlct::Error;
using dmlct::Mat;
using dmlct::Rng;
namespace obj = dmlct::objectives;
namespace nn = dmlct::nn;

TEST_CASE("generator adversarial loss") {
  CHECK(obj::gan_loss_generator(Mat::Constant(4, 4, 1.0)) == doctest::Approx(0.0));
  CHECK(obj::gan_loss_generator(Mat::Constant(4, 4, 0.0)) == doctest::Approx(1.0));
  Mat scores(2, 2);
  scores << 0.0, 1.0, 2.0, 1.0;
  CHECK(obj::gan_loss_generator(scores) == doctest::Approx(0.5));
  CHECK(obj::gan_loss_generator(scores) >= 0.0);
  CHECK_THROWS_AS(obj::gan_loss_generator(Mat(0, 0)), Error);
  Mat bad = Mat::Constant(2, 2, 1.0);
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    obj::gan_loss_generator(bad);
    FAIL("expected non-finite error");
  } catch (const Error& e) {
    CHECK(e.kind() == "non-finite");
  }
}

TEST_CASE("discriminator adversarial loss") {
  CHECK(obj::gan_loss_discriminator(Mat::Constant(3, 3, 1.0), Mat::Constant(3, 3, 0.0)) ==
        doctest::Approx(0.0));
  CHECK(obj::gan_loss_discriminator(Mat::Constant(3, 3, 0.0), Mat::Constant(3, 3, 1.0)) ==
        doctest::Approx(2.0));
  CHECK(obj::gan_loss_discriminator(Mat::Constant(3, 3, 0.5), Mat::Constant(3, 3, 0.5)) ==
        doctest::Approx(0.5));
  CHECK_THROWS_AS(obj::gan_loss_discriminator(Mat(0, 0), Mat::Constant(1, 1, 0.0)), Error);
}

TEST_CASE("identity loss is a per-pixel mean L1 metric") {
  Rng rng(21);
  Mat y(8, 9);
  for (Eigen::Index r = 0; r < 8; ++r)
    for (Eigen::Index c = 0; c < 9; ++c) y(r, c) = rng.uniform(-500.0, 500.0);

  CHECK(obj::identity_loss(y, y) == doctest::Approx(0.0));
  CHECK(obj::identity_loss(Mat(y + 0.3), y) == doctest::Approx(0.3));

  SUBCASE("matches a direct elementwise oracle") {
    Mat g(8, 9);
    for (Eigen::Index r = 0; r < 8; ++r)
      for (Eigen::Index c = 0; c < 9; ++c) g(r, c) = rng.uniform(-500.0, 500.0);
    double want = 0.0;
    for (Eigen::Index r = 0; r < 8; ++r)
      for (Eigen::Index c = 0; c < 9; ++c) want += std::abs(g(r, c) - y(r, c));
    want /= 72.0;
    CHECK(obj::identity_loss(g, y) == doctest::Approx(want).epsilon(1e-6));

    SUBCASE("symmetry and triangle inequality") {
      Mat h(8, 9);
      for (Eigen::Index r = 0; r < 8; ++r)
        for (Eigen::Index c = 0; c < 9; ++c) h(r, c) = rng.uniform(-500.0, 500.0);
      CHECK(obj::identity_loss(g, y) == doctest::Approx(obj::identity_loss(y, g)));
      CHECK(obj::identity_loss(g, h) <= obj::identity_loss(g, y) + obj::identity_loss(y, h) + 1e-9);
    }
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(obj::identity_loss(Mat::Zero(8, 8), y), Error);
  }
}

TEST_CASE("total generator loss composes with the declared weights") {
  obj::LossWeights w;  // 5, 0.1, 0.15
  CHECK(obj::total_generator_loss(0, 0, 0, 0, w) == doctest::Approx(0.0));
  CHECK(obj::total_generator_loss(1, 1, 1, 1, w) == doctest::Approx(6.2));
  CHECK(obj::total_generator_loss(0.5, 0.2, -3, 1, w) == doctest::Approx(1.3));

  SUBCASE("linear in each component") {
    const double base = obj::total_generator_loss(0.3, 0.4, 0.5, 0.6, w);
    CHECK(obj::total_generator_loss(1.3, 0.4, 0.5, 0.6, w) - base == doctest::Approx(1.0));
    CHECK(obj::total_generator_loss(0.3, 1.4, 0.5, 0.6, w) - base == doctest::Approx(5.0));
    CHECK(obj::total_generator_loss(0.3, 0.4, 1.5, 0.6, w) - base == doctest::Approx(0.1));
    CHECK(obj::total_generator_loss(0.3, 0.4, 0.5, 1.6, w) - base == doctest::Approx(0.1));
  }
  SUBCASE("NaN guard") {
    try {
      obj::total_generator_loss(std::numeric_limits<double>::infinity(), 0, 0, 0, w);
      FAIL("expected non-finite error");
    } catch (const Error& e) {
      CHECK(e.kind() == "non-finite");
    }
  }
  SUBCASE("weights must be positive") {
    obj::LossWeights badw{-1.0, 0.1, 0.15};
    CHECK_THROWS_AS(obj::total_generator_loss(0, 0, 0, 0, badw), Error);
  }
}

TEST_CASE("node forms agree with value forms and backpropagate") {
  Rng rng(22);
  auto scores = nn::make_param("scores", nn::Tensor({1, 1, 3, 4}));
  auto real = nn::make_param("real", nn::Tensor({1, 1, 3, 4}));
  for (double& v : scores->value.v) v = rng.uniform(-1.0, 2.0);
  for (double& v : real->value.v) v = rng.uniform(-1.0, 2.0);

  Mat fake_m = nn::mat_from_tensor(scores->value);
  Mat real_m = nn::mat_from_tensor(real->value);

  SUBCASE("values agree") {
    nn::Graph g(false);
    CHECK(obj::gan_loss_generator_node(g, scores)->value.scalar() ==
          doctest::Approx(obj::gan_loss_generator(fake_m)).epsilon(1e-12));
    CHECK(obj::gan_loss_discriminator_node(g, real, scores)->value.scalar() ==
          doctest::Approx(obj::gan_loss_discriminator(real_m, fake_m)).epsilon(1e-12));
    CHECK(obj::identity_loss_node(g, scores, real)->value.scalar() ==
          doctest::Approx(obj::identity_loss(fake_m, real_m)).epsilon(1e-12));
  }
  SUBCASE("total composes nodes with the same arithmetic") {
    obj::LossWeights w;
    nn::Graph g(false);
    auto gan = obj::gan_loss_generator_node(g, scores);
    auto idt = obj::identity_loss_node(g, scores, real);
    auto m1 = nn::mean_all(g, scores);
    auto m2 = nn::mean_all(g, real);
    auto total = obj::total_generator_loss_node(g, gan, idt, m1, m2, w);
    CHECK(total->value.scalar() ==
          doctest::Approx(obj::total_generator_loss(gan->value.scalar(), idt->value.scalar(),
                                                    m1->value.scalar(), m2->value.scalar(), w))
              .epsilon(1e-12));
  }
  SUBCASE("gradients match finite differences") {
    auto build = [&](nn::Graph& g) {
      obj::LossWeights w;
      auto gan = obj::gan_loss_generator_node(g, scores);
      auto idt = obj::identity_loss_node(g, scores, real);
      auto dsc = obj::gan_loss_discriminator_node(g, real, scores);
      auto total = obj::total_generator_loss_node(g, gan, idt, dsc, dsc, w);
      return total;
    };
    nn::Graph g;
    auto loss = build(g);
    scores->zero_grad();
    real->zero_grad();
    g.backward(loss);
    for (auto& p : {scores, real}) {
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        const double keep = p->value.v[i];
        const double h = 1e-6;
        p->value.v[i] = keep + h;
        nn::Graph gp(false);
        const double fp = build(gp)->value.scalar();
        p->value.v[i] = keep - h;
        nn::Graph gm(false);
        const double fm = build(gm)->value.scalar();
        p->value.v[i] = keep;
        const double fd = (fp - fm) / (2.0 * h);
        REQUIRE(std::abs(fd - p->grad.v[i]) /
                    std::max({1.0, std::abs(fd), std::abs(p->grad.v[i])}) <
                1e-5);
      }
    }
  }
}
