#include <doctest.h>

#include "dmlct/nn.hpp"

#include <functional>
#include <vector>

using dmlct::Error;
using dmlct::Rng;
namespace nn = dmlct::nn;
using nn::NodeRef;
using nn::Tensor;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.v) v = rng.uniform(lo, hi);
  return t;
}

// Central-difference check of d(loss)/d(param) for every parameter element.
// build must create the loss from the *current* parameter values each call.
void gradcheck(const std::vector<NodeRef>& params,
               const std::function<NodeRef(nn::Graph&)>& build, double h = 1e-6,
               double tol = 1e-6) {
  nn::Graph g;
  NodeRef loss = build(g);
  g.backward(loss);

  for (const auto& p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double keep = p->value.v[i];
      p->value.v[i] = keep + h;
      nn::Graph gp(false);
      const double fp = build(gp)->value.scalar();
      p->value.v[i] = keep - h;
      nn::Graph gm(false);
      const double fm = build(gm)->value.scalar();
      p->value.v[i] = keep;
      const double fd = (fp - fm) / (2.0 * h);
      const double an = p->grad.v[i];
      const double err = std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
      if (err >= tol) {
        CAPTURE(p->name);
        CAPTURE(i);
        CAPTURE(fd);
        CAPTURE(an);
      }
      REQUIRE(err < tol);
    }
  }
}

// Direct-loop convolution used as the value oracle for the GEMM path.
Tensor conv_naive(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (wd + 2 * pad - kw) / stride + 1;
  Tensor out({n, cout, oh, ow});
  for (int bi = 0; bi < n; ++bi)
    for (int co = 0; co < cout; ++co)
      for (int r = 0; r < oh; ++r)
        for (int q = 0; q < ow; ++q) {
          double s = b.v[static_cast<size_t>(co)];
          for (int ci = 0; ci < cin; ++ci)
            for (int i = 0; i < kh; ++i)
              for (int j = 0; j < kw; ++j) {
                const int hh = r * stride - pad + i;
                const int ww = q * stride - pad + j;
                if (hh >= 0 && hh < h && ww >= 0 && ww < wd)
                  s += w.at4(co, ci, i, j) * x.at4(bi, ci, hh, ww);
              }
          out.at4(bi, co, r, q) = s;
        }
  return out;
}

}  // namespace

TEST_CASE("elementwise ops compute gradients") {
  Rng rng(101);
  auto a = nn::make_param("a", random_tensor({3, 4}, rng, 0.2, 1.5));
  auto b = nn::make_param("b", random_tensor({3, 4}, rng, 0.2, 1.5));

  SUBCASE("add / scale / add_const chain") {
    gradcheck({a, b}, [&](nn::Graph& g) {
      auto s = nn::add(g, a, b);
      s = nn::scale(g, s, 1.7);
      s = nn::add_const(g, s, -0.3);
      return nn::mean_all(g, s);
    });
  }
  SUBCASE("sub and add_scaled") {
    gradcheck({a, b}, [&](nn::Graph& g) {
      auto d = nn::sub(g, a, b);
      auto e = nn::add_scaled(g, d, b, 0.25);
      return nn::mean_all(g, nn::square(g, e));
    });
  }
  SUBCASE("leaky_relu away from the kink") {
    auto c = nn::make_param("c", random_tensor({4, 5}, rng, -2.0, 2.0));
    for (double& v : c->value.v)
      if (std::abs(v) < 0.05) v = 0.1;  // keep FD away from the non-smooth point
    gradcheck({c}, [&](nn::Graph& g) {
      return nn::mean_all(g, nn::leaky_relu(g, c, 0.2));
    });
  }
  SUBCASE("exp_of and square") {
    gradcheck({a}, [&](nn::Graph& g) {
      return nn::mean_all(g, nn::exp_of(g, nn::square(g, a)));
    });
  }
  SUBCASE("mean_abs_diff away from ties") {
    gradcheck({a, b}, [&](nn::Graph& g) { return nn::mean_abs_diff(g, a, b); });
  }
}

TEST_CASE("conv2d matches the direct-loop oracle and backpropagates") {
  Rng rng(202);
  auto x = nn::make_param("x", random_tensor({2, 3, 5, 6}, rng));
  auto w = nn::make_param("w", random_tensor({4, 3, 3, 3}, rng, -0.5, 0.5));
  auto b = nn::make_param("b", random_tensor({4}, rng, -0.2, 0.2));

  SUBCASE("value, stride 1 pad 1") {
    nn::Graph g(false);
    auto out = nn::conv2d(g, x, w, b, 1, 1);
    Tensor want = conv_naive(x->value, w->value, b->value, 1, 1);
    REQUIRE(out->value.same_shape(want));
    for (std::size_t i = 0; i < want.size(); ++i)
      CHECK(out->value.v[i] == doctest::Approx(want.v[i]).epsilon(1e-10));
  }
  SUBCASE("value, stride 2 pad 1") {
    nn::Graph g(false);
    auto out = nn::conv2d(g, x, w, b, 2, 1);
    Tensor want = conv_naive(x->value, w->value, b->value, 2, 1);
    REQUIRE(out->value.same_shape(want));
    for (std::size_t i = 0; i < want.size(); ++i)
      CHECK(out->value.v[i] == doctest::Approx(want.v[i]).epsilon(1e-10));
  }
  SUBCASE("gradients, stride 1 pad 1") {
    gradcheck({x, w, b}, [&](nn::Graph& g) {
      return nn::mean_all(g, nn::square(g, nn::conv2d(g, x, w, b, 1, 1)));
    }, 1e-5, 1e-5);
  }
  SUBCASE("gradients, stride 2 pad 1") {
    gradcheck({x, w, b}, [&](nn::Graph& g) {
      return nn::mean_all(g, nn::square(g, nn::conv2d(g, x, w, b, 2, 1)));
    }, 1e-5, 1e-5);
  }
  SUBCASE("1x1 kernel") {
    auto w1 = nn::make_param("w1", random_tensor({2, 3, 1, 1}, rng));
    auto b1 = nn::make_param("b1", random_tensor({2}, rng));
    gradcheck({x, w1, b1}, [&](nn::Graph& g) {
      return nn::mean_all(g, nn::square(g, nn::conv2d(g, x, w1, b1, 1, 0)));
    }, 1e-5, 1e-5);
  }
}

TEST_CASE("pooling, normalization and concat backpropagate") {
  Rng rng(303);
  auto x = nn::make_param("x", random_tensor({2, 3, 4, 6}, rng));

  SUBCASE("avg_pool2x2 value and grad") {
    nn::Graph g(false);
    auto out = nn::avg_pool2x2(g, x);
    CHECK(out->value.dim(2) == 2);
    CHECK(out->value.dim(3) == 3);
    CHECK(out->value.at4(0, 0, 0, 0) ==
          doctest::Approx(0.25 * (x->value.at4(0, 0, 0, 0) + x->value.at4(0, 0, 0, 1) +
                                  x->value.at4(0, 0, 1, 0) + x->value.at4(0, 0, 1, 1))));
    gradcheck({x}, [&](nn::Graph& gg) {
      return nn::mean_all(gg, nn::square(gg, nn::avg_pool2x2(gg, x)));
    });
  }
  SUBCASE("instance_norm normalizes per channel and sample") {
    auto gamma = nn::make_param("gamma", Tensor({3}, 1.0));
    auto beta = nn::make_param("beta", Tensor({3}, 0.0));
    nn::Graph g(false);
    auto out = nn::instance_norm(g, x, gamma, beta);
    for (int n = 0; n < 2; ++n)
      for (int c = 0; c < 3; ++c) {
        double mu = 0.0, var = 0.0;
        for (int r = 0; r < 4; ++r)
          for (int q = 0; q < 6; ++q) mu += out->value.at4(n, c, r, q);
        mu /= 24.0;
        for (int r = 0; r < 4; ++r)
          for (int q = 0; q < 6; ++q) {
            const double d = out->value.at4(n, c, r, q) - mu;
            var += d * d;
          }
        var /= 24.0;
        CHECK(mu == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps shifts it slightly
      }
    gamma->value.v = {1.3, 0.7, -0.4};
    beta->value.v = {0.1, -0.2, 0.05};
    gradcheck({x, gamma, beta}, [&](nn::Graph& gg) {
      return nn::mean_all(gg, nn::square(gg, nn::instance_norm(gg, x, gamma, beta)));
    }, 1e-5, 1e-5);
  }
  SUBCASE("concat_channels splits gradient by source") {
    auto y = nn::make_param("y", random_tensor({2, 2, 4, 6}, rng));
    gradcheck({x, y}, [&](nn::Graph& g) {
      auto cat = nn::concat_channels(g, {x, y});
      return nn::mean_all(g, nn::square(g, cat));
    });
    nn::Graph g(false);
    auto cat = nn::concat_channels(g, {x, y});
    CHECK(cat->value.dim(1) == 5);
    CHECK(cat->value.at4(1, 3, 2, 5) == doctest::Approx(y->value.at4(1, 0, 2, 5)));
  }
}

TEST_CASE("embedding path ops") {
  Rng rng(404);
  auto x = nn::make_param("x", random_tensor({1, 4, 6, 6}, rng, 0.1, 1.0));
  auto w = nn::make_param("w", random_tensor({3, 4}, rng, -0.7, 0.7));
  auto b = nn::make_param("b", random_tensor({3}, rng, -0.1, 0.1));
  const std::vector<std::pair<int, int>> locs{{0, 0}, {2, 3}, {5, 5}, {1, 4}};

  SUBCASE("gather picks the right vectors") {
    nn::Graph g(false);
    auto got = nn::gather_locations(g, x, 0, locs);
    CHECK(got->value.dim(0) == 4);
    CHECK(got->value.at2(1, 2) == doctest::Approx(x->value.at4(0, 2, 2, 3)));
    CHECK_THROWS_AS(nn::gather_locations(g, x, 0, {{6, 0}}), Error);
    CHECK_THROWS_AS(nn::gather_locations(g, x, 1, locs), Error);
  }
  SUBCASE("full metric-style chain gradient") {
    gradcheck({x, w, b}, [&](nn::Graph& g) {
      auto feats = nn::gather_locations(g, x, 0, locs);
      auto emb = nn::linear(g, feats, w, b);
      auto z = nn::l2_normalize_rows(g, emb);
      auto sim = nn::matmul_nt(g, z, z);
      auto pull = nn::diag_mean(g, nn::exp_of(g, nn::scale(g, sim, 1.0 / 0.15)));
      auto push = nn::offdiag_mean(g, nn::exp_of(g, nn::scale(g, sim, 1.0 / 0.15)));
      return nn::add_scaled(g, push, pull, -1.0);
    }, 1e-6, 1e-5);
  }
  SUBCASE("l2_normalize_rows produces unit rows and rejects zeros") {
    nn::Graph g(false);
    auto z = nn::l2_normalize_rows(g, w);
    for (int i = 0; i < 3; ++i) {
      double s = 0.0;
      for (int j = 0; j < 4; ++j) s += z->value.at2(i, j) * z->value.at2(i, j);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    auto zero = nn::make_const(Tensor({2, 3}));
    try {
      nn::l2_normalize_rows(g, zero);
      FAIL("expected degenerate-embedding");
    } catch (const Error& e) {
      CHECK(e.kind() == "degenerate-embedding");
    }
  }
  SUBCASE("offdiag_mean of 1x1 is a zero constant") {
    nn::Graph g;
    auto one = nn::make_param("one", random_tensor({1, 1}, rng));
    auto r = nn::offdiag_mean(g, one);
    CHECK(r->value.scalar() == 0.0);
    CHECK_FALSE(r->requires_grad);
  }
}

TEST_CASE("matmul_nt value") {
  Rng rng(505);
  auto a = nn::make_const(random_tensor({2, 3}, rng));
  auto b = nn::make_const(random_tensor({4, 3}, rng));
  nn::Graph g(false);
  auto m = nn::matmul_nt(g, a, b);
  REQUIRE(m->value.dim(0) == 2);
  REQUIRE(m->value.dim(1) == 4);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 4; ++j) {
      double want = 0.0;
      for (int k = 0; k < 3; ++k) want += a->value.at2(i, k) * b->value.at2(j, k);
      CHECK(m->value.at2(i, j) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("graph bookkeeping") {
  Rng rng(606);
  auto a = nn::make_param("a", random_tensor({2, 2}, rng));

  SUBCASE("no-grad graphs record nothing") {
    nn::Graph g(false);
    auto out = nn::mean_all(g, nn::square(g, a));
    CHECK(g.tape_size() == 0);
    CHECK_FALSE(out->requires_grad);
    CHECK_THROWS_AS(g.backward(out), Error);
  }
  SUBCASE("backward twice is rejected") {
    nn::Graph g;
    auto loss = nn::mean_all(g, nn::square(g, a));
    g.backward(loss);
    CHECK_THROWS_AS(g.backward(loss), Error);
  }
  SUBCASE("backward needs a scalar") {
    nn::Graph g;
    auto out = nn::square(g, a);
    CHECK_THROWS_AS(g.backward(out), Error);
  }
  SUBCASE("detach blocks gradient flow") {
    a->zero_grad();
    nn::Graph g;
    auto d = nn::detach(g, a);
    CHECK_FALSE(d->requires_grad);
    auto loss = nn::mean_all(g, nn::square(g, nn::add(g, a, d)));
    g.backward(loss);
    // d(loss)/da through the live branch only: mean(4 a^2) -> 2a per element... times d(mean)
    for (std::size_t i = 0; i < a->value.size(); ++i)
      CHECK(a->grad.v[i] == doctest::Approx(2.0 * (2.0 * a->value.v[i]) / 4.0));
  }
  SUBCASE("grad accumulates across uses in one graph") {
    a->zero_grad();
    nn::Graph g;
    auto loss = nn::mean_all(g, nn::square(g, nn::add(g, a, a)));
    g.backward(loss);
    for (std::size_t i = 0; i < a->value.size(); ++i)
      CHECK(a->grad.v[i] == doctest::Approx(8.0 * a->value.v[i] / 4.0));
  }
}

TEST_CASE("adam follows the bias-corrected update") {
  auto p = nn::make_param("p", Tensor({1}, 3.0));
  nn::Adam opt({p}, 0.5, 0.999);
  p->grad.v[0] = 2.0;
  opt.step(0.1);
  // first step: mhat = g, vhat = g^2 -> delta = -lr * g / (|g| + eps)
  CHECK(p->value.v[0] == doctest::Approx(3.0 - 0.1 * 2.0 / (2.0 + 1e-8)).epsilon(1e-12));
  CHECK(opt.state().t == 1);

  SUBCASE("quadratic converges") {
    auto q = nn::make_param("q", Tensor({1}, 5.0));
    nn::Adam o2({q}, 0.9, 0.999);
    for (int it = 0; it < 2000; ++it) {
      o2.zero_grad();
      nn::Graph g;
      auto loss = nn::mean_all(g, nn::square(g, q));
      g.backward(loss);
      o2.step(0.05);
    }
    CHECK(std::abs(q->value.v[0]) < 1e-3);
  }
  SUBCASE("state round trip restores the trajectory") {
    auto q = nn::make_param("q", Tensor({1}, 5.0));
    nn::Adam o2({q}, 0.9, 0.999);
    auto run_steps = [&](nn::Adam& o, int k) {
      for (int it = 0; it < k; ++it) {
        o.zero_grad();
        nn::Graph g;
        auto loss = nn::mean_all(g, nn::square(g, q));
        g.backward(loss);
        o.step(0.05);
      }
    };
    run_steps(o2, 3);
    const auto saved_state = o2.state();
    const double saved_q = q->value.v[0];
    run_steps(o2, 4);
    const double want = q->value.v[0];

    q->value.v[0] = saved_q;
    nn::Adam o3({q}, 0.9, 0.999);
    o3.set_state(saved_state);
    run_steps(o3, 4);
    CHECK(q->value.v[0] == want);  // bit-exact
  }
}

TEST_CASE("fan-in init is deterministic per seed") {
  Tensor w({4, 3, 3, 3});
  Rng r1(99), r2(99), r3(100);
  nn::init_normal_fan_in(w, 27, r1);
  Tensor w2({4, 3, 3, 3});
  nn::init_normal_fan_in(w2, 27, r2);
  CHECK(w.v == w2.v);
  Tensor w3({4, 3, 3, 3});
  nn::init_normal_fan_in(w3, 27, r3);
  CHECK(w.v != w3.v);
  double ss = 0.0;
  for (double v : w.v) ss += v * v;
  const double std_hat = std::sqrt(ss / static_cast<double>(w.size()));
  CHECK(std_hat == doctest::Approx(std::sqrt(2.0 / 27.0)).epsilon(0.35));
}
