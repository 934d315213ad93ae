#include "dmlct/nn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstring>

namespace dmlct::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMat>;
using MapCRM = Eigen::Map<const RowMat>;

void check_same_shape(const NodeRef& a, const NodeRef& b, const char* op) {
  if (!a->value.same_shape(b->value)) fail("shape", std::string(op) + ": operand shapes differ");
}

bool needs(const NodeRef& n) { return n->requires_grad; }

}  // namespace

Tensor tensor_from_mat(const Mat& m) {
  Tensor t({1, 1, static_cast<int>(m.rows()), static_cast<int>(m.cols())});
  std::memcpy(t.v.data(), m.data(), sizeof(double) * t.size());
  return t;
}

Mat mat_from_tensor(const Tensor& t) {
  int rows = 0, cols = 0;
  if (t.rank() == 2) {
    rows = t.dim(0);
    cols = t.dim(1);
  } else if (t.rank() == 4 && t.dim(0) == 1 && t.dim(1) == 1) {
    rows = t.dim(2);
    cols = t.dim(3);
  } else {
    fail("shape", "tensor is not 2D-compatible");
  }
  Mat m(rows, cols);
  std::memcpy(m.data(), t.v.data(), sizeof(double) * t.size());
  return m;
}

NodeRef make_param(std::string name, Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->name = std::move(name);
  n->ensure_grad();
  return n;
}

NodeRef make_const(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = false;
  return n;
}

void Graph::backward(const NodeRef& loss) {
  if (!grad_enabled_) fail("graph", "backward on a no-grad graph");
  if (loss->value.size() != 1) fail("graph", "backward target must be scalar");
  if (!loss->requires_grad) fail("graph", "loss does not require grad");
  if (backward_done_) fail("graph", "backward already ran on this graph");
  backward_done_ = true;
  loss->ensure_grad();
  loss->grad.v[0] = 1.0;
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
}

NodeRef add(Graph& g, NodeRef a, NodeRef b) {
  check_same_shape(a, b, "add");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out.v[i] += b->value.v[i];
  NodeRef r = g.track(std::move(out), needs(a) || needs(b));
  if (r->requires_grad)
    g.record([a, b, r] {
      if (a->requires_grad)
        for (std::size_t i = 0; i < r->grad.size(); ++i) a->grad.v[i] += r->grad.v[i];
      if (b->requires_grad)
        for (std::size_t i = 0; i < r->grad.size(); ++i) b->grad.v[i] += r->grad.v[i];
    });
  return r;
}

NodeRef sub(Graph& g, NodeRef a, NodeRef b) { return add_scaled(g, a, b, -1.0); }

NodeRef add_scaled(Graph& g, NodeRef a, NodeRef b, double s) {
  check_same_shape(a, b, "add_scaled");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out.v[i] += s * b->value.v[i];
  NodeRef r = g.track(std::move(out), needs(a) || needs(b));
  if (r->requires_grad)
    g.record([a, b, s, r] {
      if (a->requires_grad)
        for (std::size_t i = 0; i < r->grad.size(); ++i) a->grad.v[i] += r->grad.v[i];
      if (b->requires_grad)
        for (std::size_t i = 0; i < r->grad.size(); ++i) b->grad.v[i] += s * r->grad.v[i];
    });
  return r;
}

NodeRef scale(Graph& g, NodeRef a, double s) {
  Tensor out = a->value;
  for (double& x : out.v) x *= s;
  NodeRef r = g.track(std::move(out), needs(a));
  if (r->requires_grad)
    g.record([a, s, r] {
      for (std::size_t i = 0; i < r->grad.size(); ++i) a->grad.v[i] += s * r->grad.v[i];
    });
  return r;
}

NodeRef add_const(Graph& g, NodeRef a, double c) {
  Tensor out = a->value;
  for (double& x : out.v) x += c;
  NodeRef r = g.track(std::move(out), needs(a));
  if (r->requires_grad)
    g.record([a, r] {
      for (std::size_t i = 0; i < r->grad.size(); ++i) a->grad.v[i] += r->grad.v[i];
    });
  return r;
}

NodeRef leaky_relu(Graph& g, NodeRef x, double slope) {
  Tensor out = x->value;
  for (double& v : out.v)
    if (v < 0.0) v *= slope;
  NodeRef r = g.track(std::move(out), needs(x));
  if (r->requires_grad)
    g.record([x, slope, r] {
      for (std::size_t i = 0; i < r->grad.size(); ++i)
        x->grad.v[i] += (x->value.v[i] > 0.0 ? 1.0 : slope) * r->grad.v[i];
    });
  return r;
}

NodeRef exp_of(Graph& g, NodeRef x) {
  Tensor out = x->value;
  for (double& v : out.v) v = std::exp(v);
  NodeRef r = g.track(std::move(out), needs(x));
  if (r->requires_grad)
    g.record([x, r] {
      for (std::size_t i = 0; i < r->grad.size(); ++i)
        x->grad.v[i] += r->value.v[i] * r->grad.v[i];
    });
  return r;
}

NodeRef square(Graph& g, NodeRef x) {
  Tensor out = x->value;
  for (double& v : out.v) v *= v;
  NodeRef r = g.track(std::move(out), needs(x));
  if (r->requires_grad)
    g.record([x, r] {
      for (std::size_t i = 0; i < r->grad.size(); ++i)
        x->grad.v[i] += 2.0 * x->value.v[i] * r->grad.v[i];
    });
  return r;
}

NodeRef concat_channels(Graph& g, const std::vector<NodeRef>& xs) {
  if (xs.empty()) fail("shape", "concat of nothing");
  const Tensor& first = xs.front()->value;
  if (first.rank() != 4) fail("shape", "concat expects 4D tensors");
  int c_total = 0;
  bool any_grad = false;
  for (const auto& x : xs) {
    if (x->value.rank() != 4 || x->value.dim(0) != first.dim(0) ||
        x->value.dim(2) != first.dim(2) || x->value.dim(3) != first.dim(3))
      fail("shape", "concat operands disagree");
    c_total += x->value.dim(1);
    any_grad = any_grad || needs(x);
  }
  const int n = first.dim(0), h = first.dim(2), w = first.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor out({n, c_total, h, w});
  for (int b = 0; b < n; ++b) {
    std::size_t coff = 0;
    for (const auto& x : xs) {
      const int xc = x->value.dim(1);
      std::memcpy(out.v.data() + (static_cast<std::size_t>(b) * c_total + coff) * plane,
                  x->value.v.data() + static_cast<std::size_t>(b) * xc * plane,
                  sizeof(double) * xc * plane);
      coff += static_cast<std::size_t>(xc);
    }
  }
  NodeRef r = g.track(std::move(out), any_grad);
  if (r->requires_grad) {
    auto inputs = xs;
    g.record([inputs, r, n, c_total, plane] {
      for (int b = 0; b < n; ++b) {
        std::size_t coff = 0;
        for (const auto& x : inputs) {
          const int xc = x->value.dim(1);
          if (x->requires_grad) {
            const double* src =
                r->grad.v.data() + (static_cast<std::size_t>(b) * c_total + coff) * plane;
            double* dst = x->grad.v.data() + static_cast<std::size_t>(b) * xc * plane;
            for (std::size_t i = 0; i < xc * plane; ++i) dst[i] += src[i];
          }
          coff += static_cast<std::size_t>(xc);
        }
      }
    });
  }
  return r;
}

NodeRef detach(Graph& g, const NodeRef& x) { return g.track(x->value, false); }

namespace {

// output rows [r0, r0+nrows) of the patch matrix, (Cin*kh*kw) x (nrows*ow)
void im2col_rows(const Tensor& x, int n, int kh, int kw, int stride, int pad, int r0, int nrows,
                 int ow, std::vector<double>& col) {
  const int cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t pcols = static_cast<std::size_t>(nrows) * ow;
  col.assign(static_cast<std::size_t>(cin) * kh * kw * pcols, 0.0);
  for (int c = 0; c < cin; ++c)
    for (int i = 0; i < kh; ++i)
      for (int j = 0; j < kw; ++j) {
        double* dst = col.data() + ((static_cast<std::size_t>(c) * kh + i) * kw + j) * pcols;
        for (int r = 0; r < nrows; ++r) {
          const int hh = (r0 + r) * stride - pad + i;
          if (hh < 0 || hh >= h) continue;
          const double* src = &x.at4(n, c, hh, 0);
          double* drow = dst + static_cast<std::size_t>(r) * ow;
          for (int q = 0; q < ow; ++q) {
            const int ww = q * stride - pad + j;
            if (ww >= 0 && ww < w) drow[q] = src[ww];
          }
        }
      }
}

void col2im_add_rows(const std::vector<double>& col, int n, int kh, int kw, int stride, int pad,
                     int r0, int nrows, int ow, Tensor& dx) {
  const int cin = dx.dim(1), h = dx.dim(2), w = dx.dim(3);
  const std::size_t pcols = static_cast<std::size_t>(nrows) * ow;
  for (int c = 0; c < cin; ++c)
    for (int i = 0; i < kh; ++i)
      for (int j = 0; j < kw; ++j) {
        const double* src = col.data() + ((static_cast<std::size_t>(c) * kh + i) * kw + j) * pcols;
        for (int r = 0; r < nrows; ++r) {
          const int hh = (r0 + r) * stride - pad + i;
          if (hh < 0 || hh >= h) continue;
          double* drow = &dx.at4(n, c, hh, 0);
          const double* srow = src + static_cast<std::size_t>(r) * ow;
          for (int q = 0; q < ow; ++q) {
            const int ww = q * stride - pad + j;
            if (ww >= 0 && ww < w) drow[ww] += srow[q];
          }
        }
      }
}

// keep each im2col buffer at or under ~32 MB so full-slice inference stays bounded
int conv_chunk_rows(int ckk, int ow, int oh) {
  const std::size_t budget = std::size_t(4) << 20;  // doubles
  const std::size_t per_row = static_cast<std::size_t>(ckk) * ow;
  const int rows = static_cast<int>(std::max<std::size_t>(1, budget / std::max<std::size_t>(1, per_row)));
  return std::min(rows, oh);
}

using MapStrideRM =
    Eigen::Map<RowMat, Eigen::Unaligned, Eigen::OuterStride<>>;
using MapStrideCRM =
    Eigen::Map<const RowMat, Eigen::Unaligned, Eigen::OuterStride<>>;

}  // namespace

NodeRef conv2d(Graph& g, NodeRef x, NodeRef w, NodeRef b, int stride, int pad) {
  if (x->value.rank() != 4 || w->value.rank() != 4) fail("shape", "conv2d expects 4D x and w");
  const int n = x->value.dim(0), cin = x->value.dim(1), h = x->value.dim(2), wd = x->value.dim(3);
  const int cout = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
  if (w->value.dim(1) != cin) fail("shape", "conv2d channel mismatch");
  if (b->value.rank() != 1 || b->value.dim(0) != cout) fail("shape", "conv2d bias mismatch");
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (wd + 2 * pad - kw) / stride + 1;
  if (oh <= 0 || ow <= 0) fail("shape", "conv2d output would be empty");
  const int ckk = cin * kh * kw;
  const std::size_t plane = static_cast<std::size_t>(oh) * ow;
  const int chunk = conv_chunk_rows(ckk, ow, oh);

  Tensor out({n, cout, oh, ow});
  std::vector<double> col;
  MapCRM wm(w->value.v.data(), cout, ckk);
  for (int item = 0; item < n; ++item) {
    for (int r0 = 0; r0 < oh; r0 += chunk) {
      const int nrows = std::min(chunk, oh - r0);
      const Eigen::Index seg = static_cast<Eigen::Index>(nrows) * ow;
      im2col_rows(x->value, item, kh, kw, stride, pad, r0, nrows, ow, col);
      MapCRM cm(col.data(), ckk, seg);
      MapStrideRM om(out.v.data() + static_cast<std::size_t>(item) * cout * plane +
                         static_cast<std::size_t>(r0) * ow,
                     cout, seg, Eigen::OuterStride<>(static_cast<Eigen::Index>(plane)));
      om.noalias() = wm * cm;
      for (int co = 0; co < cout; ++co) om.row(co).array() += b->value.v[static_cast<size_t>(co)];
    }
  }

  NodeRef r = g.track(std::move(out), needs(x) || needs(w) || needs(b));
  if (r->requires_grad)
    g.record([x, w, b, r, stride, pad, n, kh, kw, cout, ckk, plane, oh, ow, chunk] {
      std::vector<double> col, dcol;
      MapCRM wm(w->value.v.data(), cout, ckk);
      for (int item = 0; item < n; ++item) {
        for (int r0 = 0; r0 < oh; r0 += chunk) {
          const int nrows = std::min(chunk, oh - r0);
          const Eigen::Index seg = static_cast<Eigen::Index>(nrows) * ow;
          MapStrideCRM gm(r->grad.v.data() + static_cast<std::size_t>(item) * cout * plane +
                              static_cast<std::size_t>(r0) * ow,
                          cout, seg, Eigen::OuterStride<>(static_cast<Eigen::Index>(plane)));
          if (w->requires_grad || b->requires_grad) {
            im2col_rows(x->value, item, kh, kw, stride, pad, r0, nrows, ow, col);
            MapCRM cm(col.data(), ckk, seg);
            if (w->requires_grad) {
              MapRM dwm(w->grad.v.data(), cout, ckk);
              dwm.noalias() += gm * cm.transpose();
            }
            if (b->requires_grad)
              for (int co = 0; co < cout; ++co)
                b->grad.v[static_cast<size_t>(co)] += gm.row(co).sum();
          }
          if (x->requires_grad) {
            dcol.assign(static_cast<std::size_t>(ckk) * seg, 0.0);
            MapRM dcm(dcol.data(), ckk, seg);
            dcm.noalias() = wm.transpose() * gm;
            col2im_add_rows(dcol, item, kh, kw, stride, pad, r0, nrows, ow, x->grad);
          }
        }
      }
    });
  return r;
}

NodeRef avg_pool2x2(Graph& g, NodeRef x) {
  if (x->value.rank() != 4) fail("shape", "avg_pool2x2 expects 4D");
  const int n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  if (h % 2 != 0 || w % 2 != 0) fail("shape", "avg_pool2x2 needs even spatial dims");
  Tensor out({n, c, h / 2, w / 2});
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      for (int r = 0; r < h / 2; ++r)
        for (int q = 0; q < w / 2; ++q)
          out.at4(b, ch, r, q) =
              0.25 * (x->value.at4(b, ch, 2 * r, 2 * q) + x->value.at4(b, ch, 2 * r, 2 * q + 1) +
                      x->value.at4(b, ch, 2 * r + 1, 2 * q) +
                      x->value.at4(b, ch, 2 * r + 1, 2 * q + 1));
  NodeRef r = g.track(std::move(out), needs(x));
  if (r->requires_grad)
    g.record([x, r, n, c, h, w] {
      for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch)
          for (int rr = 0; rr < h / 2; ++rr)
            for (int q = 0; q < w / 2; ++q) {
              const double gv = 0.25 * r->grad.at4(b, ch, rr, q);
              x->grad.at4(b, ch, 2 * rr, 2 * q) += gv;
              x->grad.at4(b, ch, 2 * rr, 2 * q + 1) += gv;
              x->grad.at4(b, ch, 2 * rr + 1, 2 * q) += gv;
              x->grad.at4(b, ch, 2 * rr + 1, 2 * q + 1) += gv;
            }
    });
  return r;
}

NodeRef instance_norm(Graph& g, NodeRef x, NodeRef gamma, NodeRef beta, double eps) {
  if (x->value.rank() != 4) fail("shape", "instance_norm expects 4D");
  const int n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  if (gamma->value.dim(0) != c || beta->value.dim(0) != c)
    fail("shape", "instance_norm affine params mismatch");
  const std::size_t plane = static_cast<std::size_t>(h) * w;

  Tensor out({n, c, h, w});
  auto xhat = std::make_shared<Tensor>(std::vector<int>{n, c, h, w});
  auto invstd = std::make_shared<Tensor>(std::vector<int>{n, c});
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      const double* src = &x->value.at4(b, ch, 0, 0);
      double mu = 0.0;
      for (std::size_t i = 0; i < plane; ++i) mu += src[i];
      mu /= static_cast<double>(plane);
      double var = 0.0;
      for (std::size_t i = 0; i < plane; ++i) var += (src[i] - mu) * (src[i] - mu);
      var /= static_cast<double>(plane);
      const double is = 1.0 / std::sqrt(var + eps);
      invstd->at2(b, ch) = is;
      double* xh = &xhat->at4(b, ch, 0, 0);
      double* o = &out.at4(b, ch, 0, 0);
      const double gm = gamma->value.v[static_cast<size_t>(ch)];
      const double bt = beta->value.v[static_cast<size_t>(ch)];
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (src[i] - mu) * is;
        o[i] = gm * xh[i] + bt;
      }
    }

  NodeRef r = g.track(std::move(out), needs(x) || needs(gamma) || needs(beta));
  if (r->requires_grad)
    g.record([x, gamma, beta, r, xhat, invstd, n, c, plane] {
      for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch) {
          const double* go = &r->grad.at4(b, ch, 0, 0);
          const double* xh = &xhat->at4(b, ch, 0, 0);
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t i = 0; i < plane; ++i) {
            sum_g += go[i];
            sum_gx += go[i] * xh[i];
          }
          if (gamma->requires_grad) gamma->grad.v[static_cast<size_t>(ch)] += sum_gx;
          if (beta->requires_grad) beta->grad.v[static_cast<size_t>(ch)] += sum_g;
          if (x->requires_grad) {
            const double gm = gamma->value.v[static_cast<size_t>(ch)];
            const double is = invstd->at2(b, ch);
            const double inv_n = 1.0 / static_cast<double>(plane);
            double* dx = &x->grad.at4(b, ch, 0, 0);
            for (std::size_t i = 0; i < plane; ++i)
              dx[i] += gm * is * (go[i] - inv_n * sum_g - xh[i] * inv_n * sum_gx);
          }
        }
    });
  return r;
}

NodeRef gather_locations(Graph& g, NodeRef x, int n,
                         const std::vector<std::pair<int, int>>& locs) {
  if (x->value.rank() != 4) fail("shape", "gather_locations expects 4D");
  const int c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  if (n < 0 || n >= x->value.dim(0)) fail("index", "batch index out of range");
  for (const auto& [r_, c_] : locs)
    if (r_ < 0 || r_ >= h || c_ < 0 || c_ >= w)
      fail("index", "location (" + std::to_string(r_) + "," + std::to_string(c_) +
                        ") outside feature grid " + std::to_string(h) + "x" + std::to_string(w));
  const int k = static_cast<int>(locs.size());
  Tensor out({k, c});
  for (int i = 0; i < k; ++i)
    for (int ch = 0; ch < c; ++ch) out.at2(i, ch) = x->value.at4(n, ch, locs[static_cast<size_t>(i)].first, locs[static_cast<size_t>(i)].second);
  NodeRef r = g.track(std::move(out), needs(x));
  if (r->requires_grad) {
    auto locations = locs;
    g.record([x, r, n, locations, c] {
      for (std::size_t i = 0; i < locations.size(); ++i)
        for (int ch = 0; ch < c; ++ch)
          x->grad.at4(n, ch, locations[i].first, locations[i].second) +=
              r->grad.at2(static_cast<int>(i), ch);
    });
  }
  return r;
}

NodeRef linear(Graph& g, NodeRef x, NodeRef w, NodeRef b) {
  if (x->value.rank() != 2 || w->value.rank() != 2) fail("shape", "linear expects 2D x and w");
  const int k = x->value.dim(0), cin = x->value.dim(1), cout = w->value.dim(0);
  if (w->value.dim(1) != cin || b->value.dim(0) != cout) fail("shape", "linear shape mismatch");
  Tensor out({k, cout});
  MapCRM xm(x->value.v.data(), k, cin);
  MapCRM wm(w->value.v.data(), cout, cin);
  MapRM om(out.v.data(), k, cout);
  om.noalias() = xm * wm.transpose();
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < cout; ++j) out.at2(i, j) += b->value.v[static_cast<size_t>(j)];
  NodeRef r = g.track(std::move(out), needs(x) || needs(w) || needs(b));
  if (r->requires_grad)
    g.record([x, w, b, r, k, cin, cout] {
      MapCRM gm(r->grad.v.data(), k, cout);
      if (x->requires_grad) {
        MapCRM wm(w->value.v.data(), cout, cin);
        MapRM dxm(x->grad.v.data(), k, cin);
        dxm.noalias() += gm * wm;
      }
      if (w->requires_grad) {
        MapCRM xm(x->value.v.data(), k, cin);
        MapRM dwm(w->grad.v.data(), cout, cin);
        dwm.noalias() += gm.transpose() * xm;
      }
      if (b->requires_grad)
        for (int j = 0; j < cout; ++j) b->grad.v[static_cast<size_t>(j)] += gm.col(j).sum();
    });
  return r;
}

NodeRef l2_normalize_rows(Graph& g, NodeRef x) {
  if (x->value.rank() != 2) fail("shape", "l2_normalize_rows expects 2D");
  const int k = x->value.dim(0), d = x->value.dim(1);
  Tensor out({k, d});
  auto norms = std::make_shared<std::vector<double>>(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += x->value.at2(i, j) * x->value.at2(i, j);
    const double nrm = std::sqrt(s);
    if (nrm < 1e-12)
      fail("degenerate-embedding", "row " + std::to_string(i) + " has near-zero norm");
    (*norms)[static_cast<size_t>(i)] = nrm;
    for (int j = 0; j < d; ++j) out.at2(i, j) = x->value.at2(i, j) / nrm;
  }
  NodeRef r = g.track(std::move(out), needs(x));
  if (r->requires_grad)
    g.record([x, r, norms, k, d] {
      for (int i = 0; i < k; ++i) {
        double dot = 0.0;
        for (int j = 0; j < d; ++j) dot += r->value.at2(i, j) * r->grad.at2(i, j);
        const double inv = 1.0 / (*norms)[static_cast<size_t>(i)];
        for (int j = 0; j < d; ++j)
          x->grad.at2(i, j) += inv * (r->grad.at2(i, j) - r->value.at2(i, j) * dot);
      }
    });
  return r;
}

NodeRef matmul_nt(Graph& g, NodeRef a, NodeRef b) {
  if (a->value.rank() != 2 || b->value.rank() != 2 || a->value.dim(1) != b->value.dim(1))
    fail("shape", "matmul_nt expects (K,D)x(M,D)");
  const int k = a->value.dim(0), m = b->value.dim(0), d = a->value.dim(1);
  Tensor out({k, m});
  MapCRM am(a->value.v.data(), k, d);
  MapCRM bm(b->value.v.data(), m, d);
  MapRM om(out.v.data(), k, m);
  om.noalias() = am * bm.transpose();
  NodeRef r = g.track(std::move(out), needs(a) || needs(b));
  if (r->requires_grad)
    g.record([a, b, r, k, m, d] {
      MapCRM gm(r->grad.v.data(), k, m);
      if (a->requires_grad) {
        MapCRM bm(b->value.v.data(), m, d);
        MapRM dam(a->grad.v.data(), k, d);
        dam.noalias() += gm * bm;
      }
      if (b->requires_grad) {
        MapCRM am(a->value.v.data(), k, d);
        MapRM dbm(b->grad.v.data(), m, d);
        dbm.noalias() += gm.transpose() * am;
      }
    });
  return r;
}

NodeRef mean_all(Graph& g, NodeRef x) {
  if (x->value.size() == 0) fail("shape", "mean of empty tensor");
  double s = 0.0;
  for (double v : x->value.v) s += v;
  const double inv = 1.0 / static_cast<double>(x->value.size());
  Tensor out({1});
  out.v[0] = s * inv;
  NodeRef r = g.track(std::move(out), needs(x));
  if (r->requires_grad)
    g.record([x, r, inv] {
      const double gv = r->grad.v[0] * inv;
      for (double& dx : x->grad.v) dx += gv;
    });
  return r;
}

NodeRef diag_mean(Graph& g, NodeRef m) {
  if (m->value.rank() != 2 || m->value.dim(0) != m->value.dim(1))
    fail("shape", "diag_mean expects square matrix");
  const int k = m->value.dim(0);
  double s = 0.0;
  for (int i = 0; i < k; ++i) s += m->value.at2(i, i);
  Tensor out({1});
  out.v[0] = s / k;
  NodeRef r = g.track(std::move(out), needs(m));
  if (r->requires_grad)
    g.record([m, r, k] {
      const double gv = r->grad.v[0] / k;
      for (int i = 0; i < k; ++i) m->grad.at2(i, i) += gv;
    });
  return r;
}

NodeRef offdiag_mean(Graph& g, NodeRef m) {
  if (m->value.rank() != 2 || m->value.dim(0) != m->value.dim(1))
    fail("shape", "offdiag_mean expects square matrix");
  const int k = m->value.dim(0);
  if (k == 1) return g.track(Tensor({1}), false);  // no ordered pairs
  double s = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      if (i != j) s += m->value.at2(i, j);
  const double inv = 1.0 / (static_cast<double>(k) * (k - 1));
  Tensor out({1});
  out.v[0] = s * inv;
  NodeRef r = g.track(std::move(out), needs(m));
  if (r->requires_grad)
    g.record([m, r, k, inv] {
      const double gv = r->grad.v[0] * inv;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
          if (i != j) m->grad.at2(i, j) += gv;
    });
  return r;
}

NodeRef mean_abs_diff(Graph& g, NodeRef a, NodeRef b) {
  check_same_shape(a, b, "mean_abs_diff");
  const std::size_t n = a->value.size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(a->value.v[i] - b->value.v[i]);
  const double inv = 1.0 / static_cast<double>(n);
  Tensor out({1});
  out.v[0] = s * inv;
  NodeRef r = g.track(std::move(out), needs(a) || needs(b));
  if (r->requires_grad)
    g.record([a, b, r, n, inv] {
      const double gv = r->grad.v[0] * inv;
      for (std::size_t i = 0; i < n; ++i) {
        const double diff = a->value.v[i] - b->value.v[i];
        const double sg = diff > 0.0 ? gv : (diff < 0.0 ? -gv : 0.0);
        if (a->requires_grad) a->grad.v[i] += sg;
        if (b->requires_grad) b->grad.v[i] -= sg;
      }
    });
  return r;
}

Adam::Adam(std::vector<NodeRef> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  state_.m.reserve(params_.size());
  state_.v.reserve(params_.size());
  for (const auto& p : params_) {
    state_.m.emplace_back(p->value.shape);
    state_.v.emplace_back(p->value.shape);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

void Adam::step(double lr) {
  state_.t += 1;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(state_.t));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(state_.t));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Node& p = *params_[pi];
    Tensor& m = state_.m[pi];
    Tensor& v = state_.v[pi];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double grad = p.grad.v[i];
      m.v[i] = beta1_ * m.v[i] + (1.0 - beta1_) * grad;
      v.v[i] = beta2_ * v.v[i] + (1.0 - beta2_) * grad * grad;
      const double mhat = m.v[i] / bc1;
      const double vhat = v.v[i] / bc2;
      p.value.v[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::set_state(State s) {
  if (s.m.size() != params_.size() || s.v.size() != params_.size())
    fail("checkpoint", "optimizer state does not match parameter list");
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (!s.m[i].same_shape(params_[i]->value) || !s.v[i].same_shape(params_[i]->value))
      fail("checkpoint", "optimizer state shape mismatch at " + params_[i]->name);
  state_ = std::move(s);
}

void init_normal_fan_in(Tensor& w, int fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& x : w.v) x = rng.normal(0.0, stddev);
}

}  // namespace dmlct::nn
