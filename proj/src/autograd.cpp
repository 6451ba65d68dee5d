#include "ssda2/autograd.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <unordered_set>

namespace ssda2 {

namespace {

std::atomic<std::uint64_t> g_seq{0};
thread_local bool g_grad_enabled = true;

std::uint64_t next_seq() { return g_seq.fetch_add(1, std::memory_order_relaxed); }

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->seq = next_seq();
  bool any = false;
  for (const auto& p : parents) any = any || p->requires_grad;
  if (g_grad_enabled && any) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backfn = std::move(fn);
  }
  return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->value.same_shape(b->value))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a->value.shape_str() +
                                " vs " + b->value.shape_str());
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev; }

Var make_leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->seq = next_seq();
  n->requires_grad = requires_grad;
  return n;
}

Var detach(const Var& x) { return make_leaf(x->value, false); }

void backward(const Var& root) {
  if (root->value.size() != 1)
    throw std::logic_error("backward: root must be scalar, got " + root->value.shape_str());
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.get()};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    order.push_back(n);
    for (const auto& p : n->parents) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(),
            [](const Node* a, const Node* b) { return a->seq > b->seq; });
  root->g()[0] += 1.0;
  for (Node* n : order) {
    if (n->backfn && n->has_grad()) n->backfn(*n);
  }
}

void zero_grad(const std::vector<Var>& params) {
  for (const auto& p : params) p->grad = Tensor();
}

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  return make_op(std::move(out), {a, b}, [](Node& n) {
    for (int p = 0; p < 2; ++p) {
      if (!n.parents[p]->requires_grad) continue;
      Tensor& pg = n.parents[p]->g();
      for (std::int64_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] - b->value[i];
  return make_op(std::move(out), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) {
      Tensor& pg = n.parents[0]->g();
      for (std::int64_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i];
    }
    if (n.parents[1]->requires_grad) {
      Tensor& pg = n.parents[1]->g();
      for (std::int64_t i = 0; i < pg.size(); ++i) pg[i] -= n.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
  return make_op(std::move(out), {a, b}, [](Node& n) {
    const Tensor& av = n.parents[0]->value;
    const Tensor& bv = n.parents[1]->value;
    if (n.parents[0]->requires_grad) {
      Tensor& pg = n.parents[0]->g();
      for (std::int64_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i] * bv[i];
    }
    if (n.parents[1]->requires_grad) {
      Tensor& pg = n.parents[1]->g();
      for (std::int64_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i] * av[i];
    }
  });
}

Var scale(const Var& a, double k) {
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * k;
  return make_op(std::move(out), {a}, [k](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor& pg = n.parents[0]->g();
    for (std::int64_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i] * k;
  });
}

Var add_scalar(const Var& a, double k) {
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + k;
  return make_op(std::move(out), {a}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor& pg = n.parents[0]->g();
    for (std::int64_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i];
  });
}

Var relu(const Var& a) {
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] > 0 ? a->value[i] : 0.0;
  return make_op(std::move(out), {a}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    const Tensor& av = n.parents[0]->value;
    Tensor& pg = n.parents[0]->g();
    for (std::int64_t i = 0; i < pg.size(); ++i)
      if (av[i] > 0) pg[i] += n.grad[i];
  });
}

Var sigmoid(const Var& a) {
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a->value[i]));
  return make_op(std::move(out), {a}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor& pg = n.parents[0]->g();
    for (std::int64_t i = 0; i < pg.size(); ++i) {
      const double y = n.value[i];
      pg[i] += n.grad[i] * y * (1.0 - y);
    }
  });
}

Var exp_v(const Var& a) {
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::exp(a->value[i]);
  return make_op(std::move(out), {a}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor& pg = n.parents[0]->g();
    for (std::int64_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i] * n.value[i];
  });
}

Var log_v(const Var& a) {
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::log(a->value[i]);
  return make_op(std::move(out), {a}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    const Tensor& av = n.parents[0]->value;
    Tensor& pg = n.parents[0]->g();
    for (std::int64_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i] / av[i];
  });
}

Var square(const Var& a) {
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * a->value[i];
  return make_op(std::move(out), {a}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    const Tensor& av = n.parents[0]->value;
    Tensor& pg = n.parents[0]->g();
    for (std::int64_t i = 0; i < pg.size(); ++i) pg[i] += 2.0 * av[i] * n.grad[i];
  });
}

Var sqrt_eps(const Var& a, double eps) {
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(a->value[i] + eps);
  return make_op(std::move(out), {a}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor& pg = n.parents[0]->g();
    for (std::int64_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i] * 0.5 / n.value[i];
  });
}

Var rsqrt_eps(const Var& a, double eps) {
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = 1.0 / std::sqrt(a->value[i] + eps);
  return make_op(std::move(out), {a}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor& pg = n.parents[0]->g();
    for (std::int64_t i = 0; i < pg.size(); ++i) {
      const double y = n.value[i];
      pg[i] += n.grad[i] * (-0.5) * y * y * y;
    }
  });
}

// ---------------------------------------------------------------- reductions

Var mean_all(const Var& a) {
  double s = 0;
  for (std::int64_t i = 0; i < a->value.size(); ++i) s += a->value[i];
  const double inv = 1.0 / static_cast<double>(a->value.size());
  return make_op(Tensor::scalar(s * inv), {a}, [inv](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor& pg = n.parents[0]->g();
    const double g = n.grad[0] * inv;
    for (std::int64_t i = 0; i < pg.size(); ++i) pg[i] += g;
  });
}

Var sum_all(const Var& a) {
  double s = 0;
  for (std::int64_t i = 0; i < a->value.size(); ++i) s += a->value[i];
  return make_op(Tensor::scalar(s), {a}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor& pg = n.parents[0]->g();
    const double g = n.grad[0];
    for (std::int64_t i = 0; i < pg.size(); ++i) pg[i] += g;
  });
}

Var mean_spatial(const Var& x) {
  if (x->value.rank() != 4) throw std::invalid_argument("mean_spatial: expects NCHW");
  const std::int64_t n = x->value.dim(0), c = x->value.dim(1);
  const std::int64_t hw = x->value.dim(2) * x->value.dim(3);
  Tensor out({n, c});
  const double inv = 1.0 / static_cast<double>(hw);
  for (std::int64_t i = 0; i < n * c; ++i) {
    const double* p = x->value.data() + i * hw;
    double s = 0;
    for (std::int64_t j = 0; j < hw; ++j) s += p[j];
    out[i] = s * inv;
  }
  return make_op(std::move(out), {x}, [hw, inv](Node& node) {
    if (!node.parents[0]->requires_grad) return;
    Tensor& pg = node.parents[0]->g();
    const std::int64_t nc = node.value.size();
    for (std::int64_t i = 0; i < nc; ++i) {
      const double g = node.grad[i] * inv;
      double* p = pg.data() + i * hw;
      for (std::int64_t j = 0; j < hw; ++j) p[j] += g;
    }
  });
}

Var bc_mul(const Var& x, const Var& v) {
  if (x->value.rank() != 4 || v->value.rank() != 2 || x->value.dim(0) != v->value.dim(0) ||
      x->value.dim(1) != v->value.dim(1))
    throw std::invalid_argument("bc_mul: shapes " + x->value.shape_str() + " vs " +
                                v->value.shape_str());
  const std::int64_t nc = v->value.size();
  const std::int64_t hw = x->value.dim(2) * x->value.dim(3);
  Tensor out(x->value.shape());
  for (std::int64_t i = 0; i < nc; ++i) {
    const double k = v->value[i];
    const double* p = x->value.data() + i * hw;
    double* o = out.data() + i * hw;
    for (std::int64_t j = 0; j < hw; ++j) o[j] = p[j] * k;
  }
  return make_op(std::move(out), {x, v}, [nc, hw](Node& node) {
    const Tensor& xv = node.parents[0]->value;
    const Tensor& vv = node.parents[1]->value;
    if (node.parents[0]->requires_grad) {
      Tensor& pg = node.parents[0]->g();
      for (std::int64_t i = 0; i < nc; ++i) {
        const double k = vv[i];
        const double* g = node.grad.data() + i * hw;
        double* p = pg.data() + i * hw;
        for (std::int64_t j = 0; j < hw; ++j) p[j] += g[j] * k;
      }
    }
    if (node.parents[1]->requires_grad) {
      Tensor& pg = node.parents[1]->g();
      for (std::int64_t i = 0; i < nc; ++i) {
        const double* g = node.grad.data() + i * hw;
        const double* p = xv.data() + i * hw;
        double s = 0;
        for (std::int64_t j = 0; j < hw; ++j) s += g[j] * p[j];
        pg[i] += s;
      }
    }
  });
}

Var bc_add(const Var& x, const Var& v) {
  if (x->value.rank() != 4 || v->value.rank() != 2 || x->value.dim(0) != v->value.dim(0) ||
      x->value.dim(1) != v->value.dim(1))
    throw std::invalid_argument("bc_add: shapes " + x->value.shape_str() + " vs " +
                                v->value.shape_str());
  const std::int64_t nc = v->value.size();
  const std::int64_t hw = x->value.dim(2) * x->value.dim(3);
  Tensor out(x->value.shape());
  for (std::int64_t i = 0; i < nc; ++i) {
    const double k = v->value[i];
    const double* p = x->value.data() + i * hw;
    double* o = out.data() + i * hw;
    for (std::int64_t j = 0; j < hw; ++j) o[j] = p[j] + k;
  }
  return make_op(std::move(out), {x, v}, [nc, hw](Node& node) {
    if (node.parents[0]->requires_grad) {
      Tensor& pg = node.parents[0]->g();
      for (std::int64_t i = 0; i < pg.size(); ++i) pg[i] += node.grad[i];
    }
    if (node.parents[1]->requires_grad) {
      Tensor& pg = node.parents[1]->g();
      for (std::int64_t i = 0; i < nc; ++i) {
        const double* g = node.grad.data() + i * hw;
        double s = 0;
        for (std::int64_t j = 0; j < hw; ++j) s += g[j];
        pg[i] += s;
      }
    }
  });
}

// ----------------------------------------------------------------- structure

Var concat_channels(const Var& a, const Var& b) {
  const Tensor& av = a->value;
  const Tensor& bv = b->value;
  if (av.rank() != 4 || bv.rank() != 4 || av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) ||
      av.dim(3) != bv.dim(3))
    throw std::invalid_argument("concat_channels: incompatible shapes " + av.shape_str() +
                                " vs " + bv.shape_str());
  const std::int64_t n = av.dim(0), ca = av.dim(1), cb = bv.dim(1);
  const std::int64_t hw = av.dim(2) * av.dim(3);
  Tensor out({n, ca + cb, av.dim(2), av.dim(3)});
  for (std::int64_t i = 0; i < n; ++i) {
    std::memcpy(out.data() + i * (ca + cb) * hw, av.data() + i * ca * hw,
                static_cast<std::size_t>(ca * hw) * sizeof(double));
    std::memcpy(out.data() + (i * (ca + cb) + ca) * hw, bv.data() + i * cb * hw,
                static_cast<std::size_t>(cb * hw) * sizeof(double));
  }
  return make_op(std::move(out), {a, b}, [n, ca, cb, hw](Node& node) {
    if (node.parents[0]->requires_grad) {
      Tensor& pg = node.parents[0]->g();
      for (std::int64_t i = 0; i < n; ++i) {
        const double* g = node.grad.data() + i * (ca + cb) * hw;
        double* p = pg.data() + i * ca * hw;
        for (std::int64_t j = 0; j < ca * hw; ++j) p[j] += g[j];
      }
    }
    if (node.parents[1]->requires_grad) {
      Tensor& pg = node.parents[1]->g();
      for (std::int64_t i = 0; i < n; ++i) {
        const double* g = node.grad.data() + (i * (ca + cb) + ca) * hw;
        double* p = pg.data() + i * cb * hw;
        for (std::int64_t j = 0; j < cb * hw; ++j) p[j] += g[j];
      }
    }
  });
}

// ------------------------------------------------------------------ conv2d

namespace {

/// col is (Cin*K*K, H*W) for one sample, zero padding pad = K/2.
void im2col(const double* x, std::int64_t c_in, std::int64_t h, std::int64_t w, std::int64_t k,
            double* col) {
  const std::int64_t pad = k / 2;
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < c_in; ++c) {
    const double* xc = x + c * h * w;
    for (std::int64_t ki = 0; ki < k; ++ki) {
      for (std::int64_t kj = 0; kj < k; ++kj, ++row) {
        double* out = col + row * h * w;
        for (std::int64_t y = 0; y < h; ++y) {
          const std::int64_t sy = y + ki - pad;
          if (sy < 0 || sy >= h) {
            std::memset(out + y * w, 0, static_cast<std::size_t>(w) * sizeof(double));
            continue;
          }
          const double* src = xc + sy * w;
          for (std::int64_t xq = 0; xq < w; ++xq) {
            const std::int64_t sx = xq + kj - pad;
            out[y * w + xq] = (sx < 0 || sx >= w) ? 0.0 : src[sx];
          }
        }
      }
    }
  }
}

void col2im_acc(const double* col, std::int64_t c_in, std::int64_t h, std::int64_t w,
                std::int64_t k, double* x) {
  const std::int64_t pad = k / 2;
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < c_in; ++c) {
    double* xc = x + c * h * w;
    for (std::int64_t ki = 0; ki < k; ++ki) {
      for (std::int64_t kj = 0; kj < k; ++kj, ++row) {
        const double* in = col + row * h * w;
        for (std::int64_t y = 0; y < h; ++y) {
          const std::int64_t sy = y + ki - pad;
          if (sy < 0 || sy >= h) continue;
          double* dst = xc + sy * w;
          for (std::int64_t xq = 0; xq < w; ++xq) {
            const std::int64_t sx = xq + kj - pad;
            if (sx >= 0 && sx < w) dst[sx] += in[y * w + xq];
          }
        }
      }
    }
  }
}

thread_local std::vector<double> g_col_scratch;

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b) {
  const Tensor& xv = x->value;
  const Tensor& wv = w->value;
  if (xv.rank() != 4 || wv.rank() != 4)
    throw std::invalid_argument("conv2d: expects NCHW input and OIKK weights");
  if (xv.dim(1) != wv.dim(1))
    throw std::invalid_argument("conv2d: channel mismatch " + xv.shape_str() + " vs " +
                                wv.shape_str());
  if (wv.dim(2) != wv.dim(3) || wv.dim(2) % 2 == 0)
    throw std::invalid_argument("conv2d: kernel must be odd square");
  if (b->value.size() != wv.dim(0)) throw std::invalid_argument("conv2d: bias size mismatch");

  const std::int64_t n = xv.dim(0), c_in = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
  const std::int64_t c_out = wv.dim(0), k = wv.dim(2);
  const std::int64_t ckk = c_in * k * k, hw = h * wd;

  Tensor out({n, c_out, h, wd});
  g_col_scratch.resize(static_cast<std::size_t>(ckk * hw));
  double* col = g_col_scratch.data();
  for (std::int64_t i = 0; i < n; ++i) {
    im2col(xv.data() + i * c_in * hw, c_in, h, wd, k, col);
    gemm(false, false, c_out, hw, ckk, 1.0, wv.data(), col, 0.0, out.data() + i * c_out * hw);
    for (std::int64_t c = 0; c < c_out; ++c) {
      double* o = out.data() + (i * c_out + c) * hw;
      const double bias = b->value[c];
      for (std::int64_t j = 0; j < hw; ++j) o[j] += bias;
    }
  }

  return make_op(std::move(out), {x, w, b},
                 [n, c_in, c_out, h, wd, k, ckk, hw](Node& node) {
                   const Tensor& xval = node.parents[0]->value;
                   const Tensor& wval = node.parents[1]->value;
                   const bool need_x = node.parents[0]->requires_grad;
                   const bool need_w = node.parents[1]->requires_grad;
                   const bool need_b = node.parents[2]->requires_grad;
                   g_col_scratch.resize(static_cast<std::size_t>(ckk * hw));
                   double* col = g_col_scratch.data();
                   std::vector<double> colgrad;
                   if (need_x) colgrad.resize(static_cast<std::size_t>(ckk * hw));
                   for (std::int64_t i = 0; i < n; ++i) {
                     const double* gout = node.grad.data() + i * c_out * hw;
                     if (need_w) {
                       im2col(xval.data() + i * c_in * hw, c_in, h, wd, k, col);
                       gemm(false, true, c_out, ckk, hw, 1.0, gout, col, 1.0,
                            node.parents[1]->g().data());
                     }
                     if (need_x) {
                       gemm(true, false, ckk, hw, c_out, 1.0, wval.data(), gout, 0.0,
                            colgrad.data());
                       col2im_acc(colgrad.data(), c_in, h, wd, k,
                                  node.parents[0]->g().data() + i * c_in * hw);
                     }
                     if (need_b) {
                       Tensor& bg = node.parents[2]->g();
                       for (std::int64_t c = 0; c < c_out; ++c) {
                         const double* g = gout + c * hw;
                         double s = 0;
                         for (std::int64_t j = 0; j < hw; ++j) s += g[j];
                         bg[c] += s;
                       }
                     }
                   }
                 });
}

// ------------------------------------------------------------------ pooling

Var maxpool2(const Var& x) {
  const Tensor& xv = x->value;
  if (xv.rank() != 4) throw std::invalid_argument("maxpool2: expects NCHW");
  const std::int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  if (h % 2 != 0 || w % 2 != 0)
    throw std::invalid_argument("maxpool2: spatial dims must be even, got " + xv.shape_str());
  const std::int64_t oh = h / 2, ow = w / 2;
  Tensor out({n, c, oh, ow});
  std::vector<std::int64_t> argmax(static_cast<std::size_t>(out.size()));
  std::int64_t oi = 0;
  for (std::int64_t i = 0; i < n * c; ++i) {
    const double* p = xv.data() + i * h * w;
    for (std::int64_t y = 0; y < oh; ++y) {
      for (std::int64_t xq = 0; xq < ow; ++xq, ++oi) {
        const std::int64_t base = 2 * y * w + 2 * xq;
        std::int64_t best = base;
        double bv = p[base];
        for (int d = 1; d < 4; ++d) {
          const std::int64_t idx = base + (d / 2) * w + (d % 2);
          if (p[idx] > bv) {
            bv = p[idx];
            best = idx;
          }
        }
        out[oi] = bv;
        argmax[static_cast<std::size_t>(oi)] = i * h * w + best;
      }
    }
  }
  return make_op(std::move(out), {x}, [argmax = std::move(argmax)](Node& node) {
    if (!node.parents[0]->requires_grad) return;
    Tensor& pg = node.parents[0]->g();
    for (std::int64_t i = 0; i < node.value.size(); ++i)
      pg[argmax[static_cast<std::size_t>(i)]] += node.grad[i];
  });
}

Var upsample2(const Var& x) {
  const Tensor& xv = x->value;
  if (xv.rank() != 4) throw std::invalid_argument("upsample2: expects NCHW");
  const std::int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  Tensor out({n, c, h * 2, w * 2});
  for (std::int64_t i = 0; i < n * c; ++i) {
    const double* p = xv.data() + i * h * w;
    double* o = out.data() + i * 4 * h * w;
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t xq = 0; xq < w; ++xq) {
        const double v = p[y * w + xq];
        const std::int64_t base = 2 * y * 2 * w + 2 * xq;
        o[base] = v;
        o[base + 1] = v;
        o[base + 2 * w] = v;
        o[base + 2 * w + 1] = v;
      }
    }
  }
  return make_op(std::move(out), {x}, [n, c, h, w](Node& node) {
    if (!node.parents[0]->requires_grad) return;
    Tensor& pg = node.parents[0]->g();
    for (std::int64_t i = 0; i < n * c; ++i) {
      const double* g = node.grad.data() + i * 4 * h * w;
      double* p = pg.data() + i * h * w;
      for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t xq = 0; xq < w; ++xq) {
          const std::int64_t base = 2 * y * 2 * w + 2 * xq;
          p[y * w + xq] += g[base] + g[base + 1] + g[base + 2 * w] + g[base + 2 * w + 1];
        }
      }
    }
  });
}

// ------------------------------------------------------------------- linear

Var linear(const Var& x, const Var& w, const Var& b) {
  const Tensor& xv = x->value;
  const Tensor& wv = w->value;
  if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(1))
    throw std::invalid_argument("linear: shapes " + xv.shape_str() + " vs " + wv.shape_str());
  if (b->value.size() != wv.dim(0)) throw std::invalid_argument("linear: bias size mismatch");
  const std::int64_t n = xv.dim(0), kdim = xv.dim(1), m = wv.dim(0);
  Tensor out({n, m});
  gemm(false, true, n, m, kdim, 1.0, xv.data(), wv.data(), 0.0, out.data());
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < m; ++j) out.at2(i, j) += b->value[j];
  return make_op(std::move(out), {x, w, b}, [n, kdim, m](Node& node) {
    const Tensor& xval = node.parents[0]->value;
    const Tensor& wval = node.parents[1]->value;
    if (node.parents[0]->requires_grad)
      gemm(false, false, n, kdim, m, 1.0, node.grad.data(), wval.data(), 1.0,
           node.parents[0]->g().data());
    if (node.parents[1]->requires_grad)
      gemm(true, false, m, kdim, n, 1.0, node.grad.data(), xval.data(), 1.0,
           node.parents[1]->g().data());
    if (node.parents[2]->requires_grad) {
      Tensor& bg = node.parents[2]->g();
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < m; ++j) bg[j] += node.grad.at2(i, j);
    }
  });
}

Var l2_normalize_rows(const Var& x) {
  const Tensor& xv = x->value;
  if (xv.rank() != 2) throw std::invalid_argument("l2_normalize_rows: expects (N,K)");
  const std::int64_t n = xv.dim(0), k = xv.dim(1);
  Tensor out({n, k});
  std::vector<double> inv_norm(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    double q = 1e-24;
    for (std::int64_t j = 0; j < k; ++j) q += xv.at2(i, j) * xv.at2(i, j);
    const double s = 1.0 / std::sqrt(q);
    inv_norm[static_cast<std::size_t>(i)] = s;
    for (std::int64_t j = 0; j < k; ++j) out.at2(i, j) = xv.at2(i, j) * s;
  }
  return make_op(std::move(out), {x}, [n, k, inv_norm = std::move(inv_norm)](Node& node) {
    if (!node.parents[0]->requires_grad) return;
    const Tensor& xval = node.parents[0]->value;
    Tensor& pg = node.parents[0]->g();
    for (std::int64_t i = 0; i < n; ++i) {
      const double s = inv_norm[static_cast<std::size_t>(i)];
      double dot = 0;
      for (std::int64_t j = 0; j < k; ++j) dot += xval.at2(i, j) * node.grad.at2(i, j);
      for (std::int64_t j = 0; j < k; ++j)
        pg.at2(i, j) += s * node.grad.at2(i, j) - s * s * s * xval.at2(i, j) * dot;
    }
  });
}

Var rowdot(const Var& a, const Var& b) {
  check_same_shape(a, b, "rowdot");
  if (a->value.rank() != 2) throw std::invalid_argument("rowdot: expects (N,K)");
  const std::int64_t n = a->value.dim(0), k = a->value.dim(1);
  Tensor out({n});
  for (std::int64_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::int64_t j = 0; j < k; ++j) s += a->value.at2(i, j) * b->value.at2(i, j);
    out[i] = s;
  }
  return make_op(std::move(out), {a, b}, [n, k](Node& node) {
    const Tensor& av = node.parents[0]->value;
    const Tensor& bv = node.parents[1]->value;
    if (node.parents[0]->requires_grad) {
      Tensor& pg = node.parents[0]->g();
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < k; ++j) pg.at2(i, j) += node.grad[i] * bv.at2(i, j);
    }
    if (node.parents[1]->requires_grad) {
      Tensor& pg = node.parents[1]->g();
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < k; ++j) pg.at2(i, j) += node.grad[i] * av.at2(i, j);
    }
  });
}

// ------------------------------------------------------------------- losses

Var smooth_l1(const Var& a, const Var& b, double beta) {
  check_same_shape(a, b, "smooth_l1");
  const std::int64_t n = a->value.size();
  double s = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = a->value[i] - b->value[i];
    const double ad = std::abs(d);
    s += ad < beta ? 0.5 * d * d / beta : ad - 0.5 * beta;
  }
  const double inv = 1.0 / static_cast<double>(n);
  return make_op(Tensor::scalar(s * inv), {a, b}, [beta, inv](Node& node) {
    const Tensor& av = node.parents[0]->value;
    const Tensor& bv = node.parents[1]->value;
    const double g = node.grad[0] * inv;
    for (std::int64_t i = 0; i < av.size(); ++i) {
      const double d = av[i] - bv[i];
      const double slope = std::abs(d) < beta ? d / beta : (d > 0 ? 1.0 : -1.0);
      if (node.parents[0]->requires_grad) node.parents[0]->g()[i] += g * slope;
      if (node.parents[1]->requires_grad) node.parents[1]->g()[i] -= g * slope;
    }
  });
}

Var mse(const Var& a, const Var& b) {
  check_same_shape(a, b, "mse");
  const std::int64_t n = a->value.size();
  double s = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = a->value[i] - b->value[i];
    s += d * d;
  }
  const double inv = 1.0 / static_cast<double>(n);
  return make_op(Tensor::scalar(s * inv), {a, b}, [inv](Node& node) {
    const Tensor& av = node.parents[0]->value;
    const Tensor& bv = node.parents[1]->value;
    const double g = node.grad[0] * inv;
    for (std::int64_t i = 0; i < av.size(); ++i) {
      const double d = av[i] - bv[i];
      if (node.parents[0]->requires_grad) node.parents[0]->g()[i] += g * 2.0 * d;
      if (node.parents[1]->requires_grad) node.parents[1]->g()[i] -= g * 2.0 * d;
    }
  });
}

Var bce_with_logits(const Var& logits, const Var& target) {
  check_same_shape(logits, target, "bce_with_logits");
  const std::int64_t n = logits->value.size();
  double s = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double z = logits->value[i];
    const double y = target->value[i];
    s += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  const double inv = 1.0 / static_cast<double>(n);
  return make_op(Tensor::scalar(s * inv), {logits, target}, [inv](Node& node) {
    const Tensor& zv = node.parents[0]->value;
    const Tensor& yv = node.parents[1]->value;
    const double g = node.grad[0] * inv;
    for (std::int64_t i = 0; i < zv.size(); ++i) {
      const double p = 1.0 / (1.0 + std::exp(-zv[i]));
      if (node.parents[0]->requires_grad) node.parents[0]->g()[i] += g * (p - yv[i]);
      if (node.parents[1]->requires_grad) node.parents[1]->g()[i] += g * (-zv[i]);
    }
  });
}

}  // namespace ssda2
