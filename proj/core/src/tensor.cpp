#include "beatnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace beatnet::ad {

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size())
    throw std::invalid_argument("tensor: data size " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  n_ = std::make_shared<Node>();
  n_->shape = std::move(shape);
  n_->value = std::move(data);
  n_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> d(shape_numel(shape), 0.0);
  return Tensor(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  std::vector<double> d(shape_numel(shape), v);
  return Tensor(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<double>{v}, requires_grad);
}

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("item(): tensor has " + std::to_string(size()) + " elements");
  return n_->value[0];
}

namespace {

Tensor make_node(Shape shape, std::vector<double> value,
                 std::vector<std::shared_ptr<Node>> parents) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  for (const auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->parents = std::move(parents);
  return Tensor(std::move(n));
}

// b broadcasts over a when b.shape is a trailing suffix of a.shape.
void check_broadcast(const Tensor& a, const Tensor& b, const char* op) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.size() > sa.size() ||
      !std::equal(sb.rbegin(), sb.rend(), sa.rbegin()))
    throw std::invalid_argument(std::string(op) + ": shapes " + shape_str(sa) +
                                " and " + shape_str(sb) + " are incompatible");
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_broadcast(a, b, "add");
  const std::size_t nb = b.size();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i % nb];
  Tensor r = make_node(a.shape(), std::move(out), {a.node(), b.node()});
  if (r.requires_grad()) {
    Node* rn = r.node().get();
    Node* an = a.node().get();
    Node* bn = b.node().get();
    r.node()->backprop = [rn, an, bn, nb] {
      if (an->requires_grad)
        for (std::size_t i = 0; i < rn->grad.size(); ++i) an->grad[i] += rn->grad[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < rn->grad.size(); ++i) bn->grad[i % nb] += rn->grad[i];
    };
  }
  return r;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_broadcast(a, b, "sub");
  const std::size_t nb = b.size();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i % nb];
  Tensor r = make_node(a.shape(), std::move(out), {a.node(), b.node()});
  if (r.requires_grad()) {
    Node* rn = r.node().get();
    Node* an = a.node().get();
    Node* bn = b.node().get();
    r.node()->backprop = [rn, an, bn, nb] {
      if (an->requires_grad)
        for (std::size_t i = 0; i < rn->grad.size(); ++i) an->grad[i] += rn->grad[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < rn->grad.size(); ++i) bn->grad[i % nb] -= rn->grad[i];
    };
  }
  return r;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_broadcast(a, b, "mul");
  const std::size_t nb = b.size();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i % nb];
  Tensor r = make_node(a.shape(), std::move(out), {a.node(), b.node()});
  if (r.requires_grad()) {
    Node* rn = r.node().get();
    Node* an = a.node().get();
    Node* bn = b.node().get();
    r.node()->backprop = [rn, an, bn, nb] {
      if (an->requires_grad)
        for (std::size_t i = 0; i < rn->grad.size(); ++i)
          an->grad[i] += rn->grad[i] * bn->value[i % nb];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < rn->grad.size(); ++i)
          bn->grad[i % nb] += rn->grad[i] * an->value[i];
    };
  }
  return r;
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
  Tensor r = make_node(a.shape(), std::move(out), {a.node()});
  if (r.requires_grad()) {
    Node* rn = r.node().get();
    Node* an = a.node().get();
    r.node()->backprop = [rn, an, c] {
      for (std::size_t i = 0; i < rn->grad.size(); ++i) an->grad[i] += rn->grad[i] * c;
    };
  }
  return r;
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > 0 ? a.data()[i] : 0.0;
  Tensor r = make_node(a.shape(), std::move(out), {a.node()});
  if (r.requires_grad()) {
    Node* rn = r.node().get();
    Node* an = a.node().get();
    r.node()->backprop = [rn, an] {
      for (std::size_t i = 0; i < rn->grad.size(); ++i)
        if (an->value[i] > 0) an->grad[i] += rn->grad[i];
    };
  }
  return r;
}

Tensor gelu(const Tensor& a) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double x = a.data()[i];
    out[i] = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
  }
  Tensor r = make_node(a.shape(), std::move(out), {a.node()});
  if (r.requires_grad()) {
    Node* rn = r.node().get();
    Node* an = a.node().get();
    r.node()->backprop = [rn, an] {
      for (std::size_t i = 0; i < rn->grad.size(); ++i) {
        double x = an->value[i];
        double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
        double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
        an->grad[i] += rn->grad[i] * (cdf + x * pdf);
      }
    };
  }
  return r;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.size())
    throw std::invalid_argument("reshape: " + shape_str(a.shape()) + " to " +
                                shape_str(shape) + " changes element count");
  Tensor r = make_node(std::move(shape), a.data(), {a.node()});
  if (r.requires_grad()) {
    Node* rn = r.node().get();
    Node* an = a.node().get();
    r.node()->backprop = [rn, an] {
      for (std::size_t i = 0; i < rn->grad.size(); ++i) an->grad[i] += rn->grad[i];
    };
  }
  return r;
}

Tensor transpose(const Tensor& a) {
  if (a.ndim() != 2) throw std::invalid_argument("transpose: expected 2-D, got " + shape_str(a.shape()));
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
  Tensor r = make_node({n, m}, std::move(out), {a.node()});
  if (r.requires_grad()) {
    Node* rn = r.node().get();
    Node* an = a.node().get();
    r.node()->backprop = [rn, an, m, n] {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += rn->grad[j * m + i];
    };
  }
  return r;
}

Tensor transpose_last2(const Tensor& a) {
  if (a.ndim() < 2) throw std::invalid_argument("transpose_last2: need >=2 dims, got " + shape_str(a.shape()));
  Shape s = a.shape();
  const std::size_t n = s[s.size() - 1], m = s[s.size() - 2];
  const std::size_t batch = a.size() / (m * n);
  std::swap(s[s.size() - 1], s[s.size() - 2]);
  std::vector<double> out(a.size());
  for (std::size_t b = 0; b < batch; ++b) {
    const double* src = a.data().data() + b * m * n;
    double* dst = out.data() + b * m * n;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
  }
  Tensor r = make_node(std::move(s), std::move(out), {a.node()});
  if (r.requires_grad()) {
    Node* rn = r.node().get();
    Node* an = a.node().get();
    r.node()->backprop = [rn, an, m, n, batch] {
      for (std::size_t b = 0; b < batch; ++b) {
        const double* g = rn->grad.data() + b * m * n;
        double* dst = an->grad.data() + b * m * n;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) dst[i * n + j] += g[j * m + i];
      }
    };
  }
  return r;
}

Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
  if (a.ndim() != 2) throw std::invalid_argument("slice_cols: expected 2-D, got " + shape_str(a.shape()));
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (c0 >= c1 || c1 > n) throw std::invalid_argument("slice_cols: bad range");
  const std::size_t w = c1 - c0;
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = a.data()[i * n + c0 + j];
  Tensor r = make_node({m, w}, std::move(out), {a.node()});
  if (r.requires_grad()) {
    Node* rn = r.node().get();
    Node* an = a.node().get();
    r.node()->backprop = [rn, an, m, n, w, c0] {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) an->grad[i * n + c0 + j] += rn->grad[i * w + j];
    };
  }
  return r;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const std::size_t m = parts[0].shape()[0];
  std::size_t n = 0;
  std::vector<std::shared_ptr<Node>> parents;
  for (const auto& p : parts) {
    if (p.ndim() != 2 || p.shape()[0] != m)
      throw std::invalid_argument("concat_cols: row mismatch " + shape_str(p.shape()));
    n += p.shape()[1];
    parents.push_back(p.node());
  }
  std::vector<double> out(m * n);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.shape()[1];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * n + off + j] = p.data()[i * w + j];
    off += w;
  }
  Tensor r = make_node({m, n}, std::move(out), parents);
  if (r.requires_grad()) {
    Node* rn = r.node().get();
    std::vector<Node*> ps;
    std::vector<std::size_t> ws;
    for (const auto& p : parts) {
      ps.push_back(p.node().get());
      ws.push_back(p.shape()[1]);
    }
    r.node()->backprop = [rn, ps, ws, m, n] {
      std::size_t off = 0;
      for (std::size_t k = 0; k < ps.size(); ++k) {
        if (ps[k]->requires_grad)
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < ws[k]; ++j)
              ps[k]->grad[i * ws[k] + j] += rn->grad[i * n + off + j];
        off += ws[k];
      }
    };
  }
  return r;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const std::size_t n = parts[0].shape()[1];
  std::size_t m = 0;
  std::vector<std::shared_ptr<Node>> parents;
  for (const auto& p : parts) {
    if (p.ndim() != 2 || p.shape()[1] != n)
      throw std::invalid_argument("concat_rows: column mismatch " + shape_str(p.shape()));
    m += p.shape()[0];
    parents.push_back(p.node());
  }
  std::vector<double> out;
  out.reserve(m * n);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  Tensor r = make_node({m, n}, std::move(out), parents);
  if (r.requires_grad()) {
    Node* rn = r.node().get();
    std::vector<Node*> ps;
    std::vector<std::size_t> sizes;
    for (const auto& p : parts) {
      ps.push_back(p.node().get());
      sizes.push_back(p.size());
    }
    r.node()->backprop = [rn, ps, sizes] {
      std::size_t off = 0;
      for (std::size_t k = 0; k < ps.size(); ++k) {
        if (ps[k]->requires_grad)
          for (std::size_t i = 0; i < sizes[k]; ++i) ps[k]->grad[i] += rn->grad[off + i];
        off += sizes[k];
      }
    };
  }
  return r;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0])
    throw std::invalid_argument("matmul: shapes " + shape_str(a.shape()) + " and " +
                                shape_str(b.shape()) + " are incompatible");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a.data()[i * k + p];
      const double* brow = b.data().data() + p * n;
      double* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  Tensor r = make_node({m, n}, std::move(out), {a.node(), b.node()});
  if (r.requires_grad()) {
    Node* rn = r.node().get();
    Node* an = a.node().get();
    Node* bn = b.node().get();
    r.node()->backprop = [rn, an, bn, m, k, n] {
      if (an->requires_grad) {
        // dA = dY * B^T
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double s = 0;
            const double* grow = rn->grad.data() + i * n;
            const double* brow = bn->value.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
            an->grad[i * k + p] += s;
          }
      }
      if (bn->requires_grad) {
        // dB = A^T * dY
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double av = an->value[i * k + p];
            const double* grow = rn->grad.data() + i * n;
            double* brow = bn->grad.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) brow[j] += av * grow[j];
          }
      }
    };
  }
  return r;
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias,
              std::size_t stride, std::size_t pad) {
  if (x.ndim() != 3 || w.ndim() != 3 || x.shape()[1] != w.shape()[1])
    throw std::invalid_argument("conv1d: shapes " + shape_str(x.shape()) + " and " +
                                shape_str(w.shape()) + " are incompatible");
  const std::size_t N = x.shape()[0], Cin = x.shape()[1], T = x.shape()[2];
  const std::size_t Cout = w.shape()[0], K = w.shape()[2];
  if (bias.size() != Cout)
    throw std::invalid_argument("conv1d: bias shape " + shape_str(bias.shape()) +
                                " does not match Cout " + std::to_string(Cout));
  if (T + 2 * pad < K) throw std::invalid_argument("conv1d: kernel longer than padded input");
  const std::size_t To = (T + 2 * pad - K) / stride + 1;
  std::vector<double> out(N * Cout * To);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t co = 0; co < Cout; ++co) {
      double* orow = out.data() + (n * Cout + co) * To;
      for (std::size_t t = 0; t < To; ++t) orow[t] = bias.data()[co];
      for (std::size_t ci = 0; ci < Cin; ++ci) {
        const double* xrow = x.data().data() + (n * Cin + ci) * T;
        const double* wrow = w.data().data() + (co * Cin + ci) * K;
        for (std::size_t t = 0; t < To; ++t) {
          const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(t * stride) - static_cast<std::ptrdiff_t>(pad);
          double s = 0;
          for (std::size_t kk = 0; kk < K; ++kk) {
            const std::ptrdiff_t src = base + static_cast<std::ptrdiff_t>(kk);
            if (src >= 0 && src < static_cast<std::ptrdiff_t>(T)) s += wrow[kk] * xrow[src];
          }
          orow[t] += s;
        }
      }
    }
  Tensor r = make_node({N, Cout, To}, std::move(out), {x.node(), w.node(), bias.node()});
  if (r.requires_grad()) {
    Node* rn = r.node().get();
    Node* xn = x.node().get();
    Node* wn = w.node().get();
    Node* bn = bias.node().get();
    r.node()->backprop = [rn, xn, wn, bn, N, Cin, T, Cout, K, To, stride, pad] {
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t co = 0; co < Cout; ++co) {
          const double* grow = rn->grad.data() + (n * Cout + co) * To;
          if (bn->requires_grad) {
            double s = 0;
            for (std::size_t t = 0; t < To; ++t) s += grow[t];
            bn->grad[co] += s;
          }
          for (std::size_t ci = 0; ci < Cin; ++ci) {
            const double* xrow = xn->value.data() + (n * Cin + ci) * T;
            const double* wrow = wn->value.data() + (co * Cin + ci) * K;
            double* gx = xn->requires_grad ? xn->grad.data() + (n * Cin + ci) * T : nullptr;
            double* gw = wn->requires_grad ? wn->grad.data() + (co * Cin + ci) * K : nullptr;
            for (std::size_t t = 0; t < To; ++t) {
              const double g = grow[t];
              if (g == 0.0) continue;
              const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(t * stride) - static_cast<std::ptrdiff_t>(pad);
              for (std::size_t kk = 0; kk < K; ++kk) {
                const std::ptrdiff_t src = base + static_cast<std::ptrdiff_t>(kk);
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
                if (gx) gx[src] += g * wrow[kk];
                if (gw) gw[kk] += g * xrow[src];
              }
            }
          }
        }
    };
  }
  return r;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.ndim() < 1) throw std::invalid_argument("layer_norm: scalar input");
  const std::size_t D = x.shape().back();
  if (gamma.size() != D || beta.size() != D)
    throw std::invalid_argument("layer_norm: gamma/beta shape " + shape_str(gamma.shape()) +
                                " does not match feature dim " + std::to_string(D));
  const std::size_t R = x.size() / D;
  std::vector<double> out(x.size());
  std::vector<double> inv_std(R), mean(R);
  for (std::size_t r = 0; r < R; ++r) {
    const double* row = x.data().data() + r * D;
    double mu = 0;
    for (std::size_t d = 0; d < D; ++d) mu += row[d];
    mu /= D;
    double var = 0;
    for (std::size_t d = 0; d < D; ++d) var += (row[d] - mu) * (row[d] - mu);
    var /= D;
    const double is = 1.0 / std::sqrt(var + eps);
    mean[r] = mu;
    inv_std[r] = is;
    double* orow = out.data() + r * D;
    for (std::size_t d = 0; d < D; ++d)
      orow[d] = (row[d] - mu) * is * gamma.data()[d] + beta.data()[d];
  }
  Tensor rt = make_node(x.shape(), std::move(out), {x.node(), gamma.node(), beta.node()});
  if (rt.requires_grad()) {
    Node* rn = rt.node().get();
    Node* xn = x.node().get();
    Node* gn = gamma.node().get();
    Node* bn = beta.node().get();
    rt.node()->backprop = [rn, xn, gn, bn, R, D, mean, inv_std] {
      for (std::size_t r = 0; r < R; ++r) {
        const double* row = xn->value.data() + r * D;
        const double* grow = rn->grad.data() + r * D;
        const double mu = mean[r], is = inv_std[r];
        double sum_dxhat = 0, sum_dxhat_xhat = 0;
        for (std::size_t d = 0; d < D; ++d) {
          const double xhat = (row[d] - mu) * is;
          const double dxhat = grow[d] * gn->value[d];
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * xhat;
          if (gn->requires_grad) gn->grad[d] += grow[d] * xhat;
          if (bn->requires_grad) bn->grad[d] += grow[d];
        }
        if (xn->requires_grad) {
          double* gx = xn->grad.data() + r * D;
          for (std::size_t d = 0; d < D; ++d) {
            const double xhat = (row[d] - mu) * is;
            const double dxhat = grow[d] * gn->value[d];
            gx[d] += is * (dxhat - sum_dxhat / D - xhat * sum_dxhat_xhat / D);
          }
        }
      }
    };
  }
  return rt;
}

namespace {

Tensor softmax_impl(const Tensor& x, const std::vector<std::uint8_t>* key_valid) {
  if (x.ndim() < 1) throw std::invalid_argument("softmax: scalar input");
  const std::size_t D = x.shape().back();
  if (key_valid && key_valid->size() != D)
    throw std::invalid_argument("masked_softmax: mask length " + std::to_string(key_valid->size()) +
                                " does not match row width " + std::to_string(D));
  const std::size_t R = x.size() / D;
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t r = 0; r < R; ++r) {
    const double* row = x.data().data() + r * D;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t d = 0; d < D; ++d)
      if ((!key_valid || (*key_valid)[d]) && row[d] > mx) mx = row[d];
    if (mx == -std::numeric_limits<double>::infinity())
      throw std::invalid_argument("masked_softmax: row with no valid key");
    double z = 0;
    double* orow = out.data() + r * D;
    for (std::size_t d = 0; d < D; ++d) {
      if (key_valid && !(*key_valid)[d]) continue;
      orow[d] = std::exp(row[d] - mx);
      z += orow[d];
    }
    for (std::size_t d = 0; d < D; ++d) orow[d] /= z;
  }
  Tensor rt = make_node(x.shape(), std::move(out), {x.node()});
  if (rt.requires_grad()) {
    Node* rn = rt.node().get();
    Node* xn = x.node().get();
    rt.node()->backprop = [rn, xn, R, D] {
      for (std::size_t r = 0; r < R; ++r) {
        const double* y = rn->value.data() + r * D;
        const double* gy = rn->grad.data() + r * D;
        double s = 0;
        for (std::size_t d = 0; d < D; ++d) s += gy[d] * y[d];
        double* gx = xn->grad.data() + r * D;
        for (std::size_t d = 0; d < D; ++d) gx[d] += y[d] * (gy[d] - s);
      }
    };
  }
  return rt;
}

}  // namespace

Tensor softmax_rows(const Tensor& x) { return softmax_impl(x, nullptr); }

Tensor masked_softmax_rows(const Tensor& x, const std::vector<std::uint8_t>& key_valid) {
  return softmax_impl(x, &key_valid);
}

Tensor mean_last(const Tensor& x) {
  if (x.ndim() < 2) throw std::invalid_argument("mean_last: need >=2 dims");
  const std::size_t T = x.shape().back();
  const std::size_t R = x.size() / T;
  Shape s(x.shape().begin(), x.shape().end() - 1);
  std::vector<double> out(R);
  for (std::size_t r = 0; r < R; ++r) {
    const double* row = x.data().data() + r * T;
    double sum = 0;
    for (std::size_t t = 0; t < T; ++t) sum += row[t];
    out[r] = sum / T;
  }
  Tensor rt = make_node(std::move(s), std::move(out), {x.node()});
  if (rt.requires_grad()) {
    Node* rn = rt.node().get();
    Node* xn = x.node().get();
    rt.node()->backprop = [rn, xn, R, T] {
      for (std::size_t r = 0; r < R; ++r) {
        const double g = rn->grad[r] / T;
        double* gx = xn->grad.data() + r * T;
        for (std::size_t t = 0; t < T; ++t) gx[t] += g;
      }
    };
  }
  return rt;
}

Tensor masked_mean_rows(const Tensor& x, const std::vector<std::uint8_t>& valid) {
  if (x.ndim() != 2) throw std::invalid_argument("masked_mean_rows: expected 2-D, got " + shape_str(x.shape()));
  const std::size_t S = x.shape()[0], D = x.shape()[1];
  if (valid.size() != S)
    throw std::invalid_argument("masked_mean_rows: mask length mismatch");
  std::size_t count = 0;
  for (auto v : valid) count += v ? 1 : 0;
  if (count == 0) throw std::invalid_argument("masked_mean_rows: no valid rows");
  std::vector<double> out(D, 0.0);
  for (std::size_t i = 0; i < S; ++i) {
    if (!valid[i]) continue;
    const double* row = x.data().data() + i * D;
    for (std::size_t d = 0; d < D; ++d) out[d] += row[d];
  }
  for (std::size_t d = 0; d < D; ++d) out[d] /= static_cast<double>(count);
  Tensor rt = make_node({D}, std::move(out), {x.node()});
  if (rt.requires_grad()) {
    Node* rn = rt.node().get();
    Node* xn = x.node().get();
    rt.node()->backprop = [rn, xn, valid, S, D, count] {
      for (std::size_t i = 0; i < S; ++i) {
        if (!valid[i]) continue;
        double* gx = xn->grad.data() + i * D;
        for (std::size_t d = 0; d < D; ++d) gx[d] += rn->grad[d] / static_cast<double>(count);
      }
    };
  }
  return rt;
}

Tensor embedding(const Tensor& table, const std::vector<std::size_t>& idx) {
  if (table.ndim() != 2) throw std::invalid_argument("embedding: table must be 2-D");
  const std::size_t V = table.shape()[0], D = table.shape()[1];
  for (auto i : idx)
    if (i >= V)
      throw std::invalid_argument("embedding: index " + std::to_string(i) +
                                  " out of range [0," + std::to_string(V) + ")");
  std::vector<double> out(idx.size() * D);
  for (std::size_t n = 0; n < idx.size(); ++n)
    std::copy_n(table.data().data() + idx[n] * D, D, out.data() + n * D);
  Tensor rt = make_node({idx.size(), D}, std::move(out), {table.node()});
  if (rt.requires_grad()) {
    Node* rn = rt.node().get();
    Node* tn = table.node().get();
    rt.node()->backprop = [rn, tn, idx, D] {
      for (std::size_t n = 0; n < idx.size(); ++n) {
        double* g = tn->grad.data() + idx[n] * D;
        const double* src = rn->grad.data() + n * D;
        for (std::size_t d = 0; d < D; ++d) g[d] += src[d];
      }
    };
  }
  return rt;
}

Tensor sum(const Tensor& a) {
  double s = std::accumulate(a.data().begin(), a.data().end(), 0.0);
  Tensor rt = make_node({1}, {s}, {a.node()});
  if (rt.requires_grad()) {
    Node* rn = rt.node().get();
    Node* an = a.node().get();
    rt.node()->backprop = [rn, an] {
      for (auto& g : an->grad) g += rn->grad[0];
    };
  }
  return rt;
}

Tensor bce_with_logits(const Tensor& logits, const std::vector<double>& labels) {
  if (logits.size() != labels.size())
    throw std::invalid_argument("bce_with_logits: " + std::to_string(logits.size()) +
                                " logits vs " + std::to_string(labels.size()) + " labels");
  const std::size_t K = labels.size();
  double loss = 0;
  for (std::size_t k = 0; k < K; ++k) {
    const double x = logits.data()[k], y = labels[k];
    loss += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
  }
  loss /= static_cast<double>(K);
  Tensor rt = make_node({1}, {loss}, {logits.node()});
  if (rt.requires_grad()) {
    Node* rn = rt.node().get();
    Node* ln = logits.node().get();
    rt.node()->backprop = [rn, ln, labels, K] {
      for (std::size_t k = 0; k < K; ++k) {
        const double x = ln->value[k];
        const double sig = 1.0 / (1.0 + std::exp(-x));
        ln->grad[k] += rn->grad[0] * (sig - labels[k]) / static_cast<double>(K);
      }
    };
  }
  return rt;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw std::invalid_argument("backward: loss must be a scalar tensor");
  if (!loss.requires_grad())
    throw std::invalid_argument("backward: loss does not depend on any parameter");

  // Iterative post-order DFS; topo holds children after all their parents'
  // positions are fixed by reversal.
  std::vector<Node*> topo;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node* p = n->parents[i++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      topo.push_back(n);
      stack.pop_back();
    }
  }

  for (Node* n : topo) n->grad.assign(n->value.size(), 0.0);
  loss.node()->grad[0] = 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop();
}

bool all_finite(const Tensor& t) {
  for (double v : t.data())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace beatnet::ad
