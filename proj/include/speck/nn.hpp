#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "speck/error.hpp"
#include "speck/rng.hpp"
#include "speck/tensor.hpp"

namespace speck {

// A named weight with its gradient slot. Names are unique within a model and
// are the keys used by checkpoints.
template <class S>
struct Parameter {
  std::string name;
  Tensor<S> value;
  Tensor<S> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<S> val) : name(std::move(n)), value(std::move(val)) {
    grad = Tensor<S>::zeros(value.shape);
  }
  void zero_grad() { grad.fill(S(0)); }
};

template <class S>
using ParamRefs = std::vector<Parameter<S>*>;

template <class S>
void zero_grads(const ParamRefs<S>& params) {
  for (auto* p : params) p->zero_grad();
}

// ---------------------------------------------------------------------------
// Pointwise ops

template <class S>
S gelu_scalar(S x) {
  return S(0.5) * x * (S(1) + S(std::erf(static_cast<double>(x) / 1.4142135623730951)));
}

template <class S>
S gelu_grad_scalar(S x) {
  const double xd = static_cast<double>(x);
  const double cdf = 0.5 * (1.0 + std::erf(xd / 1.4142135623730951));
  const double pdf = std::exp(-0.5 * xd * xd) / 2.5066282746310002;
  return static_cast<S>(cdf + xd * pdf);
}

// Numerically stable softmax of one row.
template <class S>
std::vector<S> softmax(const std::vector<S>& logits) {
  if (logits.empty()) throw EmptyInputError("softmax: empty logits");
  for (S x : logits)
    if (!std::isfinite(static_cast<double>(x)))
      throw NumericError("softmax: non-finite input");
  S m = logits[0];
  for (S x : logits) m = std::max(m, x);
  double denom = 0.0;
  std::vector<S> p(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) denom += std::exp(static_cast<double>(logits[i] - m));
  for (size_t i = 0; i < logits.size(); ++i)
    p[i] = static_cast<S>(std::exp(static_cast<double>(logits[i] - m)) / denom);
  return p;
}

template <class S>
void softmax_rows_inplace(Tensor<S>& x) {
  const int64_t r = x.rows(), c = x.cols();
  for (int64_t i = 0; i < r; ++i) {
    S m = x.at(i, 0);
    for (int64_t j = 1; j < c; ++j) m = std::max(m, x.at(i, j));
    double denom = 0.0;
    for (int64_t j = 0; j < c; ++j) denom += std::exp(static_cast<double>(x.at(i, j) - m));
    for (int64_t j = 0; j < c; ++j)
      x.at(i, j) = static_cast<S>(std::exp(static_cast<double>(x.at(i, j) - m)) / denom);
  }
}

// Gradient through row-wise softmax: dz = p * (dp - sum(p * dp)).
template <class S>
Tensor<S> softmax_rows_backward(const Tensor<S>& probs, const Tensor<S>& dprobs) {
  Tensor<S> dz(probs.shape);
  const int64_t r = probs.rows(), c = probs.cols();
  for (int64_t i = 0; i < r; ++i) {
    double dot = 0.0;
    for (int64_t j = 0; j < c; ++j)
      dot += static_cast<double>(probs.at(i, j)) * static_cast<double>(dprobs.at(i, j));
    for (int64_t j = 0; j < c; ++j)
      dz.at(i, j) = static_cast<S>(static_cast<double>(probs.at(i, j)) *
                                   (static_cast<double>(dprobs.at(i, j)) - dot));
  }
  return dz;
}

// -log softmax(logits)[target]; grad (if requested) is p - one_hot(target).
template <class S>
S cross_entropy(const std::vector<S>& logits, int target, std::vector<S>* grad = nullptr) {
  const int c = static_cast<int>(logits.size());
  if (target < 0 || target >= c)
    throw OutOfRangeError("cross_entropy: target " + std::to_string(target) +
                          " out of range [0, " + std::to_string(c) + ")");
  S m = logits[0];
  for (S x : logits) m = std::max(m, x);
  double denom = 0.0;
  for (S x : logits) denom += std::exp(static_cast<double>(x - m));
  const double log_denom = std::log(denom);
  const double loss = log_denom - static_cast<double>(logits[static_cast<size_t>(target)] - m);
  if (grad) {
    grad->resize(logits.size());
    for (int j = 0; j < c; ++j) {
      double p = std::exp(static_cast<double>(logits[static_cast<size_t>(j)] - m)) / denom;
      (*grad)[static_cast<size_t>(j)] = static_cast<S>(p - (j == target ? 1.0 : 0.0));
    }
  }
  return static_cast<S>(loss);
}

// Mean cross-entropy over selected rows of a logit matrix. dlogits rows not
// selected stay exactly zero.
template <class S>
S cross_entropy_rows(const Tensor<S>& logits, const std::vector<int>& targets,
                     const std::vector<int64_t>& rows, Tensor<S>* dlogits = nullptr) {
  if (rows.empty()) throw EmptyInputError("cross_entropy_rows: no rows selected");
  const int64_t c = logits.cols();
  if (dlogits) *dlogits = Tensor<S>::zeros(logits.shape);
  double total = 0.0;
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  for (int64_t r : rows) {
    const int target = targets[static_cast<size_t>(r)];
    if (target < 0 || target >= c)
      throw OutOfRangeError("cross_entropy_rows: target out of range");
    S m = logits.at(r, 0);
    for (int64_t j = 1; j < c; ++j) m = std::max(m, logits.at(r, j));
    double denom = 0.0;
    for (int64_t j = 0; j < c; ++j) denom += std::exp(static_cast<double>(logits.at(r, j) - m));
    total += std::log(denom) - static_cast<double>(logits.at(r, target) - m);
    if (dlogits) {
      for (int64_t j = 0; j < c; ++j) {
        double p = std::exp(static_cast<double>(logits.at(r, j) - m)) / denom;
        dlogits->at(r, j) = static_cast<S>((p - (j == target ? 1.0 : 0.0)) * inv_n);
      }
    }
  }
  return static_cast<S>(total * inv_n);
}

// ---------------------------------------------------------------------------
// Layers. Each forward fills a cache consumed by the matching backward;
// backward returns d(input) and accumulates parameter gradients.

template <class S>
struct Linear {
  Parameter<S> w;  // out x in
  Parameter<S> b;  // out

  Linear() = default;
  Linear(const std::string& prefix, int64_t in, int64_t out, Rng& rng) {
    Tensor<S> wt({out, in});
    xavier_uniform(wt, in, out, rng);
    w = Parameter<S>(prefix + ".w", std::move(wt));
    b = Parameter<S>(prefix + ".b", Tensor<S>::zeros({out}));
  }

  int64_t in_dim() const { return w.value.cols(); }
  int64_t out_dim() const { return w.value.rows(); }

  struct Cache {
    Tensor<S> x;
  };

  Tensor<S> forward(const Tensor<S>& x, Cache& cache) const {
    if (x.cols() != in_dim()) throw ShapeError("linear: input width mismatch");
    cache.x = x;
    Tensor<S> y = matmul_nt(x, w.value);
    add_row_broadcast(y, b.value);
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy, const Cache& cache) {
    axpy(b.grad, S(1), column_sum(dy));
    Tensor<S> dw = matmul_tn(dy, cache.x);
    axpy(w.grad, S(1), dw);
    return matmul(dy, w.value);
  }

  void collect(ParamRefs<S>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

template <class S>
struct LayerNorm {
  Parameter<S> gamma;
  Parameter<S> beta;
  static constexpr double kEps = 1e-5;

  LayerNorm() = default;
  LayerNorm(const std::string& prefix, int64_t dim) {
    gamma = Parameter<S>(prefix + ".gamma", Tensor<S>::full({dim}, S(1)));
    beta = Parameter<S>(prefix + ".beta", Tensor<S>::zeros({dim}));
  }

  struct Cache {
    Tensor<S> xhat;       // normalized input
    std::vector<S> inv_std;  // per row
  };

  Tensor<S> forward(const Tensor<S>& x, Cache& cache) const {
    const int64_t r = x.rows(), c = x.cols();
    if (c != gamma.value.size()) throw ShapeError("layernorm: width mismatch");
    Tensor<S> y(x.shape);
    cache.xhat = Tensor<S>(x.shape);
    cache.inv_std.resize(static_cast<size_t>(r));
    for (int64_t i = 0; i < r; ++i) {
      double mean = 0.0;
      for (int64_t j = 0; j < c; ++j) mean += static_cast<double>(x.at(i, j));
      mean /= static_cast<double>(c);
      double var = 0.0;
      for (int64_t j = 0; j < c; ++j) {
        double dxi = static_cast<double>(x.at(i, j)) - mean;
        var += dxi * dxi;
      }
      var /= static_cast<double>(c);
      const double inv_std = 1.0 / std::sqrt(var + kEps);
      cache.inv_std[static_cast<size_t>(i)] = static_cast<S>(inv_std);
      for (int64_t j = 0; j < c; ++j) {
        double xh = (static_cast<double>(x.at(i, j)) - mean) * inv_std;
        cache.xhat.at(i, j) = static_cast<S>(xh);
        y.at(i, j) = static_cast<S>(xh * static_cast<double>(gamma.value[j]) +
                                    static_cast<double>(beta.value[j]));
      }
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy, const Cache& cache) {
    const int64_t r = dy.rows(), c = dy.cols();
    Tensor<S> dx(dy.shape);
    for (int64_t i = 0; i < r; ++i) {
      double mean_dyh = 0.0, mean_dyh_xhat = 0.0;
      for (int64_t j = 0; j < c; ++j) {
        const double dyh = static_cast<double>(dy.at(i, j)) * static_cast<double>(gamma.value[j]);
        mean_dyh += dyh;
        mean_dyh_xhat += dyh * static_cast<double>(cache.xhat.at(i, j));
      }
      mean_dyh /= static_cast<double>(c);
      mean_dyh_xhat /= static_cast<double>(c);
      const double inv_std = static_cast<double>(cache.inv_std[static_cast<size_t>(i)]);
      for (int64_t j = 0; j < c; ++j) {
        const double dyh = static_cast<double>(dy.at(i, j)) * static_cast<double>(gamma.value[j]);
        const double xh = static_cast<double>(cache.xhat.at(i, j));
        dx.at(i, j) = static_cast<S>((dyh - mean_dyh - xh * mean_dyh_xhat) * inv_std);
        gamma.grad[j] += static_cast<S>(static_cast<double>(dy.at(i, j)) * xh);
        beta.grad[j] += dy.at(i, j);
      }
    }
    return dx;
  }

  void collect(ParamRefs<S>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

// Scaled dot-product multi-head self-attention over one sequence, no mask.
template <class S>
struct MultiHeadAttention {
  Linear<S> wq, wk, wv, wo;
  int heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& prefix, int64_t dim, int n_heads, Rng& rng)
      : wq(prefix + ".wq", dim, dim, rng),
        wk(prefix + ".wk", dim, dim, rng),
        wv(prefix + ".wv", dim, dim, rng),
        wo(prefix + ".wo", dim, dim, rng),
        heads(n_heads) {
    if (dim % n_heads != 0)
      throw ShapeError("attention: model dim must be divisible by head count");
  }

  struct Cache {
    typename Linear<S>::Cache q_c, k_c, v_c, o_c;
    Tensor<S> q, k, v;
    std::vector<Tensor<S>> attn;  // per head, T x T
    Tensor<S> concat;             // T x D
  };

  // Strided view of one head's slice inside a T x D matrix.
  using HeadView =
      Eigen::Map<EigenRowMat<S>, Eigen::Unaligned, Eigen::OuterStride<>>;
  using ConstHeadView =
      Eigen::Map<const EigenRowMat<S>, Eigen::Unaligned, Eigen::OuterStride<>>;

  static ConstHeadView head_view(const Tensor<S>& m, int64_t off, int64_t hd) {
    return {m.v.data() + off, m.rows(), hd, Eigen::OuterStride<>(m.cols())};
  }
  static HeadView head_view(Tensor<S>& m, int64_t off, int64_t hd) {
    return {m.v.data() + off, m.rows(), hd, Eigen::OuterStride<>(m.cols())};
  }

  Tensor<S> forward(const Tensor<S>& x, Cache& cache) const {
    const int64_t t = x.rows(), dim = x.cols();
    const int64_t hd = dim / heads;
    const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(hd)));

    cache.q = wq.forward(x, cache.q_c);
    cache.k = wk.forward(x, cache.k_c);
    cache.v = wv.forward(x, cache.v_c);
    cache.attn.assign(static_cast<size_t>(heads), Tensor<S>());
    cache.concat = Tensor<S>({t, dim});

    for (int h = 0; h < heads; ++h) {
      const int64_t off = h * hd;
      auto q_h = head_view(cache.q, off, hd);
      auto k_h = head_view(cache.k, off, hd);
      auto v_h = head_view(cache.v, off, hd);

      Tensor<S> scores({t, t});
      mat_view(scores).noalias() = (q_h * k_h.transpose()) * scale;
      softmax_rows_inplace(scores);
      head_view(cache.concat, off, hd).noalias() = mat_view(scores) * v_h;
      cache.attn[static_cast<size_t>(h)] = std::move(scores);
    }
    return wo.forward(cache.concat, cache.o_c);
  }

  Tensor<S> backward(const Tensor<S>& dy, const Cache& cache) {
    const int64_t t = dy.rows(), dim = wq.in_dim();
    const int64_t hd = dim / heads;
    const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(hd)));

    Tensor<S> dconcat = wo.backward(dy, cache.o_c);
    Tensor<S> dq = Tensor<S>::zeros({t, dim});
    Tensor<S> dk = Tensor<S>::zeros({t, dim});
    Tensor<S> dv = Tensor<S>::zeros({t, dim});

    for (int h = 0; h < heads; ++h) {
      const int64_t off = h * hd;
      const Tensor<S>& attn = cache.attn[static_cast<size_t>(h)];
      auto dc_h = head_view(dconcat, off, hd);
      auto v_h = head_view(cache.v, off, hd);
      auto q_h = head_view(cache.q, off, hd);
      auto k_h = head_view(cache.k, off, hd);

      Tensor<S> dattn({t, t});
      mat_view(dattn).noalias() = dc_h * v_h.transpose();
      head_view(dv, off, hd).noalias() = mat_view(attn).transpose() * dc_h;

      Tensor<S> dscores = softmax_rows_backward(attn, dattn);
      head_view(dq, off, hd).noalias() = (mat_view(dscores) * k_h) * scale;
      head_view(dk, off, hd).noalias() = (mat_view(dscores).transpose() * q_h) * scale;
    }

    Tensor<S> dx = wq.backward(dq, cache.q_c);
    axpy(dx, S(1), wk.backward(dk, cache.k_c));
    axpy(dx, S(1), wv.backward(dv, cache.v_c));
    return dx;
  }

  void collect(ParamRefs<S>& out) {
    wq.collect(out);
    wk.collect(out);
    wv.collect(out);
    wo.collect(out);
  }
};

// Pre-norm transformer encoder block:
//   h = x + MHSA(LN1(x));  y = h + W2 gelu(W1 LN2(h)).
template <class S>
struct TransformerBlock {
  LayerNorm<S> ln1, ln2;
  MultiHeadAttention<S> attn;
  Linear<S> ff1, ff2;

  TransformerBlock() = default;
  TransformerBlock(const std::string& prefix, int64_t dim, int heads, int64_t ffn_dim,
                   Rng& rng)
      : ln1(prefix + ".ln1", dim),
        ln2(prefix + ".ln2", dim),
        attn(prefix + ".attn", dim, heads, rng),
        ff1(prefix + ".ff1", dim, ffn_dim, rng),
        ff2(prefix + ".ff2", ffn_dim, dim, rng) {}

  struct Cache {
    typename LayerNorm<S>::Cache ln1_c, ln2_c;
    typename MultiHeadAttention<S>::Cache attn_c;
    typename Linear<S>::Cache ff1_c, ff2_c;
    Tensor<S> ff_pre;  // activation input
  };

  Tensor<S> forward(const Tensor<S>& x, Cache& cache) const {
    Tensor<S> h = attn.forward(ln1.forward(x, cache.ln1_c), cache.attn_c);
    axpy(h, S(1), x);

    Tensor<S> f = ff1.forward(ln2.forward(h, cache.ln2_c), cache.ff1_c);
    cache.ff_pre = f;
    for (auto& val : f.v) val = gelu_scalar(val);
    Tensor<S> y = ff2.forward(f, cache.ff2_c);
    axpy(y, S(1), h);
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy, const Cache& cache) {
    Tensor<S> dg = ff2.backward(dy, cache.ff2_c);
    for (int64_t i = 0; i < dg.size(); ++i) dg[i] *= gelu_grad_scalar(cache.ff_pre[i]);
    Tensor<S> dh = ln2.backward(ff1.backward(dg, cache.ff1_c), cache.ln2_c);
    axpy(dh, S(1), dy);

    Tensor<S> dx = ln1.backward(attn.backward(dh, cache.attn_c), cache.ln1_c);
    axpy(dx, S(1), dh);
    return dx;
  }

  void collect(ParamRefs<S>& out) {
    ln1.collect(out);
    attn.collect(out);
    ln2.collect(out);
    ff1.collect(out);
    ff2.collect(out);
  }
};

// Sinusoidal position table, T x D.
template <class S>
Tensor<S> sinusoidal_positions(int64_t t_len, int64_t dim) {
  Tensor<S> pe({t_len, dim});
  for (int64_t t = 0; t < t_len; ++t)
    for (int64_t i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i / 2) /
                                                 static_cast<double>(dim));
      const double angle = static_cast<double>(t) * freq;
      pe.at(t, i) = static_cast<S>((i % 2 == 0) ? std::sin(angle) : std::cos(angle));
    }
  return pe;
}

}  // namespace speck
