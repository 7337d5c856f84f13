#pragma once

// Reverse-mode automatic differentiation over dense tensors, plus the model
// families, losses, and optimizers the experiments need. Everything is
// templated on the scalar type: training runs in float, verification code can
// instantiate the identical graph in double.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cuelab/util.hpp"

namespace cuelab::nn {

template <class S>
struct TensorT {
  std::vector<int> shape;
  std::vector<S> data;

  TensorT() = default;
  explicit TensorT(std::vector<int> sh) : shape(std::move(sh)) {
    data.assign(static_cast<size_t>(count(shape)), S(0));
  }

  static int64_t count(const std::vector<int>& sh) {
    int64_t n = 1;
    for (int d : sh) n *= d;
    return n;
  }
  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
};

using Tensor = TensorT<float>;

template <class T, class U>
TensorT<T> tensor_cast(const TensorT<U>& src) {
  TensorT<T> out;
  out.shape = src.shape;
  out.data.assign(src.data.begin(), src.data.end());
  return out;
}

// --- dense kernels (row-major) ----------------------------------------------

// C(M,N) += A(M,K) * B(K,N)
template <class S>
void gemm_nn(int M, int K, int N, const S* A, const S* B, S* C) {
  for (int i = 0; i < M; ++i) {
    const S* a = A + static_cast<int64_t>(i) * K;
    S* c = C + static_cast<int64_t>(i) * N;
    for (int k = 0; k < K; ++k) {
      S av = a[k];
      if (av == S(0)) continue;
      const S* b = B + static_cast<int64_t>(k) * N;
      for (int j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

// C(M,N) += A(M,K) * B(N,K)^T
template <class S>
void gemm_nt(int M, int K, int N, const S* A, const S* B, S* C) {
  for (int i = 0; i < M; ++i) {
    const S* a = A + static_cast<int64_t>(i) * K;
    S* c = C + static_cast<int64_t>(i) * N;
    for (int j = 0; j < N; ++j) {
      const S* b = B + static_cast<int64_t>(j) * K;
      S acc = S(0);
      for (int k = 0; k < K; ++k) acc += a[k] * b[k];
      c[j] += acc;
    }
  }
}

// C(M,N) += A(K,M)^T * B(K,N)
template <class S>
void gemm_tn(int M, int K, int N, const S* A, const S* B, S* C) {
  for (int k = 0; k < K; ++k) {
    const S* a = A + static_cast<int64_t>(k) * M;
    const S* b = B + static_cast<int64_t>(k) * N;
    for (int i = 0; i < M; ++i) {
      S av = a[i];
      if (av == S(0)) continue;
      S* c = C + static_cast<int64_t>(i) * N;
      for (int j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

// --- tape -------------------------------------------------------------------

enum class Op {
  Input,
  Param,
  Matmul,
  AddRow,
  Relu,
  Conv2d,
  AddChan,
  Gap,
  Add,
  Flatten,
  SoftmaxXent
};

template <class S>
class TapeT {
 public:
  int input(TensorT<S> v) {
    Node n;
    n.op = Op::Input;
    n.val = std::move(v);
    n.needs_grad = false;
    return push(std::move(n));
  }

  int param(const S* data, std::vector<int> shape) {
    Node n;
    n.op = Op::Param;
    n.val.shape = std::move(shape);
    n.val.data.assign(data, data + TensorT<S>::count(n.val.shape));
    n.needs_grad = true;
    int id = push(std::move(n));
    param_ids_.push_back(id);
    return id;
  }

  const std::vector<int>& param_nodes() const { return param_ids_; }

  // X(N,I) * W(I,O) -> (N,O)
  int matmul(int x, int w) {
    check2(x, w);
    const auto& X = nodes_[static_cast<size_t>(x)].val;
    const auto& W = nodes_[static_cast<size_t>(w)].val;
    if (X.shape.size() != 2 || W.shape.size() != 2 || X.dim(1) != W.dim(0))
      throw InternalError("matmul shape mismatch");
    Node n = binary(Op::Matmul, x, w, {X.dim(0), W.dim(1)});
    gemm_nn(X.dim(0), X.dim(1), W.dim(1), X.data.data(), W.data.data(), n.val.data.data());
    return push(std::move(n));
  }

  int add_row(int x, int b) {
    check2(x, b);
    const auto& X = nodes_[static_cast<size_t>(x)].val;
    const auto& B = nodes_[static_cast<size_t>(b)].val;
    if (X.shape.size() != 2 || B.size() != X.dim(1)) throw InternalError("add_row mismatch");
    Node n = binary(Op::AddRow, x, b, X.shape);
    const int N = X.dim(0), O = X.dim(1);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < O; ++j)
        n.val.data[static_cast<size_t>(i) * O + j] =
            X.data[static_cast<size_t>(i) * O + j] + B.data[static_cast<size_t>(j)];
    return push(std::move(n));
  }

  int relu(int x) {
    const auto& X = nodes_[static_cast<size_t>(x)].val;
    Node n = binary(Op::Relu, x, -1, X.shape);
    for (int64_t i = 0; i < X.size(); ++i)
      n.val.data[static_cast<size_t>(i)] = std::max(X.data[static_cast<size_t>(i)], S(0));
    return push(std::move(n));
  }

  // X(N,C,H,W) * W(OC,C,3,3), pad 1 -> (N,OC,H/stride,W/stride)
  int conv2d(int x, int w, int stride) {
    check2(x, w);
    const auto& X = nodes_[static_cast<size_t>(x)].val;
    const auto& W = nodes_[static_cast<size_t>(w)].val;
    if (X.shape.size() != 4 || W.shape.size() != 4 || W.dim(2) != 3 || W.dim(3) != 3 ||
        X.dim(1) != W.dim(1))
      throw InternalError("conv2d shape mismatch");
    const int N = X.dim(0), C = X.dim(1), H = X.dim(2), Wd = X.dim(3);
    const int OC = W.dim(0);
    const int OH = (H + stride - 1) / stride, OW = (Wd + stride - 1) / stride;
    Node n = binary(Op::Conv2d, x, w, {N, OC, OH, OW});
    n.aux = stride;
    std::vector<S> col(static_cast<size_t>(C) * 9 * OH * OW);
    for (int b = 0; b < N; ++b) {
      im2col(X, b, stride, OH, OW, col.data());
      gemm_nn(OC, C * 9, OH * OW, W.data.data(), col.data(),
              n.val.data.data() + static_cast<int64_t>(b) * OC * OH * OW);
    }
    return push(std::move(n));
  }

  int add_chan(int x, int b) {
    check2(x, b);
    const auto& X = nodes_[static_cast<size_t>(x)].val;
    const auto& B = nodes_[static_cast<size_t>(b)].val;
    if (X.shape.size() != 4 || B.size() != X.dim(1)) throw InternalError("add_chan mismatch");
    Node n = binary(Op::AddChan, x, b, X.shape);
    const int N = X.dim(0), C = X.dim(1);
    const int64_t plane = static_cast<int64_t>(X.dim(2)) * X.dim(3);
    for (int i = 0; i < N; ++i)
      for (int c = 0; c < C; ++c) {
        const int64_t base = (static_cast<int64_t>(i) * C + c) * plane;
        const S bv = B.data[static_cast<size_t>(c)];
        for (int64_t p = 0; p < plane; ++p)
          n.val.data[static_cast<size_t>(base + p)] = X.data[static_cast<size_t>(base + p)] + bv;
      }
    return push(std::move(n));
  }

  int global_avg_pool(int x) {
    const auto& X = nodes_[static_cast<size_t>(x)].val;
    if (X.shape.size() != 4) throw InternalError("gap expects 4-d input");
    const int N = X.dim(0), C = X.dim(1);
    const int64_t plane = static_cast<int64_t>(X.dim(2)) * X.dim(3);
    Node n = binary(Op::Gap, x, -1, {N, C});
    for (int i = 0; i < N; ++i)
      for (int c = 0; c < C; ++c) {
        const int64_t base = (static_cast<int64_t>(i) * C + c) * plane;
        S acc = S(0);
        for (int64_t p = 0; p < plane; ++p) acc += X.data[static_cast<size_t>(base + p)];
        n.val.data[static_cast<size_t>(i) * C + c] = acc / static_cast<S>(plane);
      }
    return push(std::move(n));
  }

  int add(int a, int b) {
    check2(a, b);
    const auto& A = nodes_[static_cast<size_t>(a)].val;
    const auto& B = nodes_[static_cast<size_t>(b)].val;
    if (A.shape != B.shape) throw InternalError("add shape mismatch");
    Node n = binary(Op::Add, a, b, A.shape);
    for (int64_t i = 0; i < A.size(); ++i)
      n.val.data[static_cast<size_t>(i)] =
          A.data[static_cast<size_t>(i)] + B.data[static_cast<size_t>(i)];
    return push(std::move(n));
  }

  int flatten(int x) {
    const auto& X = nodes_[static_cast<size_t>(x)].val;
    Node n = binary(Op::Flatten, x, -1,
                    {X.dim(0), static_cast<int>(X.size() / X.dim(0))});
    n.val.data = X.data;
    return push(std::move(n));
  }

  // Mean cross-entropy from raw logits; stores softmax probabilities for the
  // backward pass. Labels are 0-based.
  int softmax_xent_mean(int logits, std::vector<int> labels) {
    const auto& X = nodes_[static_cast<size_t>(logits)].val;
    if (X.shape.size() != 2 || X.dim(0) != static_cast<int>(labels.size()))
      throw InternalError("loss batch mismatch");
    const int N = X.dim(0), L = X.dim(1);
    Node n = binary(Op::SoftmaxXent, logits, -1, {1});
    n.extra = TensorT<S>({N, L});
    n.labels = std::move(labels);
    double total = 0;
    for (int i = 0; i < N; ++i) {
      const S* row = X.data.data() + static_cast<int64_t>(i) * L;
      S mx = row[0];
      for (int j = 1; j < L; ++j) mx = std::max(mx, row[j]);
      if (!std::isfinite(static_cast<double>(mx)))
        throw InternalError("non-finite logits in forward pass");
      double denom = 0;
      for (int j = 0; j < L; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
      int y = n.labels[static_cast<size_t>(i)];
      if (y < 0 || y >= L) throw UserError("label out of range");
      total += std::log(denom) - static_cast<double>(row[y] - mx);
      for (int j = 0; j < L; ++j)
        n.extra.data[static_cast<size_t>(i) * L + j] =
            static_cast<S>(std::exp(static_cast<double>(row[j] - mx)) / denom);
    }
    n.val.data[0] = static_cast<S>(total / N);
    return push(std::move(n));
  }

  const TensorT<S>& value(int id) const { return nodes_[static_cast<size_t>(id)].val; }
  const TensorT<S>& grad(int id) const { return nodes_[static_cast<size_t>(id)].grad; }

  void backward(int id) {
    auto& root = nodes_[static_cast<size_t>(id)];
    if (root.val.size() != 1) throw InternalError("backward root must be scalar");
    for (auto& n : nodes_) n.grad = TensorT<S>(n.val.shape);
    root.grad.data[0] = S(1);
    for (int i = id; i >= 0; --i) step_back(i);
  }

 private:
  struct Node {
    Op op = Op::Input;
    int a = -1, b = -1;
    int aux = 0;
    bool needs_grad = false;
    TensorT<S> val, grad, extra;
    std::vector<int> labels;
  };

  std::vector<Node> nodes_;
  std::vector<int> param_ids_;

  int push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  void check2(int a, int b) const {
    if (a < 0 || a >= static_cast<int>(nodes_.size()) ||
        (b >= static_cast<int>(nodes_.size())))
      throw InternalError("bad node id");
  }

  Node binary(Op op, int a, int b, std::vector<int> shape) {
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.val = TensorT<S>(std::move(shape));
    n.needs_grad = needs(a) || (b >= 0 && needs(b));
    return n;
  }

  bool needs(int id) const { return id >= 0 && nodes_[static_cast<size_t>(id)].needs_grad; }

  static void im2col(const TensorT<S>& X, int b, int stride, int OH, int OW, S* col) {
    const int C = X.dim(1), H = X.dim(2), W = X.dim(3);
    const S* xb = X.data.data() + static_cast<int64_t>(b) * C * H * W;
    int64_t r = 0;
    for (int c = 0; c < C; ++c)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx, ++r) {
          S* dst = col + r * OH * OW;
          for (int oy = 0; oy < OH; ++oy) {
            const int iy = oy * stride - 1 + ky;
            if (iy < 0 || iy >= H) {
              for (int ox = 0; ox < OW; ++ox) dst[oy * OW + ox] = S(0);
              continue;
            }
            const S* src = xb + (static_cast<int64_t>(c) * H + iy) * W;
            for (int ox = 0; ox < OW; ++ox) {
              const int ix = ox * stride - 1 + kx;
              dst[oy * OW + ox] = (ix < 0 || ix >= W) ? S(0) : src[ix];
            }
          }
        }
  }

  static void col2im_add(const S* col, int C, int H, int W, int stride, int OH, int OW,
                         S* dst) {
    int64_t r = 0;
    for (int c = 0; c < C; ++c)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx, ++r) {
          const S* src = col + r * OH * OW;
          for (int oy = 0; oy < OH; ++oy) {
            const int iy = oy * stride - 1 + ky;
            if (iy < 0 || iy >= H) continue;
            S* drow = dst + (static_cast<int64_t>(c) * H + iy) * W;
            for (int ox = 0; ox < OW; ++ox) {
              const int ix = ox * stride - 1 + kx;
              if (ix >= 0 && ix < W) drow[ix] += src[oy * OW + ox];
            }
          }
        }
  }

  void step_back(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.needs_grad) return;
    switch (n.op) {
      case Op::Input:
      case Op::Param:
        return;
      case Op::Matmul: {
        Node& X = nodes_[static_cast<size_t>(n.a)];
        Node& W = nodes_[static_cast<size_t>(n.b)];
        const int N = X.val.dim(0), I = X.val.dim(1), O = W.val.dim(1);
        if (X.needs_grad)
          gemm_nt(N, O, I, n.grad.data.data(), W.val.data.data(), X.grad.data.data());
        if (W.needs_grad)
          gemm_tn(I, N, O, X.val.data.data(), n.grad.data.data(), W.grad.data.data());
        return;
      }
      case Op::AddRow: {
        Node& X = nodes_[static_cast<size_t>(n.a)];
        Node& B = nodes_[static_cast<size_t>(n.b)];
        const int N = X.val.dim(0), O = X.val.dim(1);
        if (X.needs_grad)
          for (int64_t i = 0; i < n.grad.size(); ++i)
            X.grad.data[static_cast<size_t>(i)] += n.grad.data[static_cast<size_t>(i)];
        if (B.needs_grad)
          for (int j = 0; j < O; ++j) {
            S acc = S(0);
            for (int i = 0; i < N; ++i) acc += n.grad.data[static_cast<size_t>(i) * O + j];
            B.grad.data[static_cast<size_t>(j)] += acc;
          }
        return;
      }
      case Op::Relu: {
        Node& X = nodes_[static_cast<size_t>(n.a)];
        if (X.needs_grad)
          for (int64_t i = 0; i < n.grad.size(); ++i)
            if (X.val.data[static_cast<size_t>(i)] > S(0))
              X.grad.data[static_cast<size_t>(i)] += n.grad.data[static_cast<size_t>(i)];
        return;
      }
      case Op::Conv2d: {
        Node& X = nodes_[static_cast<size_t>(n.a)];
        Node& W = nodes_[static_cast<size_t>(n.b)];
        const int N = X.val.dim(0), C = X.val.dim(1), H = X.val.dim(2), Wd = X.val.dim(3);
        const int OC = W.val.dim(0), OH = n.val.dim(2), OW = n.val.dim(3);
        const int stride = n.aux;
        std::vector<S> col(static_cast<size_t>(C) * 9 * OH * OW);
        std::vector<S> dcol(col.size());
        for (int b = 0; b < N; ++b) {
          const S* dout = n.grad.data.data() + static_cast<int64_t>(b) * OC * OH * OW;
          if (W.needs_grad) {
            im2col(X.val, b, stride, OH, OW, col.data());
            gemm_nt(OC, OH * OW, C * 9, dout, col.data(), W.grad.data.data());
          }
          if (X.needs_grad) {
            std::fill(dcol.begin(), dcol.end(), S(0));
            gemm_tn(C * 9, OC, OH * OW, W.val.data.data(), dout, dcol.data());
            col2im_add(dcol.data(), C, H, Wd, stride, OH, OW,
                       X.grad.data.data() + static_cast<int64_t>(b) * C * H * Wd);
          }
        }
        return;
      }
      case Op::AddChan: {
        Node& X = nodes_[static_cast<size_t>(n.a)];
        Node& B = nodes_[static_cast<size_t>(n.b)];
        const int N = X.val.dim(0), C = X.val.dim(1);
        const int64_t plane = static_cast<int64_t>(X.val.dim(2)) * X.val.dim(3);
        if (X.needs_grad)
          for (int64_t i = 0; i < n.grad.size(); ++i)
            X.grad.data[static_cast<size_t>(i)] += n.grad.data[static_cast<size_t>(i)];
        if (B.needs_grad)
          for (int c = 0; c < C; ++c) {
            S acc = S(0);
            for (int i = 0; i < N; ++i) {
              const int64_t base = (static_cast<int64_t>(i) * C + c) * plane;
              for (int64_t p = 0; p < plane; ++p) acc += n.grad.data[static_cast<size_t>(base + p)];
            }
            B.grad.data[static_cast<size_t>(c)] += acc;
          }
        return;
      }
      case Op::Gap: {
        Node& X = nodes_[static_cast<size_t>(n.a)];
        if (!X.needs_grad) return;
        const int N = X.val.dim(0), C = X.val.dim(1);
        const int64_t plane = static_cast<int64_t>(X.val.dim(2)) * X.val.dim(3);
        for (int i = 0; i < N; ++i)
          for (int c = 0; c < C; ++c) {
            const S g = n.grad.data[static_cast<size_t>(i) * C + c] / static_cast<S>(plane);
            const int64_t base = (static_cast<int64_t>(i) * C + c) * plane;
            for (int64_t p = 0; p < plane; ++p) X.grad.data[static_cast<size_t>(base + p)] += g;
          }
        return;
      }
      case Op::Add: {
        for (int src : {n.a, n.b}) {
          Node& X = nodes_[static_cast<size_t>(src)];
          if (!X.needs_grad) continue;
          for (int64_t i = 0; i < n.grad.size(); ++i)
            X.grad.data[static_cast<size_t>(i)] += n.grad.data[static_cast<size_t>(i)];
        }
        return;
      }
      case Op::Flatten: {
        Node& X = nodes_[static_cast<size_t>(n.a)];
        if (X.needs_grad)
          for (int64_t i = 0; i < n.grad.size(); ++i)
            X.grad.data[static_cast<size_t>(i)] += n.grad.data[static_cast<size_t>(i)];
        return;
      }
      case Op::SoftmaxXent: {
        Node& X = nodes_[static_cast<size_t>(n.a)];
        if (!X.needs_grad) return;
        const int N = n.extra.dim(0), L = n.extra.dim(1);
        const S scale = n.grad.data[0] / static_cast<S>(N);
        for (int i = 0; i < N; ++i)
          for (int j = 0; j < L; ++j) {
            S p = n.extra.data[static_cast<size_t>(i) * L + j];
            S onehot = (j == n.labels[static_cast<size_t>(i)]) ? S(1) : S(0);
            X.grad.data[static_cast<size_t>(i) * L + j] += scale * (p - onehot);
          }
        return;
      }
    }
  }
};

using Tape = TapeT<float>;

// --- model families -----------------------------------------------------------

enum class Arch { FFnet, Convnet };

struct ModelConfig {
  Arch arch = Arch::FFnet;
  std::vector<int> widths;  // ffnet: hidden units; convnet: channel count per conv layer
  int resolution = 32;
  int in_channels = 3;
  int classes = 3;
  bool skip_connections = false;
};

// Conv channel plan for a width multiplier: three stages of two 3x3 convs,
// stride-2 downsampling between stages.
std::vector<int> convnet_widths(int w);

// Desk-scale feedforward profile (the full-scale profile divided by 16).
std::vector<int> ffnet_widths_desk();

// Homogeneous feedforward family for capacity sweeps.
std::vector<int> ffnet_widths_scaled(int w);

struct ParamSegment {
  std::string name;
  std::vector<int> shape;
  int64_t offset = 0;
  int64_t count = 0;
  int fan_in = 0;
};

std::vector<ParamSegment> param_layout(const ModelConfig& cfg);
int64_t param_count(const ModelConfig& cfg);

template <class S>
struct ModelT {
  ModelConfig cfg;
  std::vector<ParamSegment> segments;
  std::vector<S> flat;  // all parameters, segment order

  static ModelT create(const ModelConfig& cfg, uint64_t seed) {
    ModelT m;
    m.cfg = cfg;
    m.segments = param_layout(cfg);
    int64_t total = 0;
    for (const auto& seg : m.segments) total += seg.count;
    m.flat.assign(static_cast<size_t>(total), S(0));
    size_t idx = 0;
    for (const auto& seg : m.segments) {
      auto rng = rng_stream(seed, fnv1a64("init"), idx++);
      if (seg.fan_in > 0) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(seg.fan_in));
        std::uniform_real_distribution<double> d(-bound, bound);
        for (int64_t i = 0; i < seg.count; ++i)
          m.flat[static_cast<size_t>(seg.offset + i)] = static_cast<S>(d(rng));
      }
    }
    return m;
  }

  int64_t param_dim() const { return static_cast<int64_t>(flat.size()); }

  // Builds the graph on the tape; returns the logits node.
  int forward(TapeT<S>& tape, int images) const {
    size_t seg = 0;
    auto next_param = [&]() {
      const auto& s = segments[seg++];
      return tape.param(flat.data() + s.offset, s.shape);
    };
    if (cfg.arch == Arch::FFnet) {
      int h = tape.flatten(images);
      for (size_t i = 0; i < cfg.widths.size(); ++i) {
        h = tape.add_row(tape.matmul(h, next_param()), next_param());
        h = tape.relu(h);
      }
      return tape.add_row(tape.matmul(h, next_param()), next_param());
    }
    // convnet: widths.size() conv layers, stride 2 entering stages 2 and 3
    int h = images;
    const size_t n_conv = cfg.widths.size();
    for (size_t i = 0; i < n_conv; ++i) {
      const int stride = (i == n_conv / 3 || i == 2 * n_conv / 3) ? 2 : 1;
      int pre = h;
      h = tape.add_chan(tape.conv2d(h, next_param(), stride), next_param());
      const bool can_skip = cfg.skip_connections && stride == 1 && i % 2 == 1 &&
                            cfg.widths[i] == cfg.widths[i - 1];
      if (can_skip) h = tape.add(h, pre);
      h = tape.relu(h);
    }
    h = tape.global_avg_pool(h);
    return tape.add_row(tape.matmul(h, next_param()), next_param());
  }
};

using Model = ModelT<float>;

// --- losses / evaluation -----------------------------------------------------

template <class S>
TensorT<S> forward_logits(const ModelT<S>& model, const TensorT<S>& images) {
  TapeT<S> tape;
  int x = tape.input(images);
  int logits = model.forward(tape, x);
  return tape.value(logits);
}

template <class S>
std::pair<double, std::vector<S>> loss_and_grad(const ModelT<S>& model,
                                                const TensorT<S>& images,
                                                const std::vector<int>& labels) {
  TapeT<S> tape;
  int x = tape.input(images);
  int logits = model.forward(tape, x);
  int loss = tape.softmax_xent_mean(logits, labels);
  tape.backward(loss);
  std::vector<S> grad(static_cast<size_t>(model.param_dim()), S(0));
  const auto& pnodes = tape.param_nodes();
  if (pnodes.size() != model.segments.size()) throw InternalError("param node count mismatch");
  for (size_t i = 0; i < pnodes.size(); ++i) {
    const auto& g = tape.grad(pnodes[i]);
    std::copy(g.data.begin(), g.data.end(), grad.begin() + model.segments[i].offset);
  }
  return {static_cast<double>(tape.value(loss).data[0]), std::move(grad)};
}

template <class S>
std::vector<int> predict(const ModelT<S>& model, const TensorT<S>& images) {
  TensorT<S> logits = forward_logits(model, images);
  const int N = logits.dim(0), L = logits.dim(1);
  std::vector<int> out(static_cast<size_t>(N));
  for (int i = 0; i < N; ++i) {
    const S* row = logits.data.data() + static_cast<int64_t>(i) * L;
    int best = 0;
    for (int j = 1; j < L; ++j)
      if (row[j] > row[best]) best = j;
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

template <class S>
double zero_one_loss(const ModelT<S>& model, const TensorT<S>& images,
                     const std::vector<int>& labels) {
  if (labels.empty()) throw UserError("empty dataset");
  auto preds = predict(model, images);
  int64_t wrong = 0;
  for (size_t i = 0; i < labels.size(); ++i)
    if (preds[i] != labels[i]) ++wrong;
  return static_cast<double>(wrong) / static_cast<double>(labels.size());
}

// --- optimizers ----------------------------------------------------------------

struct OptConfig {
  enum class Kind { Sgd, Adam } kind = Kind::Adam;
  double lr = 1e-3;
  double momentum = 0.9;       // sgd
  double beta1 = 0.9;          // adam
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

template <class S>
struct OptState {
  std::vector<S> m, v;  // sgd uses m as velocity
  int64_t t = 0;

  void ensure(size_t n) {
    if (m.size() != n) m.assign(n, S(0));
    if (v.size() != n) v.assign(n, S(0));
  }
};

template <class S>
void sgd_step(std::span<S> params, std::span<const S> grad, OptState<S>& st,
              const OptConfig& opt) {
  if (params.size() != grad.size()) throw InternalError("sgd dimension mismatch");
  st.ensure(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    S g = grad[i] + static_cast<S>(opt.weight_decay) * params[i];
    st.m[i] = static_cast<S>(opt.momentum) * st.m[i] + g;
    params[i] -= static_cast<S>(opt.lr) * st.m[i];
  }
}

template <class S>
void adam_step(std::span<S> params, std::span<const S> grad, OptState<S>& st,
               const OptConfig& opt) {
  if (params.size() != grad.size()) throw InternalError("adam dimension mismatch");
  st.ensure(params.size());
  ++st.t;
  const double b1 = opt.beta1, b2 = opt.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
  for (size_t i = 0; i < params.size(); ++i) {
    double g = static_cast<double>(grad[i]) + opt.weight_decay * params[i];
    double m = b1 * st.m[i] + (1.0 - b1) * g;
    double v = b2 * st.v[i] + (1.0 - b2) * g * g;
    st.m[i] = static_cast<S>(m);
    st.v[i] = static_cast<S>(v);
    const double mhat = m / bc1, vhat = v / bc2;
    params[i] -= static_cast<S>(opt.lr * mhat / (std::sqrt(vhat) + opt.eps));
  }
}

template <class S>
void opt_step(std::span<S> params, std::span<const S> grad, OptState<S>& st,
              const OptConfig& opt) {
  if (opt.kind == OptConfig::Kind::Sgd)
    sgd_step(params, grad, st, opt);
  else
    adam_step(params, grad, st, opt);
}

// --- training loop --------------------------------------------------------------

struct FitConfig {
  OptConfig opt;
  int epochs = 30;
  int batch = 64;
  uint64_t seed = 0;
  double stop_at_train01 = -1.0;  // negative: never stop early
  int check_every = 1;            // epochs between early-stop checks
};

struct FitResult {
  int epochs_run = 0;
  double final_loss = 0.0;
  double final_train01 = 1.0;
  double best_train01 = 1.0;  // best epoch-end error seen at a check
  bool diverged = false;
};

template <class S>
TensorT<S> slice_batch(const TensorT<S>& images, std::span<const int64_t> idx) {
  std::vector<int> shape = images.shape;
  shape[0] = static_cast<int>(idx.size());
  TensorT<S> out(shape);
  const int64_t stride = images.size() / images.dim(0);
  for (size_t i = 0; i < idx.size(); ++i)
    std::copy_n(images.data.begin() + idx[i] * stride, stride,
                out.data.begin() + static_cast<int64_t>(i) * stride);
  return out;
}

template <class S>
FitResult fit(ModelT<S>& model, const TensorT<S>& images, const std::vector<int>& labels,
              const FitConfig& fc) {
  if (images.dim(0) != static_cast<int>(labels.size())) throw UserError("label count mismatch");
  const int64_t n = images.dim(0);
  OptState<S> st;
  FitResult res;
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < fc.epochs; ++epoch) {
    auto rng = rng_stream(fc.seed, fnv1a64("shuffle"), static_cast<uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    for (int64_t start = 0; start < n; start += fc.batch) {
      const int64_t end = std::min<int64_t>(start + fc.batch, n);
      std::span<const int64_t> idx(order.data() + start, static_cast<size_t>(end - start));
      TensorT<S> bx = slice_batch(images, idx);
      std::vector<int> by(idx.size());
      for (size_t i = 0; i < idx.size(); ++i) by[i] = labels[static_cast<size_t>(idx[i])];
      auto [loss, grad] = loss_and_grad(model, bx, by);
      if (!std::isfinite(loss)) {
        res.diverged = true;
        res.epochs_run = epoch + 1;
        res.final_loss = loss;
        return res;
      }
      res.final_loss = loss;
      opt_step<S>(model.flat, grad, st, fc.opt);
    }
    res.epochs_run = epoch + 1;
    if (fc.stop_at_train01 >= 0.0 && (epoch + 1) % fc.check_every == 0) {
      res.final_train01 = zero_one_loss(model, images, labels);
      res.best_train01 = std::min(res.best_train01, res.final_train01);
      if (res.final_train01 <= fc.stop_at_train01) return res;
    }
  }
  res.final_train01 = zero_one_loss(model, images, labels);
  res.best_train01 = std::min(res.best_train01, res.final_train01);
  return res;
}

}  // namespace cuelab::nn
