#include "fsep/graph.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "fsep/parallel.hpp"

namespace fsep {

namespace {

constexpr double kBatchNormEps = 1e-5;

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  raise(ErrorCode::ShapeMismatch, std::string(op) + ": " + detail);
}

bool is_suffix(const Shape& suffix, const Shape& full) {
  if (suffix.size() > full.size()) return false;
  return std::equal(suffix.rbegin(), suffix.rend(), full.rbegin());
}

}  // namespace

const char* op_kind_name(OpKind op) {
  switch (op) {
    case OpKind::input: return "input";
    case OpKind::param: return "param";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::conv2d: return "conv2d";
    case OpKind::batchnorm2d: return "batchnorm2d";
    case OpKind::relu: return "relu";
    case OpKind::maxpool2x2: return "maxpool2x2";
    case OpKind::flatten: return "flatten";
    case OpKind::mean: return "mean";
    case OpKind::log_softmax: return "log_softmax";
    case OpKind::negate: return "negate";
    case OpKind::scalar_mul: return "scalar_mul";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::sq_euclidean_pairwise: return "sq_euclidean_pairwise";
    case OpKind::cosine_similarity_pairwise: return "cosine_similarity_pairwise";
  }
  return "?";
}

template <typename T>
NodeId Graph<T>::input(Tensor<T> v) {
  if (!v.all_finite()) raise(ErrorCode::NonFiniteInput, "non-finite values in input leaf");
  nodes_.push_back(Node{OpKind::input, {}, {}, std::move(v), {}, {}, {}});
  return NodeId{static_cast<int32_t>(nodes_.size()) - 1};
}

template <typename T>
NodeId Graph<T>::param(Tensor<T> v) {
  if (!v.all_finite()) raise(ErrorCode::NonFiniteInput, "non-finite values in param leaf");
  nodes_.push_back(Node{OpKind::param, {}, {}, std::move(v), {}, {}, {}});
  NodeId id{static_cast<int32_t>(nodes_.size()) - 1};
  params_.push_back(id);
  return id;
}

template <typename T>
NodeId Graph<T>::conv2d(NodeId x, NodeId w, NodeId bias) {
  return apply(OpKind::conv2d, std::array{x, w, bias});
}

template <typename T>
NodeId Graph<T>::batchnorm2d(NodeId x, NodeId gamma, NodeId beta) {
  return apply(OpKind::batchnorm2d, std::array{x, gamma, beta});
}

template <typename T>
NodeId Graph<T>::flatten_column(NodeId x) {
  OpAttrs attrs;
  attrs.to_column = true;
  return apply(OpKind::flatten, std::array{x}, std::move(attrs));
}

template <typename T>
NodeId Graph<T>::mean_axis(NodeId x, int axis) {
  OpAttrs attrs;
  attrs.axis = axis;
  return apply(OpKind::mean, std::array{x}, std::move(attrs));
}

template <typename T>
NodeId Graph<T>::scalar_mul(NodeId x, double c) {
  OpAttrs attrs;
  attrs.scalar = c;
  return apply(OpKind::scalar_mul, std::array{x}, std::move(attrs));
}

template <typename T>
NodeId Graph<T>::gather_rows(NodeId x, std::vector<int64_t> rows) {
  OpAttrs attrs;
  attrs.rows = std::move(rows);
  return apply(OpKind::gather_rows, std::array{x}, std::move(attrs));
}

template <typename T>
NodeId Graph<T>::apply(OpKind op, std::span<const NodeId> inputs, OpAttrs attrs) {
  if (op == OpKind::input || op == OpKind::param) {
    raise(ErrorCode::InvalidArgument, "leaves are inserted via input()/param()");
  }
  Node n;
  n.op = op;
  n.attrs = std::move(attrs);
  for (NodeId in : inputs) n.inputs.push_back(check(in));
  compute(n);
  nodes_.push_back(std::move(n));
  return NodeId{static_cast<int32_t>(nodes_.size()) - 1};
}

template <typename T>
void Graph<T>::set_leaf(NodeId leaf, const Tensor<T>& v) {
  Node& n = nodes_[check(leaf)];
  if (n.op != OpKind::input && n.op != OpKind::param) {
    raise(ErrorCode::InvalidArgument, "set_leaf on a non-leaf node");
  }
  if (n.value.shape() != v.shape()) shape_error("set_leaf", "shape change not allowed");
  if (!v.all_finite()) raise(ErrorCode::NonFiniteInput, "non-finite values in leaf rewrite");
  n.value = v;
}

template <typename T>
T* Graph<T>::leaf_data(NodeId leaf) {
  Node& n = nodes_[check(leaf)];
  if (n.op != OpKind::input && n.op != OpKind::param) {
    raise(ErrorCode::InvalidArgument, "leaf_data on a non-leaf node");
  }
  return n.value.data();
}

template <typename T>
void Graph<T>::refresh() {
  for (Node& n : nodes_) {
    if (n.op != OpKind::input && n.op != OpKind::param) compute(n);
  }
}

template <typename T>
void Graph<T>::refresh(const std::vector<char>& mask) {
  for (size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    if (mask[i] && n.op != OpKind::input && n.op != OpKind::param) compute(n);
  }
}

template <typename T>
std::vector<char> Graph<T>::descendants(NodeId leaf) const {
  std::vector<char> mask(nodes_.size(), 0);
  mask[check(leaf)] = 1;
  for (size_t i = 0; i < nodes_.size(); ++i) {
    if (mask[i]) continue;
    for (int32_t in : nodes_[i].inputs) {
      if (mask[in]) {
        mask[i] = 1;
        break;
      }
    }
  }
  return mask;
}

// ---------------------------------------------------------------------------
// forward kernels

template <typename T>
void Graph<T>::compute(Node& n) const {
  auto in = [&](size_t i) -> const Tensor<T>& { return nodes_[n.inputs[i]].value; };

  switch (n.op) {
    case OpKind::matmul: {
      const Tensor<T>& a = in(0);
      const Tensor<T>& b = in(1);
      if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        shape_error("matmul", shape_to_string(a.shape()) + " x " + shape_to_string(b.shape()));
      }
      const int64_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
      Tensor<T> out({m, p});
      const T* ad = a.data();
      const T* bd = b.data();
      T* od = out.data();
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t kk = 0; kk < k; ++kk) {
          const T av = ad[i * k + kk];
          const T* brow = bd + kk * p;
          T* orow = od + i * p;
          for (int64_t j = 0; j < p; ++j) orow[j] += av * brow[j];
        }
      }
      n.value = std::move(out);
      break;
    }

    case OpKind::add: {
      const Tensor<T>& a = in(0);
      const Tensor<T>& b = in(1);
      if (!is_suffix(b.shape(), a.shape())) {
        shape_error("add", shape_to_string(b.shape()) + " is not a trailing-shape of " +
                               shape_to_string(a.shape()));
      }
      Tensor<T> out(a.shape());
      const int64_t inner = b.size();
      for (int64_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i % inner];
      n.value = std::move(out);
      break;
    }

    case OpKind::conv2d: {
      const Tensor<T>& x = in(0);
      const Tensor<T>& w = in(1);
      const Tensor<T>& bias = in(2);
      if (x.rank() != 4) shape_error("conv2d", "input must be [B,C,H,W]");
      if (w.rank() != 4 || w.dim(2) != 3 || w.dim(3) != 3) {
        shape_error("conv2d", "kernel must be [Cout,Cin,3,3]");
      }
      if (w.dim(1) != x.dim(1)) shape_error("conv2d", "channel mismatch");
      if (bias.rank() != 1 || bias.dim(0) != w.dim(0)) shape_error("conv2d", "bias must be [Cout]");
      const int64_t B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3), Co = w.dim(0);
      Tensor<T> out({B, Co, H, W});
      const T* xd = x.data();
      const T* wd = w.data();
      const T* bd = bias.data();
      T* od = out.data();
      parallel_for(B * Co, [&](int64_t begin, int64_t end) {
        for (int64_t plane = begin; plane < end; ++plane) {
          const int64_t b = plane / Co, co = plane % Co;
          const T* wslab = wd + co * Ci * 9;
          T* oplane = od + (b * Co + co) * H * W;
          for (int64_t oy = 0; oy < H; ++oy) {
            for (int64_t ox = 0; ox < W; ++ox) {
              T acc = bd[co];
              for (int64_t ci = 0; ci < Ci; ++ci) {
                const T* xplane = xd + (b * Ci + ci) * H * W;
                const T* wk = wslab + ci * 9;
                for (int64_t ky = 0; ky < 3; ++ky) {
                  const int64_t iy = oy + ky - 1;
                  if (iy < 0 || iy >= H) continue;
                  for (int64_t kx = 0; kx < 3; ++kx) {
                    const int64_t ix = ox + kx - 1;
                    if (ix < 0 || ix >= W) continue;
                    acc += xplane[iy * W + ix] * wk[ky * 3 + kx];
                  }
                }
              }
              oplane[oy * W + ox] = acc;
            }
          }
        }
      });
      n.value = std::move(out);
      break;
    }

    case OpKind::batchnorm2d: {
      const Tensor<T>& x = in(0);
      const Tensor<T>& gamma = in(1);
      const Tensor<T>& beta = in(2);
      if (x.rank() != 4) shape_error("batchnorm2d", "input must be [B,C,H,W]");
      const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
      if (gamma.rank() != 1 || gamma.dim(0) != C || beta.rank() != 1 || beta.dim(0) != C) {
        shape_error("batchnorm2d", "scale/shift must be [C]");
      }
      const int64_t N = B * H * W;
      if (N < 2) raise(ErrorCode::BatchTooSmall, "batch statistics need at least 2 values per channel");
      Tensor<T> out(x.shape());
      Tensor<T> xhat(x.shape());
      Tensor<T> inv_std({C});
      const int64_t hw = H * W;
      // Batch statistics accumulate in sorted order so the embedding is
      // bit-exactly equivariant under batch permutation.
      std::vector<T> scratch(static_cast<size_t>(N));
      for (int64_t c = 0; c < C; ++c) {
        for (int64_t b = 0; b < B; ++b) {
          const T* p = x.data() + (b * C + c) * hw;
          std::copy(p, p + hw, scratch.data() + b * hw);
        }
        std::sort(scratch.begin(), scratch.end());
        T sum = 0;
        for (const T v : scratch) sum += v;
        const T mu = sum / static_cast<T>(N);
        for (T& v : scratch) {
          const T d = v - mu;
          v = d * d;
        }
        std::sort(scratch.begin(), scratch.end());
        T var = 0;
        for (const T v : scratch) var += v;
        var /= static_cast<T>(N);
        const T is = T(1) / std::sqrt(var + static_cast<T>(kBatchNormEps));
        inv_std[c] = is;
        const T g = gamma[c], bt = beta[c];
        for (int64_t b = 0; b < B; ++b) {
          const int64_t off = (b * C + c) * hw;
          for (int64_t i = 0; i < hw; ++i) {
            const T xh = (x[off + i] - mu) * is;
            xhat[off + i] = xh;
            out[off + i] = g * xh + bt;
          }
        }
      }
      n.value = std::move(out);
      n.aux = std::move(xhat);
      n.aux2 = std::move(inv_std);
      break;
    }

    case OpKind::relu: {
      const Tensor<T>& x = in(0);
      Tensor<T> out(x.shape());
      for (int64_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
      n.value = std::move(out);
      break;
    }

    case OpKind::maxpool2x2: {
      const Tensor<T>& x = in(0);
      if (x.rank() != 4) shape_error("maxpool2x2", "input must be [B,C,H,W]");
      const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
      const int64_t Ho = H / 2, Wo = W / 2;
      if (Ho < 1 || Wo < 1) shape_error("maxpool2x2", "spatial size below 2x2");
      Tensor<T> out({B, C, Ho, Wo});
      std::vector<int64_t> argmax(static_cast<size_t>(out.size()));
      for (int64_t bc = 0; bc < B * C; ++bc) {
        const T* xp = x.data() + bc * H * W;
        T* op = out.data() + bc * Ho * Wo;
        int64_t* ap = argmax.data() + bc * Ho * Wo;
        for (int64_t oy = 0; oy < Ho; ++oy) {
          for (int64_t ox = 0; ox < Wo; ++ox) {
            // first max in (dy,dx) scan order wins ties
            int64_t best = (2 * oy) * W + 2 * ox;
            T bv = xp[best];
            for (int64_t dy = 0; dy < 2; ++dy) {
              for (int64_t dx = 0; dx < 2; ++dx) {
                const int64_t idx = (2 * oy + dy) * W + 2 * ox + dx;
                if (xp[idx] > bv) {
                  bv = xp[idx];
                  best = idx;
                }
              }
            }
            op[oy * Wo + ox] = bv;
            ap[oy * Wo + ox] = bc * H * W + best;
          }
        }
      }
      n.value = std::move(out);
      n.iaux = std::move(argmax);
      break;
    }

    case OpKind::flatten: {
      const Tensor<T>& x = in(0);
      if (x.rank() < 1) shape_error("flatten", "needs rank >= 1");
      Shape out_shape;
      if (n.attrs.to_column) {
        out_shape = {x.size(), 1};
      } else {
        out_shape = {x.dim(0), x.size() / x.dim(0)};
      }
      n.value = Tensor<T>(std::move(out_shape), std::vector<T>(x.values().begin(), x.values().end()));
      break;
    }

    case OpKind::mean: {
      const Tensor<T>& x = in(0);
      if (n.attrs.axis < 0) {
        T sum = 0;
        for (int64_t i = 0; i < x.size(); ++i) sum += x[i];
        n.value = Tensor<T>::scalar(sum / static_cast<T>(x.size()));
        break;
      }
      const int64_t axis = n.attrs.axis;
      if (axis >= x.rank()) shape_error("mean", "axis out of range");
      const int64_t da = x.dim(axis);
      int64_t outer = 1, inner = 1;
      for (int64_t i = 0; i < axis; ++i) outer *= x.dim(i);
      for (int64_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
      Shape out_shape;
      for (int64_t i = 0; i < x.rank(); ++i) {
        if (i != axis) out_shape.push_back(x.dim(i));
      }
      if (out_shape.empty()) out_shape = {1};
      Tensor<T> out(out_shape);
      for (int64_t o = 0; o < outer; ++o) {
        for (int64_t j = 0; j < da; ++j) {
          const T* p = x.data() + (o * da + j) * inner;
          T* q = out.data() + o * inner;
          for (int64_t i = 0; i < inner; ++i) q[i] += p[i];
        }
      }
      for (int64_t i = 0; i < out.size(); ++i) out[i] /= static_cast<T>(da);
      n.value = std::move(out);
      break;
    }

    case OpKind::log_softmax: {
      const Tensor<T>& x = in(0);
      if (x.rank() < 1) shape_error("log_softmax", "needs rank >= 1");
      const int64_t last = x.dim(x.rank() - 1);
      const int64_t rows = x.size() / last;
      Tensor<T> out(x.shape());
      for (int64_t r = 0; r < rows; ++r) {
        const T* p = x.data() + r * last;
        T* q = out.data() + r * last;
        T mx = p[0];
        for (int64_t j = 1; j < last; ++j) mx = std::max(mx, p[j]);
        T se = 0;
        for (int64_t j = 0; j < last; ++j) se += std::exp(p[j] - mx);
        const T lse = mx + std::log(se);
        for (int64_t j = 0; j < last; ++j) q[j] = p[j] - lse;
      }
      n.value = std::move(out);
      break;
    }

    case OpKind::negate: {
      const Tensor<T>& x = in(0);
      Tensor<T> out(x.shape());
      for (int64_t i = 0; i < x.size(); ++i) out[i] = -x[i];
      n.value = std::move(out);
      break;
    }

    case OpKind::scalar_mul: {
      const Tensor<T>& x = in(0);
      const T c = static_cast<T>(n.attrs.scalar);
      Tensor<T> out(x.shape());
      for (int64_t i = 0; i < x.size(); ++i) out[i] = c * x[i];
      n.value = std::move(out);
      break;
    }

    case OpKind::gather_rows: {
      const Tensor<T>& x = in(0);
      if (x.rank() < 1) shape_error("gather_rows", "needs rank >= 1");
      const int64_t rows_in = x.dim(0);
      const int64_t inner = x.size() / rows_in;
      for (int64_t r : n.attrs.rows) {
        if (r < 0 || r >= rows_in) {
          raise(ErrorCode::InvalidArgument, "gather_rows: row " + std::to_string(r) + " out of range");
        }
      }
      Shape out_shape = x.shape();
      out_shape[0] = static_cast<int64_t>(n.attrs.rows.size());
      Tensor<T> out(out_shape);
      for (size_t i = 0; i < n.attrs.rows.size(); ++i) {
        const T* p = x.data() + n.attrs.rows[i] * inner;
        std::copy(p, p + inner, out.data() + static_cast<int64_t>(i) * inner);
      }
      n.value = std::move(out);
      break;
    }

    case OpKind::sq_euclidean_pairwise: {
      const Tensor<T>& x = in(0);
      const Tensor<T>& y = in(1);
      if (x.rank() != 2 || y.rank() != 2 || x.dim(1) != y.dim(1)) {
        shape_error("sq_euclidean_pairwise",
                    shape_to_string(x.shape()) + " vs " + shape_to_string(y.shape()));
      }
      const int64_t N = x.dim(0), K = y.dim(0), M = x.dim(1);
      Tensor<T> out({N, K});
      for (int64_t i = 0; i < N; ++i) {
        const T* xp = x.data() + i * M;
        for (int64_t k = 0; k < K; ++k) {
          const T* yp = y.data() + k * M;
          T acc = 0;
          for (int64_t m = 0; m < M; ++m) {
            const T d = xp[m] - yp[m];
            acc += d * d;
          }
          out[i * K + k] = acc;
        }
      }
      n.value = std::move(out);
      break;
    }

    case OpKind::cosine_similarity_pairwise: {
      const Tensor<T>& x = in(0);
      const Tensor<T>& y = in(1);
      if (x.rank() != 2 || y.rank() != 2 || x.dim(1) != y.dim(1)) {
        shape_error("cosine_similarity_pairwise",
                    shape_to_string(x.shape()) + " vs " + shape_to_string(y.shape()));
      }
      const int64_t N = x.dim(0), K = y.dim(0), M = x.dim(1);
      Tensor<T> nx({N}), ny({K});
      for (int64_t i = 0; i < N; ++i) {
        T acc = 0;
        const T* p = x.data() + i * M;
        for (int64_t m = 0; m < M; ++m) acc += p[m] * p[m];
        nx[i] = std::sqrt(acc);
        if (nx[i] == T(0)) raise(ErrorCode::ZeroVectorCosine, "zero row in left operand");
      }
      for (int64_t k = 0; k < K; ++k) {
        T acc = 0;
        const T* p = y.data() + k * M;
        for (int64_t m = 0; m < M; ++m) acc += p[m] * p[m];
        ny[k] = std::sqrt(acc);
        if (ny[k] == T(0)) raise(ErrorCode::ZeroVectorCosine, "zero row in right operand");
      }
      Tensor<T> out({N, K});
      for (int64_t i = 0; i < N; ++i) {
        const T* xp = x.data() + i * M;
        for (int64_t k = 0; k < K; ++k) {
          const T* yp = y.data() + k * M;
          T dot = 0;
          for (int64_t m = 0; m < M; ++m) dot += xp[m] * yp[m];
          out[i * K + k] = dot / (nx[i] * ny[k]);
        }
      }
      n.value = std::move(out);
      n.aux = std::move(nx);
      n.aux2 = std::move(ny);
      break;
    }

    case OpKind::input:
    case OpKind::param:
      break;
  }
}

// ---------------------------------------------------------------------------
// backward

template <typename T>
GradMap<T> Graph<T>::backward(NodeId loss) const {
  const int32_t root = check(loss);
  if (nodes_[root].value.size() != 1) {
    raise(ErrorCode::NonScalarLoss,
          "loss shape " + shape_to_string(nodes_[root].value.shape()) + " is not scalar");
  }

  std::vector<Tensor<T>> grads(nodes_.size());
  std::vector<char> has_grad(nodes_.size(), 0);
  auto grad_of = [&](int32_t i) -> Tensor<T>& {
    if (!has_grad[i]) {
      grads[i] = Tensor<T>(nodes_[i].value.shape());
      has_grad[i] = 1;
    }
    return grads[i];
  };

  grad_of(root)[0] = T(1);

  for (int32_t idx = root; idx >= 0; --idx) {
    if (!has_grad[idx]) continue;
    const Node& n = nodes_[idx];
    const Tensor<T>& g = grads[idx];
    auto in = [&](size_t i) -> const Tensor<T>& { return nodes_[n.inputs[i]].value; };

    switch (n.op) {
      case OpKind::input:
      case OpKind::param:
        break;

      case OpKind::matmul: {
        const Tensor<T>& a = in(0);
        const Tensor<T>& b = in(1);
        const int64_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
        Tensor<T>& da = grad_of(n.inputs[0]);
        Tensor<T>& db = grad_of(n.inputs[1]);
        for (int64_t i = 0; i < m; ++i) {
          for (int64_t j = 0; j < p; ++j) {
            const T gv = g[i * p + j];
            for (int64_t kk = 0; kk < k; ++kk) {
              da[i * k + kk] += gv * b[kk * p + j];
              db[kk * p + j] += a[i * k + kk] * gv;
            }
          }
        }
        break;
      }

      case OpKind::add: {
        Tensor<T>& da = grad_of(n.inputs[0]);
        Tensor<T>& db = grad_of(n.inputs[1]);
        const int64_t inner = in(1).size();
        for (int64_t i = 0; i < g.size(); ++i) {
          da[i] += g[i];
          db[i % inner] += g[i];
        }
        break;
      }

      case OpKind::conv2d: {
        const Tensor<T>& x = in(0);
        const Tensor<T>& w = in(1);
        const int64_t B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3), Co = w.dim(0);
        Tensor<T>& dx = grad_of(n.inputs[0]);
        Tensor<T>& dw = grad_of(n.inputs[1]);
        Tensor<T>& dbias = grad_of(n.inputs[2]);
        for (int64_t b = 0; b < B; ++b) {
          for (int64_t co = 0; co < Co; ++co) {
            const T* gp = g.data() + (b * Co + co) * H * W;
            for (int64_t oy = 0; oy < H; ++oy) {
              for (int64_t ox = 0; ox < W; ++ox) {
                const T gv = gp[oy * W + ox];
                if (gv == T(0)) continue;
                dbias[co] += gv;
                for (int64_t ci = 0; ci < Ci; ++ci) {
                  const T* xplane = x.data() + (b * Ci + ci) * H * W;
                  T* dxplane = dx.data() + (b * Ci + ci) * H * W;
                  const int64_t woff = (co * Ci + ci) * 9;
                  for (int64_t ky = 0; ky < 3; ++ky) {
                    const int64_t iy = oy + ky - 1;
                    if (iy < 0 || iy >= H) continue;
                    for (int64_t kx = 0; kx < 3; ++kx) {
                      const int64_t ix = ox + kx - 1;
                      if (ix < 0 || ix >= W) continue;
                      dxplane[iy * W + ix] += gv * w[woff + ky * 3 + kx];
                      dw[woff + ky * 3 + kx] += gv * xplane[iy * W + ix];
                    }
                  }
                }
              }
            }
          }
        }
        break;
      }

      case OpKind::batchnorm2d: {
        const Tensor<T>& x = in(0);
        const Tensor<T>& gamma = in(1);
        const Tensor<T>& xhat = n.aux;
        const Tensor<T>& inv_std = n.aux2;
        const int64_t B = x.dim(0), C = x.dim(1), hw = x.dim(2) * x.dim(3);
        const int64_t N = B * hw;
        Tensor<T>& dx = grad_of(n.inputs[0]);
        Tensor<T>& dgamma = grad_of(n.inputs[1]);
        Tensor<T>& dbeta = grad_of(n.inputs[2]);
        for (int64_t c = 0; c < C; ++c) {
          T sum_g = 0, sum_gx = 0;
          for (int64_t b = 0; b < B; ++b) {
            const int64_t off = (b * C + c) * hw;
            for (int64_t i = 0; i < hw; ++i) {
              sum_g += g[off + i];
              sum_gx += g[off + i] * xhat[off + i];
            }
          }
          dgamma[c] += sum_gx;
          dbeta[c] += sum_g;
          const T scale = gamma[c] * inv_std[c] / static_cast<T>(N);
          for (int64_t b = 0; b < B; ++b) {
            const int64_t off = (b * C + c) * hw;
            for (int64_t i = 0; i < hw; ++i) {
              dx[off + i] += scale * (static_cast<T>(N) * g[off + i] - sum_g - xhat[off + i] * sum_gx);
            }
          }
        }
        break;
      }

      case OpKind::relu: {
        const Tensor<T>& x = in(0);
        Tensor<T>& dx = grad_of(n.inputs[0]);
        for (int64_t i = 0; i < x.size(); ++i) {
          if (x[i] > T(0)) dx[i] += g[i];
        }
        break;
      }

      case OpKind::maxpool2x2: {
        Tensor<T>& dx = grad_of(n.inputs[0]);
        for (int64_t i = 0; i < n.value.size(); ++i) dx[n.iaux[i]] += g[i];
        break;
      }

      case OpKind::flatten: {
        Tensor<T>& dx = grad_of(n.inputs[0]);
        for (int64_t i = 0; i < g.size(); ++i) dx[i] += g[i];
        break;
      }

      case OpKind::mean: {
        const Tensor<T>& x = in(0);
        Tensor<T>& dx = grad_of(n.inputs[0]);
        if (n.attrs.axis < 0) {
          const T gv = g[0] / static_cast<T>(x.size());
          for (int64_t i = 0; i < x.size(); ++i) dx[i] += gv;
          break;
        }
        const int64_t axis = n.attrs.axis;
        const int64_t da = x.dim(axis);
        int64_t outer = 1, inner = 1;
        for (int64_t i = 0; i < axis; ++i) outer *= x.dim(i);
        for (int64_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
        for (int64_t o = 0; o < outer; ++o) {
          for (int64_t j = 0; j < da; ++j) {
            T* p = dx.data() + (o * da + j) * inner;
            const T* q = g.data() + o * inner;
            for (int64_t i = 0; i < inner; ++i) p[i] += q[i] / static_cast<T>(da);
          }
        }
        break;
      }

      case OpKind::log_softmax: {
        const Tensor<T>& y = n.value;
        const int64_t last = y.dim(y.rank() - 1);
        const int64_t rows = y.size() / last;
        Tensor<T>& dx = grad_of(n.inputs[0]);
        for (int64_t r = 0; r < rows; ++r) {
          const T* gp = g.data() + r * last;
          const T* yp = y.data() + r * last;
          T sg = 0;
          for (int64_t j = 0; j < last; ++j) sg += gp[j];
          T* dp = dx.data() + r * last;
          for (int64_t j = 0; j < last; ++j) dp[j] += gp[j] - std::exp(yp[j]) * sg;
        }
        break;
      }

      case OpKind::negate: {
        Tensor<T>& dx = grad_of(n.inputs[0]);
        for (int64_t i = 0; i < g.size(); ++i) dx[i] -= g[i];
        break;
      }

      case OpKind::scalar_mul: {
        Tensor<T>& dx = grad_of(n.inputs[0]);
        const T c = static_cast<T>(n.attrs.scalar);
        for (int64_t i = 0; i < g.size(); ++i) dx[i] += c * g[i];
        break;
      }

      case OpKind::gather_rows: {
        const Tensor<T>& x = in(0);
        Tensor<T>& dx = grad_of(n.inputs[0]);
        const int64_t inner = x.size() / x.dim(0);
        for (size_t i = 0; i < n.attrs.rows.size(); ++i) {
          const T* gp = g.data() + static_cast<int64_t>(i) * inner;
          T* dp = dx.data() + n.attrs.rows[i] * inner;
          for (int64_t j = 0; j < inner; ++j) dp[j] += gp[j];
        }
        break;
      }

      case OpKind::sq_euclidean_pairwise: {
        const Tensor<T>& x = in(0);
        const Tensor<T>& y = in(1);
        const int64_t N = x.dim(0), K = y.dim(0), M = x.dim(1);
        Tensor<T>& dx = grad_of(n.inputs[0]);
        Tensor<T>& dy = grad_of(n.inputs[1]);
        for (int64_t i = 0; i < N; ++i) {
          const T* xp = x.data() + i * M;
          T* dxp = dx.data() + i * M;
          for (int64_t k = 0; k < K; ++k) {
            const T gv = g[i * K + k];
            if (gv == T(0)) continue;
            const T* yp = y.data() + k * M;
            T* dyp = dy.data() + k * M;
            for (int64_t m = 0; m < M; ++m) {
              const T d = T(2) * (xp[m] - yp[m]);
              dxp[m] += gv * d;
              dyp[m] -= gv * d;
            }
          }
        }
        break;
      }

      case OpKind::cosine_similarity_pairwise: {
        const Tensor<T>& x = in(0);
        const Tensor<T>& y = in(1);
        const Tensor<T>& s = n.value;
        const Tensor<T>& nx = n.aux;
        const Tensor<T>& ny = n.aux2;
        const int64_t N = x.dim(0), K = y.dim(0), M = x.dim(1);
        Tensor<T>& dx = grad_of(n.inputs[0]);
        Tensor<T>& dy = grad_of(n.inputs[1]);
        for (int64_t i = 0; i < N; ++i) {
          const T* xp = x.data() + i * M;
          T* dxp = dx.data() + i * M;
          for (int64_t k = 0; k < K; ++k) {
            const T gv = g[i * K + k];
            if (gv == T(0)) continue;
            const T* yp = y.data() + k * M;
            T* dyp = dy.data() + k * M;
            const T sv = s[i * K + k];
            const T inx = T(1) / nx[i], iny = T(1) / ny[k];
            for (int64_t m = 0; m < M; ++m) {
              dxp[m] += gv * (yp[m] * inx * iny - sv * xp[m] * inx * inx);
              dyp[m] += gv * (xp[m] * inx * iny - sv * yp[m] * iny * iny);
            }
          }
        }
        break;
      }
    }
  }

  GradMap<T> result;
  result.params = params_;
  result.grads.reserve(params_.size());
  for (NodeId p : params_) {
    if (has_grad[p.index]) {
      result.grads.push_back(std::move(grads[p.index]));
    } else {
      result.grads.push_back(Tensor<T>(nodes_[p.index].value.shape()));
    }
  }
  return result;
}

template <typename T>
double check_gradients(Graph<T>& g, NodeId loss, double h) {
  const GradMap<T> analytic = g.backward(loss);
  double max_err = 0.0;
  for (size_t pi = 0; pi < analytic.params.size(); ++pi) {
    const NodeId p = analytic.params[pi];
    const std::vector<char> mask = g.descendants(p);
    T* data = g.leaf_data(p);
    const int64_t count = g.value(p).size();
    for (int64_t j = 0; j < count; ++j) {
      const T old = data[j];
      data[j] = old + static_cast<T>(h);
      g.refresh(mask);
      const double f_plus = static_cast<double>(g.value(loss)[0]);
      data[j] = old - static_cast<T>(h);
      g.refresh(mask);
      const double f_minus = static_cast<double>(g.value(loss)[0]);
      data[j] = old;
      const double cd = (f_plus - f_minus) / (2.0 * h);
      const double a = static_cast<double>(analytic.grads[pi][j]);
      const double err = std::abs(a - cd) / std::max(1.0, std::abs(a));
      max_err = std::max(max_err, err);
    }
    g.refresh(mask);
  }
  return max_err;
}

template class Graph<float>;
template class Graph<double>;
template double check_gradients(Graph<float>&, NodeId, double);
template double check_gradients(Graph<double>&, NodeId, double);

}  // namespace fsep
