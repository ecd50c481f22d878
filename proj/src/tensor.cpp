#include "pointsentinel/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>

namespace ps::ad {

namespace {

// Thread-local recycling pool for node buffers. Training builds one graph per
// sample with buffers up to a few hundred KB; without pooling those sizes sit
// above glibc's mmap threshold and every pass pays for fresh pages.
class BufferPool {
 public:
  static BufferPool& local() {
    thread_local BufferPool pool;
    return pool;
  }

  std::vector<float> acquire(std::size_t n) {
    const std::size_t bucket = bucket_of(n);
    auto& stack = buckets_[bucket];
    std::vector<float> v;
    if (!stack.empty()) {
      v = std::move(stack.back());
      stack.pop_back();
      pooled_bytes_ -= v.capacity() * sizeof(float);
    } else {
      v.reserve(std::size_t{1} << bucket);
    }
    v.resize(n);
    return v;
  }

  void release(std::vector<float>&& v) {
    if (v.capacity() == 0) return;
    constexpr std::size_t kMaxPooledBytes = 64u << 20;
    if (pooled_bytes_ + v.capacity() * sizeof(float) > kMaxPooledBytes) return;
    const std::size_t bucket = bucket_of(v.capacity());
    if ((std::size_t{1} << bucket) != v.capacity()) return;  // foreign buffer, drop
    pooled_bytes_ += v.capacity() * sizeof(float);
    buckets_[bucket].push_back(std::move(v));
  }

 private:
  static std::size_t bucket_of(std::size_t n) {
    std::size_t b = 0;
    while ((std::size_t{1} << b) < n) ++b;
    return b;
  }
  std::vector<std::vector<std::vector<float>>> buckets_ =
      std::vector<std::vector<std::vector<float>>>(40);
  std::size_t pooled_bytes_ = 0;
};

std::vector<float> pool_acquire(std::size_t n) { return BufferPool::local().acquire(n); }

std::vector<float> pool_copy(std::span<const float> src) {
  std::vector<float> v = pool_acquire(src.size());
  std::memcpy(v.data(), src.data(), src.size() * sizeof(float));
  return v;
}

}  // namespace

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// --- Tensor accessors --------------------------------------------------------

const Shape& Tensor::shape() const { return graph_->node(id_).shape; }

std::span<const float> Tensor::values() const {
  const Node& n = graph_->node(id_);
  return {n.values.data(), n.values.size()};
}

std::span<const float> Tensor::grad() const {
  const Node& n = graph_->node(id_);
  return {n.grad.data(), n.grad.size()};
}

bool Tensor::requires_grad() const { return graph_->node(id_).requires_grad; }

float Tensor::item() const {
  const Node& n = graph_->node(id_);
  PS_CHECK(n.values.size() == 1, "item(): tensor has ", n.values.size(), " elements");
  return n.values[0];
}

// --- Graph ---------------------------------------------------------------------

Tensor Graph::leaf(Shape shape, std::vector<float> values, bool requires_grad) {
  PS_CHECK(numel(shape) == static_cast<std::int64_t>(values.size()),
           "leaf: shape ", shape_str(shape), " does not match ", values.size(), " values");
  Node n;
  n.shape = std::move(shape);
  n.values = std::move(values);
  n.requires_grad = requires_grad;
  return emplace(std::move(n));
}

Tensor Graph::leaf(Shape shape, std::span<const float> values, bool requires_grad) {
  PS_CHECK(numel(shape) == static_cast<std::int64_t>(values.size()),
           "leaf: shape ", shape_str(shape), " does not match ", values.size(), " values");
  Node n;
  n.shape = std::move(shape);
  n.values = pool_copy(values);
  n.requires_grad = requires_grad;
  return emplace(std::move(n));
}

Tensor Graph::constant(float value) { return leaf({1}, std::vector<float>{value}, false); }

Tensor Graph::zeros(Shape shape, bool requires_grad) {
  std::vector<float> v = pool_acquire(static_cast<std::size_t>(numel(shape)));
  std::fill(v.begin(), v.end(), 0.0f);
  return leaf(std::move(shape), std::move(v), requires_grad);
}

void Graph::clear() {
  BufferPool& pool = BufferPool::local();
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    pool.release(std::move(it->values));
    pool.release(std::move(it->grad));
  }
  nodes_.clear();
}

Tensor Graph::emplace(Node node) {
  nodes_.push_back(std::move(node));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

void Graph::backward(const Tensor& loss) {
  PS_CHECK(loss.graph() == this && loss.id() >= 0, "backward: tensor is not part of this graph");
  PS_CHECK(numel(node(loss.id()).shape) == 1,
           "backward: loss must be scalar, got shape ", shape_str(node(loss.id()).shape));
  for (Node& n : nodes_) {
    if (n.grad.size() != n.values.size()) {
      n.grad = pool_acquire(n.values.size());
      std::fill(n.grad.begin(), n.grad.end(), 0.0f);
    }
  }
  node(loss.id()).grad[0] += 1.0f;
  // Creation order is a topological order (ops only reference existing nodes),
  // so one reverse sweep visits every node exactly once.
  for (int i = loss.id(); i >= 0; --i) {
    const Node& n = node(i);
    if (n.backward_fn) n.backward_fn(*this, n);
  }
}

void Graph::zero_grad() {
  for (Node& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), 0.0f);
}

// --- kernels ---------------------------------------------------------------------

namespace kernels {

void sgemm_acc(const float* a, const float* b, float* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    float* crow = c + static_cast<std::size_t>(i) * n;
    const float* arow = a + static_cast<std::size_t>(i) * k;
    int p = 0;
    for (; p + 4 <= k; p += 4) {
      const float a0 = arow[p + 0];
      const float a1 = arow[p + 1];
      const float a2 = arow[p + 2];
      const float a3 = arow[p + 3];
      const float* b0 = b + static_cast<std::size_t>(p + 0) * n;
      const float* b1 = b + static_cast<std::size_t>(p + 1) * n;
      const float* b2 = b + static_cast<std::size_t>(p + 2) * n;
      const float* b3 = b + static_cast<std::size_t>(p + 3) * n;
      for (int j = 0; j < n; ++j) {
        crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
      }
    }
    for (; p < k; ++p) {
      const float ap = arow[p];
      const float* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += ap * brow[j];
    }
  }
}

void sgemm_abt_acc(const float* a, const float* b, float* c, int m, int n, int k) {
  // C[i,p] += dot(A[i,:], B[p,:]). Lane-split accumulators keep the reduction
  // order fixed while letting the compiler vectorize.
  constexpr int kLanes = 16;
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const float* brow = b + static_cast<std::size_t>(p) * n;
      float acc[kLanes] = {0.0f};
      int j = 0;
      for (; j + kLanes <= n; j += kLanes) {
        for (int l = 0; l < kLanes; ++l) acc[l] += arow[j + l] * brow[j + l];
      }
      float tail = 0.0f;
      for (; j < n; ++j) tail += arow[j] * brow[j];
      for (int step = kLanes / 2; step > 0; step /= 2) {
        for (int l = 0; l < step; ++l) acc[l] += acc[l + step];
      }
      c[static_cast<std::size_t>(i) * k + p] += acc[0] + tail;
    }
  }
}

void sgemm_atb_acc(const float* a, const float* b, float* c, int m, int k, int n) {
  // C[r,:] += sum_i A[i,r] * B[i,:]
  for (int r = 0; r < k; ++r) {
    float* crow = c + static_cast<std::size_t>(r) * n;
    int i = 0;
    for (; i + 4 <= m; i += 4) {
      const float a0 = a[static_cast<std::size_t>(i + 0) * k + r];
      const float a1 = a[static_cast<std::size_t>(i + 1) * k + r];
      const float a2 = a[static_cast<std::size_t>(i + 2) * k + r];
      const float a3 = a[static_cast<std::size_t>(i + 3) * k + r];
      const float* b0 = b + static_cast<std::size_t>(i + 0) * n;
      const float* b1 = b + static_cast<std::size_t>(i + 1) * n;
      const float* b2 = b + static_cast<std::size_t>(i + 2) * n;
      const float* b3 = b + static_cast<std::size_t>(i + 3) * n;
      for (int j = 0; j < n; ++j) {
        crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
      }
    }
    for (; i < m; ++i) {
      const float ai = a[static_cast<std::size_t>(i) * k + r];
      const float* brow = b + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += ai * brow[j];
    }
  }
}

Conv2dDims conv2d_dims(const Shape& x, const Shape& w, int stride, int pad) {
  PS_CHECK(x.size() == 3, "conv2d: input must be [C,H,W], got ", shape_str(x));
  PS_CHECK(w.size() == 4, "conv2d: weight must be [C_out,C_in,kh,kw], got ", shape_str(w));
  PS_CHECK(stride >= 1 && pad >= 0, "conv2d: stride must be >= 1 and pad >= 0");
  PS_CHECK(w[2] >= 1 && w[3] >= 1, "conv2d: kernel dims must be >= 1");
  PS_CHECK(x[0] == w[1], "conv2d: input channels ", x[0], " != weight channels ", w[1]);
  Conv2dDims d;
  d.c_in = x[0];
  d.h = x[1];
  d.w = x[2];
  d.c_out = w[0];
  d.kh = w[2];
  d.kw = w[3];
  d.stride = stride;
  d.pad = pad;
  const int num_h = d.h + 2 * pad - d.kh;
  const int num_w = d.w + 2 * pad - d.kw;
  PS_CHECK(num_h >= 0 && num_h % stride == 0 && num_w >= 0 && num_w % stride == 0,
           "conv2d: non-integer output size for input ", shape_str(x), ", kernel ",
           shape_str(w), ", stride ", stride, ", pad ", pad);
  d.out_h = num_h / stride + 1;
  d.out_w = num_w / stride + 1;
  return d;
}

void im2col(const float* x, const Conv2dDims& d, float* cols) {
  const int out_n = d.out_h * d.out_w;
  for (int c = 0; c < d.c_in; ++c) {
    const float* plane = x + static_cast<std::size_t>(c) * d.h * d.w;
    for (int ky = 0; ky < d.kh; ++ky) {
      for (int kx = 0; kx < d.kw; ++kx) {
        float* row = cols + (static_cast<std::size_t>(c) * d.kh * d.kw +
                             static_cast<std::size_t>(ky) * d.kw + kx) * out_n;
        for (int oy = 0; oy < d.out_h; ++oy) {
          const int y = oy * d.stride - d.pad + ky;
          float* dst = row + static_cast<std::size_t>(oy) * d.out_w;
          if (y < 0 || y >= d.h) {
            std::fill(dst, dst + d.out_w, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(y) * d.w;
          for (int ox = 0; ox < d.out_w; ++ox) {
            const int xx = ox * d.stride - d.pad + kx;
            dst[ox] = (xx >= 0 && xx < d.w) ? src[xx] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_acc(const float* cols, const Conv2dDims& d, float* dx) {
  const int out_n = d.out_h * d.out_w;
  for (int c = 0; c < d.c_in; ++c) {
    float* plane = dx + static_cast<std::size_t>(c) * d.h * d.w;
    for (int ky = 0; ky < d.kh; ++ky) {
      for (int kx = 0; kx < d.kw; ++kx) {
        const float* row = cols + (static_cast<std::size_t>(c) * d.kh * d.kw +
                                   static_cast<std::size_t>(ky) * d.kw + kx) * out_n;
        for (int oy = 0; oy < d.out_h; ++oy) {
          const int y = oy * d.stride - d.pad + ky;
          if (y < 0 || y >= d.h) continue;
          float* dst = plane + static_cast<std::size_t>(y) * d.w;
          const float* src = row + static_cast<std::size_t>(oy) * d.out_w;
          for (int ox = 0; ox < d.out_w; ++ox) {
            const int xx = ox * d.stride - d.pad + kx;
            if (xx >= 0 && xx < d.w) dst[xx] += src[ox];
          }
        }
      }
    }
  }
}

double pairwise_sum(const float* v, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += v[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(v, half) + pairwise_sum(v + half, n - half);
}

void softmax2d(const float* logits, std::size_t n, float* out) {
  double m = logits[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, static_cast<double>(logits[i]));
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(static_cast<double>(logits[i]) - m);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = static_cast<float>(std::exp(static_cast<double>(logits[i]) - m) / s);
  }
}

}  // namespace kernels

// --- op builders ------------------------------------------------------------------

namespace {

Graph& same_graph(const Tensor& a, const Tensor& b) {
  PS_CHECK(a.graph() != nullptr && a.graph() == b.graph(),
           "operands must belong to the same graph");
  return *a.graph();
}

enum class BinOp { add, sub, mul, div };

const char* bin_name(BinOp op) {
  switch (op) {
    case BinOp::add: return "add";
    case BinOp::sub: return "sub";
    case BinOp::mul: return "mul";
    case BinOp::div: return "div";
  }
  return "?";
}

float bin_eval(BinOp op, float x, float y) {
  switch (op) {
    case BinOp::add: return x + y;
    case BinOp::sub: return x - y;
    case BinOp::mul: return x * y;
    case BinOp::div: return x / y;
  }
  return 0.0f;
}

Tensor binary_op(BinOp op, const Tensor& a, const Tensor& b) {
  Graph& g = same_graph(a, b);
  const Node& na = g.node(a.id());
  const Node& nb = g.node(b.id());
  const bool a_scalar = na.values.size() == 1;
  const bool b_scalar = nb.values.size() == 1;
  PS_CHECK(na.shape == nb.shape || a_scalar || b_scalar,
           bin_name(op), ": shape mismatch (non-broadcastable): ", shape_str(na.shape),
           " vs ", shape_str(nb.shape));

  Node out;
  out.shape = a_scalar && !b_scalar ? nb.shape : na.shape;
  out.op = bin_name(op);
  out.requires_grad = na.requires_grad || nb.requires_grad;
  const std::size_t n = static_cast<std::size_t>(numel(out.shape));
  out.values = pool_acquire(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float x = na.values[a_scalar ? 0 : i];
    const float y = nb.values[b_scalar ? 0 : i];
    out.values[i] = bin_eval(op, x, y);
  }

  if (out.requires_grad) {
    const int ia = a.id(), ib = b.id();
    out.backward_fn = [op, ia, ib, a_scalar, b_scalar](Graph& gr, const Node& self) {
      Node& pa = gr.node(ia);
      Node& pb = gr.node(ib);
      const std::size_t count = self.values.size();
      for (std::size_t i = 0; i < count; ++i) {
        const float go = self.grad[i];
        const float x = pa.values[a_scalar ? 0 : i];
        const float y = pb.values[b_scalar ? 0 : i];
        float gx = 0.0f, gy = 0.0f;
        switch (op) {
          case BinOp::add: gx = go; gy = go; break;
          case BinOp::sub: gx = go; gy = -go; break;
          case BinOp::mul: gx = go * y; gy = go * x; break;
          case BinOp::div: gx = go / y; gy = -go * x / (y * y); break;
        }
        if (pa.requires_grad) pa.grad[a_scalar ? 0 : i] += gx;
        if (pb.requires_grad) pb.grad[b_scalar ? 0 : i] += gy;
      }
    };
  }
  return g.emplace(std::move(out));
}

template <typename Fwd, typename Bwd>
Tensor unary_op(const char* name, const Tensor& x, Fwd fwd, Bwd bwd_factor) {
  // bwd_factor(input, output) -> local derivative
  Graph& g = *x.graph();
  const Node& nx = g.node(x.id());
  Node out;
  out.shape = nx.shape;
  out.op = name;
  out.requires_grad = nx.requires_grad;
  out.values = pool_acquire(nx.values.size());
  for (std::size_t i = 0; i < nx.values.size(); ++i) out.values[i] = fwd(nx.values[i]);
  if (out.requires_grad) {
    const int ix = x.id();
    out.backward_fn = [ix, bwd_factor](Graph& gr, const Node& self) {
      Node& px = gr.node(ix);
      for (std::size_t i = 0; i < self.values.size(); ++i) {
        px.grad[i] += self.grad[i] * bwd_factor(px.values[i], self.values[i]);
      }
    };
  }
  return g.emplace(std::move(out));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(BinOp::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(BinOp::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(BinOp::mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary_op(BinOp::div, a, b); }

Tensor add(const Tensor& a, float b) { return add(a, a.graph()->constant(b)); }
Tensor sub(const Tensor& a, float b) { return sub(a, a.graph()->constant(b)); }
Tensor sub(float a, const Tensor& b) { return sub(b.graph()->constant(a), b); }
Tensor mul(const Tensor& a, float b) { return mul(a, a.graph()->constant(b)); }
Tensor div(const Tensor& a, float b) { return div(a, a.graph()->constant(b)); }
Tensor div(float a, const Tensor& b) { return div(b.graph()->constant(a), b); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  Graph& g = same_graph(a, b);
  const Node& na = g.node(a.id());
  const Node& nb = g.node(b.id());
  PS_CHECK(na.shape.size() == 2 && nb.shape.size() == 2,
           "matmul: operands must be rank-2, got ", shape_str(na.shape), " and ",
           shape_str(nb.shape));
  PS_CHECK(na.shape[1] == nb.shape[0], "matmul: inner dimensions differ: ",
           shape_str(na.shape), " vs ", shape_str(nb.shape));
  const int m = na.shape[0], k = na.shape[1], n = nb.shape[1];

  Node out;
  out.shape = {m, n};
  out.op = "matmul";
  out.requires_grad = na.requires_grad || nb.requires_grad;
  out.values = pool_acquire(static_cast<std::size_t>(m) * n);
  std::fill(out.values.begin(), out.values.end(), 0.0f);
  kernels::sgemm_acc(na.values.data(), nb.values.data(), out.values.data(), m, k, n);

  if (out.requires_grad) {
    const int ia = a.id(), ib = b.id();
    out.backward_fn = [ia, ib, m, k, n](Graph& gr, const Node& self) {
      Node& pa = gr.node(ia);
      Node& pb = gr.node(ib);
      // dA += dC * B^T ; dB += A^T * dC
      if (pa.requires_grad) {
        kernels::sgemm_abt_acc(self.grad.data(), pb.values.data(), pa.grad.data(), m, n, k);
      }
      if (pb.requires_grad) {
        kernels::sgemm_atb_acc(pa.values.data(), self.grad.data(), pb.grad.data(), m, k, n);
      }
    };
  }
  return g.emplace(std::move(out));
}

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad) {
  Graph& g = same_graph(x, w);
  const Node& nx = g.node(x.id());
  const Node& nw = g.node(w.id());
  const kernels::Conv2dDims d = kernels::conv2d_dims(nx.shape, nw.shape, stride, pad);
  const int kk = d.c_in * d.kh * d.kw;
  const int out_n = d.out_h * d.out_w;

  auto cols = std::shared_ptr<std::vector<float>>(
      new std::vector<float>(pool_acquire(static_cast<std::size_t>(kk) * out_n)),
      [](std::vector<float>* p) {
        BufferPool::local().release(std::move(*p));
        delete p;
      });
  kernels::im2col(nx.values.data(), d, cols->data());

  Node out;
  out.shape = {d.c_out, d.out_h, d.out_w};
  out.op = "conv2d";
  out.requires_grad = nx.requires_grad || nw.requires_grad;
  out.values = pool_acquire(static_cast<std::size_t>(d.c_out) * out_n);
  std::fill(out.values.begin(), out.values.end(), 0.0f);
  kernels::sgemm_acc(nw.values.data(), cols->data(), out.values.data(), d.c_out, kk, out_n);

  if (out.requires_grad) {
    const int ix = x.id(), iw = w.id();
    out.backward_fn = [ix, iw, d, kk, out_n, cols](Graph& gr, const Node& self) {
      Node& px = gr.node(ix);
      Node& pw = gr.node(iw);
      if (pw.requires_grad) {
        // dW[C_out, kk] += dOut[C_out, out_n] * cols[kk, out_n]^T
        kernels::sgemm_abt_acc(self.grad.data(), cols->data(), pw.grad.data(), d.c_out,
                               out_n, kk);
      }
      if (px.requires_grad) {
        std::vector<float> dcols = pool_acquire(static_cast<std::size_t>(kk) * out_n);
        std::fill(dcols.begin(), dcols.end(), 0.0f);
        // dCols[kk, out_n] += W[C_out, kk]^T * dOut[C_out, out_n]
        kernels::sgemm_atb_acc(pw.values.data(), self.grad.data(), dcols.data(), d.c_out,
                               kk, out_n);
        kernels::col2im_acc(dcols.data(), d, px.grad.data());
        BufferPool::local().release(std::move(dcols));
      }
    };
  }
  return g.emplace(std::move(out));
}

Tensor bias_add(const Tensor& x, const Tensor& b) {
  Graph& g = same_graph(x, b);
  const Node& nx = g.node(x.id());
  const Node& nb = g.node(b.id());
  PS_CHECK(nx.shape.size() == 3, "bias_add: input must be [C,H,W], got ", shape_str(nx.shape));
  PS_CHECK(nb.shape.size() == 1 && nb.shape[0] == nx.shape[0],
           "bias_add: bias shape ", shape_str(nb.shape), " does not match channels of ",
           shape_str(nx.shape));
  const int c = nx.shape[0];
  const std::size_t hw = static_cast<std::size_t>(nx.shape[1]) * nx.shape[2];

  Node out;
  out.shape = nx.shape;
  out.op = "bias_add";
  out.requires_grad = nx.requires_grad || nb.requires_grad;
  out.values = pool_acquire(nx.values.size());
  for (int ch = 0; ch < c; ++ch) {
    const float bv = nb.values[static_cast<std::size_t>(ch)];
    const float* src = nx.values.data() + static_cast<std::size_t>(ch) * hw;
    float* dst = out.values.data() + static_cast<std::size_t>(ch) * hw;
    for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] + bv;
  }

  if (out.requires_grad) {
    const int ix = x.id(), ib = b.id();
    out.backward_fn = [ix, ib, c, hw](Graph& gr, const Node& self) {
      Node& px = gr.node(ix);
      Node& pb = gr.node(ib);
      for (int ch = 0; ch < c; ++ch) {
        const float* go = self.grad.data() + static_cast<std::size_t>(ch) * hw;
        if (px.requires_grad) {
          float* gx = px.grad.data() + static_cast<std::size_t>(ch) * hw;
          for (std::size_t i = 0; i < hw; ++i) gx[i] += go[i];
        }
        if (pb.requires_grad) {
          pb.grad[static_cast<std::size_t>(ch)] +=
              static_cast<float>(kernels::pairwise_sum(go, hw));
        }
      }
    };
  }
  return g.emplace(std::move(out));
}

Tensor relu(const Tensor& x) {
  return unary_op(
      "relu", x, [](float v) { return v > 0.0f ? v : 0.0f; },
      [](float in, float) { return in > 0.0f ? 1.0f : 0.0f; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      "sigmoid", x,
      [](float v) {
        const double z = static_cast<double>(v);
        const double y = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                                  : std::exp(z) / (1.0 + std::exp(z));
        return static_cast<float>(y);
      },
      [](float, float out) { return out * (1.0f - out); });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      "exp", x,
      [](float v) { return static_cast<float>(std::exp(static_cast<double>(v))); },
      [](float, float out) { return out; });
}

Tensor log(const Tensor& x) {
  const Node& nx = x.graph()->node(x.id());
  for (float v : nx.values) {
    PS_CHECK(v > 0.0f, "log: non-positive input value ", v);
  }
  return unary_op(
      "log", x,
      [](float v) { return static_cast<float>(std::log(static_cast<double>(v))); },
      [](float in, float) { return 1.0f / in; });
}

Tensor clamp(const Tensor& x, float lo, float hi) {
  PS_CHECK(lo <= hi, "clamp: lo ", lo, " > hi ", hi);
  return unary_op(
      "clamp", x,
      [lo, hi](float v) { return std::min(std::max(v, lo), hi); },
      [lo, hi](float in, float) { return (in > lo && in < hi) ? 1.0f : 0.0f; });
}

Tensor reshape(const Tensor& x, Shape shape) {
  Graph& g = *x.graph();
  const Node& nx = g.node(x.id());
  PS_CHECK(numel(shape) == numel(nx.shape), "reshape: cannot view ", shape_str(nx.shape),
           " as ", shape_str(shape));
  Node out;
  out.shape = std::move(shape);
  out.op = "reshape";
  out.requires_grad = nx.requires_grad;
  out.values = pool_copy({nx.values.data(), nx.values.size()});
  if (out.requires_grad) {
    const int ix = x.id();
    out.backward_fn = [ix](Graph& gr, const Node& self) {
      Node& px = gr.node(ix);
      for (std::size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i];
    };
  }
  return g.emplace(std::move(out));
}

Tensor sum(const Tensor& x) {
  Graph& g = *x.graph();
  const Node& nx = g.node(x.id());
  Node out;
  out.shape = {1};
  out.op = "sum";
  out.requires_grad = nx.requires_grad;
  out.values = {static_cast<float>(kernels::pairwise_sum(nx.values.data(), nx.values.size()))};
  if (out.requires_grad) {
    const int ix = x.id();
    out.backward_fn = [ix](Graph& gr, const Node& self) {
      Node& px = gr.node(ix);
      const float go = self.grad[0];
      for (std::size_t i = 0; i < px.grad.size(); ++i) px.grad[i] += go;
    };
  }
  return g.emplace(std::move(out));
}

Tensor max_reduce(const Tensor& x) {
  Graph& g = *x.graph();
  const Node& nx = g.node(x.id());
  PS_CHECK(!nx.values.empty(), "max_reduce: empty tensor");
  std::size_t arg = 0;
  float best = nx.values[0];
  for (std::size_t i = 1; i < nx.values.size(); ++i) {
    if (nx.values[i] > best) {
      best = nx.values[i];
      arg = i;
    }
  }
  Node out;
  out.shape = {1};
  out.op = "max_reduce";
  out.requires_grad = nx.requires_grad;
  out.values = {best};
  if (out.requires_grad) {
    const int ix = x.id();
    out.backward_fn = [ix, arg](Graph& gr, const Node& self) {
      gr.node(ix).grad[arg] += self.grad[0];
    };
  }
  return g.emplace(std::move(out));
}

Tensor avgpool2d(const Tensor& x, int k, int stride) {
  Graph& g = *x.graph();
  const Node& nx = g.node(x.id());
  PS_CHECK(nx.shape.size() == 3, "avgpool2d: input must be [C,H,W], got ", shape_str(nx.shape));
  PS_CHECK(k >= 1 && stride >= 1, "avgpool2d: window and stride must be >= 1");
  const int c = nx.shape[0], h = nx.shape[1], w = nx.shape[2];
  PS_CHECK(h >= k && w >= k && (h - k) % stride == 0 && (w - k) % stride == 0,
           "avgpool2d: non-integer output size for input ", shape_str(nx.shape),
           ", window ", k, ", stride ", stride);
  const int oh = (h - k) / stride + 1;
  const int ow = (w - k) / stride + 1;
  const float inv = 1.0f / static_cast<float>(k * k);

  Node out;
  out.shape = {c, oh, ow};
  out.op = "avgpool2d";
  out.requires_grad = nx.requires_grad;
  out.values = pool_acquire(static_cast<std::size_t>(c) * oh * ow);
  for (int ch = 0; ch < c; ++ch) {
    const float* plane = nx.values.data() + static_cast<std::size_t>(ch) * h * w;
    float* dst = out.values.data() + static_cast<std::size_t>(ch) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double s = 0.0;
        for (int ky = 0; ky < k; ++ky) {
          const float* row = plane + static_cast<std::size_t>(oy * stride + ky) * w +
                             ox * stride;
          for (int kx = 0; kx < k; ++kx) s += row[kx];
        }
        dst[static_cast<std::size_t>(oy) * ow + ox] = static_cast<float>(s) * inv;
      }
    }
  }

  if (out.requires_grad) {
    const int ix = x.id();
    out.backward_fn = [ix, c, h, w, oh, ow, k, stride, inv](Graph& gr, const Node& self) {
      Node& px = gr.node(ix);
      for (int ch = 0; ch < c; ++ch) {
        float* gx = px.grad.data() + static_cast<std::size_t>(ch) * h * w;
        const float* go = self.grad.data() + static_cast<std::size_t>(ch) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox) {
            const float v = go[static_cast<std::size_t>(oy) * ow + ox] * inv;
            for (int ky = 0; ky < k; ++ky) {
              float* row = gx + static_cast<std::size_t>(oy * stride + ky) * w + ox * stride;
              for (int kx = 0; kx < k; ++kx) row[kx] += v;
            }
          }
        }
      }
    };
  }
  return g.emplace(std::move(out));
}

Tensor global_avgpool(const Tensor& x) {
  Graph& g = *x.graph();
  const Node& nx = g.node(x.id());
  PS_CHECK(nx.shape.size() == 3, "global_avgpool: input must be [C,H,W], got ",
           shape_str(nx.shape));
  const int c = nx.shape[0];
  const std::size_t hw = static_cast<std::size_t>(nx.shape[1]) * nx.shape[2];
  const float inv = 1.0f / static_cast<float>(hw);

  Node out;
  out.shape = {c};
  out.op = "global_avgpool";
  out.requires_grad = nx.requires_grad;
  out.values = pool_acquire(static_cast<std::size_t>(c));
  for (int ch = 0; ch < c; ++ch) {
    out.values[static_cast<std::size_t>(ch)] = static_cast<float>(
        kernels::pairwise_sum(nx.values.data() + static_cast<std::size_t>(ch) * hw, hw) * inv);
  }

  if (out.requires_grad) {
    const int ix = x.id();
    out.backward_fn = [ix, c, hw, inv](Graph& gr, const Node& self) {
      Node& px = gr.node(ix);
      for (int ch = 0; ch < c; ++ch) {
        const float v = self.grad[static_cast<std::size_t>(ch)] * inv;
        float* gx = px.grad.data() + static_cast<std::size_t>(ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) gx[i] += v;
      }
    };
  }
  return g.emplace(std::move(out));
}

Tensor spatial_softmax_op(const Tensor& x) {
  Graph& g = *x.graph();
  const Node& nx = g.node(x.id());
  PS_CHECK(nx.shape.size() == 2, "spatial_softmax: input must be [h,w], got ",
           shape_str(nx.shape));
  PS_CHECK(!nx.values.empty(), "spatial_softmax: empty map");

  Node out;
  out.shape = nx.shape;
  out.op = "spatial_softmax";
  out.requires_grad = nx.requires_grad;
  out.values = pool_acquire(nx.values.size());
  kernels::softmax2d(nx.values.data(), nx.values.size(), out.values.data());

  if (out.requires_grad) {
    const int ix = x.id();
    out.backward_fn = [ix](Graph& gr, const Node& self) {
      Node& px = gr.node(ix);
      double dot = 0.0;
      for (std::size_t i = 0; i < self.values.size(); ++i) {
        dot += static_cast<double>(self.grad[i]) * self.values[i];
      }
      for (std::size_t i = 0; i < self.values.size(); ++i) {
        px.grad[i] += static_cast<float>(
            static_cast<double>(self.values[i]) * (static_cast<double>(self.grad[i]) - dot));
      }
    };
  }
  return g.emplace(std::move(out));
}

}  // namespace ps::ad
