#ifndef POINTSENTINEL_TENSOR_HPP
#define POINTSENTINEL_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pointsentinel/common.hpp"

namespace ps::ad {

// Row-major float32 tensors on a per-graph tape. A Graph and its Tensors are
// confined to one thread during forward/backward; distinct graphs may run on
// distinct threads concurrently.

using Shape = std::vector<int>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Graph;

// Lightweight handle: (graph, node id). Valid until the graph is cleared or
// destroyed.
class Tensor {
 public:
  Tensor() = default;

  const Shape& shape() const;
  std::span<const float> values() const;
  std::span<const float> grad() const;
  bool requires_grad() const;
  int id() const { return id_; }
  Graph* graph() const { return graph_; }
  std::int64_t size() const { return numel(shape()); }

  // Value of a single-element tensor.
  float item() const;

 private:
  friend class Graph;
  Tensor(Graph* g, int id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  int id_ = -1;
};

struct Node {
  Shape shape;
  std::vector<float> values;
  std::vector<float> grad;  // sized lazily by backward()
  bool requires_grad = false;
  const char* op = "leaf";
  // Propagates this node's grad into its parents. Null for leaves.
  std::function<void(Graph&, const Node&)> backward_fn;
};

class Graph {
 public:
  Graph() = default;
  ~Graph() { clear(); }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Tensor leaf(Shape shape, std::vector<float> values, bool requires_grad = false);
  Tensor leaf(Shape shape, std::span<const float> values, bool requires_grad = false);
  Tensor constant(float value);
  Tensor zeros(Shape shape, bool requires_grad = false);

  std::size_t node_count() const { return nodes_.size(); }
  // Drops all nodes and recycles their buffers. Invalidates Tensor handles.
  void clear();

  // Reverse pass from a scalar loss node. Gradients accumulate; call
  // zero_grad() between repeated passes to reproduce identical values.
  void backward(const Tensor& loss);
  void zero_grad();

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  // Used by op builders.
  Tensor emplace(Node node);

 private:
  std::vector<Node> nodes_;
};

// --- elementwise arithmetic (equal shapes, or one side single-element) ------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// Convenience wrappers against float constants.
Tensor add(const Tensor& a, float b);
Tensor sub(const Tensor& a, float b);
Tensor sub(float a, const Tensor& b);
Tensor mul(const Tensor& a, float b);
Tensor div(const Tensor& a, float b);
Tensor div(float a, const Tensor& b);

// --- linear algebra ----------------------------------------------------------
// a: [m, k], b: [k, n] -> [m, n]
Tensor matmul(const Tensor& a, const Tensor& b);

// x: [C_in, H, W], w: [C_out, C_in, kh, kw]; cross-correlation, zero padding.
// (H + 2*pad - kh) must be divisible by stride (same for W).
Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad);

// x: [C, H, W], b: [C]; adds b[c] to every spatial position of channel c.
Tensor bias_add(const Tensor& x, const Tensor& b);

// --- activations and shape ops ----------------------------------------------
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);  // errors on non-positive input
Tensor clamp(const Tensor& x, float lo, float hi);
Tensor reshape(const Tensor& x, Shape shape);

// --- reductions ---------------------------------------------------------------
Tensor sum(const Tensor& x);         // -> [1], pairwise summation
Tensor max_reduce(const Tensor& x);  // -> [1]; grad routed to first max (row-major)

// --- pooling -------------------------------------------------------------------
// x: [C, H, W]; square window k, stride; no padding; output dims must be integral.
Tensor avgpool2d(const Tensor& x, int k, int stride);
// x: [C, H, W] -> [C]; mean over all spatial positions.
Tensor global_avgpool(const Tensor& x);

// Spatial softmax over the whole map, computed in double internally with
// max-subtraction. x: [h, w] -> [h, w]; output entries positive, sum 1.
Tensor spatial_softmax_op(const Tensor& x);

// --- plain float kernels shared by graph ops and inference paths -------------
namespace kernels {
// C[m,n] += A[m,k] * B[k,n], all row-major.
void sgemm_acc(const float* a, const float* b, float* c, int m, int k, int n);
// C[m,k] += A[m,n] * B[k,n]^T
void sgemm_abt_acc(const float* a, const float* b, float* c, int m, int n, int k);
// C[k,n] += A[m,k]^T * B[m,n]
void sgemm_atb_acc(const float* a, const float* b, float* c, int m, int k, int n);

struct Conv2dDims {
  int c_in, h, w;
  int c_out, kh, kw;
  int stride, pad;
  int out_h, out_w;
};
Conv2dDims conv2d_dims(const Shape& x, const Shape& w, int stride, int pad);
void im2col(const float* x, const Conv2dDims& d, float* cols);
void col2im_acc(const float* cols, const Conv2dDims& d, float* dx);

void softmax2d(const float* logits, std::size_t n, float* out);
double pairwise_sum(const float* v, std::size_t n);
}  // namespace kernels

}  // namespace ps::ad

#endif  // POINTSENTINEL_TENSOR_HPP
