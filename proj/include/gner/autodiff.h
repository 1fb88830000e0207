#ifndef GNER_AUTODIFF_H_
#define GNER_AUTODIFF_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gner/tensor.h"

namespace gner {

// Reverse-mode automatic differentiation. Graphs are built eagerly while
// the forward computation runs and are discarded after each step.
//
// Shape rules:
//   matmul            [m x k] or [k]  @  [k x n]  ->  [m x n] or [n]
//   add               equal shapes, or [.. x n] + [n] (bias on last axis)
//   mul_elementwise   equal shapes
//   concat_last_axis  equal rank and leading extent
//   sigmoid/tanh/relu any shape
//   slice             rank 1 (axis 0) or rank 2 (axis 0 or 1), [begin, end)
//   max_over_axis     rank 2, axis 0 -> [cols], axis 1 -> [rows]
//   sum               any shape -> [1]
//   stack             rank-1 inputs [d] -> [n x d]; rank-2 inputs [r_i x d]
//                     are joined along axis 0 -> [sum r_i x d]

enum class Op {
  kLeaf,
  kMatmul,
  kAdd,
  kMul,
  kConcat,
  kSigmoid,
  kTanh,
  kRelu,
  kSlice,
  kMaxOverAxis,
  kSum,
  kStack,
  kCustom,
};

std::string_view OpName(Op op);
// Parses an operator tag such as "matmul" or "concat_last_axis".
Op OpFromName(std::string_view tag);

struct Node;
using Var = std::shared_ptr<Node>;

// Receives gradients for the parents of a node during the backward pass.
// Grad(i) returns a zero-initialised buffer on first use, or nullptr when
// parent i does not require a gradient.
class GradSink {
 public:
  virtual ~GradSink() = default;
  virtual Tensor* Grad(size_t parent) = 0;
};

using BackwardFn =
    std::function<void(const Node& node, const Tensor& grad, GradSink& sink)>;

struct OpArgs {
  size_t axis = 0;
  size_t begin = 0;
  size_t end = 0;
};

struct Node {
  Tensor value;
  Op op = Op::kLeaf;
  std::vector<Var> parents;
  bool requires_grad = false;
  OpArgs args;
  // max_over_axis: winning index per output element.
  std::vector<size_t> argmax;
  // kCustom only.
  BackwardFn custom_backward;
};

// Trainable leaf.
Var Parameter(Tensor value);
// Non-trainable leaf.
Var Constant(Tensor value);

Var Apply(Op op, std::span<const Var> inputs, const OpArgs& args = {});
Var Apply(std::string_view tag, std::span<const Var> inputs,
          const OpArgs& args = {});

Var MatMul(const Var& a, const Var& b);
Var Add(const Var& a, const Var& b);
Var Mul(const Var& a, const Var& b);
Var Concat(std::span<const Var> inputs);
Var Sigmoid(const Var& x);
Var Tanh(const Var& x);
Var Relu(const Var& x);
Var Slice(const Var& x, size_t axis, size_t begin, size_t end);
Var MaxOverAxis(const Var& x, size_t axis);
Var Sum(const Var& x);
Var Stack(std::span<const Var> inputs);

// Node with a caller-supplied backward rule. Used by layers whose gradient
// has a closed form (the CRF likelihood).
Var MakeCustom(Tensor value, std::vector<Var> parents, BackwardFn backward);

// Disables graph recording on the current thread for its lifetime. Nodes
// built under the guard hold values only, so memory is released as soon as
// intermediate results go out of scope.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool GradEnabled();

class Gradients {
 public:
  // Gradient of the root with respect to `node`, or nullptr when the node was
  // unreachable or does not require a gradient.
  const Tensor* Find(const Node* node) const;
  const Tensor* Find(const Var& node) const { return Find(node.get()); }
  // Like Find, but returns zeros shaped like the node when absent.
  Tensor Of(const Var& node) const;

  size_t size() const { return grads_.size(); }

 private:
  friend Gradients Backward(const Var& root, bool retain_intermediate);
  std::unordered_map<const Node*, Tensor> grads_;
};

// Computes d(root)/d(node) for every node that requires a gradient and is
// reachable from `root`. Contributions from multiple uses are summed. With
// retain_intermediate == false only leaf gradients are kept.
Gradients Backward(const Var& root, bool retain_intermediate = true);

// Hash of the activation pattern (relu signs, max winners) seen while the
// recorder is installed on this thread. Two forward passes with equal hashes
// took the same branch at every kink.
class KinkRecorder {
 public:
  KinkRecorder();
  ~KinkRecorder();
  KinkRecorder(const KinkRecorder&) = delete;
  KinkRecorder& operator=(const KinkRecorder&) = delete;

  uint64_t hash() const { return hash_; }
  void Mix(uint64_t value);

 private:
  KinkRecorder* previous_;
  uint64_t hash_ = 1469598103934665603ULL;
};

struct GradientCheckResult {
  double max_relative_error = 0.0;
  size_t checked = 0;
  size_t skipped_kinks = 0;
};

// Compares analytic gradients with central differences at `samples`
// randomly chosen scalar parameters. Samples whose +/-eps evaluations cross
// a relu or max kink are skipped. Throws on a non-finite loss.
GradientCheckResult CheckGradient(const std::function<Var()>& loss_fn,
                                  std::span<const Var> params, double eps,
                                  size_t samples, uint64_t seed = 0);

}  // namespace gner

#endif  // GNER_AUTODIFF_H_
