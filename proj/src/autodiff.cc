#include "gner/autodiff.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace gner {
namespace {

thread_local bool g_grad_enabled = true;
thread_local KinkRecorder* g_kink_recorder = nullptr;

[[noreturn]] void ShapeError(Op op, const std::string& expected,
                             const Shape& actual) {
  throw Error(std::string(OpName(op)) + ": expected " + expected + ", got " +
              ShapeString(actual));
}

void RequireArity(Op op, std::span<const Var> inputs, size_t n) {
  if (inputs.size() != n) {
    throw Error(std::string(OpName(op)) + ": expected " + std::to_string(n) +
                " inputs, got " + std::to_string(inputs.size()));
  }
  for (const Var& v : inputs) {
    if (!v) throw Error(std::string(OpName(op)) + ": null input");
  }
}

double SigmoidScalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor ForwardMatmul(const Tensor& a, const Tensor& b) {
  if (b.rank() != 2) ShapeError(Op::kMatmul, "rank-2 right operand", b.shape());
  if (a.rank() != 1 && a.rank() != 2) {
    ShapeError(Op::kMatmul, "rank-1 or rank-2 left operand", a.shape());
  }
  if (a.cols() != b.rows()) {
    ShapeError(Op::kMatmul,
               "left " + ShapeString(a.shape()) + " inner dim to match right",
               b.shape());
  }
  Shape out_shape = a.rank() == 1 ? Shape{b.cols()} : Shape{a.rows(), b.cols()};
  Tensor out(out_shape);
  out.AsMatrix().noalias() = a.AsMatrix() * b.AsMatrix();
  return out;
}

Tensor ForwardAdd(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  if (a.shape() == b.shape()) {
    for (size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
  }
  if (b.rank() == 1 && a.rank() >= 1 && b.size() == a.cols()) {
    out.AsMatrix().rowwise() += b.AsMatrix().row(0);
    return out;
  }
  ShapeError(Op::kAdd, ShapeString(a.shape()) + " or bias [" +
                           std::to_string(a.cols()) + "]",
             b.shape());
}

Tensor ForwardConcat(std::span<const Var> inputs) {
  if (inputs.empty()) throw Error("concat_last_axis: no inputs");
  const Tensor& first = inputs[0]->value;
  if (first.rank() != 1 && first.rank() != 2) {
    ShapeError(Op::kConcat, "rank-1 or rank-2 inputs", first.shape());
  }
  size_t total = 0;
  for (const Var& v : inputs) {
    const Tensor& t = v->value;
    if (t.rank() != first.rank() || t.rows() != first.rows()) {
      ShapeError(Op::kConcat,
                 "leading shape matching " + ShapeString(first.shape()),
                 t.shape());
    }
    total += t.cols();
  }
  size_t rows = first.rows();
  Shape shape = first.rank() == 1 ? Shape{total} : Shape{rows, total};
  Tensor out(shape);
  size_t offset = 0;
  for (const Var& v : inputs) {
    const Tensor& t = v->value;
    out.AsMatrix().middleCols(offset, t.cols()) = t.AsMatrix();
    offset += t.cols();
  }
  return out;
}

Tensor ForwardSlice(const Tensor& x, const OpArgs& args) {
  if (x.rank() != 1 && x.rank() != 2) {
    ShapeError(Op::kSlice, "rank-1 or rank-2 input", x.shape());
  }
  if (args.axis >= x.rank()) {
    throw Error("slice: axis " + std::to_string(args.axis) +
                " out of range for " + ShapeString(x.shape()));
  }
  size_t extent = x.shape()[args.axis];
  if (args.begin >= args.end || args.end > extent) {
    throw Error("slice: range [" + std::to_string(args.begin) + ", " +
                std::to_string(args.end) + ") invalid for " +
                ShapeString(x.shape()) + " axis " + std::to_string(args.axis));
  }
  size_t n = args.end - args.begin;
  if (x.rank() == 1) {
    return Tensor({n}, std::vector<double>(x.data() + args.begin,
                                           x.data() + args.end));
  }
  if (args.axis == 0) {
    Tensor out({n, x.cols()});
    out.AsMatrix() = x.AsMatrix().middleRows(args.begin, n);
    return out;
  }
  Tensor out({x.rows(), n});
  out.AsMatrix() = x.AsMatrix().middleCols(args.begin, n);
  return out;
}

Tensor ForwardStack(std::span<const Var> inputs) {
  if (inputs.empty()) throw Error("stack: no inputs");
  const Tensor& first = inputs[0]->value;
  if (first.rank() != 1 && first.rank() != 2) {
    ShapeError(Op::kStack, "rank-1 or rank-2 inputs", first.shape());
  }
  size_t rows = 0;
  for (const Var& v : inputs) {
    const Tensor& t = v->value;
    if (t.rank() != first.rank() || t.cols() != first.cols()) {
      ShapeError(Op::kStack, "shapes matching " + ShapeString(first.shape()),
                 t.shape());
    }
    rows += t.rows();
  }
  Tensor out({rows, first.cols()});
  double* dst = out.data();
  for (const Var& v : inputs) {
    std::copy(v->value.data(), v->value.data() + v->value.size(), dst);
    dst += v->value.size();
  }
  return out;
}

Tensor ForwardMax(Node& node, const Tensor& x, size_t axis) {
  if (x.rank() != 2) ShapeError(Op::kMaxOverAxis, "rank-2 input", x.shape());
  if (axis > 1) throw Error("max_over_axis: axis must be 0 or 1");
  size_t rows = x.rows(), cols = x.cols();
  size_t out_n = axis == 0 ? cols : rows;
  size_t reduce_n = axis == 0 ? rows : cols;
  if (reduce_n == 0) throw Error("max_over_axis: empty reduction axis");
  Tensor out({out_n});
  node.argmax.assign(out_n, 0);
  for (size_t o = 0; o < out_n; ++o) {
    size_t best = 0;
    double best_v = axis == 0 ? x.at(0, o) : x.at(o, 0);
    for (size_t r = 1; r < reduce_n; ++r) {
      double v = axis == 0 ? x.at(r, o) : x.at(o, r);
      if (v > best_v) {
        best_v = v;
        best = r;
      }
    }
    out[o] = best_v;
    node.argmax[o] = best;
    if (g_kink_recorder) g_kink_recorder->Mix(best);
  }
  return out;
}

void ComputeForward(Node& node, std::span<const Var> in) {
  switch (node.op) {
    case Op::kMatmul:
      RequireArity(node.op, in, 2);
      node.value = ForwardMatmul(in[0]->value, in[1]->value);
      break;
    case Op::kAdd:
      RequireArity(node.op, in, 2);
      node.value = ForwardAdd(in[0]->value, in[1]->value);
      break;
    case Op::kMul: {
      RequireArity(node.op, in, 2);
      const Tensor& a = in[0]->value;
      const Tensor& b = in[1]->value;
      if (a.shape() != b.shape()) ShapeError(node.op, ShapeString(a.shape()), b.shape());
      node.value = a;
      for (size_t i = 0; i < a.size(); ++i) node.value[i] *= b[i];
      break;
    }
    case Op::kConcat:
      node.value = ForwardConcat(in);
      break;
    case Op::kSigmoid:
      RequireArity(node.op, in, 1);
      node.value = in[0]->value;
      for (double& v : node.value.values()) v = SigmoidScalar(v);
      break;
    case Op::kTanh:
      RequireArity(node.op, in, 1);
      node.value = in[0]->value;
      for (double& v : node.value.values()) v = std::tanh(v);
      break;
    case Op::kRelu:
      RequireArity(node.op, in, 1);
      node.value = in[0]->value;
      for (double& v : node.value.values()) {
        if (g_kink_recorder) g_kink_recorder->Mix(v > 0 ? 2 : (v == 0 ? 1 : 0));
        v = v > 0 ? v : 0.0;
      }
      break;
    case Op::kSlice:
      RequireArity(node.op, in, 1);
      node.value = ForwardSlice(in[0]->value, node.args);
      break;
    case Op::kMaxOverAxis:
      RequireArity(node.op, in, 1);
      node.value = ForwardMax(node, in[0]->value, node.args.axis);
      break;
    case Op::kSum: {
      RequireArity(node.op, in, 1);
      double s = 0;
      for (double v : in[0]->value.values()) s += v;
      node.value = Tensor::Scalar(s);
      break;
    }
    case Op::kStack:
      node.value = ForwardStack(in);
      break;
    case Op::kLeaf:
    case Op::kCustom:
      throw Error(std::string(OpName(node.op)) + " cannot be applied");
  }
}

// Parent gradients are only requested for parents that require them.
void ComputeBackward(const Node& node, const Tensor& g, GradSink& sink) {
  const auto& in = node.parents;
  switch (node.op) {
    case Op::kMatmul: {
      const Tensor& a = in[0]->value;
      const Tensor& b = in[1]->value;
      if (Tensor* ga = sink.Grad(0)) {
        ga->AsMatrix().noalias() += g.AsMatrix() * b.AsMatrix().transpose();
      }
      if (Tensor* gb = sink.Grad(1)) {
        gb->AsMatrix().noalias() += a.AsMatrix().transpose() * g.AsMatrix();
      }
      break;
    }
    case Op::kAdd: {
      if (Tensor* ga = sink.Grad(0)) ga->Accumulate(g);
      if (Tensor* gb = sink.Grad(1)) {
        if (gb->shape() == g.shape()) {
          gb->Accumulate(g);
        } else {
          gb->AsMatrix().row(0) += g.AsMatrix().colwise().sum();
        }
      }
      break;
    }
    case Op::kMul: {
      const Tensor& a = in[0]->value;
      const Tensor& b = in[1]->value;
      if (Tensor* ga = sink.Grad(0)) {
        for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * b[i];
      }
      if (Tensor* gb = sink.Grad(1)) {
        for (size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * a[i];
      }
      break;
    }
    case Op::kConcat: {
      size_t offset = 0;
      for (size_t p = 0; p < in.size(); ++p) {
        size_t c = in[p]->value.cols();
        if (Tensor* gp = sink.Grad(p)) {
          gp->AsMatrix() += g.AsMatrix().middleCols(offset, c);
        }
        offset += c;
      }
      break;
    }
    case Op::kSigmoid: {
      if (Tensor* gx = sink.Grad(0)) {
        const Tensor& y = node.value;
        for (size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * y[i] * (1 - y[i]);
      }
      break;
    }
    case Op::kTanh: {
      if (Tensor* gx = sink.Grad(0)) {
        const Tensor& y = node.value;
        for (size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * (1 - y[i] * y[i]);
      }
      break;
    }
    case Op::kRelu: {
      // Subgradient 0 at exactly 0.
      if (Tensor* gx = sink.Grad(0)) {
        const Tensor& x = in[0]->value;
        for (size_t i = 0; i < g.size(); ++i) {
          if (x[i] > 0) (*gx)[i] += g[i];
        }
      }
      break;
    }
    case Op::kSlice: {
      if (Tensor* gx = sink.Grad(0)) {
        const OpArgs& a = node.args;
        size_t n = a.end - a.begin;
        if (gx->rank() == 1) {
          for (size_t i = 0; i < n; ++i) (*gx)[a.begin + i] += g[i];
        } else if (a.axis == 0) {
          gx->AsMatrix().middleRows(a.begin, n) += g.AsMatrix();
        } else {
          gx->AsMatrix().middleCols(a.begin, n) += g.AsMatrix();
        }
      }
      break;
    }
    case Op::kMaxOverAxis: {
      if (Tensor* gx = sink.Grad(0)) {
        for (size_t o = 0; o < g.size(); ++o) {
          size_t r = node.argmax[o];
          if (node.args.axis == 0) {
            gx->at(r, o) += g[o];
          } else {
            gx->at(o, r) += g[o];
          }
        }
      }
      break;
    }
    case Op::kSum: {
      if (Tensor* gx = sink.Grad(0)) {
        for (double& v : gx->values()) v += g[0];
      }
      break;
    }
    case Op::kStack: {
      size_t offset = 0;
      for (size_t p = 0; p < in.size(); ++p) {
        size_t n = in[p]->value.size();
        if (Tensor* gp = sink.Grad(p)) {
          for (size_t i = 0; i < n; ++i) (*gp)[i] += g[offset + i];
        }
        offset += n;
      }
      break;
    }
    case Op::kCustom:
      node.custom_backward(node, g, sink);
      break;
    case Op::kLeaf:
      break;
  }
}

Var MakeLeaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

std::string_view OpName(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kMatmul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kMul: return "mul_elementwise";
    case Op::kConcat: return "concat_last_axis";
    case Op::kSigmoid: return "sigmoid";
    case Op::kTanh: return "tanh";
    case Op::kRelu: return "relu";
    case Op::kSlice: return "slice";
    case Op::kMaxOverAxis: return "max_over_axis";
    case Op::kSum: return "sum";
    case Op::kStack: return "stack";
    case Op::kCustom: return "custom";
  }
  return "unknown";
}

Op OpFromName(std::string_view tag) {
  static constexpr Op kApplicable[] = {
      Op::kMatmul, Op::kAdd,  Op::kMul,   Op::kConcat,      Op::kSigmoid, Op::kTanh,
      Op::kRelu,   Op::kSlice, Op::kMaxOverAxis, Op::kSum, Op::kStack};
  for (Op op : kApplicable) {
    if (OpName(op) == tag) return op;
  }
  throw Error("unknown operator tag '" + std::string(tag) + "'");
}

Var Parameter(Tensor value) { return MakeLeaf(std::move(value), true); }
Var Constant(Tensor value) { return MakeLeaf(std::move(value), false); }

Var Apply(Op op, std::span<const Var> inputs, const OpArgs& args) {
  for (const Var& v : inputs) {
    if (!v) throw Error(std::string(OpName(op)) + ": null input");
  }
  auto node = std::make_shared<Node>();
  node->op = op;
  node->args = args;
  ComputeForward(*node, inputs);
  if (g_grad_enabled) {
    for (const Var& v : inputs) node->requires_grad |= v->requires_grad;
    if (node->requires_grad) node->parents.assign(inputs.begin(), inputs.end());
  }
  if (!node->requires_grad) node->argmax.clear();
  return node;
}

Var Apply(std::string_view tag, std::span<const Var> inputs, const OpArgs& args) {
  return Apply(OpFromName(tag), inputs, args);
}

Var MatMul(const Var& a, const Var& b) {
  const Var in[] = {a, b};
  return Apply(Op::kMatmul, in);
}
Var Add(const Var& a, const Var& b) {
  const Var in[] = {a, b};
  return Apply(Op::kAdd, in);
}
Var Mul(const Var& a, const Var& b) {
  const Var in[] = {a, b};
  return Apply(Op::kMul, in);
}
Var Concat(std::span<const Var> inputs) { return Apply(Op::kConcat, inputs); }
Var Sigmoid(const Var& x) { return Apply(Op::kSigmoid, std::span(&x, 1)); }
Var Tanh(const Var& x) { return Apply(Op::kTanh, std::span(&x, 1)); }
Var Relu(const Var& x) { return Apply(Op::kRelu, std::span(&x, 1)); }
Var Slice(const Var& x, size_t axis, size_t begin, size_t end) {
  return Apply(Op::kSlice, std::span(&x, 1), OpArgs{axis, begin, end});
}
Var MaxOverAxis(const Var& x, size_t axis) {
  return Apply(Op::kMaxOverAxis, std::span(&x, 1), OpArgs{axis, 0, 0});
}
Var Sum(const Var& x) { return Apply(Op::kSum, std::span(&x, 1)); }
Var Stack(std::span<const Var> inputs) { return Apply(Op::kStack, inputs); }

Var MakeCustom(Tensor value, std::vector<Var> parents, BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->op = Op::kCustom;
  node->value = std::move(value);
  if (g_grad_enabled) {
    for (const Var& v : parents) node->requires_grad |= v->requires_grad;
    if (node->requires_grad) {
      node->parents = std::move(parents);
      node->custom_backward = std::move(backward);
    }
  }
  return node;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool GradEnabled() { return g_grad_enabled; }

const Tensor* Gradients::Find(const Node* node) const {
  auto it = grads_.find(node);
  return it == grads_.end() ? nullptr : &it->second;
}

Tensor Gradients::Of(const Var& node) const {
  if (const Tensor* g = Find(node)) return *g;
  return Tensor::ZerosLike(node->value);
}

namespace {

class NodeGradSink : public GradSink {
 public:
  NodeGradSink(const Node& node, std::unordered_map<const Node*, Tensor>& grads)
      : node_(node), grads_(grads) {}

  Tensor* Grad(size_t parent) override {
    const Node* p = node_.parents[parent].get();
    if (!p->requires_grad) return nullptr;
    auto [it, inserted] = grads_.try_emplace(p);
    if (inserted) it->second = Tensor::ZerosLike(p->value);
    return &it->second;
  }

 private:
  const Node& node_;
  std::unordered_map<const Node*, Tensor>& grads_;
};

}  // namespace

Gradients Backward(const Var& root, bool retain_intermediate) {
  if (!root) throw Error("backward: null root");
  if (root->value.size() != 1) {
    throw Error("backward: root must be scalar, got " +
                ShapeString(root->value.shape()));
  }
  Gradients result;
  if (!root->requires_grad) return result;

  // Iterative post-order DFS gives a topological order.
  std::vector<const Node*> order;
  std::unordered_map<const Node*, bool> visited;
  std::vector<std::pair<const Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited[root.get()] = true;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      const Node* p = node->parents[next++].get();
      if (p->requires_grad && !visited[p]) {
        visited[p] = true;
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  auto& grads = result.grads_;
  grads[root.get()] = Tensor(root->value.shape(), 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Node* node = *it;
    if (node->op == Op::kLeaf) continue;
    auto g = grads.find(node);
    if (g == grads.end()) continue;
    Tensor grad = retain_intermediate ? g->second : std::move(g->second);
    if (!retain_intermediate) grads.erase(g);
    NodeGradSink sink(*node, grads);
    ComputeBackward(*node, grad, sink);
  }
  return result;
}

KinkRecorder::KinkRecorder() : previous_(g_kink_recorder) {
  g_kink_recorder = this;
}
KinkRecorder::~KinkRecorder() { g_kink_recorder = previous_; }

void KinkRecorder::Mix(uint64_t value) {
  hash_ ^= value + 0x9e3779b97f4a7c15ULL + (hash_ << 6) + (hash_ >> 2);
}

GradientCheckResult CheckGradient(const std::function<Var()>& loss_fn,
                                  std::span<const Var> params, double eps,
                                  size_t samples, uint64_t seed) {
  if (eps <= 0) throw Error("check_gradient: eps must be positive");
  if (params.empty()) throw Error("check_gradient: no parameters");

  auto evaluate = [&](uint64_t* pattern) {
    KinkRecorder recorder;
    Var loss = loss_fn();
    if (loss->value.size() != 1 || !std::isfinite(loss->value[0])) {
      throw Error("check_gradient: loss is not a finite scalar");
    }
    if (pattern) *pattern = recorder.hash();
    return loss;
  };

  uint64_t base_pattern = 0;
  Var loss = evaluate(&base_pattern);
  Gradients grads = Backward(loss, false);

  size_t total = 0;
  for (const Var& p : params) total += p->value.size();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> pick(0, total - 1);

  GradientCheckResult result;
  for (size_t s = 0; s < samples; ++s) {
    size_t flat = pick(rng);
    size_t pi = 0;
    while (flat >= params[pi]->value.size()) flat -= params[pi++]->value.size();
    Node& param = *params[pi];
    double analytic = 0.0;
    if (const Tensor* g = grads.Find(&param)) analytic = (*g)[flat];

    double saved = param.value[flat];
    uint64_t plus_pattern = 0, minus_pattern = 0;
    param.value[flat] = saved + eps;
    double f_plus = evaluate(&plus_pattern)->value[0];
    param.value[flat] = saved - eps;
    double f_minus = evaluate(&minus_pattern)->value[0];
    param.value[flat] = saved;

    if (plus_pattern != base_pattern || minus_pattern != base_pattern) {
      ++result.skipped_kinks;
      continue;
    }
    double numeric = (f_plus - f_minus) / (2 * eps);
    double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    result.max_relative_error =
        std::max(result.max_relative_error, std::abs(analytic - numeric) / denom);
    ++result.checked;
  }
  return result;
}

}  // namespace gner
