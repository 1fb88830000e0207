#include "gner/layers.h"

#include <cmath>
#include <string>

#include <Eigen/QR>

namespace gner {
namespace {

Var Zeros(Shape shape) { return Constant(Tensor(std::move(shape))); }

Var MaskConstant(const std::vector<uint8_t>& row_mask, size_t cols,
                 bool inverted) {
  Tensor t({row_mask.size(), cols});
  for (size_t b = 0; b < row_mask.size(); ++b) {
    double v = (row_mask[b] != 0) != inverted ? 1.0 : 0.0;
    for (size_t c = 0; c < cols; ++c) t.at(b, c) = v;
  }
  return Constant(std::move(t));
}

bool AllSet(const std::vector<uint8_t>& m) {
  for (uint8_t v : m) {
    if (!v) return false;
  }
  return true;
}

bool NoneSet(const std::vector<uint8_t>& m) {
  for (uint8_t v : m) {
    if (v) return false;
  }
  return true;
}

}  // namespace

Tensor GlorotUniform(size_t fan_in, size_t fan_out, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t({fan_in, fan_out});
  for (double& v : t.values()) v = dist(rng);
  return t;
}

Tensor Orthogonal(size_t rows, size_t cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  size_t big = std::max(rows, cols), small = std::min(rows, cols);
  Eigen::MatrixXd a(big, small);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  // Sign correction makes the distribution uniform over orthogonal matrices.
  Eigen::MatrixXd r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
  for (size_t j = 0; j < small; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  Tensor t({rows, cols});
  for (size_t i = 0; i < rows; ++i) {
    for (size_t j = 0; j < cols; ++j) t.at(i, j) = rows >= cols ? q(i, j) : q(j, i);
  }
  return t;
}

LstmParams LstmParams::Init(size_t input_dim, size_t cells, Rng& rng) {
  LstmParams p;
  p.cells = cells;
  p.w_input = Parameter(GlorotUniform(input_dim, 4 * cells, rng));
  p.w_recurrent = Parameter(Orthogonal(cells, 4 * cells, rng));
  Tensor bias({4 * cells});
  for (size_t i = cells; i < 2 * cells; ++i) bias[i] = 1.0;
  p.bias = Parameter(std::move(bias));
  return p;
}

LstmState LstmCellStep(const LstmParams& params, const Var& x,
                       const Var& h_prev, const Var& c_prev) {
  const size_t cells = params.cells;
  const Tensor& xv = x->value;
  if (xv.cols() != params.input_dim() || h_prev->value.cols() != cells ||
      c_prev->value.cols() != cells || h_prev->value.rows() != xv.rows() ||
      c_prev->value.rows() != xv.rows()) {
    throw Error("lstm_cell_step: expected x [B x " +
                std::to_string(params.input_dim()) + "], h/c [B x " +
                std::to_string(cells) + "], got x " + ShapeString(xv.shape()) +
                ", h " + ShapeString(h_prev->value.shape()) + ", c " +
                ShapeString(c_prev->value.shape()));
  }
  Var z = Add(Add(MatMul(x, params.w_input), MatMul(h_prev, params.w_recurrent)),
              params.bias);
  size_t axis = z->value.rank() - 1;
  Var i = Sigmoid(Slice(z, axis, 0, cells));
  Var f = Sigmoid(Slice(z, axis, cells, 2 * cells));
  Var g = Tanh(Slice(z, axis, 2 * cells, 3 * cells));
  Var o = Sigmoid(Slice(z, axis, 3 * cells, 4 * cells));
  Var c = Add(Mul(f, c_prev), Mul(i, g));
  Var h = Mul(o, Tanh(c));
  return {h, c};
}

namespace {

struct DirectionResult {
  std::vector<Var> outputs;
  Var final_h;
};

DirectionResult RunDirection(const LstmParams& params, std::span<const Var> xs,
                             const SequenceMask& mask, bool reverse,
                             const RecurrentDropout& dropout) {
  const size_t steps = xs.size();
  const size_t batch = xs[0]->value.rows();
  const size_t cells = params.cells;
  Var h = Zeros({batch, cells});
  Var c = Zeros({batch, cells});
  Var h_mask;
  if (dropout.mode == Mode::kTrain && dropout.rate > 0) {
    h_mask = Constant(DropoutMask({batch, cells}, dropout.rate, *dropout.rng));
  }
  DirectionResult result;
  result.outputs.resize(steps);
  for (size_t k = 0; k < steps; ++k) {
    size_t t = reverse ? steps - 1 - k : k;
    const auto& m = mask[t];
    if (NoneSet(m)) {
      result.outputs[t] = Zeros({batch, cells});
      continue;
    }
    Var h_in = h_mask ? Mul(h, h_mask) : h;
    LstmState next = LstmCellStep(params, xs[t], h_in, c);
    if (AllSet(m)) {
      h = next.h;
      c = next.c;
      result.outputs[t] = h;
    } else {
      Var keep = MaskConstant(m, cells, false);
      Var hold = MaskConstant(m, cells, true);
      Var new_h = Mul(next.h, keep);
      h = Add(new_h, Mul(h, hold));
      c = Add(Mul(next.c, keep), Mul(c, hold));
      result.outputs[t] = new_h;
    }
  }
  result.final_h = h;
  return result;
}

}  // namespace

BiLstmResult BiLstmSequence(const LstmParams& forward,
                            const LstmParams& backward,
                            std::span<const Var> xs, const SequenceMask& mask,
                            const RecurrentDropout& dropout) {
  if (xs.empty()) throw Error("bilstm_sequence: empty sequence");
  if (mask.size() != xs.size()) {
    throw Error("bilstm_sequence: " + std::to_string(xs.size()) +
                " inputs but " + std::to_string(mask.size()) + " mask rows");
  }
  const size_t batch = xs[0]->value.rows();
  for (size_t t = 0; t < xs.size(); ++t) {
    if (xs[t]->value.rank() != 2 || xs[t]->value.rows() != batch ||
        mask[t].size() != batch) {
      throw Error("bilstm_sequence: step " + std::to_string(t) +
                  " expected [" + std::to_string(batch) + " x d] with " +
                  std::to_string(batch) + " mask entries, got " +
                  ShapeString(xs[t]->value.shape()));
    }
  }
  if (dropout.mode == Mode::kTrain && dropout.rate > 0 && !dropout.rng) {
    throw Error("bilstm_sequence: recurrent dropout requires an rng");
  }
  DirectionResult fwd = RunDirection(forward, xs, mask, false, dropout);
  DirectionResult bwd = RunDirection(backward, xs, mask, true, dropout);
  BiLstmResult result;
  result.outputs.reserve(xs.size());
  for (size_t t = 0; t < xs.size(); ++t) {
    const Var pair[] = {fwd.outputs[t], bwd.outputs[t]};
    result.outputs.push_back(Concat(pair));
  }
  result.forward_final = fwd.final_h;
  result.backward_final = bwd.final_h;
  return result;
}

std::vector<Var> BiLstmSequence(const LstmParams& forward,
                                const LstmParams& backward,
                                std::span<const Var> xs,
                                std::span<const uint8_t> mask) {
  if (xs.empty()) throw Error("bilstm_sequence: empty sequence");
  if (!mask.empty() && mask.size() != xs.size()) {
    throw Error("bilstm_sequence: mask length does not match sequence");
  }
  std::vector<Var> rows;
  SequenceMask seq_mask;
  for (size_t t = 0; t < xs.size(); ++t) {
    const Var& x = xs[t];
    if (x->value.rank() != 1) {
      throw Error("bilstm_sequence: expected rank-1 step, got " +
                  ShapeString(x->value.shape()));
    }
    rows.push_back(Stack(std::span(&x, 1)));
    seq_mask.push_back({static_cast<uint8_t>(mask.empty() ? 1 : mask[t])});
  }
  return BiLstmSequence(forward, backward, rows, seq_mask).outputs;
}

Conv1dParams Conv1dParams::Init(size_t kernel_size, size_t in_dim,
                                size_t filters, Rng& rng) {
  Conv1dParams p;
  p.kernel_size = kernel_size;
  p.in_dim = in_dim;
  p.filters = filters;
  p.kernels = Parameter(GlorotUniform(kernel_size * in_dim, filters, rng));
  p.bias = Parameter(Tensor({filters}));
  return p;
}

Var Conv1dGlobalMaxPool(const Conv1dParams& params, const Var& xs) {
  const Tensor& x = xs->value;
  if (x.rank() != 2 || x.cols() != params.in_dim) {
    throw Error("conv1d_globalmaxpool: expected [P x " +
                std::to_string(params.in_dim) + "], got " +
                ShapeString(x.shape()));
  }
  const size_t positions = x.rows();
  const size_t k = params.kernel_size;
  if (positions < k) {
    throw Error("conv1d_globalmaxpool: sequence of length " +
                std::to_string(positions) + " shorter than kernel size " +
                std::to_string(k));
  }
  // Unfold windows: row p of `windows` is concat(x[p], ..., x[p+k-1]).
  const size_t out_positions = positions - k + 1;
  std::vector<Var> shifted;
  shifted.reserve(k);
  for (size_t offset = 0; offset < k; ++offset) {
    shifted.push_back(Slice(xs, 0, offset, offset + out_positions));
  }
  Var windows = k == 1 ? shifted[0] : Concat(shifted);
  Var activations = Relu(Add(MatMul(windows, params.kernels), params.bias));
  return MaxOverAxis(activations, 0);
}

Var Dense(const Var& w, const Var& b, const Var& x) {
  const Tensor& wv = w->value;
  if (wv.rank() != 2 || b->value.rank() != 1 || b->value.size() != wv.cols() ||
      x->value.cols() != wv.rows()) {
    throw Error("dense: W " + ShapeString(wv.shape()) + ", b " +
                ShapeString(b->value.shape()) + " and x " +
                ShapeString(x->value.shape()) + " do not conform");
  }
  return Add(MatMul(x, w), b);
}

Tensor DropoutMask(const Shape& shape, double rate, Rng& rng) {
  if (rate < 0 || rate >= 1) {
    throw Error("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  Tensor mask(shape, 1.0);
  if (rate == 0) return mask;
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  for (double& v : mask.values()) v = keep(rng) ? scale : 0.0;
  return mask;
}

Var Dropout(const Var& x, double rate, Mode mode, Rng& rng) {
  if (rate < 0 || rate >= 1) {
    throw Error("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (mode == Mode::kEval || rate == 0) return x;
  return Mul(x, Constant(DropoutMask(x->value.shape(), rate, rng)));
}

EmbeddingTable EmbeddingTable::Init(size_t vocab_size, size_t dim, Rng& rng) {
  std::uniform_real_distribution<double> dist(-0.05, 0.05);
  Tensor t({vocab_size, dim});
  for (size_t r = 1; r < vocab_size; ++r) {
    for (size_t c = 0; c < dim; ++c) t.at(r, c) = dist(rng);
  }
  return {Parameter(std::move(t)), true};
}

std::vector<Var> EmbedLookup(const EmbeddingTable& table,
                             std::span<const int> indices) {
  std::vector<Var> out;
  out.reserve(indices.size());
  const size_t vocab = table.vocab_size();
  for (int idx : indices) {
    if (idx < 0 || static_cast<size_t>(idx) >= vocab) {
      throw Error("embed_lookup: index " + std::to_string(idx) +
                  " out of range [0, " + std::to_string(vocab) + ")");
    }
    out.push_back(Slice(table.rows, 0, idx, idx + 1));
  }
  return out;
}

}  // namespace gner
