#ifndef GNER_LAYERS_H_
#define GNER_LAYERS_H_

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "gner/autodiff.h"

namespace gner {

using Rng = std::mt19937_64;

enum class Mode { kTrain, kEval };

// Glorot/Xavier uniform initialisation for a [fan_in x fan_out] matrix.
Tensor GlorotUniform(size_t fan_in, size_t fan_out, Rng& rng);
// [rows x cols] matrix with orthonormal rows (rows <= cols) or columns.
Tensor Orthogonal(size_t rows, size_t cols, Rng& rng);

// LSTM weights. Gate blocks along the last axis are ordered
// (input, forget, cell candidate, output).
struct LstmParams {
  Var w_input;      // [input_dim x 4*cells]
  Var w_recurrent;  // [cells x 4*cells]
  Var bias;         // [4*cells]
  size_t cells = 0;

  size_t input_dim() const { return w_input->value.rows(); }

  // Glorot input weights, orthogonal recurrent weights, forget bias 1.
  static LstmParams Init(size_t input_dim, size_t cells, Rng& rng);
};

struct LstmState {
  Var h;
  Var c;
};

// One LSTM update on a batch: x [B x input_dim], h_prev/c_prev [B x cells].
// Rank-1 inputs are accepted for a single sequence.
LstmState LstmCellStep(const LstmParams& params, const Var& x,
                       const Var& h_prev, const Var& c_prev);

// mask[t][b] != 0 marks real positions.
using SequenceMask = std::vector<std::vector<uint8_t>>;

struct BiLstmResult {
  // Per timestep [B x 2*cells] = concat(forward h, backward h); zero rows at
  // masked positions.
  std::vector<Var> outputs;
  // Final states after consuming every unmasked position, [B x cells].
  Var forward_final;
  Var backward_final;
};

struct RecurrentDropout {
  double rate = 0.0;
  Mode mode = Mode::kEval;
  Rng* rng = nullptr;
};

// Runs a forward LSTM over t = 0..T-1 and a backward LSTM over T-1..0.
// Masked positions neither advance the state nor produce output. When
// dropout is active one mask per direction is drawn and applied to h_prev
// at every step.
BiLstmResult BiLstmSequence(const LstmParams& forward,
                            const LstmParams& backward,
                            std::span<const Var> xs, const SequenceMask& mask,
                            const RecurrentDropout& dropout = {});

// Single-sequence convenience form: xs are rank-1 vectors, all unmasked
// unless `mask` is given. Returns one [1 x 2*cells] row per step.
std::vector<Var> BiLstmSequence(const LstmParams& forward,
                                const LstmParams& backward,
                                std::span<const Var> xs,
                                std::span<const uint8_t> mask = {});

struct Conv1dParams {
  Var kernels;  // [kernel_size * in_dim x filters], row = offset*in_dim + d
  Var bias;     // [filters]
  size_t kernel_size = 0;
  size_t in_dim = 0;
  size_t filters = 0;

  static Conv1dParams Init(size_t kernel_size, size_t in_dim, size_t filters,
                           Rng& rng);
};

// Valid 1D convolution with ReLU over xs [P x in_dim], then max over
// positions. Returns [filters].
Var Conv1dGlobalMaxPool(const Conv1dParams& params, const Var& xs);

// W x + b with no activation. x may be [in] or [B x in]; W is [in x out].
Var Dense(const Var& w, const Var& b, const Var& x);

// Inverted dropout mask: each entry is 0 with probability `rate`, else
// 1/(1-rate).
Tensor DropoutMask(const Shape& shape, double rate, Rng& rng);

// Identity in eval mode or when rate == 0.
Var Dropout(const Var& x, double rate, Mode mode, Rng& rng);

struct EmbeddingTable {
  Var rows;  // [vocab_size x dim]
  bool trainable = true;

  size_t vocab_size() const { return rows->value.rows(); }
  size_t dim() const { return rows->value.cols(); }

  // Uniform(-0.05, 0.05) rows; row 0 (padding) is zero.
  static EmbeddingTable Init(size_t vocab_size, size_t dim, Rng& rng);
};

// Returns one [1 x dim] row per index.
std::vector<Var> EmbedLookup(const EmbeddingTable& table,
                             std::span<const int> indices);

}  // namespace gner

#endif  // GNER_LAYERS_H_
