#ifndef GNER_CRF_H_
#define GNER_CRF_H_

#include <span>
#include <vector>

#include "gner/autodiff.h"
#include "gner/layers.h"

namespace gner {

// Linear-chain CRF scores. A label path y_1..y_T scores
//   start[y_1] + sum_t emissions[t, y_t] + sum_t transitions[y_t, y_t+1]
//   + end[y_T].
struct CrfParams {
  Var transitions;  // [L x L], row = from, column = to
  Var start;        // [L]
  Var end;          // [L]

  size_t num_labels() const { return start->value.size(); }

  // Glorot transitions, zero start/end scores.
  static CrfParams Init(size_t num_labels, Rng& rng);
};

// Plain-value view used by decoding and the oracles.
struct CrfScores {
  const Tensor& transitions;
  const Tensor& start;
  const Tensor& end;

  static CrfScores Of(const CrfParams& p) {
    return {p.transitions->value, p.start->value, p.end->value};
  }
};

double PathScore(const CrfScores& crf, const Tensor& emissions,
                 std::span<const int> path);

// log sum over all paths of exp(score), by the forward recursion.
double LogPartition(const CrfScores& crf, const Tensor& emissions);

// Per-position label marginals [T x L] from forward-backward.
Tensor Marginals(const CrfScores& crf, const Tensor& emissions);

// loss = logZ - score(gold). emissions is [T x L]. The backward rule uses
// the forward-backward marginals.
Var CrfNegativeLogLikelihood(const CrfParams& params, const Var& emissions,
                             std::span<const int> gold);

struct ViterbiResult {
  std::vector<int> path;
  double score = 0.0;
};

// Highest-scoring path. Ties resolve to the lowest label index at the final
// position and at every backtrack step.
ViterbiResult ViterbiDecode(const CrfScores& crf, const Tensor& emissions);

// Exhaustive enumeration oracles. Throw when L^T exceeds 10^6.
double BruteForceLogZ(const CrfScores& crf, const Tensor& emissions);
// Among maximum-score paths, returns the one Viterbi's tie rule selects:
// the smallest when paths are compared from the last position backwards.
std::vector<int> BruteForceBestPath(const CrfScores& crf,
                                    const Tensor& emissions);

}  // namespace gner

#endif  // GNER_CRF_H_
