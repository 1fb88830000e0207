#include "gner/crf.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace gner {
namespace {

constexpr size_t kEnumerationLimit = 1000000;

double LogSumExp(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

void Validate(const CrfScores& crf, const Tensor& emissions, const char* op) {
  const size_t labels = crf.start.size();
  if (emissions.rank() != 2 || emissions.cols() != labels ||
      emissions.rows() == 0) {
    throw Error(std::string(op) + ": emissions must be [T x " +
                std::to_string(labels) + "] with T >= 1, got " +
                ShapeString(emissions.shape()));
  }
  if (crf.transitions.rows() != labels || crf.transitions.cols() != labels ||
      crf.end.size() != labels) {
    throw Error(std::string(op) + ": transition/start/end shapes disagree");
  }
  if (!emissions.AllFinite()) {
    throw Error(std::string(op) + ": non-finite emission scores");
  }
}

// alpha[t][j] = log sum over prefixes ending in j at t (including emission).
Tensor ForwardLattice(const CrfScores& crf, const Tensor& em) {
  const size_t steps = em.rows(), labels = em.cols();
  Tensor alpha({steps, labels});
  std::vector<double> terms(labels);
  for (size_t j = 0; j < labels; ++j) alpha.at(0, j) = crf.start[j] + em.at(0, j);
  for (size_t t = 1; t < steps; ++t) {
    for (size_t j = 0; j < labels; ++j) {
      for (size_t i = 0; i < labels; ++i) {
        terms[i] = alpha.at(t - 1, i) + crf.transitions.at(i, j);
      }
      alpha.at(t, j) = LogSumExp(terms) + em.at(t, j);
    }
  }
  return alpha;
}

// beta[t][i] = log sum over suffixes after t given y_t = i (including end).
Tensor BackwardLattice(const CrfScores& crf, const Tensor& em) {
  const size_t steps = em.rows(), labels = em.cols();
  Tensor beta({steps, labels});
  std::vector<double> terms(labels);
  for (size_t i = 0; i < labels; ++i) beta.at(steps - 1, i) = crf.end[i];
  for (size_t t = steps - 1; t-- > 0;) {
    for (size_t i = 0; i < labels; ++i) {
      for (size_t j = 0; j < labels; ++j) {
        terms[j] = crf.transitions.at(i, j) + em.at(t + 1, j) + beta.at(t + 1, j);
      }
      beta.at(t, i) = LogSumExp(terms);
    }
  }
  return beta;
}

double LogZFromAlpha(const CrfScores& crf, const Tensor& alpha) {
  const size_t last = alpha.rows() - 1, labels = alpha.cols();
  std::vector<double> terms(labels);
  for (size_t j = 0; j < labels; ++j) terms[j] = alpha.at(last, j) + crf.end[j];
  return LogSumExp(terms);
}

template <typename Visit>
void EnumeratePaths(size_t steps, size_t labels, Visit visit) {
  double count = std::pow(static_cast<double>(labels), static_cast<double>(steps));
  if (count > kEnumerationLimit) {
    throw Error("brute force: " + std::to_string(labels) + "^" +
                std::to_string(steps) + " paths exceed the 10^6 guard");
  }
  std::vector<int> path(steps, 0);
  while (true) {
    visit(path);
    size_t pos = 0;
    while (pos < steps && ++path[pos] == static_cast<int>(labels)) {
      path[pos++] = 0;
    }
    if (pos == steps) break;
  }
}

}  // namespace

CrfParams CrfParams::Init(size_t num_labels, Rng& rng) {
  return {Parameter(GlorotUniform(num_labels, num_labels, rng)),
          Parameter(Tensor({num_labels})), Parameter(Tensor({num_labels}))};
}

double PathScore(const CrfScores& crf, const Tensor& emissions,
                 std::span<const int> path) {
  double s = crf.start[path[0]] + emissions.at(0, path[0]);
  for (size_t t = 1; t < path.size(); ++t) {
    s = s + crf.transitions.at(path[t - 1], path[t]) + emissions.at(t, path[t]);
  }
  return s + crf.end[path.back()];
}

double LogPartition(const CrfScores& crf, const Tensor& emissions) {
  Validate(crf, emissions, "log_partition");
  return LogZFromAlpha(crf, ForwardLattice(crf, emissions));
}

Tensor Marginals(const CrfScores& crf, const Tensor& emissions) {
  Validate(crf, emissions, "marginals");
  Tensor alpha = ForwardLattice(crf, emissions);
  Tensor beta = BackwardLattice(crf, emissions);
  double log_z = LogZFromAlpha(crf, alpha);
  Tensor m(emissions.shape());
  for (size_t i = 0; i < m.size(); ++i) m[i] = std::exp(alpha[i] + beta[i] - log_z);
  return m;
}

Var CrfNegativeLogLikelihood(const CrfParams& params, const Var& emissions,
                             std::span<const int> gold) {
  CrfScores crf = CrfScores::Of(params);
  const Tensor& em = emissions->value;
  Validate(crf, em, "crf_negative_log_likelihood");
  const size_t steps = em.rows(), labels = em.cols();
  if (gold.size() != steps) {
    throw Error("crf_negative_log_likelihood: gold path has " +
                std::to_string(gold.size()) + " labels for " +
                std::to_string(steps) + " positions");
  }
  for (int y : gold) {
    if (y < 0 || static_cast<size_t>(y) >= labels) {
      throw Error("crf_negative_log_likelihood: gold label " + std::to_string(y) +
                  " out of range");
    }
  }
  Tensor alpha = ForwardLattice(crf, em);
  double log_z = LogZFromAlpha(crf, alpha);
  double loss = log_z - PathScore(crf, em, gold);

  std::vector<int> gold_path(gold.begin(), gold.end());
  BackwardFn backward = [gold_path, alpha = std::move(alpha), log_z](
                            const Node& node, const Tensor& g, GradSink& sink) {
    const Tensor& em = node.parents[0]->value;
    const Tensor& trans = node.parents[1]->value;
    const Tensor& start = node.parents[2]->value;
    const Tensor& end = node.parents[3]->value;
    CrfScores crf{trans, start, end};
    const size_t steps = em.rows(), labels = em.cols();
    Tensor beta = BackwardLattice(crf, em);
    const double scale = g[0];

    if (Tensor* ge = sink.Grad(0)) {
      for (size_t i = 0; i < em.size(); ++i) {
        (*ge)[i] += scale * std::exp(alpha[i] + beta[i] - log_z);
      }
      for (size_t t = 0; t < steps; ++t) ge->at(t, gold_path[t]) -= scale;
    }
    if (Tensor* gt = sink.Grad(1)) {
      for (size_t t = 0; t + 1 < steps; ++t) {
        for (size_t i = 0; i < labels; ++i) {
          for (size_t j = 0; j < labels; ++j) {
            double p = std::exp(alpha.at(t, i) + trans.at(i, j) + em.at(t + 1, j) +
                                beta.at(t + 1, j) - log_z);
            gt->at(i, j) += scale * p;
          }
        }
        gt->at(gold_path[t], gold_path[t + 1]) -= scale;
      }
    }
    if (Tensor* gs = sink.Grad(2)) {
      for (size_t i = 0; i < labels; ++i) {
        (*gs)[i] += scale * std::exp(alpha.at(0, i) + beta.at(0, i) - log_z);
      }
      (*gs)[gold_path.front()] -= scale;
    }
    if (Tensor* gend = sink.Grad(3)) {
      for (size_t i = 0; i < labels; ++i) {
        (*gend)[i] += scale * std::exp(alpha.at(steps - 1, i) + end[i] - log_z);
      }
      (*gend)[gold_path.back()] -= scale;
    }
  };
  return MakeCustom(Tensor::Scalar(loss),
                    {emissions, params.transitions, params.start, params.end},
                    std::move(backward));
}

ViterbiResult ViterbiDecode(const CrfScores& crf, const Tensor& emissions) {
  Validate(crf, emissions, "viterbi_decode");
  const size_t steps = emissions.rows(), labels = emissions.cols();
  Tensor delta({steps, labels});
  std::vector<std::vector<int>> back(steps, std::vector<int>(labels, 0));
  for (size_t j = 0; j < labels; ++j) {
    delta.at(0, j) = crf.start[j] + emissions.at(0, j);
  }
  for (size_t t = 1; t < steps; ++t) {
    for (size_t j = 0; j < labels; ++j) {
      int best = 0;
      double best_v = delta.at(t - 1, 0) + crf.transitions.at(0, j);
      for (size_t i = 1; i < labels; ++i) {
        double v = delta.at(t - 1, i) + crf.transitions.at(i, j);
        if (v > best_v) {
          best_v = v;
          best = static_cast<int>(i);
        }
      }
      back[t][j] = best;
      delta.at(t, j) = best_v + emissions.at(t, j);
    }
  }
  ViterbiResult result;
  int last = 0;
  double best_v = delta.at(steps - 1, 0) + crf.end[0];
  for (size_t j = 1; j < labels; ++j) {
    double v = delta.at(steps - 1, j) + crf.end[j];
    if (v > best_v) {
      best_v = v;
      last = static_cast<int>(j);
    }
  }
  result.score = best_v;
  result.path.assign(steps, 0);
  result.path[steps - 1] = last;
  for (size_t t = steps - 1; t > 0; --t) result.path[t - 1] = back[t][result.path[t]];
  return result;
}

double BruteForceLogZ(const CrfScores& crf, const Tensor& emissions) {
  Validate(crf, emissions, "brute_force_log_z");
  std::vector<double> scores;
  EnumeratePaths(emissions.rows(), emissions.cols(), [&](const std::vector<int>& p) {
    scores.push_back(PathScore(crf, emissions, p));
  });
  return LogSumExp(scores);
}

std::vector<int> BruteForceBestPath(const CrfScores& crf,
                                    const Tensor& emissions) {
  Validate(crf, emissions, "brute_force_best_path");
  std::vector<int> best;
  double best_score = -std::numeric_limits<double>::infinity();
  auto reverse_less = [](const std::vector<int>& a, const std::vector<int>& b) {
    return std::lexicographical_compare(a.rbegin(), a.rend(), b.rbegin(), b.rend());
  };
  EnumeratePaths(emissions.rows(), emissions.cols(), [&](const std::vector<int>& p) {
    double s = PathScore(crf, emissions, p);
    if (best.empty() || s > best_score || (s == best_score && reverse_less(p, best))) {
      best_score = s;
      best = p;
    }
  });
  return best;
}

}  // namespace gner
