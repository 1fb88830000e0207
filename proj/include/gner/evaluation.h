#ifndef GNER_EVALUATION_H_
#define GNER_EVALUATION_H_

#include <map>
#include <span>
#include <string>
#include <vector>

#include "gner/corpus.h"

namespace gner {

class EmbeddingStore;

enum class Level { kOuter, kInner };

struct Chunk {
  std::string entity_class;
  size_t start = 0;  // inclusive
  size_t end = 0;    // exclusive
  Level level = Level::kOuter;

  friend auto operator<=>(const Chunk&, const Chunk&) = default;
};

using ChunkSet = std::vector<Chunk>;

enum class StrayInside {
  kLenient,  // a stray I-X opens a new chunk, as conlleval does
  kStrict,   // a stray I-X and its continuation are discarded
};

// Maximal B-X I-X* runs, sorted by start.
ChunkSet ExtractChunks(std::span<const std::string> labels,
                       Level level = Level::kOuter,
                       StrayInside stray = StrayInside::kLenient);

// Inverse direction: renders chunks as BIO labels of the given length.
std::vector<std::string> RenderChunks(const ChunkSet& chunks, size_t length);

struct Counts {
  size_t tp = 0;
  size_t fp = 0;
  size_t fn = 0;

  double precision() const;
  double recall() const;
  double f1() const;

  Counts& operator+=(const Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

struct EvalReport {
  Counts overall;
  std::map<std::string, Counts> per_class;
  size_t sentences = 0;
  // From `overall`, except under CombineMode::kAverageF1.
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  // Recomputes precision/recall/f1 from `overall`.
  void Finalize();

  // "key value" lines.
  std::string ToText() const;
  // conlleval-style summary and per-class table.
  std::string ToConllTable() const;
};

// Exact (class, start, end) matching, micro-averaged.
EvalReport Prf1(std::span<const ChunkSet> gold, std::span<const ChunkSet> pred);
EvalReport EvaluateLabels(std::span<const std::vector<std::string>> gold,
                          std::span<const std::vector<std::string>> pred,
                          StrayInside stray = StrayInside::kLenient);

enum class CombineMode {
  kMicroPooled,   // pool TP/FP/FN across both levels
  kAverageF1,     // mean of the outer and inner F1 (P and R averaged alike)
};

// GermEval two-level score over aligned outer/inner label lists.
EvalReport GermEvalCombined(std::span<const std::vector<std::string>> gold_outer,
                            std::span<const std::vector<std::string>> gold_inner,
                            std::span<const std::vector<std::string>> pred_outer,
                            std::span<const std::vector<std::string>> pred_inner,
                            CombineMode mode = CombineMode::kMicroPooled);

struct OovSplit {
  std::vector<Sentence> in_vocabulary;
  std::vector<Sentence> out_of_vocabulary;
};

// A sentence is in-vocabulary when every token is in the store's word list.
OovSplit SplitOovIv(std::span<const Sentence> test, const EmbeddingStore& store);

}  // namespace gner

#endif  // GNER_EVALUATION_H_
