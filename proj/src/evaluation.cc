#include "gner/evaluation.h"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "gner/embeddings.h"
#include "gner/tensor.h"

namespace gner {

ChunkSet ExtractChunks(std::span<const std::string> labels, Level level,
                       StrayInside stray) {
  ChunkSet chunks;
  bool open = false;
  Chunk current;
  std::string prev_class;
  char prev_prefix = 'O';
  auto close = [&](size_t end) {
    if (open) {
      current.end = end;
      chunks.push_back(current);
    }
    open = false;
  };
  for (size_t i = 0; i < labels.size(); ++i) {
    ParsedTag tag = ParseTag(labels[i]);
    bool continues = tag.prefix == 'I' && prev_prefix != 'O' &&
                     prev_class == tag.entity_class;
    if (!continues) {
      close(i);
      if (tag.prefix == 'B' || (tag.prefix == 'I' && stray == StrayInside::kLenient)) {
        open = true;
        current = Chunk{tag.entity_class, i, i, level};
      }
    }
    prev_prefix = tag.prefix;
    prev_class = tag.entity_class;
  }
  close(labels.size());
  return chunks;
}

std::vector<std::string> RenderChunks(const ChunkSet& chunks, size_t length) {
  std::vector<std::string> labels(length, "O");
  for (const Chunk& c : chunks) {
    if (c.start >= c.end || c.end > length) {
      throw Error("chunk [" + std::to_string(c.start) + ", " + std::to_string(c.end) +
                  ") outside sentence of length " + std::to_string(length));
    }
    labels[c.start] = "B-" + c.entity_class;
    for (size_t i = c.start + 1; i < c.end; ++i) labels[i] = "I-" + c.entity_class;
  }
  return labels;
}

double Counts::precision() const {
  return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double Counts::recall() const {
  return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

double Counts::f1() const {
  double p = precision(), r = recall();
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

void EvalReport::Finalize() {
  precision = overall.precision();
  recall = overall.recall();
  f1 = overall.f1();
}

std::string EvalReport::ToText() const {
  std::ostringstream out;
  out.precision(10);
  out << "sentences " << sentences << "\n"
      << "tp " << overall.tp << "\nfp " << overall.fp << "\nfn " << overall.fn << "\n"
      << "precision " << precision << "\nrecall " << recall << "\nf1 " << f1 << "\n";
  for (const auto& [cls, c] : per_class) {
    out << "class " << cls << " tp " << c.tp << " fp " << c.fp << " fn " << c.fn
        << " precision " << c.precision() << " recall " << c.recall() << " f1 "
        << c.f1() << "\n";
  }
  return out.str();
}

std::string EvalReport::ToConllTable() const {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line,
                "processed %zu sentences; found: %zu phrases; correct: %zu.\n",
                sentences, overall.tp + overall.fp, overall.tp);
  out << line;
  std::snprintf(line, sizeof line,
                "%17s precision: %6.2f%%; recall: %6.2f%%; FB1: %6.2f\n", "overall",
                100 * precision, 100 * recall, 100 * f1);
  out << line;
  for (const auto& [cls, c] : per_class) {
    std::snprintf(line, sizeof line,
                  "%17s precision: %6.2f%%; recall: %6.2f%%; FB1: %6.2f  %zu\n",
                  cls.c_str(), 100 * c.precision(), 100 * c.recall(), 100 * c.f1(),
                  c.tp + c.fp);
    out << line;
  }
  return out.str();
}

namespace {

void Accumulate(EvalReport& report, const ChunkSet& gold, const ChunkSet& pred) {
  std::vector<Chunk> g(gold.begin(), gold.end()), p(pred.begin(), pred.end());
  std::sort(g.begin(), g.end());
  std::sort(p.begin(), p.end());
  size_t i = 0, j = 0;
  while (i < g.size() || j < p.size()) {
    if (j == p.size() || (i < g.size() && g[i] < p[j])) {
      report.per_class[g[i].entity_class].fn++;
      ++i;
    } else if (i == g.size() || p[j] < g[i]) {
      report.per_class[p[j].entity_class].fp++;
      ++j;
    } else {
      report.per_class[g[i].entity_class].tp++;
      ++i;
      ++j;
    }
  }
}

void SumClasses(EvalReport& report) {
  report.overall = {};
  for (const auto& [cls, c] : report.per_class) report.overall += c;
}

void RequireSameCount(size_t a, size_t b, const char* what) {
  if (a != b) {
    throw Error(std::string(what) + ": " + std::to_string(a) + " gold vs " +
                std::to_string(b) + " predicted sentences");
  }
}

}  // namespace

EvalReport Prf1(std::span<const ChunkSet> gold, std::span<const ChunkSet> pred) {
  RequireSameCount(gold.size(), pred.size(), "prf1");
  EvalReport report;
  report.sentences = gold.size();
  for (size_t s = 0; s < gold.size(); ++s) Accumulate(report, gold[s], pred[s]);
  SumClasses(report);
  report.Finalize();
  return report;
}

EvalReport EvaluateLabels(std::span<const std::vector<std::string>> gold,
                          std::span<const std::vector<std::string>> pred,
                          StrayInside stray) {
  RequireSameCount(gold.size(), pred.size(), "evaluate");
  std::vector<ChunkSet> g, p;
  for (size_t s = 0; s < gold.size(); ++s) {
    if (gold[s].size() != pred[s].size()) {
      throw Error("evaluate: sentence " + std::to_string(s) + " has " +
                  std::to_string(gold[s].size()) + " gold and " +
                  std::to_string(pred[s].size()) + " predicted labels");
    }
    g.push_back(ExtractChunks(gold[s], Level::kOuter, stray));
    p.push_back(ExtractChunks(pred[s], Level::kOuter, stray));
  }
  return Prf1(g, p);
}

EvalReport GermEvalCombined(std::span<const std::vector<std::string>> gold_outer,
                            std::span<const std::vector<std::string>> gold_inner,
                            std::span<const std::vector<std::string>> pred_outer,
                            std::span<const std::vector<std::string>> pred_inner,
                            CombineMode mode) {
  const size_t n = gold_outer.size();
  if (gold_inner.size() != n || pred_outer.size() != n || pred_inner.size() != n) {
    throw Error("germeval_combined: outer/inner gold/pred lists are misaligned");
  }
  for (size_t s = 0; s < n; ++s) {
    size_t len = gold_outer[s].size();
    if (gold_inner[s].size() != len || pred_outer[s].size() != len ||
        pred_inner[s].size() != len) {
      throw Error("germeval_combined: sentence " + std::to_string(s) +
                  " has misaligned label levels");
    }
  }
  EvalReport outer = EvaluateLabels(gold_outer, pred_outer);
  EvalReport inner = EvaluateLabels(gold_inner, pred_inner);
  EvalReport combined;
  combined.sentences = n;
  combined.per_class = outer.per_class;
  for (const auto& [cls, c] : inner.per_class) combined.per_class[cls] += c;
  SumClasses(combined);
  combined.Finalize();
  if (mode == CombineMode::kAverageF1) {
    combined.precision = (outer.precision + inner.precision) / 2;
    combined.recall = (outer.recall + inner.recall) / 2;
    combined.f1 = (outer.f1 + inner.f1) / 2;
  }
  return combined;
}

OovSplit SplitOovIv(std::span<const Sentence> test, const EmbeddingStore& store) {
  OovSplit split;
  for (const Sentence& s : test) {
    bool all_known = std::all_of(s.tokens.begin(), s.tokens.end(),
                                 [&](const Token& t) { return store.Contains(t.text); });
    (all_known ? split.in_vocabulary : split.out_of_vocabulary).push_back(s);
  }
  return split;
}

}  // namespace gner
