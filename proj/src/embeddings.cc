#include "gner/embeddings.h"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <memory>

#include "gner/tensor.h"
#include "gner/utf8.h"

namespace gner {
namespace {

std::vector<std::string_view> SplitFields(std::string_view line) {
  std::vector<std::string_view> fields;
  size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t' ||
                                 line[pos] == '\r')) {
      ++pos;
    }
    size_t start = pos;
    while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t' &&
           line[pos] != '\r') {
      ++pos;
    }
    if (pos > start) fields.push_back(line.substr(start, pos - start));
  }
  return fields;
}

template <typename T>
bool ParseNumber(std::string_view s, T& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

float ParseFloat(std::string_view s, const std::string& path, size_t line_no) {
  float v = 0;
  if (!ParseNumber(s, v)) {
    throw Error(path + ":" + std::to_string(line_no) + ": bad number '" +
                std::string(s) + "'");
  }
  return v;
}

std::ifstream OpenInput(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read embeddings file '" + path + "'");
  return in;
}

void WriteRow(FILE* f, std::span<const float> row) {
  for (float v : row) std::fprintf(f, " %.9g", static_cast<double>(v));
  std::fputc('\n', f);
}

}  // namespace

std::string_view EmbeddingKindName(EmbeddingKind kind) {
  return kind == EmbeddingKind::kFastText ? "fasttext" : "plain";
}

EmbeddingKind EmbeddingKindFromName(std::string_view name) {
  if (name == "plain" || name == "word2vec" || name == "word2vecf" ||
      name == "glove") {
    return EmbeddingKind::kPlain;
  }
  if (name == "fasttext") return EmbeddingKind::kFastText;
  throw Error("unknown embedding kind '" + std::string(name) + "'");
}

uint32_t FastTextHash(std::string_view text) {
  uint32_t h = 2166136261u;
  for (char c : text) {
    h ^= static_cast<uint32_t>(static_cast<int8_t>(c));
    h *= 16777619u;
  }
  return h;
}

std::vector<std::string> ExtractCharNgrams(std::string_view word, int min_n,
                                           int max_n) {
  std::vector<std::string> chars = SplitCodePoints(word);
  chars.insert(chars.begin(), "<");
  chars.push_back(">");
  const int m = static_cast<int>(chars.size());
  std::vector<std::string> out;
  for (int n = std::max(min_n, 1); n <= std::min(max_n, m); ++n) {
    for (int start = 0; start + n <= m; ++start) {
      // fastText never emits the bare boundary markers.
      if (n == 1 && (start == 0 || start == m - 1)) continue;
      std::string gram;
      for (int k = start; k < start + n; ++k) gram += chars[k];
      out.push_back(std::move(gram));
    }
  }
  return out;
}

EmbeddingStore EmbeddingStore::FromWords(size_t dim) {
  if (dim == 0) throw Error("embedding dimension must be positive");
  return EmbeddingStore(EmbeddingKind::kPlain, dim);
}

EmbeddingStore EmbeddingStore::FromFastText(size_t dim, int min_n, int max_n,
                                            size_t bucket_count) {
  if (dim == 0) throw Error("embedding dimension must be positive");
  if (min_n < 1 || min_n > max_n) {
    throw Error("fasttext store needs 1 <= min_n <= max_n");
  }
  if (bucket_count == 0) throw Error("fasttext store needs bucket_count > 0");
  EmbeddingStore store(EmbeddingKind::kFastText, dim);
  store.min_n_ = min_n;
  store.max_n_ = max_n;
  store.bucket_count_ = bucket_count;
  store.bucket_data_.assign(bucket_count * dim, 0.0f);
  return store;
}

bool EmbeddingStore::AddWord(std::string_view word, std::span<const float> vector) {
  if (vector.size() != dim_) {
    throw Error("vector for '" + std::string(word) + "' has " +
                std::to_string(vector.size()) + " values, expected " +
                std::to_string(dim_));
  }
  auto [it, inserted] = index_.try_emplace(std::string(word), words_.size());
  if (!inserted) {
    ++duplicates_;
    return false;
  }
  words_.emplace_back(word);
  word_data_.insert(word_data_.end(), vector.begin(), vector.end());
  return true;
}

void EmbeddingStore::SetBucket(size_t row, std::span<const float> vector) {
  if (row >= bucket_count_ || vector.size() != dim_) {
    throw Error("bucket row " + std::to_string(row) + " out of range or wrong size");
  }
  std::copy(vector.begin(), vector.end(), bucket_data_.begin() + row * dim_);
}

EmbeddingStore EmbeddingStore::LoadText(const std::string& path,
                                        std::optional<size_t> expected_dim) {
  std::ifstream in = OpenInput(path);
  std::unique_ptr<EmbeddingStore> store;
  if (expected_dim) store.reset(new EmbeddingStore(FromWords(*expected_dim)));
  std::string line;
  std::vector<float> values;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = SplitFields(line);
    if (fields.empty()) continue;
    if (line_no == 1 && fields.size() == 2) {
      size_t count = 0, dim = 0;
      if (ParseNumber(fields[0], count) && ParseNumber(fields[1], dim)) {
        if (expected_dim && dim != *expected_dim) {
          throw Error(path + ":1: header declares dimension " + std::to_string(dim) +
                      ", expected " + std::to_string(*expected_dim));
        }
        if (!store) store.reset(new EmbeddingStore(FromWords(dim)));
        continue;
      }
    }
    size_t dim = fields.size() - 1;
    if (dim == 0) {
      throw Error(path + ":" + std::to_string(line_no) + ": word without vector");
    }
    if (!store) store.reset(new EmbeddingStore(FromWords(dim)));
    if (dim != store->dim_) {
      throw Error(path + ":" + std::to_string(line_no) + ": expected " +
                  std::to_string(store->dim_) + " values, found " +
                  std::to_string(dim));
    }
    values.resize(dim);
    for (size_t i = 0; i < dim; ++i) values[i] = ParseFloat(fields[i + 1], path, line_no);
    store->AddWord(fields[0], values);
  }
  if (!store) throw Error("embeddings file '" + path + "' is empty");
  return std::move(*store);
}

EmbeddingStore EmbeddingStore::LoadFastText(const std::string& path) {
  std::ifstream in = OpenInput(path);
  std::string line;
  if (!std::getline(in, line)) throw Error(path + ": empty fasttext store");
  auto header = SplitFields(line);
  size_t dim = 0, buckets = 0, words = 0;
  int min_n = 0, max_n = 0;
  if (header.size() != 6 || header[0] != "FTXT1" || !ParseNumber(header[1], dim) ||
      !ParseNumber(header[2], min_n) || !ParseNumber(header[3], max_n) ||
      !ParseNumber(header[4], buckets) || !ParseNumber(header[5], words)) {
    throw Error(path + ":1: expected 'FTXT1 dim min_n max_n bucket_count word_count'");
  }
  EmbeddingStore store = FromFastText(dim, min_n, max_n, buckets);
  std::vector<float> values(dim);
  size_t line_no = 1;
  for (size_t w = 0; w < words; ++w) {
    ++line_no;
    if (!std::getline(in, line)) throw Error(path + ": truncated word section");
    auto fields = SplitFields(line);
    if (fields.size() != dim + 1) {
      throw Error(path + ":" + std::to_string(line_no) + ": expected word and " +
                  std::to_string(dim) + " values");
    }
    for (size_t i = 0; i < dim; ++i) values[i] = ParseFloat(fields[i + 1], path, line_no);
    store.AddWord(fields[0], values);
  }
  for (size_t b = 0; b < buckets; ++b) {
    ++line_no;
    if (!std::getline(in, line)) throw Error(path + ": truncated bucket section");
    auto fields = SplitFields(line);
    if (fields.size() != dim) {
      throw Error(path + ":" + std::to_string(line_no) + ": expected " +
                  std::to_string(dim) + " bucket values");
    }
    float* row = store.bucket_data_.data() + b * dim;
    for (size_t i = 0; i < dim; ++i) row[i] = ParseFloat(fields[i], path, line_no);
  }
  return store;
}

EmbeddingStore EmbeddingStore::Load(const std::string& path, EmbeddingKind kind,
                                    std::optional<size_t> expected_dim) {
  if (kind == EmbeddingKind::kPlain) return LoadText(path, expected_dim);
  EmbeddingStore store = LoadFastText(path);
  if (expected_dim && store.dim() != *expected_dim) {
    throw Error(path + ": fasttext dimension " + std::to_string(store.dim()) +
                ", expected " + std::to_string(*expected_dim));
  }
  return store;
}

std::span<const float> EmbeddingStore::WordRow(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return {};
  return {word_data_.data() + it->second * dim_, dim_};
}

std::span<const float> EmbeddingStore::BucketRow(size_t row) const {
  return {bucket_data_.data() + row * dim_, dim_};
}

bool EmbeddingStore::Contains(std::string_view word) const {
  return index_.find(std::string(word)) != index_.end();
}

WordLookup EmbeddingStore::Lookup(std::string_view word) const {
  WordLookup result;
  result.vector.assign(dim_, 0.0);
  if (auto row = WordRow(word); !row.empty()) {
    std::copy(row.begin(), row.end(), result.vector.begin());
    return result;
  }
  result.was_oov = true;
  if (kind_ != EmbeddingKind::kFastText || word.empty()) return result;
  auto grams = ExtractCharNgrams(word, min_n_, max_n_);
  if (grams.empty()) return result;
  for (const std::string& g : grams) {
    auto row = BucketRow(FastTextHash(g) % bucket_count_);
    for (size_t i = 0; i < dim_; ++i) result.vector[i] += row[i];
  }
  for (double& v : result.vector) v /= static_cast<double>(grams.size());
  return result;
}

void EmbeddingStore::Save(const std::string& path) const {
  std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "w"), &std::fclose);
  if (!f) throw Error("cannot write embeddings file '" + path + "'");
  if (kind_ == EmbeddingKind::kFastText) {
    std::fprintf(f.get(), "FTXT1 %zu %d %d %zu %zu\n", dim_, min_n_, max_n_,
                 bucket_count_, words_.size());
  } else {
    std::fprintf(f.get(), "%zu %zu\n", words_.size(), dim_);
  }
  for (size_t w = 0; w < words_.size(); ++w) {
    std::fputs(words_[w].c_str(), f.get());
    WriteRow(f.get(), {word_data_.data() + w * dim_, dim_});
  }
  if (kind_ == EmbeddingKind::kFastText) {
    for (size_t b = 0; b < bucket_count_; ++b) {
      std::span<const float> row = BucketRow(b);
      for (size_t i = 0; i < dim_; ++i) {
        std::fprintf(f.get(), i == 0 ? "%.9g" : " %.9g", static_cast<double>(row[i]));
      }
      std::fputc('\n', f.get());
    }
  }
}

}  // namespace gner
