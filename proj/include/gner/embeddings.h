#ifndef GNER_EMBEDDINGS_H_
#define GNER_EMBEDDINGS_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace gner {

enum class EmbeddingKind { kPlain, kFastText };

std::string_view EmbeddingKindName(EmbeddingKind kind);
EmbeddingKind EmbeddingKindFromName(std::string_view name);

// 32-bit FNV-1a as used by fastText: bytes are sign-extended before the xor.
uint32_t FastTextHash(std::string_view text);

// Character n-grams of "<" + word + ">" with lengths in [min_n, max_n],
// over unicode scalar values, ordered by length and then by position.
std::vector<std::string> ExtractCharNgrams(std::string_view word, int min_n,
                                           int max_n);

struct WordLookup {
  std::vector<double> vector;
  bool was_oov = false;
};

// Read-only word vector store. Plain stores answer out-of-vocabulary words
// with zeros; fastText stores average the hashed n-gram bucket rows.
class EmbeddingStore {
 public:
  // Whitespace-separated "word v1 ... vd" lines, with an optional
  // "count dim" header.
  static EmbeddingStore LoadText(const std::string& path,
                                 std::optional<size_t> expected_dim = {});
  // "FTXT1 dim min_n max_n bucket_count word_count" header, word_count
  // word lines, then bucket_count lines of dim values.
  static EmbeddingStore LoadFastText(const std::string& path);
  static EmbeddingStore Load(const std::string& path, EmbeddingKind kind,
                             std::optional<size_t> expected_dim = {});

  // Builders for tests and converters.
  static EmbeddingStore FromWords(size_t dim);
  static EmbeddingStore FromFastText(size_t dim, int min_n, int max_n,
                                     size_t bucket_count);
  // Returns false when the word already exists (first occurrence wins).
  bool AddWord(std::string_view word, std::span<const float> vector);
  void SetBucket(size_t row, std::span<const float> vector);

  EmbeddingKind kind() const { return kind_; }
  size_t dim() const { return dim_; }
  size_t word_count() const { return index_.size(); }
  int min_n() const { return min_n_; }
  int max_n() const { return max_n_; }
  size_t bucket_count() const { return bucket_count_; }
  size_t duplicate_count() const { return duplicates_; }

  WordLookup Lookup(std::string_view word) const;
  // Word-list membership only; subword inference does not count.
  bool Contains(std::string_view word) const;

  std::span<const float> WordRow(std::string_view word) const;
  std::span<const float> BucketRow(size_t row) const;

  // Writes the FTXT1 text format (fastText stores) or plain text format.
  void Save(const std::string& path) const;

 private:
  EmbeddingStore(EmbeddingKind kind, size_t dim) : kind_(kind), dim_(dim) {}

  EmbeddingKind kind_ = EmbeddingKind::kPlain;
  size_t dim_ = 0;
  std::unordered_map<std::string, size_t> index_;
  std::vector<std::string> words_;
  std::vector<float> word_data_;
  std::vector<float> bucket_data_;
  int min_n_ = 3;
  int max_n_ = 6;
  size_t bucket_count_ = 0;
  size_t duplicates_ = 0;
};

}  // namespace gner

#endif  // GNER_EMBEDDINGS_H_
