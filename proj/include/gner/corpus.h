#ifndef GNER_CORPUS_H_
#define GNER_CORPUS_H_

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gner {

// Surface shape of a token; the enumerator value is the one-hot position.
enum class Casing {
  kAllLower = 0,
  kAllUpper,
  kInitialUpper,
  kNumeric,
  kMainlyNumeric,
  kContainsDigit,
  kOther,
};

inline constexpr size_t kCasingDim = 7;

std::string_view CasingName(Casing casing);

// First matching rule wins: numeric, mainly numeric (> 50% digits), all
// lower, all upper, initial upper, contains digit, other.
Casing ClassifyCasing(std::string_view token);
std::array<double, kCasingDim> CasingOneHot(std::string_view token);

// "O" followed by B-/I- pairs for each entity class, in class order.
class LabelSchema {
 public:
  LabelSchema() = default;
  explicit LabelSchema(std::vector<std::string> entity_classes);

  // PER, LOC, ORG, OTH and their -deriv / -part subclasses: 25 labels.
  static LabelSchema GermEval();
  // PER, LOC, ORG, MISC: 9 labels.
  static LabelSchema Conll();
  // GermEval main classes plus MISC, the target of -deriv mapping.
  static LabelSchema Combined();
  static LabelSchema ByName(std::string_view name);

  const std::vector<std::string>& entity_classes() const { return classes_; }
  const std::vector<std::string>& labels() const { return labels_; }
  size_t size() const { return labels_.size(); }
  bool Contains(std::string_view label) const;
  // Throws for labels outside the schema.
  int Index(std::string_view label) const;
  const std::string& Label(size_t index) const { return labels_.at(index); }

  friend bool operator==(const LabelSchema& a, const LabelSchema& b) {
    return a.classes_ == b.classes_;
  }

 private:
  std::vector<std::string> classes_;
  std::vector<std::string> labels_;
  std::map<std::string, int, std::less<>> index_;
};

struct ParsedTag {
  char prefix = 'O';  // 'O', 'B' or 'I'
  std::string entity_class;
};

// Splits "B-LOC" into ('B', "LOC"). Throws on malformed tags.
ParsedTag ParseTag(std::string_view tag);

struct Token {
  std::string text;
  Casing casing = Casing::kOther;
};

struct Sentence {
  std::vector<Token> tokens;
  std::vector<std::string> outer_labels;
  std::vector<std::string> inner_labels;  // empty when absent
  std::string source_id;

  size_t size() const { return tokens.size(); }
  bool has_inner() const { return !inner_labels.empty(); }
  std::vector<std::string> Texts() const;

  static Sentence FromTexts(std::span<const std::string> texts);
};

// Tab-separated: index, token, outer label, inner label. "#" lines are
// comments; blank lines separate sentences.
std::vector<Sentence> ParseGermEval(const std::string& path,
                                    const LabelSchema& schema = LabelSchema::GermEval());
std::vector<Sentence> ParseGermEvalText(std::string_view text,
                                        const LabelSchema& schema = LabelSchema::GermEval(),
                                        const std::string& source = "<text>");
void WriteGermEval(const std::string& path, std::span<const Sentence> sentences);
std::string FormatGermEval(std::span<const Sentence> sentences);

// Whitespace-separated columns, token first and NE tag last. -DOCSTART-
// blocks are dropped. Labels are returned as found (IOB for the original
// release); validation is against the schema's entity classes.
std::vector<Sentence> ParseConll03(const std::string& path,
                                   const LabelSchema& schema = LabelSchema::Conll());
std::vector<Sentence> ParseConll03Text(std::string_view text,
                                       const LabelSchema& schema = LabelSchema::Conll(),
                                       const std::string& source = "<text>");
// Two columns: token and outer label.
std::string FormatConll(std::span<const Sentence> sentences);

// I-X becomes B-X at a sentence start or after anything but B-X / I-X.
std::vector<std::string> IobToBio(std::span<const std::string> labels);
void ConvertIobToBio(std::vector<Sentence>& sentences);

// Character vocabulary with reserved slots 0 = padding, 1 = unknown, then
// the virtual boundary characters.
class CharVocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnknown = 1;
  static constexpr int kSentenceBegin = 2;
  static constexpr int kSentenceEnd = 3;
  static constexpr int kWordBegin = 4;
  static constexpr int kWordEnd = 5;
  static constexpr int kReserved = 6;

  CharVocab() = default;
  // Characters of the training split in order of first occurrence.
  static CharVocab Build(std::span<const Sentence> training);
  static CharVocab FromChars(std::vector<std::string> chars);

  int Index(std::string_view character) const;
  size_t size() const { return kReserved + chars_.size(); }
  const std::vector<std::string>& chars() const { return chars_; }

  friend bool operator==(const CharVocab& a, const CharVocab& b) {
    return a.chars_ == b.chars_;
  }

 private:
  std::vector<std::string> chars_;
  std::map<std::string, int, std::less<>> index_;
};

enum class CharMode { kNone, kCnn, kRnn };

std::string_view CharModeName(CharMode mode);

// Decorated length of token i: raw characters in rnn mode; with <W> </W>
// and the sentence markers on the first and last token in cnn mode.
size_t DecoratedLength(const Sentence& sentence, size_t token, CharMode mode);

// cnn: [<S>] <W> chars </W> [</S>] post-padded with 0.
// rnn: raw characters pre-padded with 0.
std::vector<std::vector<int>> BuildCharSequences(const Sentence& sentence,
                                                 const CharVocab& vocab,
                                                 CharMode mode, size_t pad_len);

struct Batch {
  std::vector<const Sentence*> sentences;
  std::vector<size_t> ids;  // positions in the source list
  size_t max_len = 0;
  std::vector<std::vector<uint8_t>> mask;  // [max_len][batch]
  CharMode char_mode = CharMode::kNone;
  size_t char_pad_len = 0;
  // chars[b][t] for t < sentence length.
  std::vector<std::vector<std::vector<int>>> chars;

  size_t size() const { return sentences.size(); }
};

// Shuffles by seed, sorts pools of sentences by length, cuts batches and
// shuffles batch order. Every sentence appears in exactly one batch.
std::vector<Batch> MakeBatches(std::span<const Sentence> sentences,
                               size_t batch_size, uint64_t seed);
// Batches in input order without shuffling.
std::vector<Batch> SequentialBatches(std::span<const Sentence> sentences,
                                     size_t batch_size);
Batch MakeBatch(std::vector<const Sentence*> sentences, std::vector<size_t> ids = {});

// Fills char sequences padded to the longest decorated token in the batch.
void AttachChars(Batch& batch, const CharVocab& vocab, CharMode mode);

}  // namespace gner

#endif  // GNER_CORPUS_H_
