#include "gner/corpus.h"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "gner/tensor.h"
#include "gner/utf8.h"

namespace gner {
namespace {

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read corpus file '" + path + "'");
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::vector<std::string_view> SplitLines(std::string_view text) {
  std::vector<std::string_view> lines;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = nl + 1;
  }
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

std::vector<std::string_view> Split(std::string_view line, bool tabs_only) {
  std::vector<std::string_view> out;
  if (tabs_only) {
    size_t pos = 0;
    while (true) {
      size_t tab = line.find('\t', pos);
      out.push_back(line.substr(pos, tab == std::string_view::npos ? line.npos : tab - pos));
      if (tab == std::string_view::npos) break;
      pos = tab + 1;
    }
    return out;
  }
  size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
    size_t start = pos;
    while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t') ++pos;
    if (pos > start) out.push_back(line.substr(start, pos - start));
  }
  return out;
}

bool IsBlank(std::string_view line) {
  return line.find_first_not_of(" \t") == std::string_view::npos;
}

void CheckLabel(const LabelSchema& schema, std::string_view label,
                const std::string& where) {
  ParsedTag tag;
  try {
    tag = ParseTag(label);
  } catch (const Error& e) {
    throw Error(where + ": " + e.what());
  }
  if (tag.prefix == 'O') return;
  const auto& classes = schema.entity_classes();
  if (std::find(classes.begin(), classes.end(), tag.entity_class) == classes.end()) {
    throw Error(where + ": unknown label '" + std::string(label) + "'");
  }
}

Token MakeToken(std::string_view text) {
  return {std::string(text), ClassifyCasing(text)};
}

}  // namespace

std::string_view CasingName(Casing casing) {
  switch (casing) {
    case Casing::kAllLower: return "all_lower";
    case Casing::kAllUpper: return "all_upper";
    case Casing::kInitialUpper: return "initial_upper";
    case Casing::kNumeric: return "numeric";
    case Casing::kMainlyNumeric: return "mainly_numeric";
    case Casing::kContainsDigit: return "contains_digit";
    case Casing::kOther: return "other";
  }
  return "other";
}

Casing ClassifyCasing(std::string_view token) {
  std::u32string cps = DecodeUtf8(token);
  if (cps.empty()) return Casing::kOther;
  size_t digits = 0, upper = 0, lower = 0;
  for (char32_t c : cps) {
    digits += IsDecimalDigit(c);
    upper += IsUpper(c);
    lower += IsLower(c);
  }
  if (digits == cps.size()) return Casing::kNumeric;
  if (2 * digits > cps.size()) return Casing::kMainlyNumeric;
  if (lower > 0 && upper == 0) return Casing::kAllLower;
  if (upper > 0 && lower == 0) return Casing::kAllUpper;
  if (IsUpper(cps[0]) && upper == 1) return Casing::kInitialUpper;
  if (digits > 0) return Casing::kContainsDigit;
  return Casing::kOther;
}

std::array<double, kCasingDim> CasingOneHot(std::string_view token) {
  std::array<double, kCasingDim> v{};
  v[static_cast<size_t>(ClassifyCasing(token))] = 1.0;
  return v;
}

LabelSchema::LabelSchema(std::vector<std::string> entity_classes)
    : classes_(std::move(entity_classes)) {
  labels_.push_back("O");
  for (const std::string& c : classes_) {
    if (c.empty()) throw Error("entity class names must be non-empty");
    labels_.push_back("B-" + c);
    labels_.push_back("I-" + c);
  }
  for (size_t i = 0; i < labels_.size(); ++i) {
    if (!index_.emplace(labels_[i], static_cast<int>(i)).second) {
      throw Error("duplicate label '" + labels_[i] + "' in schema");
    }
  }
}

LabelSchema LabelSchema::GermEval() {
  std::vector<std::string> classes;
  for (const char* main : {"PER", "LOC", "ORG", "OTH"}) {
    for (const char* suffix : {"", "deriv", "part"}) {
      classes.push_back(std::string(main) + suffix);
    }
  }
  return LabelSchema(std::move(classes));
}

LabelSchema LabelSchema::Conll() { return LabelSchema({"PER", "LOC", "ORG", "MISC"}); }

LabelSchema LabelSchema::Combined() {
  return LabelSchema({"PER", "LOC", "ORG", "OTH", "MISC"});
}

LabelSchema LabelSchema::ByName(std::string_view name) {
  if (name == "germeval") return GermEval();
  if (name == "conll") return Conll();
  if (name == "combined") return Combined();
  throw Error("unknown label schema '" + std::string(name) +
              "' (expected germeval, conll or combined)");
}

bool LabelSchema::Contains(std::string_view label) const {
  return index_.find(label) != index_.end();
}

int LabelSchema::Index(std::string_view label) const {
  auto it = index_.find(label);
  if (it == index_.end()) {
    throw Error("label '" + std::string(label) + "' is not in the schema");
  }
  return it->second;
}

ParsedTag ParseTag(std::string_view tag) {
  if (tag == "O") return {};
  if (tag.size() < 3 || (tag[0] != 'B' && tag[0] != 'I') || tag[1] != '-') {
    throw Error("malformed tag '" + std::string(tag) + "'");
  }
  return {tag[0], std::string(tag.substr(2))};
}

std::vector<std::string> Sentence::Texts() const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const Token& t : tokens) out.push_back(t.text);
  return out;
}

Sentence Sentence::FromTexts(std::span<const std::string> texts) {
  Sentence s;
  for (const std::string& t : texts) s.tokens.push_back(MakeToken(t));
  s.outer_labels.assign(texts.size(), "O");
  return s;
}

std::vector<Sentence> ParseGermEvalText(std::string_view text,
                                        const LabelSchema& schema,
                                        const std::string& source) {
  std::vector<Sentence> out;
  Sentence current;
  std::string pending_id;
  size_t line_no = 0;
  auto flush = [&] {
    if (!current.tokens.empty()) {
      if (current.source_id.empty()) current.source_id = source;
      out.push_back(std::move(current));
    }
    current = Sentence{};
  };
  for (std::string_view line : SplitLines(text)) {
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no);
    if (IsBlank(line)) {
      flush();
      continue;
    }
    if (line[0] == '#') {
      std::string_view id = line.substr(1);
      while (!id.empty() && (id.front() == ' ' || id.front() == '\t')) id.remove_prefix(1);
      if (current.tokens.empty()) current.source_id = std::string(id);
      continue;
    }
    auto fields = Split(line, true);
    if (fields.size() != 4) {
      throw Error(where + ": expected 4 tab-separated columns, found " +
                  std::to_string(fields.size()));
    }
    CheckLabel(schema, fields[2], where);
    CheckLabel(schema, fields[3], where);
    if (current.tokens.empty() && current.source_id.empty()) current.source_id = where;
    current.tokens.push_back(MakeToken(fields[1]));
    current.outer_labels.emplace_back(fields[2]);
    current.inner_labels.emplace_back(fields[3]);
  }
  flush();
  return out;
}

std::vector<Sentence> ParseGermEval(const std::string& path, const LabelSchema& schema) {
  return ParseGermEvalText(ReadFile(path), schema, path);
}

std::string FormatGermEval(std::span<const Sentence> sentences) {
  std::ostringstream out;
  for (const Sentence& s : sentences) {
    if (!s.source_id.empty()) out << "# " << s.source_id << "\n";
    for (size_t i = 0; i < s.size(); ++i) {
      out << (i + 1) << '\t' << s.tokens[i].text << '\t' << s.outer_labels[i] << '\t'
          << (s.has_inner() ? s.inner_labels[i] : std::string("O")) << '\n';
    }
    out << '\n';
  }
  return out.str();
}

void WriteGermEval(const std::string& path, std::span<const Sentence> sentences) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << FormatGermEval(sentences);
}

std::vector<Sentence> ParseConll03Text(std::string_view text,
                                       const LabelSchema& schema,
                                       const std::string& source) {
  std::vector<Sentence> out;
  Sentence current;
  bool docstart = false;
  size_t line_no = 0;
  auto flush = [&] {
    if (!current.tokens.empty() && !docstart) out.push_back(std::move(current));
    current = Sentence{};
    docstart = false;
  };
  for (std::string_view line : SplitLines(text)) {
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no);
    if (IsBlank(line)) {
      flush();
      continue;
    }
    auto fields = Split(line, false);
    if (fields.size() < 2) {
      throw Error(where + ": expected a token and a tag column");
    }
    if (fields[0] == "-DOCSTART-") docstart = true;
    if (docstart) continue;
    CheckLabel(schema, fields.back(), where);
    if (current.tokens.empty()) current.source_id = where;
    current.tokens.push_back(MakeToken(fields[0]));
    current.outer_labels.emplace_back(fields.back());
  }
  flush();
  return out;
}

std::vector<Sentence> ParseConll03(const std::string& path, const LabelSchema& schema) {
  return ParseConll03Text(ReadFile(path), schema, path);
}

std::string FormatConll(std::span<const Sentence> sentences) {
  std::ostringstream out;
  for (const Sentence& s : sentences) {
    for (size_t i = 0; i < s.size(); ++i) {
      out << s.tokens[i].text << ' ' << s.outer_labels[i] << '\n';
    }
    out << '\n';
  }
  return out.str();
}

std::vector<std::string> IobToBio(std::span<const std::string> labels) {
  std::vector<std::string> out;
  out.reserve(labels.size());
  ParsedTag prev;
  for (const std::string& label : labels) {
    ParsedTag tag = ParseTag(label);
    if (tag.prefix == 'I' &&
        (prev.prefix == 'O' || prev.entity_class != tag.entity_class)) {
      out.push_back("B-" + tag.entity_class);
    } else {
      out.push_back(label);
    }
    prev = std::move(tag);
  }
  return out;
}

void ConvertIobToBio(std::vector<Sentence>& sentences) {
  for (Sentence& s : sentences) {
    s.outer_labels = IobToBio(s.outer_labels);
    if (s.has_inner()) s.inner_labels = IobToBio(s.inner_labels);
  }
}

CharVocab CharVocab::Build(std::span<const Sentence> training) {
  std::vector<std::string> chars;
  std::map<std::string, int, std::less<>> seen;
  for (const Sentence& s : training) {
    for (const Token& t : s.tokens) {
      for (std::string& c : SplitCodePoints(t.text)) {
        if (seen.emplace(c, 0).second) chars.push_back(std::move(c));
      }
    }
  }
  return FromChars(std::move(chars));
}

CharVocab CharVocab::FromChars(std::vector<std::string> chars) {
  CharVocab vocab;
  vocab.chars_ = std::move(chars);
  for (size_t i = 0; i < vocab.chars_.size(); ++i) {
    if (!vocab.index_.emplace(vocab.chars_[i], kReserved + static_cast<int>(i)).second) {
      throw Error("duplicate character in vocabulary");
    }
  }
  return vocab;
}

int CharVocab::Index(std::string_view character) const {
  auto it = index_.find(character);
  return it == index_.end() ? kUnknown : it->second;
}

std::string_view CharModeName(CharMode mode) {
  switch (mode) {
    case CharMode::kNone: return "none";
    case CharMode::kCnn: return "cnn";
    case CharMode::kRnn: return "rnn";
  }
  return "none";
}

size_t DecoratedLength(const Sentence& sentence, size_t token, CharMode mode) {
  size_t n = SplitCodePoints(sentence.tokens[token].text).size();
  if (mode != CharMode::kCnn) return n;
  n += 2;
  if (token == 0) ++n;
  if (token + 1 == sentence.size()) ++n;
  return n;
}

std::vector<std::vector<int>> BuildCharSequences(const Sentence& sentence,
                                                 const CharVocab& vocab,
                                                 CharMode mode, size_t pad_len) {
  if (mode == CharMode::kNone) throw Error("build_char_sequences: mode none");
  std::vector<std::vector<int>> out;
  out.reserve(sentence.size());
  for (size_t i = 0; i < sentence.size(); ++i) {
    std::vector<int> seq;
    if (mode == CharMode::kCnn) {
      if (i == 0) seq.push_back(CharVocab::kSentenceBegin);
      seq.push_back(CharVocab::kWordBegin);
    }
    for (const std::string& c : SplitCodePoints(sentence.tokens[i].text)) {
      seq.push_back(vocab.Index(c));
    }
    if (mode == CharMode::kCnn) {
      seq.push_back(CharVocab::kWordEnd);
      if (i + 1 == sentence.size()) seq.push_back(CharVocab::kSentenceEnd);
    }
    if (seq.size() > pad_len) {
      throw Error("build_char_sequences: token '" + sentence.tokens[i].text +
                  "' needs " + std::to_string(seq.size()) + " positions, pad_len is " +
                  std::to_string(pad_len));
    }
    size_t pad = pad_len - seq.size();
    if (mode == CharMode::kCnn) {
      seq.insert(seq.end(), pad, CharVocab::kPad);
    } else {
      seq.insert(seq.begin(), pad, CharVocab::kPad);
    }
    out.push_back(std::move(seq));
  }
  return out;
}

Batch MakeBatch(std::vector<const Sentence*> sentences, std::vector<size_t> ids) {
  Batch batch;
  if (ids.empty()) {
    ids.resize(sentences.size());
    std::iota(ids.begin(), ids.end(), size_t{0});
  }
  batch.sentences = std::move(sentences);
  batch.ids = std::move(ids);
  for (const Sentence* s : batch.sentences) {
    if (s->size() == 0) throw Error("batch contains an empty sentence");
    batch.max_len = std::max(batch.max_len, s->size());
  }
  batch.mask.assign(batch.max_len, std::vector<uint8_t>(batch.size(), 0));
  for (size_t b = 0; b < batch.size(); ++b) {
    for (size_t t = 0; t < batch.sentences[b]->size(); ++t) batch.mask[t][b] = 1;
  }
  return batch;
}

std::vector<Batch> MakeBatches(std::span<const Sentence> sentences,
                               size_t batch_size, uint64_t seed) {
  if (batch_size == 0) throw Error("make_batches: batch_size must be >= 1");
  std::vector<size_t> order(sentences.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const size_t pool = batch_size * 32;
  std::vector<std::vector<size_t>> groups;
  for (size_t begin = 0; begin < order.size(); begin += pool) {
    size_t end = std::min(order.size(), begin + pool);
    std::stable_sort(order.begin() + begin, order.begin() + end, [&](size_t a, size_t b) {
      return sentences[a].size() < sentences[b].size();
    });
    for (size_t i = begin; i < end; i += batch_size) {
      groups.emplace_back(order.begin() + i, order.begin() + std::min(end, i + batch_size));
    }
  }
  std::shuffle(groups.begin(), groups.end(), rng);

  std::vector<Batch> out;
  out.reserve(groups.size());
  for (auto& ids : groups) {
    std::vector<const Sentence*> ptrs;
    for (size_t id : ids) ptrs.push_back(&sentences[id]);
    out.push_back(MakeBatch(std::move(ptrs), std::move(ids)));
  }
  return out;
}

std::vector<Batch> SequentialBatches(std::span<const Sentence> sentences,
                                     size_t batch_size) {
  if (batch_size == 0) throw Error("batch_size must be >= 1");
  std::vector<Batch> out;
  for (size_t begin = 0; begin < sentences.size(); begin += batch_size) {
    size_t end = std::min(sentences.size(), begin + batch_size);
    std::vector<const Sentence*> ptrs;
    std::vector<size_t> ids;
    for (size_t i = begin; i < end; ++i) {
      ptrs.push_back(&sentences[i]);
      ids.push_back(i);
    }
    out.push_back(MakeBatch(std::move(ptrs), std::move(ids)));
  }
  return out;
}

void AttachChars(Batch& batch, const CharVocab& vocab, CharMode mode) {
  batch.char_mode = mode;
  batch.chars.clear();
  batch.char_pad_len = 0;
  if (mode == CharMode::kNone) return;
  for (const Sentence* s : batch.sentences) {
    for (size_t i = 0; i < s->size(); ++i) {
      batch.char_pad_len = std::max(batch.char_pad_len, DecoratedLength(*s, i, mode));
    }
  }
  for (const Sentence* s : batch.sentences) {
    batch.chars.push_back(BuildCharSequences(*s, vocab, mode, batch.char_pad_len));
  }
}

}  // namespace gner
