#include "gner/fasttext_bin.h"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

#include "gner/embeddings.h"
#include "gner/tensor.h"

namespace gner {
namespace {

constexpr int32_t kMagic = 793712314;
constexpr int32_t kVersion = 12;

class MappedFile {
 public:
  explicit MappedFile(const std::string& path) : path_(path) {
    fd_ = ::open(path.c_str(), O_RDONLY);
    if (fd_ < 0) throw Error("cannot open fastText model '" + path + "'");
    struct stat st {};
    if (::fstat(fd_, &st) != 0) throw Error("cannot stat '" + path + "'");
    size_ = static_cast<size_t>(st.st_size);
    if (size_ == 0) throw Error(path + ": empty file");
    void* p = ::mmap(nullptr, size_, PROT_READ, MAP_PRIVATE, fd_, 0);
    if (p == MAP_FAILED) throw Error("cannot map '" + path + "'");
    data_ = static_cast<const char*>(p);
  }
  ~MappedFile() {
    if (data_) ::munmap(const_cast<char*>(data_), size_);
    if (fd_ >= 0) ::close(fd_);
  }
  MappedFile(const MappedFile&) = delete;
  MappedFile& operator=(const MappedFile&) = delete;

  template <typename T>
  T Read(size_t& pos) const {
    Need(pos, sizeof(T));
    T value;
    std::memcpy(&value, data_ + pos, sizeof(T));
    pos += sizeof(T);
    return value;
  }

  std::string ReadCString(size_t& pos) const {
    const void* end = pos < size_ ? std::memchr(data_ + pos, '\0', size_ - pos) : nullptr;
    if (!end) throw Error(path_ + ": truncated dictionary");
    std::string s(data_ + pos, static_cast<const char*>(end));
    pos += s.size() + 1;
    return s;
  }

  void Need(size_t pos, size_t bytes) const {
    if (pos + bytes > size_) throw Error(path_ + ": truncated fastText model");
  }

  const char* data() const { return data_; }

 private:
  std::string path_;
  int fd_ = -1;
  size_t size_ = 0;
  const char* data_ = nullptr;
};

void WriteRow(FILE* f, const float* row, size_t dim, bool leading_space) {
  for (size_t i = 0; i < dim; ++i) {
    std::fprintf(f, (i == 0 && !leading_space) ? "%.9g" : " %.9g",
                 static_cast<double>(row[i]));
  }
  std::fputc('\n', f);
}

}  // namespace

FastTextBinInfo ConvertFastTextBin(const std::string& bin_path, const std::string& out_path) {
  MappedFile file(bin_path);
  size_t pos = 0;
  if (file.Read<int32_t>(pos) != kMagic) throw Error(bin_path + ": not a fastText model");
  int32_t version = file.Read<int32_t>(pos);
  if (version != kVersion) {
    throw Error(bin_path + ": unsupported fastText version " + std::to_string(version));
  }
  // Args: dim ws epoch minCount neg wordNgrams loss model bucket minn maxn
  // lrUpdateRate, then t as a double.
  int32_t args[12];
  for (int32_t& a : args) a = file.Read<int32_t>(pos);
  file.Read<double>(pos);
  FastTextBinInfo info;
  info.dim = static_cast<size_t>(args[0]);
  info.buckets = static_cast<size_t>(args[8]);
  info.min_n = args[9];
  info.max_n = args[10];

  int32_t size = file.Read<int32_t>(pos);
  int32_t nwords = file.Read<int32_t>(pos);
  file.Read<int32_t>(pos);  // nlabels
  file.Read<int64_t>(pos);  // ntokens
  int64_t prune_size = file.Read<int64_t>(pos);
  std::vector<std::string> words;
  for (int32_t i = 0; i < size; ++i) {
    std::string w = file.ReadCString(pos);
    file.Read<int64_t>(pos);  // count
    int8_t type = file.Read<int8_t>(pos);
    if (type == 0) words.push_back(std::move(w));
  }
  if (static_cast<int32_t>(words.size()) != nwords) {
    throw Error(bin_path + ": dictionary lists " + std::to_string(words.size()) +
                " words, header says " + std::to_string(nwords));
  }
  if (prune_size > 0) throw Error(bin_path + ": pruned (quantized) models are not supported");
  if (file.Read<uint8_t>(pos) != 0) {
    throw Error(bin_path + ": quantized models are not supported");
  }
  int64_t rows = file.Read<int64_t>(pos);
  int64_t cols = file.Read<int64_t>(pos);
  info.words = words.size();
  if (static_cast<size_t>(cols) != info.dim ||
      static_cast<size_t>(rows) != info.words + info.buckets) {
    throw Error(bin_path + ": input matrix is " + std::to_string(rows) + "x" +
                std::to_string(cols) + ", expected " +
                std::to_string(info.words + info.buckets) + "x" + std::to_string(info.dim));
  }
  file.Need(pos, static_cast<size_t>(rows * cols) * sizeof(float));
  const char* matrix = file.data() + pos;
  auto row = [&](size_t r) {
    return reinterpret_cast<const float*>(matrix + r * info.dim * sizeof(float));
  };

  std::unique_ptr<FILE, int (*)(FILE*)> out(std::fopen(out_path.c_str(), "w"), &std::fclose);
  if (!out) throw Error("cannot write '" + out_path + "'");
  std::fprintf(out.get(), "FTXT1 %zu %d %d %zu %zu\n", info.dim, info.min_n, info.max_n,
               info.buckets, info.words);
  std::vector<double> sum(info.dim);
  std::vector<float> vec(info.dim);
  for (size_t w = 0; w < words.size(); ++w) {
    const float* own = row(w);
    for (size_t i = 0; i < info.dim; ++i) sum[i] = own[i];
    size_t count = 1;
    if (info.buckets > 0 && info.max_n > 0 && words[w] != "</s>") {
      for (const std::string& g : ExtractCharNgrams(words[w], info.min_n, info.max_n)) {
        const float* r = row(info.words + FastTextHash(g) % info.buckets);
        for (size_t i = 0; i < info.dim; ++i) sum[i] += r[i];
        ++count;
      }
    }
    for (size_t i = 0; i < info.dim; ++i) {
      vec[i] = static_cast<float>(sum[i] / static_cast<double>(count));
    }
    std::fputs(words[w].c_str(), out.get());
    WriteRow(out.get(), vec.data(), info.dim, true);
  }
  for (size_t b = 0; b < info.buckets; ++b) {
    WriteRow(out.get(), row(info.words + b), info.dim, false);
  }
  if (std::ferror(out.get())) throw Error("failed writing '" + out_path + "'");
  return info;
}

}  // namespace gner
