#ifndef GNER_FASTTEXT_BIN_H_
#define GNER_FASTTEXT_BIN_H_

#include <string>

namespace gner {

struct FastTextBinInfo {
  size_t dim = 0;
  size_t words = 0;
  size_t buckets = 0;
  int min_n = 0;
  int max_n = 0;
};

// Converts a fastText .bin model (format version 12, not quantized) to the
// FTXT1 text store. Word rows are the vectors fastText reports for
// in-vocabulary words: the mean of the word row and its n-gram rows.
FastTextBinInfo ConvertFastTextBin(const std::string& bin_path,
                                   const std::string& out_path);

}  // namespace gner

#endif  // GNER_FASTTEXT_BIN_H_
