// Converts a fastText .bin model to the FTXT1 text store.

#include <iostream>

#include "CLI11.hpp"

#include "gner/fasttext_bin.h"

int main(int argc, char** argv) {
  CLI::App app{"fastText .bin to FTXT1 converter"};
  std::string input, output;
  app.add_option("input", input, "fastText .bin model")->required();
  app.add_option("output", output, "FTXT1 file to write")->required();
  CLI11_PARSE(app, argc, argv);
  try {
    auto info = gner::ConvertFastTextBin(input, output);
    std::cerr << "wrote " << info.words << " words and " << info.buckets << " buckets ("
              << info.dim << " dims)\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
