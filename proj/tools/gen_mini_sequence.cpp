// Regenerates the bundled synthetic mini sequence (data/mini_sequence).
// The generator is deterministic; running it twice produces identical bytes.

#include <iostream>

#include "rangeseg/synth.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: gen_mini_sequence <output-dir>\n";
    return 1;
  }
  try {
    rangeseg::synth::write_mini_sequence(argv[1]);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::cout << "mini sequence written to " << argv[1] << "\n";
  return 0;
}
