// Framed stdin/stdout coder server backed by the reference coder.

#include <iostream>

#include "diffo/coder.hpp"

int main() {
  diffo::ReferenceCoder coder;
  try {
    diffo::frame::serve(0, 1, coder);
  } catch (const std::exception& e) {
    std::cerr << "stub_coder_proc: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
