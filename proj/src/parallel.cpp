#include "himor/parallel.hpp"

namespace himor {

int& max_threads() {
  static int threads = 1;
  return threads;
}

}  // namespace himor
