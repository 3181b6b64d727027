#include "himor/autodiff.hpp"

namespace himor::ad {

Tape*& active_tape() {
  thread_local Tape* tape = nullptr;
  return tape;
}

}  // namespace himor::ad
