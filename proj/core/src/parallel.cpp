#include "bmaforge/parallel.hpp"

#include <cstdlib>
#include <string>

namespace bmaforge {

int worker_count() {
  if (const char* env = std::getenv("BMA_FORGE_WORKERS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
      // fall through to the hardware default
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace bmaforge
