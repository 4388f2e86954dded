#include "penadd/parallel.hpp"

#include <cstdlib>

namespace penadd {

namespace {
int resolve_default() {
  if (const char* env = std::getenv("PENADD_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}
std::atomic<int> g_threads{0};
}  // namespace

int default_threads() {
  int n = g_threads.load(std::memory_order_relaxed);
  if (n == 0) {
    n = resolve_default();
    g_threads.store(n, std::memory_order_relaxed);
  }
  return n;
}

void set_default_threads(int n) { g_threads.store(n < 1 ? 1 : n, std::memory_order_relaxed); }

}  // namespace penadd
