#include "ptd/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace ptd::parallel {

namespace {

std::atomic<bool> g_deterministic{false};

int env_cap() {
  const char* v = std::getenv("PTD_THREADS");
  if (!v) return 0;
  try {
    return std::max(1, std::stoi(v));
  } catch (const std::exception&) {
    return 0;
  }
}

}  // namespace

void set_deterministic(bool on) { g_deterministic = on; }
bool deterministic() { return g_deterministic; }

int thread_count() {
  if (g_deterministic) return 1;
  int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (int cap = env_cap(); cap > 0) n = std::min(n, cap);
  return n;
}

int chunk_count(std::size_t n) {
  return static_cast<int>(std::max<std::size_t>(1, std::min<std::size_t>(n, thread_count())));
}

int for_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t, int)>& fn) {
  const int chunks = chunk_count(n);
  if (chunks == 1) {
    fn(0, n, 0);
    return 1;
  }
  std::vector<std::exception_ptr> errors(chunks);
  std::vector<std::thread> workers;
  workers.reserve(chunks - 1);
  auto run = [&](int c) {
    const std::size_t begin = n * c / chunks;
    const std::size_t end = n * (c + 1) / chunks;
    try {
      fn(begin, end, c);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  for (int c = 1; c < chunks; ++c) workers.emplace_back(run, c);
  run(0);
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return chunks;
}

}  // namespace ptd::parallel
