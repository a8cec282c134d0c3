#include "nef/parallel.hpp"

#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace nef {

namespace {

std::size_t read_budget() {
  const char* env = std::getenv("NEF_THREADS");
  long parsed = 0;
  if (env != nullptr && *env != '\0') {
    char* end = nullptr;
    parsed = std::strtol(env, &end, 10);
    if (end == nullptr || *end != '\0' || parsed < 0) parsed = 0;
  }
  if (parsed == 0) {
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<std::size_t>(hw);
  }
  return static_cast<std::size_t>(parsed);
}

}  // namespace

std::size_t thread_budget() {
  static const std::size_t budget = read_budget();
  return budget;
}

void parallel_for(std::int64_t n, std::int64_t grain,
                  const std::function<void(std::int64_t, std::int64_t)>& fn) {
  if (n <= 0) return;
  if (grain < 1) grain = 1;
  std::size_t budget = thread_budget();
  std::int64_t max_chunks = (n + grain - 1) / grain;
  std::int64_t chunks = static_cast<std::int64_t>(budget);
  if (chunks > max_chunks) chunks = max_chunks;
  if (chunks <= 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(chunks));
  std::int64_t base = n / chunks;
  std::int64_t extra = n % chunks;
  std::int64_t begin = 0;
  for (std::int64_t c = 0; c < chunks; ++c) {
    std::int64_t len = base + (c < extra ? 1 : 0);
    std::int64_t end = begin + len;
    workers.emplace_back([&fn, begin, end]() { fn(begin, end); });
    begin = end;
  }
  for (auto& w : workers) w.join();
}

}  // namespace nef
