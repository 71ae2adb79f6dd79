#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace brwre {

/// Runs body(i) for i in [0, count) on up to `threads` workers. Callers write
/// results into per-index slots, so output order never depends on scheduling.
/// If several indices throw, the exception of the lowest index is rethrown.
template <class Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body) {
  threads = std::max(1u, threads);
  if (threads == 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned spawn = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  for (unsigned w = 0; w < spawn; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace brwre
