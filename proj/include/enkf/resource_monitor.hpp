#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <thread>

namespace enkf {

/// Current resident set size of this process in bytes (0 if unavailable).
std::int64_t current_rss_bytes();

/// Samples the process RSS on a background thread and tracks the maximum
/// seen between construction and stop().
class PeakMemorySampler {
 public:
  explicit PeakMemorySampler(std::chrono::milliseconds period = std::chrono::milliseconds(50));
  ~PeakMemorySampler();

  PeakMemorySampler(const PeakMemorySampler&) = delete;
  PeakMemorySampler& operator=(const PeakMemorySampler&) = delete;

  /// Stops sampling and returns the peak RSS in bytes. Idempotent.
  std::int64_t stop();

 private:
  void observe();

  std::chrono::milliseconds period_;
  std::atomic<std::int64_t> peak_{0};
  std::mutex mutex_;
  std::condition_variable_any wake_;
  std::jthread worker_;
};

}  // namespace enkf
