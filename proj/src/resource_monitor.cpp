#include "enkf/resource_monitor.hpp"

#include <unistd.h>

#include <fstream>

namespace enkf {

std::int64_t current_rss_bytes() {
  std::ifstream statm("/proc/self/statm");
  std::int64_t total_pages = 0;
  std::int64_t resident_pages = 0;
  if (!(statm >> total_pages >> resident_pages)) return 0;
  return resident_pages * static_cast<std::int64_t>(sysconf(_SC_PAGESIZE));
}

PeakMemorySampler::PeakMemorySampler(std::chrono::milliseconds period) : period_(period) {
  observe();
  worker_ = std::jthread([this](std::stop_token stop) {
    std::unique_lock lock(mutex_);
    while (!stop.stop_requested()) {
      wake_.wait_for(lock, stop, period_, [] { return false; });
      observe();
    }
  });
}

PeakMemorySampler::~PeakMemorySampler() { stop(); }

std::int64_t PeakMemorySampler::stop() {
  if (worker_.joinable()) {
    worker_.request_stop();
    worker_.join();
    observe();
  }
  return peak_.load();
}

void PeakMemorySampler::observe() {
  const auto now = current_rss_bytes();
  auto peak = peak_.load();
  while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
  }
}

}  // namespace enkf
