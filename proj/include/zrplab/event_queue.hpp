#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

namespace zrp {

// Indexed binary min-heap of per-channel next-event times. Ties are broken by
// channel index so the global event order is a pure function of the times.
class EventQueue {
 public:
  static constexpr double kNever = std::numeric_limits<double>::infinity();

  explicit EventQueue(std::size_t channels = 0) { reset(channels); }

  void reset(std::size_t channels) {
    time_.assign(channels, kNever);
    heap_.resize(channels);
    pos_.resize(channels);
    for (std::size_t i = 0; i < channels; ++i) {
      heap_[i] = static_cast<std::uint32_t>(i);
      pos_[i] = static_cast<std::uint32_t>(i);
    }
  }

  std::size_t size() const noexcept { return time_.size(); }
  bool empty() const noexcept { return time_.empty(); }
  double time(std::size_t channel) const noexcept { return time_[channel]; }
  std::size_t top() const noexcept { return heap_[0]; }
  double top_time() const noexcept { return time_.empty() ? kNever : time_[heap_[0]]; }

  void set(std::size_t channel, double t) {
    const double old = time_[channel];
    time_[channel] = t;
    if (t < old)
      sift_up(pos_[channel]);
    else if (t > old)
      sift_down(pos_[channel]);
  }

 private:
  bool less(std::uint32_t a, std::uint32_t b) const noexcept {
    return time_[a] < time_[b] || (time_[a] == time_[b] && a < b);
  }
  void place(std::size_t i, std::uint32_t ch) {
    heap_[i] = ch;
    pos_[ch] = static_cast<std::uint32_t>(i);
  }
  void sift_up(std::size_t i) {
    const std::uint32_t ch = heap_[i];
    while (i > 0) {
      const std::size_t p = (i - 1) / 2;
      if (!less(ch, heap_[p])) break;
      place(i, heap_[p]);
      i = p;
    }
    place(i, ch);
  }
  void sift_down(std::size_t i) {
    const std::uint32_t ch = heap_[i];
    const std::size_t n = heap_.size();
    for (;;) {
      std::size_t c = 2 * i + 1;
      if (c >= n) break;
      if (c + 1 < n && less(heap_[c + 1], heap_[c])) ++c;
      if (!less(heap_[c], ch)) break;
      place(i, heap_[c]);
      i = c;
    }
    place(i, ch);
  }

  std::vector<double> time_;
  std::vector<std::uint32_t> heap_;
  std::vector<std::uint32_t> pos_;
};

}  // namespace zrp
