#pragma once

#include <atomic>
#include <cstdint>
#include <type_traits>

namespace porosim {

/// Single-writer / single-reader latest-value slot (triple buffer). Both
/// sides are wait-free; the reader always gets a complete value and never a
/// value older than one it has already seen.
template <typename T>
class Mailbox {
  static_assert(std::is_copy_assignable_v<T>);

 public:
  Mailbox() = default;
  explicit Mailbox(const T& initial) {
    for (auto& s : slots_) s = initial;
  }

  Mailbox(const Mailbox&) = delete;
  Mailbox& operator=(const Mailbox&) = delete;

  /// Writer side.
  void publish(const T& value) {
    slots_[back_] = value;
    const std::uint8_t prev = middle_.exchange(static_cast<std::uint8_t>(back_ | kFresh), std::memory_order_acq_rel);
    back_ = prev & kIndexMask;
    published_.fetch_add(1, std::memory_order_relaxed);
  }

  /// Reader side. Returns the newest published value (or the previous one
  /// again when nothing new arrived). `fresh` reports whether it is new.
  const T& read(bool* fresh = nullptr) {
    const bool has_new = (middle_.load(std::memory_order_relaxed) & kFresh) != 0;
    if (has_new) {
      const std::uint8_t prev = middle_.exchange(front_, std::memory_order_acq_rel);
      front_ = prev & kIndexMask;
    }
    if (fresh) *fresh = has_new;
    return slots_[front_];
  }

  std::uint64_t published_count() const { return published_.load(std::memory_order_relaxed); }

 private:
  static constexpr std::uint8_t kFresh = 0x4;
  static constexpr std::uint8_t kIndexMask = 0x3;

  T slots_[3]{};
  std::uint8_t back_ = 0;                  // writer-owned
  std::atomic<std::uint8_t> middle_{1};    // shared, index | fresh bit
  std::uint8_t front_ = 2;                 // reader-owned
  std::atomic<std::uint64_t> published_{0};
};

}  // namespace porosim
