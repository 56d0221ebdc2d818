#pragma once

#include <cstddef>
#include <memory>

namespace lipcmp {

struct OpCount {
  double macs = 0;
  double peak_live_values = 0;
};

namespace detail {
struct CounterState {
  double macs = 0;
  double live = 0;
  double peak = 0;
};
}  // namespace detail

// Accumulates multiply-accumulates and live tensor scalars for work done on
// the constructing thread while the scope is alive. Scopes nest; the inner one
// receives the counts.
class CountingScope {
 public:
  CountingScope();
  ~CountingScope();
  CountingScope(const CountingScope&) = delete;
  CountingScope& operator=(const CountingScope&) = delete;

  OpCount result() const;

 private:
  std::shared_ptr<detail::CounterState> state_;
  std::shared_ptr<detail::CounterState> previous_;
};

void count_macs(double n);

// Registers n live scalars with the active scope for the lifetime of the owner.
class LiveTicket {
 public:
  LiveTicket() = default;
  explicit LiveTicket(std::size_t n);
  LiveTicket(const LiveTicket& other);
  LiveTicket(LiveTicket&& other) noexcept;
  LiveTicket& operator=(const LiveTicket& other);
  LiveTicket& operator=(LiveTicket&& other) noexcept;
  ~LiveTicket();

 private:
  void acquire(std::size_t n);
  void release() noexcept;

  std::size_t n_ = 0;
  std::shared_ptr<detail::CounterState> owner_;
};

}  // namespace lipcmp
