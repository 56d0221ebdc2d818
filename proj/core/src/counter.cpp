#include "lipcmp/counter.hpp"

#include <algorithm>

namespace lipcmp {

namespace {
thread_local std::shared_ptr<detail::CounterState> t_active;
}

CountingScope::CountingScope()
    : state_(std::make_shared<detail::CounterState>()), previous_(t_active) {
  t_active = state_;
}

CountingScope::~CountingScope() { t_active = previous_; }

OpCount CountingScope::result() const { return {state_->macs, state_->peak}; }

void count_macs(double n) {
  if (t_active) t_active->macs += n;
}

LiveTicket::LiveTicket(std::size_t n) { acquire(n); }

LiveTicket::LiveTicket(const LiveTicket& other) { acquire(other.n_); }

LiveTicket::LiveTicket(LiveTicket&& other) noexcept
    : n_(other.n_), owner_(std::move(other.owner_)) {
  other.n_ = 0;
}

LiveTicket& LiveTicket::operator=(const LiveTicket& other) {
  if (this != &other) {
    release();
    acquire(other.n_);
  }
  return *this;
}

LiveTicket& LiveTicket::operator=(LiveTicket&& other) noexcept {
  if (this != &other) {
    release();
    n_ = other.n_;
    owner_ = std::move(other.owner_);
    other.n_ = 0;
  }
  return *this;
}

LiveTicket::~LiveTicket() { release(); }

void LiveTicket::acquire(std::size_t n) {
  n_ = n;
  owner_ = t_active;
  if (owner_ && n_ > 0) {
    owner_->live += static_cast<double>(n_);
    owner_->peak = std::max(owner_->peak, owner_->live);
  }
}

void LiveTicket::release() noexcept {
  if (owner_) owner_->live -= static_cast<double>(n_);
  owner_.reset();
  n_ = 0;
}

}  // namespace lipcmp
