#include "effattn/instrument.hpp"

#include "effattn/errors.hpp"

#include <string>
#include <utility>

namespace effattn {
namespace detail {

namespace {
thread_local std::shared_ptr<Ledger> t_active;
}

Ledger::Ledger(std::shared_ptr<Ledger> parent, std::optional<std::uint64_t> budget_bytes,
               std::size_t bytes_per_scalar)
    : parent_(std::move(parent)), budget_bytes_(budget_bytes), bytes_per_scalar_(bytes_per_scalar) {}

void Ledger::check_budget(std::uint64_t floats) const {
    if (budget_bytes_) {
        const std::uint64_t requested = (counters_.live_floats + floats) * bytes_per_scalar_;
        if (requested > *budget_bytes_) {
            throw ResourceBudgetError("allocation of " + std::to_string(floats) +
                                          " scalars would bring live memory to " +
                                          std::to_string(requested) + " bytes, over the budget of " +
                                          std::to_string(*budget_bytes_) + " bytes",
                                      requested, *budget_bytes_);
        }
    }
    if (parent_) parent_->check_budget(floats);
}

void Ledger::allocate(std::uint64_t floats) {
    check_budget(floats);
    for (Ledger* l = this; l != nullptr; l = l->parent_.get()) {
        l->counters_.live_floats += floats;
        if (l->counters_.live_floats > l->counters_.peak_live_floats)
            l->counters_.peak_live_floats = l->counters_.live_floats;
    }
}

void Ledger::release(std::uint64_t floats) noexcept {
    for (Ledger* l = this; l != nullptr; l = l->parent_.get()) l->counters_.live_floats -= floats;
}

void Ledger::add_macc(std::uint64_t macc) noexcept {
    for (Ledger* l = this; l != nullptr; l = l->parent_.get()) l->counters_.total_macc += macc;
}

std::shared_ptr<Ledger> active_ledger() noexcept { return t_active; }

AllocToken::AllocToken(std::uint64_t floats) {
    if (t_active) {
        t_active->allocate(floats);
        ledger_ = t_active;
        floats_ = floats;
    }
}

AllocToken::AllocToken(AllocToken&& other) noexcept
    : ledger_(std::move(other.ledger_)), floats_(std::exchange(other.floats_, 0)) {}

AllocToken& AllocToken::operator=(AllocToken&& other) noexcept {
    if (this != &other) {
        if (ledger_) ledger_->release(floats_);
        ledger_ = std::move(other.ledger_);
        floats_ = std::exchange(other.floats_, 0);
    }
    return *this;
}

AllocToken::~AllocToken() {
    if (ledger_) ledger_->release(floats_);
}

void record_macc(std::uint64_t macc) noexcept {
    if (t_active) t_active->add_macc(macc);
}

} // namespace detail

InstrumentScope::InstrumentScope(std::optional<std::uint64_t> budget_bytes,
                                 std::size_t bytes_per_scalar)
    : ledger_(std::make_shared<detail::Ledger>(detail::t_active, budget_bytes, bytes_per_scalar)),
      previous_(detail::t_active) {
    detail::t_active = ledger_;
}

InstrumentScope::~InstrumentScope() { detail::t_active = previous_; }

InstrumentedCounters InstrumentScope::counters() const noexcept { return ledger_->counters(); }

} // namespace effattn
