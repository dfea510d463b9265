#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>

namespace effattn {

struct InstrumentedCounters {
    std::uint64_t peak_live_floats = 0;  // max simultaneously live tensor scalars
    std::uint64_t total_macc = 0;        // sum of m*k*p over executed matmuls
    std::uint64_t live_floats = 0;       // live at the time the counters were read
};

namespace detail {

// Accumulates allocations and MACCs for one instrumented region. Ledgers
// nest: every event is forwarded to the enclosing ledger as well, so an
// outer measurement sees allocations made under an inner budget scope.
class Ledger {
public:
    Ledger(std::shared_ptr<Ledger> parent, std::optional<std::uint64_t> budget_bytes,
           std::size_t bytes_per_scalar);

    // Throws ResourceBudgetError before recording if the cap would be exceeded.
    void allocate(std::uint64_t floats);
    void release(std::uint64_t floats) noexcept;
    void add_macc(std::uint64_t macc) noexcept;

    InstrumentedCounters counters() const noexcept { return counters_; }

private:
    void check_budget(std::uint64_t floats) const;

    std::shared_ptr<Ledger> parent_;
    std::optional<std::uint64_t> budget_bytes_;
    std::size_t bytes_per_scalar_;
    InstrumentedCounters counters_;
};

// Innermost ledger active on this thread, or null.
std::shared_ptr<Ledger> active_ledger() noexcept;

// Registers an allocation of `floats` scalars with the active ledger for as
// long as the token lives. Moving transfers ownership; copying is disallowed
// (a copied tensor acquires its own token).
class AllocToken {
public:
    AllocToken() = default;
    explicit AllocToken(std::uint64_t floats);
    AllocToken(AllocToken&& other) noexcept;
    AllocToken& operator=(AllocToken&& other) noexcept;
    AllocToken(const AllocToken&) = delete;
    AllocToken& operator=(const AllocToken&) = delete;
    ~AllocToken();

private:
    std::shared_ptr<Ledger> ledger_;
    std::uint64_t floats_ = 0;
};

void record_macc(std::uint64_t macc) noexcept;

} // namespace detail

// RAII region that turns on instrumentation for the current thread. Tensors
// allocated while the scope is active count toward its live/peak totals
// until they are destroyed, even if that happens after the scope closes.
class InstrumentScope {
public:
    explicit InstrumentScope(std::optional<std::uint64_t> budget_bytes = std::nullopt,
                             std::size_t bytes_per_scalar = sizeof(double));
    ~InstrumentScope();
    InstrumentScope(const InstrumentScope&) = delete;
    InstrumentScope& operator=(const InstrumentScope&) = delete;

    InstrumentedCounters counters() const noexcept;

private:
    std::shared_ptr<detail::Ledger> ledger_;
    std::shared_ptr<detail::Ledger> previous_;
};

} // namespace effattn
