#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace sgmt {

/// Seeded generator passed explicitly through every stochastic operation.
///
/// Distributions are implemented here rather than through <random>'s
/// distribution classes so that streams are identical across standard
/// library implementations.
class Rng {
public:
    Rng() : Rng(0) {}
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound);
    /// Uniform integer in [lo, hi].
    int between(int lo, int hi);
    double normal();
    bool bernoulli(double p) { return uniform() < p; }

    std::string state() const;
    void set_state(const std::string& text);

    bool operator==(const Rng& other) const { return engine_ == other.engine_; }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Derives an independent sub-stream seed from a parent seed and a name.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view name);

} // namespace sgmt
