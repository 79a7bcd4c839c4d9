#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace ktune {

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Stable 64-bit seed for a named sub-stream, e.g. (campaign seed, qa id, "greedy", round).
// Independent of platform and standard library.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::string_view> parts) noexcept;

// Uniform double in [0,1) from a derived seed; used for stateless Bernoulli draws.
double unit_interval(std::uint64_t bits) noexcept;

// Seeded generator with portable bounded draws. std::uniform_int_distribution and
// std::shuffle are implementation-defined, so they are never used for anything persisted.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform in [0, bound), bound > 0. Rejection sampling, no modulo bias.
    std::uint64_t below(std::uint64_t bound);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

    // k distinct indices from [0, n) in draw order (partial Fisher-Yates). Requires k <= n.
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

private:
    std::mt19937_64 engine_;
};

} // namespace ktune
