#include "ktune/random.hpp"

#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace ktune {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::string_view> parts) noexcept {
    std::uint64_t h = splitmix64(base);
    for (auto part : parts) {
        // FNV-1a over the part, length-prefixed so ("ab","c") != ("a","bc").
        std::uint64_t f = 0xcbf29ce484222325ULL ^ part.size();
        for (unsigned char c : part) {
            f ^= c;
            f *= 0x100000001b3ULL;
        }
        h = splitmix64(h ^ f);
    }
    return h;
}

double unit_interval(std::uint64_t bits) noexcept {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("Rng::below: zero bound");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % bound;
}

std::vector<std::size_t> Rng::sample_indices(std::size_t n, std::size_t k) {
    if (k > n) throw std::invalid_argument("Rng::sample_indices: k > n");
    // Sparse Fisher-Yates: only touched positions are materialized.
    std::unordered_map<std::size_t, std::size_t> moved;
    auto value_at = [&](std::size_t i) {
        auto it = moved.find(i);
        return it == moved.end() ? i : it->second;
    };
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(below(n - i));
        const std::size_t vi = value_at(i);
        const std::size_t vj = value_at(j);
        out.push_back(vj);
        moved[j] = vi;
    }
    return out;
}

} // namespace ktune
