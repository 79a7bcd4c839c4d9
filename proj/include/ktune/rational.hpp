#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ktune {

// Non-negative exact fraction, always stored in lowest terms.
class Rational {
public:
    constexpr Rational() = default;

    constexpr Rational(std::uint64_t num, std::uint64_t den) : num_(num), den_(den) {
        if (den == 0) throw std::invalid_argument("Rational: zero denominator");
        const auto g = std::gcd(num_, den_);
        num_ /= g;
        den_ /= g;
    }

    constexpr std::uint64_t num() const noexcept { return num_; }
    constexpr std::uint64_t den() const noexcept { return den_; }

    constexpr bool is_zero() const noexcept { return num_ == 0; }
    constexpr bool is_one() const noexcept { return num_ == den_; }

    double to_double() const noexcept { return static_cast<double>(num_) / static_cast<double>(den_); }

    std::string str() const {
        return den_ == 1 ? std::to_string(num_) : std::to_string(num_) + "/" + std::to_string(den_);
    }

    friend constexpr bool operator==(const Rational& a, const Rational& b) noexcept {
        return a.num_ == b.num_ && a.den_ == b.den_;
    }

    // Cross-multiplication; operands here are probe tallies so no overflow risk.
    friend constexpr bool operator<(const Rational& a, const Rational& b) noexcept {
        return a.num_ * b.den_ < b.num_ * a.den_;
    }

private:
    std::uint64_t num_ = 0;
    std::uint64_t den_ = 1;
};

} // namespace ktune
