#pragma once

#include <cstdint>
#include <numeric>
#include <string>

namespace m3ace {

// Exact rational arithmetic for threshold comparisons.
//
// Ratios produced by the protocol are quotients of small integer counts
// (conflicting items / total items, selected agents / ensemble size).
// Comparing them against configured thresholds in double arithmetic is
// wrong at the boundaries: the double nearest to 0.2 is slightly above
// 1/5, so `1.0/5.0 > 0.2` is false while `ratio(1,5) > threshold(0.2)`
// must also be false, and a naive mixed comparison can flip either way
// depending on evaluation order. All gate decisions therefore go
// through Fraction with cross-multiplied 128-bit comparisons.
struct Fraction {
    std::int64_t num = 0;
    std::int64_t den = 1; // always > 0 after normalization

    constexpr Fraction() = default;

    Fraction(std::int64_t n, std::int64_t d) : num(n), den(d) { normalize(); }

    // Converts a configured decimal to the exact rational the user wrote.
    // Thresholds come from JSON/CLI text like "0.2" or "0.85"; scaling by
    // 1e9 and reducing recovers the literal decimal exactly for anything
    // with at most nine fractional digits, which covers every config knob.
    static Fraction from_decimal(double value) {
        constexpr std::int64_t scale = 1'000'000'000;
        const double scaled = value * static_cast<double>(scale);
        const std::int64_t n = static_cast<std::int64_t>(scaled >= 0 ? scaled + 0.5 : scaled - 0.5);
        return Fraction(n, scale);
    }

    static Fraction ratio(std::int64_t part, std::int64_t whole) {
        if (whole == 0) return Fraction(0, 1);
        return Fraction(part, whole);
    }

    double as_double() const { return static_cast<double>(num) / static_cast<double>(den); }

    std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }

    friend bool operator==(const Fraction& a, const Fraction& b) {
        return a.num == b.num && a.den == b.den;
    }
    friend bool operator!=(const Fraction& a, const Fraction& b) { return !(a == b); }
    friend bool operator<(const Fraction& a, const Fraction& b) {
        return static_cast<__int128>(a.num) * b.den < static_cast<__int128>(b.num) * a.den;
    }
    friend bool operator>(const Fraction& a, const Fraction& b) { return b < a; }
    friend bool operator<=(const Fraction& a, const Fraction& b) { return !(b < a); }
    friend bool operator>=(const Fraction& a, const Fraction& b) { return !(a < b); }

private:
    void normalize() {
        if (den < 0) {
            num = -num;
            den = -den;
        }
        if (den == 0) den = 1;
        const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
        if (g > 1) {
            num /= g;
            den /= g;
        }
    }
};

} // namespace m3ace
