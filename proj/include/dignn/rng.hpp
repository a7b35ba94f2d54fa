#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dignn/errors.hpp"

namespace dignn {

/// Deterministic random source. All distribution transforms are spelled
/// out here (instead of the std:: distribution objects, whose output is
/// implementation-defined) so that a seed pins the exact stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller. The second variate of each pair is
    /// discarded so the stream position depends only on the call count.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        constexpr double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    /// Uniform integer in [0, n) by rejection (no modulo bias).
    int uniform_int(int n) {
        if (n <= 0) throw InvalidArgument("uniform_int: n must be positive");
        const std::uint64_t un = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return static_cast<int>(x % un);
    }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            std::swap(v[static_cast<std::size_t>(i)],
                      v[static_cast<std::size_t>(uniform_int(i + 1))]);
        }
    }

    std::string serialize_state() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void restore_state(const std::string& state) {
        std::istringstream is(state);
        is >> engine_;
        if (is.fail()) throw InvalidArgument("Rng: malformed serialized state");
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace dignn
