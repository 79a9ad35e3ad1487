#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace symcomp {

// Error taxonomy. The CLI maps these onto exit codes, so new failure paths
// should pick the family that matches what the user can do about it:
// ConfigError -> fix flags/config (exit 1), DataError -> fix input files
// (exit 2), NumericError / ShapeError -> report a bug or a diverged run
// (exit 3).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// splitmix64, used to derive independent sub-seeds from (seed, stream, epoch)
// tuples so that resuming a run can rebuild the exact RNG schedule without
// serializing engine state.
inline uint64_t mix_seed(uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    uint64_t x = a + 0x9e3779b97f4a7c15ULL * (b + 1) + 0xbf58476d1ce4e5b9ULL * (c + 1);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

// mt19937_64 with hand-rolled distributions. The standard pins down the
// engine's output sequence but not the library distributions, and dataset
// synthesis promises byte-identical reruns, so we avoid std::*_distribution.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller, one spare cached
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double th = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(th);
        have_spare_ = true;
        return r * std::cos(th);
    }

    // uniform integer in [0, n), rejection sampled to stay unbiased
    uint64_t uniform_int(uint64_t n) {
        if (n == 0) throw ConfigError("Rng::uniform_int: n must be positive");
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return x % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Library code never prints unprompted: callers that care pass a sink and
// decide what to do with the messages, everyone else gets stderr.
inline void emit_warning(std::vector<std::string>* sink, const std::string& msg) {
    if (sink)
        sink->push_back(msg);
    else
        std::fprintf(stderr, "warning: %s\n", msg.c_str());
}

inline std::string shape_str(const std::vector<int64_t>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

}  // namespace symcomp
