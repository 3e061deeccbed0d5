// Counter-based random stream: output depends only on (seed, counter),
// so draws are reproducible across platforms and safe to split per task.
#pragma once

#include <cmath>
#include <cstdint>

namespace tf {

class RngStream {
  public:
    explicit RngStream(std::uint64_t seed = 0) : seed_(seed) {}

    // splitmix64-style mix of (seed, counter)
    std::uint64_t next_u64() {
        std::uint64_t z = seed_ + 0x9e3779b97f4a7c15ULL * (++counter_);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in (0, 1], never exactly 0 (safe for log)
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; second value cached so the call sequence alone fixes output
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    std::uint64_t randint(std::uint64_t n) { return next_u64() % n; }

    // Derive an independent stream; key sequence fixes the substream.
    RngStream substream(std::uint64_t key) const {
        std::uint64_t z = seed_ ^ (0x9e3779b97f4a7c15ULL + key * 0xda942042e4dd58b5ULL);
        z = (z ^ (z >> 29)) * 0xff51afd7ed558ccdULL;
        return RngStream(z ^ (z >> 32));
    }

    std::uint64_t seed() const { return seed_; }

  private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace tf
