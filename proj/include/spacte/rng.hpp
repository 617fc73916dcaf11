#ifndef SPACTE_RNG_HPP
#define SPACTE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace spacte {

// splitmix64 finalizer, used to derive sub-seeds from (seed, purpose, index)
// so that every consumer of randomness owns an independent stream regardless
// of evaluation order or thread count.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t purpose,
                              std::uint64_t index) {
    return mix64(mix64(seed ^ mix64(purpose)) ^ index);
}

// Purpose tags for sub-seed derivation.
namespace seed_tag {
constexpr std::uint64_t kInit = 0x696e6974ULL;       // parameter init
constexpr std::uint64_t kHead = 0x68656164ULL;       // per-head init
constexpr std::uint64_t kNoise = 0x6e6f6973ULL;      // training noise draws
constexpr std::uint64_t kShuffle = 0x73687566ULL;    // per-epoch shuffling
constexpr std::uint64_t kCertify = 0x63657274ULL;    // per-example certification
constexpr std::uint64_t kData = 0x64617461ULL;       // synthetic data generation
constexpr std::uint64_t kSmoothMix = 0x736d6978ULL;  // smoothmix attack draws
}  // namespace seed_tag

// Deterministic Gaussian/uniform source. Box-Muller is hand-rolled on top of
// mt19937_64 because std::normal_distribution's algorithm is
// implementation-defined and would break bit-reproducibility across stdlibs.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() {  // [0,1)
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double gaussian(double sigma) { return sigma * gaussian(); }

    std::uint64_t next_u64() { return engine_(); }

    // Fisher-Yates index for shuffling: uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Rejection sampling keeps the draw unbiased.
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = 0;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    std::string serialize() const {
        std::ostringstream os;
        os << engine_ << ' ' << (have_spare_ ? 1 : 0) << ' ';
        os.precision(17);
        os << spare_;
        return os.str();
    }

    void deserialize(const std::string& s) {
        std::istringstream is(s);
        int spare_flag = 0;
        is >> engine_ >> spare_flag >> spare_;
        have_spare_ = spare_flag != 0;
    }

  private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace spacte

#endif  // SPACTE_RNG_HPP
