#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>

namespace muekf {

using cplx = std::complex<double>;

// splitmix64 step; used to whiten and combine seed material.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    return mix64(mix64(a) ^ (b + 0x9e3779b97f4a7c15ULL));
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix_seed(mix_seed(a, b), c);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                              std::uint64_t d) {
    return mix_seed(mix_seed(a, b, c), d);
}

// Seeded generator with fully specified output mapping. Distribution code is
// written out here (instead of <random> adaptors) so that streams are
// bit-reproducible across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform on [0, 1)
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // uniform on [-range, +range]
    double uniform_symmetric(double range) {
        return (2.0 * uniform() - 1.0) * range;
    }

    // standard normal, Box-Muller
    double gauss() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double phi = 2.0 * M_PI * u2;
        spare_ = r * std::sin(phi);
        have_spare_ = true;
        return r * std::cos(phi);
    }

    // circular complex Gaussian, unit variance (0.5 per component)
    cplx cgauss() {
        double re = gauss();
        double im = gauss();
        return cplx(re * M_SQRT1_2, im * M_SQRT1_2);
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace muekf
