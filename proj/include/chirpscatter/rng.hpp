#ifndef CHIRPSCATTER_RNG_HPP
#define CHIRPSCATTER_RNG_HPP

#include <cmath>
#include <complex>
#include <cstdint>

namespace chirpscatter {

/** @brief Deterministic PRNG (xoshiro256++ seeded through splitmix64).
 *
 * The standard library distributions are not bit-reproducible across
 * implementations, and experiment artifacts must be byte-identical for a
 * given seed, so all randomness in the simulator flows through this class.
 * derive() yields an independent stream for a sub-experiment (e.g. one RSSI
 * point), making parallel and serial runs produce the same numbers.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& word : state_) word = splitmix64(x);
    }

    /// Independent child stream; stable under any evaluation order.
    Rng derive(std::uint64_t stream) const {
        std::uint64_t x = state_[0] ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
        return Rng(splitmix64(x));
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform in [0,1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n).
    std::uint32_t below(std::uint32_t n) {
        return static_cast<std::uint32_t>((next_u64() >> 32) * static_cast<std::uint64_t>(n) >> 32);
    }

    std::uint8_t byte() { return static_cast<std::uint8_t>(next_u64() >> 56); }

    /// Standard normal via Box-Muller (pairs cached).
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double phi = 2.0 * pi_ * uniform();
        spare_ = r * std::sin(phi);
        have_spare_ = true;
        return r * std::cos(phi);
    }

    /// Circular complex normal with total variance sigma2 (sigma2/2 per rail).
    std::complex<double> gaussian_complex(double sigma2) {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-sigma2 * std::log(u1));
        const double phi = 2.0 * pi_ * uniform();
        return {r * std::cos(phi), r * std::sin(phi)};
    }

    /// Fisher-Yates shuffle (std::shuffle is not reproducible across stdlibs).
    template <typename T>
    void shuffle(T& seq) {
        for (std::size_t i = seq.size(); i > 1; --i) {
            const std::size_t j = below(static_cast<std::uint32_t>(i));
            std::swap(seq[i - 1], seq[j]);
        }
    }

private:
    static constexpr double pi_ = 3.14159265358979323846;

    static std::uint64_t splitmix64(std::uint64_t& x) {
        std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace chirpscatter

#endif
