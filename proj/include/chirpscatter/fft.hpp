#ifndef CHIRPSCATTER_FFT_HPP
#define CHIRPSCATTER_FFT_HPP

#include <complex>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <vector>

namespace chirpscatter::fft {

/** @brief Iterative radix-2 FFT for power-of-two sizes.
 *
 * Every transform in this project (dechirp bins, Welch segments) is a power
 * of two, so a compact self-contained kernel beats dragging in an FFT
 * dependency. Twiddles are cached per size in thread-local storage; each
 * worker thread builds its own tables once.
 */
inline void transform(std::complex<double>* data, std::size_t n, bool inverse = false) {
    if (n == 0 || (n & (n - 1)) != 0)
        throw std::invalid_argument("fft: size must be a power of two");

    struct Tables {
        std::vector<std::size_t> bitrev;
        std::vector<std::complex<double>> fwd, inv;
    };
    thread_local std::map<std::size_t, Tables> cache;
    auto it = cache.find(n);
    if (it == cache.end()) {
        Tables t;
        t.bitrev.resize(n);
        std::size_t log2n = 0;
        while ((std::size_t{1} << log2n) < n) ++log2n;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t r = 0;
            for (std::size_t b = 0; b < log2n; ++b)
                if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (log2n - 1 - b);
            t.bitrev[i] = r;
        }
        t.fwd.resize(n / 2);
        t.inv.resize(n / 2);
        const double pi = 3.14159265358979323846;
        for (std::size_t k = 0; k < n / 2; ++k) {
            const double ang = -2.0 * pi * static_cast<double>(k) / static_cast<double>(n);
            t.fwd[k] = {std::cos(ang), std::sin(ang)};
            t.inv[k] = std::conj(t.fwd[k]);
        }
        it = cache.emplace(n, std::move(t)).first;
    }
    const Tables& t = it->second;

    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = t.bitrev[i];
        if (i < j) std::swap(data[i], data[j]);
    }
    const auto& tw = inverse ? t.inv : t.fwd;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t stride = n / len;
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> w = tw[k * stride];
                const std::complex<double> u = data[i + k];
                const std::complex<double> v = data[i + k + len / 2] * w;
                data[i + k] = u + v;
                data[i + k + len / 2] = u - v;
            }
        }
    }
    if (inverse) {
        const double norm = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) data[i] *= norm;
    }
}

inline void transform(std::vector<std::complex<double>>& data, bool inverse = false) {
    transform(data.data(), data.size(), inverse);
}

}  // namespace chirpscatter::fft

#endif
