#ifndef CHIRPSCATTER_IQ_HPP
#define CHIRPSCATTER_IQ_HPP

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace chirpscatter {

/** @brief Complex baseband sample sequence; the signal currency of the library. */
struct IqSignal {
    std::vector<std::complex<double>> samples;
    double sample_rate_hz = 0.0;

    std::size_t size() const { return samples.size(); }
    double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_hz; }
};

inline double mean_power(const IqSignal& sig) {
    if (sig.samples.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& s : sig.samples) acc += std::norm(s);
    return acc / static_cast<double>(sig.samples.size());
}

inline void scale(IqSignal& sig, double factor) {
    for (auto& s : sig.samples) s *= factor;
}

/// Multiply by e^{j2*pi*freq*t} in place, phase-continuous from start_phase.
inline void mix(IqSignal& sig, double freq_hz, double start_phase_rad = 0.0) {
    const double pi = 3.14159265358979323846;
    const double dphi = 2.0 * pi * freq_hz / sig.sample_rate_hz;
    double phi = start_phase_rad;
    for (auto& s : sig.samples) {
        s *= std::complex<double>(std::cos(phi), std::sin(phi));
        phi += dphi;
        if (phi > 64.0 * pi) phi -= 64.0 * pi;
        if (phi < -64.0 * pi) phi += 64.0 * pi;
    }
}

/// Keep every factor-th sample (any anti-alias filtering is the caller's job).
inline IqSignal decimate(const IqSignal& sig, std::size_t factor) {
    if (factor == 0) throw std::invalid_argument("decimate: factor must be >= 1");
    IqSignal out;
    out.sample_rate_hz = sig.sample_rate_hz / static_cast<double>(factor);
    out.samples.reserve(sig.samples.size() / factor + 1);
    for (std::size_t i = 0; i < sig.samples.size(); i += factor) out.samples.push_back(sig.samples[i]);
    return out;
}

inline double db10(double ratio) { return 10.0 * std::log10(ratio); }
inline double db20(double ratio) { return 20.0 * std::log10(ratio); }
inline double from_db10(double db) { return std::pow(10.0, db / 10.0); }

/** @brief Write interleaved little-endian float32 I,Q pairs, no header.
 *
 * The sample rate travels in a sidecar text file `<path>.sample_rate.txt`
 * holding a single `sample_rate_hz=<float>` line.
 */
inline void write_iq(const IqSignal& sig, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("write_iq: cannot open " + path);
    std::vector<float> buf(sig.samples.size() * 2);
    for (std::size_t i = 0; i < sig.samples.size(); ++i) {
        buf[2 * i] = static_cast<float>(sig.samples[i].real());
        buf[2 * i + 1] = static_cast<float>(sig.samples[i].imag());
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw std::runtime_error("write_iq: short write to " + path);

    std::ofstream side(path + ".sample_rate.txt", std::ios::trunc);
    if (!side) throw std::runtime_error("write_iq: cannot open sidecar for " + path);
    side << "sample_rate_hz=" << sig.sample_rate_hz << "\n";
}

inline IqSignal read_iq(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_iq: cannot open " + path);
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    if (bytes % (2 * sizeof(float)) != 0)
        throw std::runtime_error("read_iq: " + path + " is not a whole number of I,Q pairs");
    std::vector<float> buf(bytes / sizeof(float));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw std::runtime_error("read_iq: short read from " + path);

    IqSignal sig;
    sig.samples.resize(buf.size() / 2);
    for (std::size_t i = 0; i < sig.samples.size(); ++i) {
        sig.samples[i] = {static_cast<double>(buf[2 * i]), static_cast<double>(buf[2 * i + 1])};
        if (!std::isfinite(sig.samples[i].real()) || !std::isfinite(sig.samples[i].imag()))
            throw std::runtime_error("read_iq: non-finite sample in " + path);
    }

    std::ifstream side(path + ".sample_rate.txt");
    if (!side) throw std::runtime_error("read_iq: missing sidecar for " + path);
    std::string line;
    std::getline(side, line);
    const std::string key = "sample_rate_hz=";
    if (line.rfind(key, 0) != 0)
        throw std::runtime_error("read_iq: malformed sidecar for " + path);
    sig.sample_rate_hz = std::stod(line.substr(key.size()));
    if (!(sig.sample_rate_hz > 0.0))
        throw std::runtime_error("read_iq: sample rate must be positive in sidecar for " + path);
    return sig;
}

}  // namespace chirpscatter

#endif
