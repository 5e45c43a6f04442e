#ifndef CHIRPSCATTER_WAVEFORM_HPP
#define CHIRPSCATTER_WAVEFORM_HPP

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <vector>

#include "chirpscatter/css.hpp"
#include "chirpscatter/errors.hpp"
#include "chirpscatter/fft.hpp"
#include "chirpscatter/iq.hpp"

namespace chirpscatter::waveform {

inline constexpr double kPi = 3.14159265358979323846;

/// Per-chip frequency steps the digital baseband hands to the synthesizer,
/// plus the fixed offset that pushes the product out of the carrier's band.
struct FrequencyPlanStep {
    double duration_s;
    double baseband_freq_hz;
};

struct FrequencyPlan {
    std::vector<FrequencyPlanStep> steps;
    double delta_f_hz = 0.0;
    /// Synthesis offset added to every step. Chirp plans list nominal
    /// chip-start frequencies; holding a chip at its start value would read
    /// half a bin low against the continuous reference chirp the receiver
    /// correlates with, so the synthesizer centers each chip instead.
    double step_center_offset_hz = 0.0;
};

/// One of the complex reflection coefficients the switch network can present.
struct SwitchState {
    int index;
    std::complex<double> value;
};

/// The 8-point alphabet e^{j(pi/8 + k*pi/4)}; real parts {+-0.9239, +-0.3827}.
inline std::array<std::complex<double>, 8> switch_alphabet8() {
    std::array<std::complex<double>, 8> a;
    for (int k = 0; k < 8; ++k) {
        const double phi = kPi / 8.0 + k * kPi / 4.0;
        a[static_cast<std::size_t>(k)] = {std::cos(phi), std::sin(phi)};
    }
    return a;
}

/** @brief Time-stepped switch-state sequence approximating e^{j*phase(t)}.
 *
 * One entry per output sample; `alphabet[state_index[n]]` is the complex
 * reflection coefficient active at sample n. For levels=4 the alphabet is the
 * 8-state constellation and transitions land on eighth-of-period boundaries
 * of the instantaneous frequency (quantized to the sample grid).
 */
struct MultiLevelWave {
    std::vector<std::uint8_t> state_index;
    std::vector<std::complex<double>> alphabet;
    double sample_rate_hz = 0.0;
    int levels = 4;

    std::size_t size() const { return state_index.size(); }

    IqSignal to_iq() const {
        IqSignal sig;
        sig.sample_rate_hz = sample_rate_hz;
        sig.samples.resize(state_index.size());
        for (std::size_t i = 0; i < state_index.size(); ++i)
            sig.samples[i] = alphabet[state_index[i]];
        return sig;
    }
};

namespace detail {

/// +1 on the first half-period of sin(2*pi*psi), -1 on the second.
inline double square01(double psi) {
    double f = psi - std::floor(psi);
    return f < 0.5 ? 1.0 : -1.0;
}

/** Staircase cosine rail as a weighted sum of shifted square waves: K squares
 * at shifts k/(2(K+1)) with weights sin(k*pi/(K+1)) produce a (K+1)-level
 * rail whose Fourier series keeps only harmonic orders == +-1 mod 2(K+1).
 * K=3 reproduces the S0+S1+S2 four-level construction with weight ratio
 * 1 : sqrt(2) : 1; K=4 and K=5 add the steps that cancel the 7th and 9th. */
inline double cos_rail(double psi, int num_squares) {
    const int kp1 = num_squares + 1;
    double acc = 0.0;
    for (int k = 1; k <= num_squares; ++k)
        acc += std::sin(k * kPi / kp1) * square01(psi + static_cast<double>(k) / (2 * kp1));
    return acc;
}

/// Sector count per fundamental period for the combined complex staircase.
inline int sector_count(int levels) {
    switch (levels) {
        case 4: return 8;
        case 5: return 20;  // rail grid 1/10 interleaved with its quarter-period shift
        case 6: return 12;
        default: throw UnsupportedLevels("levels must be 4, 5 or 6, got " + std::to_string(levels));
    }
}

/// Per-sector complex values (cos rail + j * quarter-period-delayed rail),
/// normalized so the largest state magnitude is 1.
inline std::vector<std::complex<double>> sector_alphabet(int levels) {
    const int g = sector_count(levels);
    const int k = levels - 1;
    std::vector<std::complex<double>> alphabet(static_cast<std::size_t>(g));
    double peak = 0.0;
    for (int m = 0; m < g; ++m) {
        const double psi = (m + 0.5) / g;
        alphabet[static_cast<std::size_t>(m)] = {cos_rail(psi, k), cos_rail(psi - 0.25, k)};
        peak = std::max(peak, std::abs(alphabet[static_cast<std::size_t>(m)]));
    }
    for (auto& v : alphabet) v /= peak;
    return alphabet;
}

}  // namespace detail

/** @brief Per-chip frequency plan of a cyclically shifted chirp stream.
 *
 * Each symbol contributes 2^sf steps of duration 1/bw; chip k of symbol value
 * v sits at -bw/2 + ((v+k) mod 2^sf) * bw/2^sf. The resulting RF product is
 * carrier + delta_f + step frequency.
 */
inline FrequencyPlan frequency_plan(const css::ChirpParams& p,
                                    std::span<const css::ChirpSymbol> symbols, double delta_f_hz) {
    const int n = p.chips();
    FrequencyPlan plan;
    plan.delta_f_hz = delta_f_hz;
    plan.step_center_offset_hz = 0.5 * p.bw_hz / n;
    plan.steps.reserve(symbols.size() * static_cast<std::size_t>(n));
    const double chip_s = 1.0 / p.bw_hz;
    const double bin_hz = p.bw_hz / n;
    for (const auto& sym : symbols) {
        if (sym.value < 0 || sym.value >= n)
            throw std::invalid_argument("frequency_plan: symbol value out of range");
        for (int k = 0; k < n; ++k) {
            const int idx = (sym.value + k) & (n - 1);
            plan.steps.push_back({chip_s, -0.5 * p.bw_hz + idx * bin_hz});
        }
    }
    return plan;
}

/** @brief Two-level baseline: square-wave cosine rail plus quarter-period
 * shifted square sine rail. Single-sideband but keeps the odd harmonics
 * (3rd at -9.5 dB on the mirror side, 5th at -14.0 dB on the signal side). */
inline IqSignal square_exponent(double delta_f_hz, double duration_s, double sample_rate_hz) {
    if (sample_rate_hz < 16.0 * delta_f_hz)
        throw std::invalid_argument("square_exponent: sample_rate must be >= 16*delta_f");
    const auto count = static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
    IqSignal sig;
    sig.sample_rate_hz = sample_rate_hz;
    sig.samples.resize(count);
    const double dpsi = delta_f_hz / sample_rate_hz;
    double psi = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        sig.samples[i] = {detail::square01(psi + 0.25), detail::square01(psi)};
        psi += dpsi;
    }
    return sig;
}

/** @brief Staircase approximation of e^{j2*pi*delta_f*t}.
 *
 * levels=4 is the harmonic-cancelled scheme: the 8-state complex staircase
 * whose 3rd and 5th harmonics vanish. levels=5 and 6 extend the rail to also
 * cancel the 7th and 9th.
 */
inline MultiLevelWave multilevel_exponent(double delta_f_hz, double duration_s,
                                          double sample_rate_hz, int levels = 4) {
    const int g = detail::sector_count(levels);
    if (sample_rate_hz < 16.0 * delta_f_hz)
        throw std::invalid_argument("multilevel_exponent: sample_rate must be >= 16*delta_f");
    MultiLevelWave wave;
    wave.levels = levels;
    wave.sample_rate_hz = sample_rate_hz;
    wave.alphabet = detail::sector_alphabet(levels);
    const auto count = static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
    wave.state_index.resize(count);
    const double dpsi = delta_f_hz / sample_rate_hz;
    double psi = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double f = psi - std::floor(psi);
        wave.state_index[i] = static_cast<std::uint8_t>(
            std::min<int>(g - 1, static_cast<int>(f * g)));
        psi += dpsi;
    }
    return wave;
}

/** @brief Staircase waveform for a whole frequency plan.
 *
 * Concatenates multilevel segments at delta_f + step frequency. The
 * accumulated phase (the eighth-period counter) carries across step
 * boundaries, so the staircase is continuous through the chirp.
 */
inline MultiLevelWave switch_schedule(const FrequencyPlan& plan, double sample_rate_hz,
                                      int levels = 4) {
    const int g = detail::sector_count(levels);
    double f_max = 0.0;
    for (const auto& s : plan.steps) f_max = std::max(f_max, std::abs(s.baseband_freq_hz));
    if (sample_rate_hz < 16.0 * (plan.delta_f_hz + f_max))
        throw std::invalid_argument(
            "switch_schedule: sample_rate must be >= 16*(delta_f + max plan frequency)");

    MultiLevelWave wave;
    wave.levels = levels;
    wave.sample_rate_hz = sample_rate_hz;
    wave.alphabet = detail::sector_alphabet(levels);

    double total_s = 0.0;
    for (const auto& s : plan.steps) total_s += s.duration_s;
    wave.state_index.reserve(static_cast<std::size_t>(total_s * sample_rate_hz) + plan.steps.size());

    double psi = 0.0;       // accumulated cycles of the synthesized exponent
    double t_edge = 0.0;    // end time of the current step
    std::size_t emitted = 0;
    for (const auto& step : plan.steps) {
        t_edge += step.duration_s;
        const auto n_end = static_cast<std::size_t>(std::llround(t_edge * sample_rate_hz));
        const double dpsi =
            (plan.delta_f_hz + step.baseband_freq_hz + plan.step_center_offset_hz) /
            sample_rate_hz;
        for (; emitted < n_end; ++emitted) {
            const double f = psi - std::floor(psi);
            wave.state_index.push_back(static_cast<std::uint8_t>(
                std::min<int>(g - 1, static_cast<int>(f * g))));
            psi += dpsi;
        }
    }
    return wave;
}

/** @brief Mix the staircase against the (unit) carrier tone.
 *
 * The carrier is modeled at complex baseband, so `carrier_offset_hz` is its
 * frequency in the simulation band (0 puts the tone at DC and the product at
 * delta_f + f_LoRa).
 */
inline IqSignal backscatter_mix(double carrier_offset_hz, const MultiLevelWave& wave) {
    IqSignal sig = wave.to_iq();
    if (carrier_offset_hz != 0.0) mix(sig, carrier_offset_hz);
    return sig;
}

/// Optional switch settle-time model: single-pole low-pass over the state
/// stream. Default off; softens transitions and knocks down harmonics >= 11.
inline IqSignal apply_settle_filter(const IqSignal& sig, double cutoff_hz) {
    IqSignal out;
    out.sample_rate_hz = sig.sample_rate_hz;
    out.samples.resize(sig.samples.size());
    const double alpha = 1.0 - std::exp(-2.0 * kPi * cutoff_hz / sig.sample_rate_hz);
    std::complex<double> y = sig.samples.empty() ? std::complex<double>{} : sig.samples.front();
    for (std::size_t i = 0; i < sig.samples.size(); ++i) {
        y += alpha * (sig.samples[i] - y);
        out.samples[i] = y;
    }
    return out;
}

/** @brief Welch PSD plus harmonic bookkeeping relative to the +delta_f
 * fundamental. `harmonic_levels[n]` is the stronger of the +n*delta_f and
 * -n*delta_f windows; the per-side maps keep them apart for diagnostics. */
struct SpectrumReport {
    std::vector<std::pair<double, double>> psd;  // (freq_hz, power_db)
    std::map<int, double> harmonic_levels;       // n -> dB relative to fundamental
    std::map<int, double> harmonic_signal_side;  // window around +n*delta_f
    std::map<int, double> harmonic_mirror_side;  // window around -n*delta_f
    double mirror_level_db = 0.0;                // window around -delta_f
};

namespace detail {

/// Peak PSD (linear) in [f0-half_width, f0+half_width]. psd is in natural
/// FFT order, so negative frequencies wrap around.
inline double window_peak(const std::vector<double>& psd, double fs, double f0,
                          double half_width) {
    const auto nfft = static_cast<long>(psd.size());
    const double bin_hz = fs / static_cast<double>(nfft);
    const long span = std::max<long>(1, std::lround(half_width / bin_hz));
    const long centre = std::lround(f0 / bin_hz);
    double peak = 0.0;
    for (long k = centre - span; k <= centre + span; ++k) {
        const auto idx = static_cast<std::size_t>(((k % nfft) + nfft) % nfft);
        peak = std::max(peak, psd[idx]);
    }
    return peak;
}

}  // namespace detail

/** @brief Welch-averaged spectrum (Hann window, 50% overlap, 4096-point
 * segments) with harmonic levels measured as window peaks around multiples
 * of delta_f. Requires at least 2^14 samples. */
inline SpectrumReport spectrum(const IqSignal& sig, double delta_f_hz) {
    if (sig.samples.size() < (1u << 14))
        throw LengthMismatch("spectrum: need at least 2^14 samples");
    const std::size_t nfft = 4096;
    const std::size_t hop = nfft / 2;

    std::vector<double> window(nfft);
    for (std::size_t i = 0; i < nfft; ++i)
        window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / nfft);

    std::vector<double> psd(nfft, 0.0);
    std::vector<std::complex<double>> seg(nfft);
    std::size_t n_seg = 0;
    for (std::size_t start = 0; start + nfft <= sig.samples.size(); start += hop) {
        for (std::size_t i = 0; i < nfft; ++i) seg[i] = sig.samples[start + i] * window[i];
        fft::transform(seg.data(), nfft);
        for (std::size_t i = 0; i < nfft; ++i) psd[i] += std::norm(seg[i]);
        ++n_seg;
    }
    for (auto& v : psd) v /= static_cast<double>(n_seg);

    const double fs = sig.sample_rate_hz;
    const double half_width = 0.45 * delta_f_hz;
    const double fundamental = detail::window_peak(psd, fs, delta_f_hz, half_width);

    SpectrumReport rep;
    rep.psd.reserve(nfft);
    for (std::size_t i = 0; i < nfft; ++i) {
        const auto k = static_cast<long>(i);
        const long shifted = k < static_cast<long>(nfft / 2) ? k : k - static_cast<long>(nfft);
        const double f = static_cast<double>(shifted) * fs / static_cast<double>(nfft);
        rep.psd.emplace_back(f, db10(std::max(psd[i], 1e-300)));
    }
    std::sort(rep.psd.begin(), rep.psd.end());

    const int max_order = std::max(2, static_cast<int>(std::floor(0.5 * fs / delta_f_hz)) - 1);
    rep.harmonic_levels[1] = 0.0;
    rep.harmonic_signal_side[1] = 0.0;
    for (int n = 2; n <= std::min(max_order, 15); ++n) {
        const double up = detail::window_peak(psd, fs, n * delta_f_hz, half_width);
        const double dn = detail::window_peak(psd, fs, -n * delta_f_hz, half_width);
        rep.harmonic_signal_side[n] = db10(std::max(up, 1e-300) / fundamental);
        rep.harmonic_mirror_side[n] = db10(std::max(dn, 1e-300) / fundamental);
        rep.harmonic_levels[n] = std::max(rep.harmonic_signal_side[n], rep.harmonic_mirror_side[n]);
    }
    rep.mirror_level_db =
        db10(std::max(detail::window_peak(psd, fs, -delta_f_hz, half_width), 1e-300) / fundamental);
    return rep;
}

/// CSV serialization: `freq_hz,power_db` rows plus a `# harmonic,n,db` block.
inline void write_spectrum_csv(const SpectrumReport& rep, std::ostream& out) {
    out << "# mirror," << rep.mirror_level_db << "\n";
    for (const auto& [n, db] : rep.harmonic_levels) out << "# harmonic," << n << "," << db << "\n";
    out << "freq_hz,power_db\n";
    for (const auto& [f, db] : rep.psd) out << f << "," << db << "\n";
}

}  // namespace chirpscatter::waveform

#endif
