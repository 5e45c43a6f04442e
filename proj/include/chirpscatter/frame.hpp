#ifndef CHIRPSCATTER_FRAME_HPP
#define CHIRPSCATTER_FRAME_HPP

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "chirpscatter/css.hpp"
#include "chirpscatter/errors.hpp"
#include "chirpscatter/iq.hpp"
#include "chirpscatter/rng.hpp"

namespace chirpscatter::frame {

// ---------------------------------------------------------------------------
// Hamming FEC over nibbles
// ---------------------------------------------------------------------------

/** @brief Encode one nibble (4 data bits) to cr.coded_bits coded bits.
 *
 * 4/8 is extended Hamming(8,4): corrects singles, detects doubles.
 * 4/7 is Hamming(7,4): corrects singles.
 * 4/6 and 4/5 are parity variants: they only detect errors.
 *
 * Codeword layout is systematic, data bits first (d0..d3 = nibble LSB..MSB),
 * parity bits after: p0=d0^d1^d3, p1=d0^d2^d3, p2=d1^d2^d3, then the overall
 * parity for (8,4). 4/6 uses p0=d0^d1^d2, p1=d1^d2^d3; 4/5 uses the overall
 * parity alone.
 */
inline std::array<std::uint8_t, 8> hamming_encode_nibble(std::uint8_t nibble,
                                                         const css::CodeRate& cr) {
    const std::uint8_t d0 = nibble & 1, d1 = (nibble >> 1) & 1, d2 = (nibble >> 2) & 1,
                       d3 = (nibble >> 3) & 1;
    std::array<std::uint8_t, 8> cw{d0, d1, d2, d3, 0, 0, 0, 0};
    switch (cr.coded_bits) {
        case 5:
            cw[4] = d0 ^ d1 ^ d2 ^ d3;
            break;
        case 6:
            cw[4] = d0 ^ d1 ^ d2;
            cw[5] = d1 ^ d2 ^ d3;
            break;
        case 7:
        case 8:
            cw[4] = d0 ^ d1 ^ d3;
            cw[5] = d0 ^ d2 ^ d3;
            cw[6] = d1 ^ d2 ^ d3;
            if (cr.coded_bits == 8)
                cw[7] = cw[0] ^ cw[1] ^ cw[2] ^ cw[3] ^ cw[4] ^ cw[5] ^ cw[6];
            break;
        default:
            throw std::invalid_argument("hamming_encode: bad code rate " + cr.label());
    }
    return cw;
}

inline std::vector<std::uint8_t> hamming_encode(std::span<const std::uint8_t> nibbles,
                                                const css::CodeRate& cr) {
    std::vector<std::uint8_t> bits;
    bits.reserve(nibbles.size() * static_cast<std::size_t>(cr.coded_bits));
    for (const auto nib : nibbles) {
        const auto cw = hamming_encode_nibble(static_cast<std::uint8_t>(nib & 0xF), cr);
        for (int i = 0; i < cr.coded_bits; ++i) bits.push_back(cw[static_cast<std::size_t>(i)]);
    }
    return bits;
}

struct HammingDecodeResult {
    std::vector<std::uint8_t> nibbles;
    std::vector<bool> corrected;      // per block: a single error was fixed
    std::vector<bool> uncorrectable;  // per block: errors detected, not fixed
};

namespace detail {

/// Map (7,4) syndrome -> erroneous codeword bit, built from the parity rules.
inline int syndrome_to_bit(int syndrome) {
    // syndrome bit order: (p0 check) | (p1 check)<<1 | (p2 check)<<2
    switch (syndrome) {
        case 0b011: return 0;  // d0 breaks p0,p1
        case 0b101: return 1;  // d1 breaks p0,p2
        case 0b110: return 2;  // d2 breaks p1,p2
        case 0b111: return 3;  // d3 breaks all
        case 0b001: return 4;
        case 0b010: return 5;
        case 0b100: return 6;
        default: return -1;
    }
}

}  // namespace detail

/** @brief Decode coded bits back to nibbles with per-block flags. Block count
 * must divide evenly; UncorrectableBlock conditions are flags, not throws. */
inline HammingDecodeResult hamming_decode(std::span<const std::uint8_t> bits,
                                          const css::CodeRate& cr) {
    const auto cw_len = static_cast<std::size_t>(cr.coded_bits);
    if (bits.size() % cw_len != 0)
        throw LengthMismatch("hamming_decode: bit count not a multiple of " +
                             std::to_string(cr.coded_bits));
    HammingDecodeResult res;
    const std::size_t blocks = bits.size() / cw_len;
    res.nibbles.reserve(blocks);
    res.corrected.reserve(blocks);
    res.uncorrectable.reserve(blocks);

    for (std::size_t b = 0; b < blocks; ++b) {
        std::array<std::uint8_t, 8> cw{};
        for (std::size_t i = 0; i < cw_len; ++i) cw[i] = bits[b * cw_len + i] & 1;
        bool corrected = false, bad = false;

        if (cr.coded_bits >= 7) {
            const int s0 = cw[0] ^ cw[1] ^ cw[3] ^ cw[4];
            const int s1 = cw[0] ^ cw[2] ^ cw[3] ^ cw[5];
            const int s2 = cw[1] ^ cw[2] ^ cw[3] ^ cw[6];
            const int syndrome = s0 | (s1 << 1) | (s2 << 2);
            if (cr.coded_bits == 7) {
                if (syndrome != 0) {
                    cw[static_cast<std::size_t>(detail::syndrome_to_bit(syndrome))] ^= 1;
                    corrected = true;
                }
            } else {
                int overall = 0;
                for (int i = 0; i < 8; ++i) overall ^= cw[static_cast<std::size_t>(i)];
                if (syndrome == 0 && overall == 0) {
                    // clean
                } else if (syndrome == 0 && overall == 1) {
                    cw[7] ^= 1;  // overall-parity bit itself
                    corrected = true;
                } else if (overall == 1) {
                    cw[static_cast<std::size_t>(detail::syndrome_to_bit(syndrome))] ^= 1;
                    corrected = true;
                } else {
                    bad = true;  // even error count with nonzero syndrome: double error
                }
            }
        } else if (cr.coded_bits == 6) {
            const int c0 = cw[0] ^ cw[1] ^ cw[2] ^ cw[4];
            const int c1 = cw[1] ^ cw[2] ^ cw[3] ^ cw[5];
            bad = (c0 | c1) != 0;
        } else {
            int overall = 0;
            for (int i = 0; i < 5; ++i) overall ^= cw[static_cast<std::size_t>(i)];
            bad = overall != 0;
        }

        res.nibbles.push_back(static_cast<std::uint8_t>(cw[0] | (cw[1] << 1) | (cw[2] << 2) |
                                                        (cw[3] << 3)));
        res.corrected.push_back(corrected);
        res.uncorrectable.push_back(bad);
    }
    return res;
}

// ---------------------------------------------------------------------------
// CRC
// ---------------------------------------------------------------------------

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xorout.
inline std::uint16_t crc16(std::span<const std::uint8_t> payload) {
    std::uint16_t crc = 0xFFFF;
    for (const auto byte : payload) {
        crc ^= static_cast<std::uint16_t>(byte) << 8;
        for (int i = 0; i < 8; ++i)
            crc = (crc & 0x8000) ? static_cast<std::uint16_t>((crc << 1) ^ 0x1021)
                                 : static_cast<std::uint16_t>(crc << 1);
    }
    return crc;
}

// ---------------------------------------------------------------------------
// Frame layout
// ---------------------------------------------------------------------------

/** @brief LoRa-shaped frame: preamble up-chirps, two sync symbols, 2.25
 * down-chirps, then the Hamming-coded payload (plus optional CRC-16). */
struct LoraFrame {
    css::ChirpParams params;
    std::vector<std::uint8_t> payload;
    int preamble_len = 8;
    std::array<int, 2> sync = {8, 16};
    bool crc_present = true;

    LoraFrame(css::ChirpParams p, std::vector<std::uint8_t> data) : params(p), payload(std::move(data)) {
        validate();
    }

    void validate() const {
        if (preamble_len < 6 || preamble_len > 65535)
            throw std::invalid_argument("LoraFrame: preamble_len must be in [6, 65535]");
        if (payload.size() > 255) throw std::invalid_argument("LoraFrame: payload > 255 bytes");
        for (const int s : sync)
            if (s < 0 || s >= params.chips())
                throw std::invalid_argument("LoraFrame: sync symbol out of range");
    }
};

enum class FrameElementKind { Up, Down, QuarterDown };

/// One physical element of the frame; data symbols are Up with a shift value.
struct FrameElement {
    FrameElementKind kind;
    int value = 0;
};

/// Bytes -> nibbles, low nibble first.
inline std::vector<std::uint8_t> bytes_to_nibbles(std::span<const std::uint8_t> bytes) {
    std::vector<std::uint8_t> nibbles;
    nibbles.reserve(bytes.size() * 2);
    for (const auto b : bytes) {
        nibbles.push_back(b & 0xF);
        nibbles.push_back((b >> 4) & 0xF);
    }
    return nibbles;
}

inline std::vector<std::uint8_t> nibbles_to_bytes(std::span<const std::uint8_t> nibbles) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(nibbles.size() / 2);
    for (std::size_t i = 0; i + 1 < nibbles.size(); i += 2)
        bytes.push_back(static_cast<std::uint8_t>((nibbles[i] & 0xF) | ((nibbles[i + 1] & 0xF) << 4)));
    return bytes;
}

/// Coded bytes on the air: payload plus CRC (big-endian) when enabled.
inline std::vector<std::uint8_t> wire_bytes(const LoraFrame& f) {
    std::vector<std::uint8_t> bytes = f.payload;
    if (f.crc_present) {
        const std::uint16_t crc = crc16(f.payload);
        bytes.push_back(static_cast<std::uint8_t>(crc >> 8));
        bytes.push_back(static_cast<std::uint8_t>(crc & 0xFF));
    }
    return bytes;
}

/// Payload-section symbol values (after FEC and bit packing).
inline std::vector<css::ChirpSymbol> payload_symbols(const LoraFrame& f) {
    const auto nibbles = bytes_to_nibbles(wire_bytes(f));
    const auto bits = hamming_encode(nibbles, f.params.cr);
    return css::bits_to_symbols(bits, f.params);
}

/// Full on-air element sequence: preamble, sync pair, 2.25 down-chirps, data.
inline std::vector<FrameElement> build_frame(const LoraFrame& f) {
    f.validate();
    std::vector<FrameElement> elements;
    const auto data = payload_symbols(f);
    elements.reserve(static_cast<std::size_t>(f.preamble_len) + 5 + data.size());
    for (int i = 0; i < f.preamble_len; ++i) elements.push_back({FrameElementKind::Up, 0});
    elements.push_back({FrameElementKind::Up, f.sync[0]});
    elements.push_back({FrameElementKind::Up, f.sync[1]});
    elements.push_back({FrameElementKind::Down, 0});
    elements.push_back({FrameElementKind::Down, 0});
    elements.push_back({FrameElementKind::QuarterDown, 0});
    for (const auto& s : data) elements.push_back({FrameElementKind::Up, s.value});
    return elements;
}

/// Number of symbol durations in the frame (the quarter down-chirp counts 0.25).
inline double frame_symbol_count(const LoraFrame& f) {
    return static_cast<double>(f.preamble_len) + 2.0 + 2.25 +
           static_cast<double>(payload_symbols(f).size());
}

inline double frame_duration_s(const LoraFrame& f) {
    return frame_symbol_count(f) * css::symbol_duration_s(f.params);
}

/// Modulate the element sequence into baseband IQ at osf*bw.
inline IqSignal modulate_frame(const LoraFrame& f) {
    const auto elements = build_frame(f);
    const css::ChirpParams& p = f.params;
    const std::size_t nn = p.samples_per_symbol();

    const IqSignal down = css::base_chirp(p, css::Direction::Down);
    IqSignal sig;
    sig.sample_rate_hz = p.sample_rate_hz();
    sig.samples.reserve(elements.size() * nn);
    for (const auto& el : elements) {
        switch (el.kind) {
            case FrameElementKind::Up: {
                const IqSignal sym = css::modulate_symbol(p, css::ChirpSymbol{el.value});
                sig.samples.insert(sig.samples.end(), sym.samples.begin(), sym.samples.end());
                break;
            }
            case FrameElementKind::Down:
                sig.samples.insert(sig.samples.end(), down.samples.begin(), down.samples.end());
                break;
            case FrameElementKind::QuarterDown:
                sig.samples.insert(sig.samples.end(), down.samples.begin(),
                                   down.samples.begin() + static_cast<std::ptrdiff_t>(nn / 4));
                break;
        }
    }
    return sig;
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

enum class ParseStatus { Ok, NoPreamble, SyncMismatch, CrcFail };

inline const char* to_string(ParseStatus s) {
    switch (s) {
        case ParseStatus::Ok: return "ok";
        case ParseStatus::NoPreamble: return "no_preamble";
        case ParseStatus::SyncMismatch: return "sync_mismatch";
        case ParseStatus::CrcFail: return "crc_fail";
    }
    return "?";
}

struct ParseResult {
    ParseStatus status = ParseStatus::NoPreamble;
    std::vector<std::uint8_t> payload;
    bool crc_ok = false;
    bool fec_uncorrectable = false;
    std::vector<double> symbol_confidence;  // peak-to-mean per payload symbol
};

/** @brief Receiver-side frame knowledge (implicit header mode: rate and
 * length are configured, not transmitted). */
struct ParserConfig {
    std::size_t payload_len = 8;
    bool crc_present = true;
    std::array<int, 2> sync = {8, 16};
    int min_preamble_symbols = 4;
    double detect_threshold = 0.0;  // 0 = use css::detection_threshold(sf)
};

/** @brief Demodulate a frame from IQ samples.
 *
 * The buffer may start anywhere inside the preamble. Any full window inside
 * the identical preamble chirps dechirps to a clean tone whose bin equals the
 * timing offset in chips, so detection requires min_preamble_symbols
 * consecutive confident windows with a stable bin, then realigns to the chip
 * grid, walks to the sync pair, confirms the down-chirp SFD, and demodulates
 * the payload section.
 */
inline ParseResult parse_frame(const IqSignal& sig, const css::ChirpParams& p,
                               const ParserConfig& cfg = {}) {
    ParseResult res;
    css::Demodulator demod(p);
    const std::size_t nn = p.samples_per_symbol();
    const int n = p.chips();
    const double threshold =
        cfg.detect_threshold > 0.0 ? cfg.detect_threshold : css::detection_threshold(p.sf);
    const auto& x = sig.samples;

    // Preamble hunt: consecutive confident windows with the same bin.
    std::size_t pos = 0;
    int run = 0, run_bin = -1;
    bool found = false;
    while (pos + nn <= x.size()) {
        const auto r = demod.demodulate(std::span(x).subspan(pos, nn));
        if (r.peak_to_mean >= threshold && r.value == run_bin) {
            ++run;
        } else if (r.peak_to_mean >= threshold) {
            run = 1;
            run_bin = r.value;
        } else {
            run = 0;
            run_bin = -1;
        }
        if (run >= cfg.min_preamble_symbols) {
            found = true;
            break;
        }
        pos += nn;
    }
    if (!found) {
        res.status = ParseStatus::NoPreamble;
        return res;
    }

    // Realign to symbol boundaries: a bin of b means the window started b
    // chips into a preamble symbol, so the next boundary is N-b chips away.
    pos += nn + static_cast<std::size_t>((n - run_bin) % n) * static_cast<std::size_t>(p.osf);

    // Walk the remaining preamble until the sync pair shows up.
    int sync_seen = 0;
    std::size_t guard = 0;
    const std::size_t max_preamble_windows = 65535 + 8;
    while (pos + nn <= x.size() && guard++ < max_preamble_windows) {
        const auto r = demod.demodulate(std::span(x).subspan(pos, nn));
        pos += nn;
        if (r.value == 0) continue;  // still preamble
        if (r.value == cfg.sync[0]) {
            sync_seen = 1;
            break;
        }
        res.status = ParseStatus::SyncMismatch;
        return res;
    }
    if (sync_seen != 1 || pos + nn > x.size()) {
        res.status = ParseStatus::SyncMismatch;
        return res;
    }
    {
        const auto r = demod.demodulate(std::span(x).subspan(pos, nn));
        pos += nn;
        if (r.value != cfg.sync[1]) {
            res.status = ParseStatus::SyncMismatch;
            return res;
        }
    }

    // SFD: the next window must look like a down-chirp.
    if (pos + nn > x.size()) {
        res.status = ParseStatus::SyncMismatch;
        return res;
    }
    {
        const auto up = demod.demodulate(std::span(x).subspan(pos, nn));
        const auto down = demod.demodulate_down(std::span(x).subspan(pos, nn));
        if (down.peak_mag <= up.peak_mag) {
            res.status = ParseStatus::SyncMismatch;
            return res;
        }
    }
    pos += nn * 2 + nn / 4;  // skip the 2.25 down-chirp symbols

    // Payload section. Length is known a priori (implicit header).
    const std::size_t wire_len = cfg.payload_len + (cfg.crc_present ? 2 : 0);
    const std::size_t coded_bits = wire_len * 2 * static_cast<std::size_t>(p.cr.coded_bits);
    const std::size_t n_symbols = (coded_bits + static_cast<std::size_t>(p.sf) - 1) /
                                  static_cast<std::size_t>(p.sf);

    std::vector<css::ChirpSymbol> symbols;
    symbols.reserve(n_symbols);
    for (std::size_t i = 0; i < n_symbols; ++i) {
        if (pos + nn > x.size()) break;  // truncated: decode what we have
        const auto r = demod.demodulate(std::span(x).subspan(pos, nn));
        symbols.push_back(css::ChirpSymbol{r.value});
        res.symbol_confidence.push_back(r.peak_to_mean);
        pos += nn;
    }

    auto bits = css::symbols_to_bits(symbols, p);
    bits.resize(coded_bits, 0);  // truncation pads with zeros (will fail CRC)
    const auto decoded = hamming_decode(bits, p.cr);
    for (const auto bad : decoded.uncorrectable)
        if (bad) res.fec_uncorrectable = true;
    const auto bytes = nibbles_to_bytes(decoded.nibbles);

    res.payload.assign(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(
                                          std::min(cfg.payload_len, bytes.size())));
    if (cfg.crc_present) {
        const bool have_crc = bytes.size() >= cfg.payload_len + 2 && symbols.size() == n_symbols;
        const std::uint16_t rx_crc =
            have_crc ? static_cast<std::uint16_t>((bytes[cfg.payload_len] << 8) |
                                                  bytes[cfg.payload_len + 1])
                     : 0;
        res.crc_ok = have_crc && rx_crc == crc16(res.payload);
    } else {
        res.crc_ok = symbols.size() == n_symbols && !res.fec_uncorrectable;
    }
    res.status = res.crc_ok ? ParseStatus::Ok : ParseStatus::CrcFail;
    return res;
}

// ---------------------------------------------------------------------------
// Rate settings and frequency hopping
// ---------------------------------------------------------------------------

/// All 224 (bandwidth x spreading factor x code rate) combinations.
inline std::vector<css::ChirpParams> rate_settings() {
    std::vector<css::ChirpParams> out;
    out.reserve(224);
    for (const double bw : css::kBandwidthsHz)
        for (const int sf : css::kSpreadingFactors)
            for (const int coded : css::kCodedBits)
                out.emplace_back(sf, bw, css::CodeRate{4, coded}, 1);
    return out;
}

struct ChannelPlan {
    double band_start_hz;
    int channel_count;
    double spacing_hz;

    std::vector<double> centers() const {
        std::vector<double> c(static_cast<std::size_t>(channel_count));
        for (int k = 0; k < channel_count; ++k)
            c[static_cast<std::size_t>(k)] = band_start_hz + k * spacing_hz;
        return c;
    }
};

/** @brief FCC hopping plans for the 900 MHz ISM band: 64 channels from
 * 902.3 MHz in 200 kHz steps at 125 kHz bandwidth, 8 channels in 1.6 MHz
 * steps at 500 kHz bandwidth. */
inline ChannelPlan channel_plan(double bw_hz) {
    if (bw_hz == 125000.0) return {902.3e6, 64, 200e3};
    if (bw_hz == 500000.0) return {903.0e6, 8, 1.6e6};
    throw UnsupportedBandwidth("channel_plan: hopping defined for 125 kHz and 500 kHz only");
}

/** @brief Seeded pseudo-random channel visiting order. The single-tone source
 * hops to center - delta_f so the backscattered band always lands on the
 * LoRa channel; the tag is oblivious to the hopping. */
struct HopSequence {
    std::vector<int> channel_order;
    std::vector<double> tone_freqs_hz;
    double delta_f_hz;
};

inline HopSequence hop_sequence(const ChannelPlan& plan, double delta_f_hz, std::uint64_t seed) {
    HopSequence seq;
    seq.delta_f_hz = delta_f_hz;
    seq.channel_order.resize(static_cast<std::size_t>(plan.channel_count));
    for (int k = 0; k < plan.channel_count; ++k) seq.channel_order[static_cast<std::size_t>(k)] = k;
    Rng rng(seed);
    rng.shuffle(seq.channel_order);
    const auto centers = plan.centers();
    seq.tone_freqs_hz.reserve(seq.channel_order.size());
    for (const int k : seq.channel_order)
        seq.tone_freqs_hz.push_back(centers[static_cast<std::size_t>(k)] - delta_f_hz);
    return seq;
}

}  // namespace chirpscatter::frame

#endif
