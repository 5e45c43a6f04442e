#ifndef CHIRPSCATTER_MAC_HPP
#define CHIRPSCATTER_MAC_HPP

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "chirpscatter/channel.hpp"
#include "chirpscatter/css.hpp"
#include "chirpscatter/errors.hpp"
#include "chirpscatter/frame.hpp"
#include "chirpscatter/rng.hpp"

namespace chirpscatter::mac {

/// Energy-detector wake-up: fires at or above the threshold (boundary
/// inclusive; the reference circuits detect down to -71 dBm).
inline bool energy_detect(double power_at_device_dbm, double threshold_dbm = -71.0) {
    return power_at_device_dbm >= threshold_dbm;
}

/** @brief Locate an ON-OFF keying sync pattern in a bit stream.
 *
 * Sliding correlation; the first alignment within max_mismatch flipped bits
 * wins. Pattern length and mismatch budget are deployment knobs.
 */
inline std::optional<std::size_t> detect_sync(std::span<const std::uint8_t> stream,
                                              std::span<const std::uint8_t> pattern,
                                              int max_mismatch = 1) {
    if (pattern.size() < 8)
        throw std::invalid_argument("detect_sync: pattern must be at least 8 bits");
    if (stream.size() < pattern.size()) return std::nullopt;
    for (std::size_t off = 0; off + pattern.size() <= stream.size(); ++off) {
        int mismatches = 0;
        for (std::size_t i = 0; i < pattern.size() && mismatches <= max_mismatch; ++i)
            mismatches += (stream[off + i] ^ pattern[i]) & 1;
        if (mismatches <= max_mismatch) return off;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// TDMA round simulation
// ---------------------------------------------------------------------------

struct TdmaSchedule {
    double slot_duration_s = 1.0;
    std::map<int, int> device_slots;  // device id -> slot index
    std::vector<std::uint8_t> round_sync_pattern = {1, 0, 1, 0, 1, 1, 0, 0,
                                                    1, 0, 0, 1, 0, 1, 1, 1};
    double sync_bit_duration_s = 0.001;

    int slot_count() const {
        int n = 0;
        for (const auto& [id, slot] : device_slots) n = std::max(n, slot + 1);
        return n;
    }
    double sync_duration_s() const {
        return static_cast<double>(round_sync_pattern.size()) * sync_bit_duration_s;
    }
    double round_duration_s() const {
        return sync_duration_s() + slot_count() * slot_duration_s;
    }

    void validate() const {
        std::vector<int> used;
        for (const auto& [id, slot] : device_slots) {
            if (slot < 0) throw std::invalid_argument("TdmaSchedule: negative slot index");
            if (std::find(used.begin(), used.end(), slot) != used.end())
                throw std::invalid_argument("TdmaSchedule: slot " + std::to_string(slot) +
                                            " assigned twice");
            used.push_back(slot);
        }
    }
};

struct DeviceState {
    int id = 0;
    int channel_index = 0;
    css::ChirpParams params{12, 31250.0, {4, 8}, 1};
    double detector_threshold_dbm = -71.0;
    bool has_data = true;
    std::size_t payload_len = 8;
    bool crc_present = true;

    double frame_duration_s() const {
        frame::LoraFrame f(params, std::vector<std::uint8_t>(payload_len, 0));
        f.crc_present = crc_present;
        return frame::frame_duration_s(f);
    }
};

enum class MacAction { Wake, TxStart, TxEnd, Skip };

inline const char* to_string(MacAction a) {
    switch (a) {
        case MacAction::Wake: return "wake";
        case MacAction::TxStart: return "tx_start";
        case MacAction::TxEnd: return "tx_end";
        case MacAction::Skip: return "skip";
    }
    return "?";
}

struct TranscriptEvent {
    double t_s;
    int device;
    MacAction action;
    int channel;
};

struct Transcript {
    std::vector<TranscriptEvent> events;
};

/// Devices never transmit before the source tone arrives, so clock error
/// shows up as a start-of-slot delay, bounded by this fraction of the slot.
inline constexpr double kClockDriftFraction = 0.001;

/** @brief Simulate TDMA rounds.
 *
 * Per slot the source emits its tone only if the scheduled device has data;
 * the device transmits one frame if its energy detector fires. traffic_prob
 * < 1 redraws has_data per round from the seeded stream (devices whose
 * static has_data is false never transmit). Each device carries a constant
 * clock-drift delay of up to 0.1% of the slot, drawn from the seed.
 */
inline Transcript simulate_rounds(const TdmaSchedule& schedule,
                                  const std::vector<DeviceState>& devices,
                                  const std::map<int, channel::LinkBudget>& budgets,
                                  int n_rounds = 1, double traffic_prob = 1.0,
                                  std::uint64_t seed = 1) {
    schedule.validate();
    const double max_drift = kClockDriftFraction * schedule.slot_duration_s;
    for (const auto& dev : devices) {
        const auto it = schedule.device_slots.find(dev.id);
        if (it == schedule.device_slots.end()) continue;
        const double need = dev.frame_duration_s() + max_drift;
        if (need > schedule.slot_duration_s)
            throw ScheduleInfeasible("slot of " + std::to_string(schedule.slot_duration_s) +
                                     " s is shorter than device " + std::to_string(dev.id) +
                                     " frame of " + std::to_string(need) +
                                     " s (including clock-drift margin)");
    }

    Rng rng(seed);
    std::map<int, double> drift;
    for (const auto& dev : devices) drift[dev.id] = max_drift * rng.uniform();

    Transcript tr;
    for (int round = 0; round < n_rounds; ++round) {
        const double t_round = round * schedule.round_duration_s();
        for (const auto& dev : devices) {
            const auto slot_it = schedule.device_slots.find(dev.id);
            if (slot_it == schedule.device_slots.end()) continue;
            const double t_slot =
                t_round + schedule.sync_duration_s() + slot_it->second * schedule.slot_duration_s;

            const bool wants = dev.has_data && (traffic_prob >= 1.0 || rng.uniform() < traffic_prob);
            if (!wants) {
                // source keeps quiet for this slot; nothing to reflect
                tr.events.push_back({t_slot, dev.id, MacAction::Skip, dev.channel_index});
                continue;
            }
            const auto budget_it = budgets.find(dev.id);
            const double power = budget_it != budgets.end()
                                     ? channel::power_at_tag_dbm(budget_it->second)
                                     : 0.0;
            if (!energy_detect(power, dev.detector_threshold_dbm)) {
                tr.events.push_back({t_slot, dev.id, MacAction::Skip, dev.channel_index});
                continue;
            }
            const double t_tx = t_slot + drift[dev.id];
            tr.events.push_back({t_tx, dev.id, MacAction::Wake, dev.channel_index});
            tr.events.push_back({t_tx, dev.id, MacAction::TxStart, dev.channel_index});
            tr.events.push_back(
                {t_tx + dev.frame_duration_s(), dev.id, MacAction::TxEnd, dev.channel_index});
        }
    }
    std::stable_sort(tr.events.begin(), tr.events.end(),
                     [](const TranscriptEvent& a, const TranscriptEvent& b) { return a.t_s < b.t_s; });
    return tr;
}

inline Transcript simulate_round(const TdmaSchedule& schedule,
                                 const std::vector<DeviceState>& devices,
                                 const std::map<int, channel::LinkBudget>& budgets) {
    return simulate_rounds(schedule, devices, budgets, 1);
}

/// Count pairs of transmissions that overlap in time on the same channel and
/// spreading factor. The TDMA safety property demands exactly zero.
inline int count_channel_sf_overlaps(const Transcript& tr,
                                     const std::vector<DeviceState>& devices) {
    struct Span {
        double t0, t1;
        int channel, sf, device;
    };
    std::map<int, int> sf_of;
    for (const auto& d : devices) sf_of[d.id] = d.params.sf;

    std::vector<Span> spans;
    std::map<int, Span> open;
    for (const auto& ev : tr.events) {
        if (ev.action == MacAction::TxStart)
            open[ev.device] = {ev.t_s, 0.0, ev.channel, sf_of[ev.device], ev.device};
        else if (ev.action == MacAction::TxEnd) {
            auto it = open.find(ev.device);
            if (it != open.end()) {
                it->second.t1 = ev.t_s;
                spans.push_back(it->second);
                open.erase(it);
            }
        }
    }
    int overlaps = 0;
    for (std::size_t i = 0; i < spans.size(); ++i)
        for (std::size_t j = i + 1; j < spans.size(); ++j) {
            const auto& a = spans[i];
            const auto& b = spans[j];
            if (a.channel == b.channel && a.sf == b.sf && a.t0 < b.t1 && b.t0 < a.t1) ++overlaps;
        }
    return overlaps;
}

inline void write_transcript_csv(const Transcript& tr, std::ostream& out) {
    out << "t_s,device,action,channel\n";
    for (const auto& ev : tr.events)
        out << ev.t_s << "," << ev.device << "," << to_string(ev.action) << "," << ev.channel
            << "\n";
}

// ---------------------------------------------------------------------------
// Concurrent transmissions
// ---------------------------------------------------------------------------

/// A device in a concurrency experiment: distinct band offset (distinct LoRa
/// channel) or distinct spreading factor on the same band.
struct ConcurrentDevice {
    css::ChirpParams params{7, 125000.0, {4, 8}, 1};
    double band_offset_hz = 0.0;  // center of this device's band in the sim
    double rssi_dbm = -100.0;
    std::size_t payload_len = 8;
};

struct ConcurrentResult {
    double per_solo;
    double per_concurrent;
};

/** @brief Per-device PER with and without the other devices transmitting.
 *
 * All devices transmit simultaneously through a shared medium; each receiver
 * mixes its band down to baseband, runs the channel-select frontend,
 * decimates to its own demod rate and parses. Noise is drawn once per packet
 * index so the solo and concurrent arms see identical noise.
 */
inline std::vector<ConcurrentResult> simulate_concurrent(
    const std::vector<ConcurrentDevice>& devices, double noise_figure_db, int n_packets,
    std::uint64_t seed, const channel::FrontendConfig& frontend = {}) {
    if (devices.empty()) return {};

    // Common simulation rate: covers every band with margin, and an integer
    // multiple of every device's demod rate so decimation is exact.
    double f_span = 0.0;
    double base_rate = 0.0;
    for (const auto& d : devices) {
        f_span = std::max(f_span, std::abs(d.band_offset_hz) + 0.55 * d.params.bw_hz);
        base_rate = std::max(base_rate, d.params.bw_hz);
    }
    int mult = static_cast<int>(std::ceil(2.2 * f_span / base_rate));
    mult = std::max(mult, 4);
    int pow2 = 1;
    while (pow2 < mult) pow2 <<= 1;  // demodulators want power-of-two osf
    for (const auto& d : devices) {
        const double ratio = base_rate / d.params.bw_hz;
        const double r = std::round(ratio);
        if (std::abs(ratio - r) > 1e-9 || (static_cast<long>(r) & (static_cast<long>(r) - 1)))
            throw std::invalid_argument(
                "simulate_concurrent: bandwidths must be power-of-two multiples of each other");
    }
    const double fs = static_cast<double>(pow2) * base_rate;

    const Rng master(seed);
    std::vector<ConcurrentResult> out(devices.size(), {0.0, 0.0});

    for (int pkt = 0; pkt < n_packets; ++pkt) {
        Rng pkt_rng = master.derive(static_cast<std::uint64_t>(pkt));

        // Build each device's transmission at the common rate.
        std::vector<IqSignal> tx(devices.size());
        std::vector<std::vector<std::uint8_t>> payloads(devices.size());
        std::size_t max_len = 0;
        for (std::size_t d = 0; d < devices.size(); ++d) {
            const auto& dev = devices[d];
            payloads[d].resize(dev.payload_len);
            for (auto& b : payloads[d]) b = pkt_rng.byte();
            const int osf = static_cast<int>(std::lround(fs / dev.params.bw_hz));
            frame::LoraFrame f(dev.params.with_osf(osf), payloads[d]);
            IqSignal sig = frame::modulate_frame(f);
            const double p = mean_power(sig);
            scale(sig, std::sqrt(from_db10(dev.rssi_dbm) / p));
            mix(sig, dev.band_offset_hz);
            tx[d] = std::move(sig);
            max_len = std::max(max_len, tx[d].samples.size());
        }

        // One noise realization shared by both arms.
        const double sigma2 = from_db10(channel::kThermalNoiseDbmHz + noise_figure_db) * fs;
        std::vector<std::complex<double>> noise(max_len);
        for (auto& n : noise) n = pkt_rng.gaussian_complex(sigma2);

        for (std::size_t d = 0; d < devices.size(); ++d) {
            const auto& dev = devices[d];
            for (int arm = 0; arm < 2; ++arm) {
                IqSignal rx;
                rx.sample_rate_hz = fs;
                rx.samples = noise;
                for (std::size_t o = 0; o < devices.size(); ++o) {
                    if (arm == 0 && o != d) continue;  // solo: others silenced
                    for (std::size_t i = 0; i < tx[o].samples.size(); ++i)
                        rx.samples[i] += tx[o].samples[i];
                }
                mix(rx, -dev.band_offset_hz);
                const int osf = static_cast<int>(std::lround(fs / dev.params.bw_hz));
                const css::ChirpParams rx_params = dev.params.with_osf(osf);
                const IqSignal filtered = channel::receiver_frontend(rx, rx_params, frontend);
                frame::ParserConfig parser;
                parser.payload_len = dev.payload_len;
                const auto res = frame::parse_frame(filtered, rx_params, parser);
                const bool ok =
                    res.status == frame::ParseStatus::Ok && res.payload == payloads[d];
                if (!ok) (arm == 0 ? out[d].per_solo : out[d].per_concurrent) += 1.0;
            }
        }
    }
    for (auto& r : out) {
        r.per_solo /= n_packets;
        r.per_concurrent /= n_packets;
    }
    return out;
}

}  // namespace chirpscatter::mac

#endif
