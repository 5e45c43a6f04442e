#ifndef CHIRPSCATTER_EXPERIMENTS_HPP
#define CHIRPSCATTER_EXPERIMENTS_HPP

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "chirpscatter/channel.hpp"
#include "chirpscatter/config.hpp"
#include "chirpscatter/css.hpp"
#include "chirpscatter/frame.hpp"
#include "chirpscatter/iq.hpp"
#include "chirpscatter/mac.hpp"
#include "chirpscatter/waveform.hpp"

namespace chirpscatter::expt {

inline const std::vector<std::string>& experiment_kinds() {
    static const std::vector<std::string> kinds = {
        "modulate",        "demodulate", "spectrum", "per-sweep",
        "range-scenario1", "range-scenario2", "mac-sim", "concurrent"};
    return kinds;
}

// ---------------------------------------------------------------------------
// Artifact plumbing
// ---------------------------------------------------------------------------

/// Deterministic number formatting for artifacts (byte-identical re-runs).
inline std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(12) << v;
    return os.str();
}

/** @brief One experiment run: resolved settings (echoed into every artifact
 * header) plus atomic CSV/IQ writers. Artifacts land in out_dir via a
 * temp-file-and-rename so partial files never appear under the final name. */
class ArtifactWriter {
public:
    ArtifactWriter(std::string kind, std::filesystem::path out_dir)
        : kind_(std::move(kind)), out_dir_(std::move(out_dir)) {
        std::filesystem::create_directories(out_dir_);
    }

    void note(const std::string& key, const std::string& value) { resolved_[key] = value; }
    void note(const std::string& key, double value) { resolved_[key] = fmt(value); }
    void note(const std::string& key, long long value) { resolved_[key] = std::to_string(value); }

    std::string header() const {
        std::ostringstream os;
        os << "# chirpscatter experiment = " << kind_ << "\n";
        for (const auto& [k, v] : resolved_) os << "# " << k << " = " << v << "\n";
        return os.str();
    }

    void write_text(const std::string& name, const std::string& body) const {
        const auto tmp = out_dir_ / (".tmp." + name);
        {
            std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
            if (!out) throw std::runtime_error("cannot open " + tmp.string());
            out << header() << body;
            if (!out) throw std::runtime_error("short write to " + tmp.string());
        }
        std::filesystem::rename(tmp, out_dir_ / name);
    }

    void write_iq(const std::string& name, const IqSignal& sig) const {
        const auto tmp = out_dir_ / (".tmp." + name);
        chirpscatter::write_iq(sig, tmp.string());
        std::filesystem::rename(tmp, out_dir_ / name);
        std::filesystem::rename(tmp.string() + ".sample_rate.txt",
                                (out_dir_ / name).string() + ".sample_rate.txt");
    }

    const std::filesystem::path& out_dir() const { return out_dir_; }

private:
    std::string kind_;
    std::filesystem::path out_dir_;
    std::map<std::string, std::string> resolved_;
};

// ---------------------------------------------------------------------------
// Config readers
// ---------------------------------------------------------------------------

namespace detail {

inline css::CodeRate parse_code_rate(const std::string& text, const std::string& field) {
    if (text.size() == 3 && text[0] == '4' && text[1] == '/') {
        const int den = text[2] - '0';
        if (den >= 5 && den <= 8) return {4, den};
    }
    throw cfg::ConfigError(field, "expected one of 4/5, 4/6, 4/7, 4/8, got `" + text + "`");
}

inline css::ChirpParams read_chirp_params(const cfg::Config& c, ArtifactWriter& art,
                                          int default_osf) {
    const int sf = static_cast<int>(c.get_int("css.sf", 12));
    const double bw = c.get_double("css.bw_hz", 31250.0);
    const css::CodeRate cr = parse_code_rate(c.get_string("css.cr", "4/8"), "css.cr");
    const int osf = static_cast<int>(c.get_int("css.osf", default_osf));
    art.note("css.sf", static_cast<long long>(sf));
    art.note("css.bw_hz", bw);
    art.note("css.cr", cr.label());
    art.note("css.osf", static_cast<long long>(osf));
    try {
        return {sf, bw, cr, osf};
    } catch (const std::invalid_argument& e) {
        throw cfg::ConfigError("css.sf/css.bw_hz/css.cr/css.osf", e.what());
    }
}

inline channel::LinkBudget read_budget(const cfg::Config& c, ArtifactWriter& art) {
    channel::LinkBudget b;
    b.tx_power_dbm = c.get_double("budget.tx_power_dbm", b.tx_power_dbm);
    b.src_antenna_gain_dbi = c.get_double("budget.src_antenna_gain_dbi", b.src_antenna_gain_dbi);
    b.tag_antenna_gain_dbi = c.get_double("budget.tag_antenna_gain_dbi", b.tag_antenna_gain_dbi);
    b.rx_antenna_gain_dbi = c.get_double("budget.rx_antenna_gain_dbi", b.rx_antenna_gain_dbi);
    b.switch_loss_db = c.get_double("budget.switch_loss_db", b.switch_loss_db);
    b.carrier_freq_hz = c.get_double("budget.carrier_freq_hz", b.carrier_freq_hz);
    b.d1_m = c.get_double("budget.d1_m", b.d1_m);
    b.d2_m = c.get_double("budget.d2_m", b.d2_m);
    if (c.get_bool("budget.calibrate", true)) {
        const double anchor = c.get_double("budget.anchor_rssi_dbm", -134.0);
        const double ad1 = c.get_double("budget.anchor_d1_m", 200.0);
        const double ad2 = c.get_double("budget.anchor_d2_m", 200.0);
        channel::calibrate_excess_loss(b, anchor, ad1, ad2);
        art.note("budget.anchor_rssi_dbm", anchor);
        art.note("budget.anchor_d1_m", ad1);
        art.note("budget.anchor_d2_m", ad2);
    } else {
        b.excess_loss_db = c.get_double("budget.excess_loss_db", 0.0);
    }
    try {
        b.validate();
    } catch (const std::invalid_argument& e) {
        throw cfg::ConfigError("budget", e.what());
    }
    art.note("budget.tx_power_dbm", b.tx_power_dbm);
    art.note("budget.src_antenna_gain_dbi", b.src_antenna_gain_dbi);
    art.note("budget.tag_antenna_gain_dbi", b.tag_antenna_gain_dbi);
    art.note("budget.rx_antenna_gain_dbi", b.rx_antenna_gain_dbi);
    art.note("budget.switch_loss_db", b.switch_loss_db);
    art.note("budget.excess_loss_db", b.excess_loss_db);
    art.note("budget.carrier_freq_hz", b.carrier_freq_hz);
    art.note("budget.d1_m", b.d1_m);
    art.note("budget.d2_m", b.d2_m);
    return b;
}

inline channel::ChannelConfig read_channel(const cfg::Config& c, ArtifactWriter& art,
                                           std::uint64_t seed) {
    channel::ChannelConfig ch;
    ch.noise_figure_db = c.get_double("channel.noise_figure_db", 6.0);
    ch.noise_enabled = c.get_bool("channel.noise", true);
    ch.rng_seed = seed;
    if (c.has("channel.interferer_power_dbm") || c.has("channel.interferer_offset_hz")) {
        channel::Interferer intf;
        intf.power_dbm = c.get_double("channel.interferer_power_dbm");
        intf.offset_hz = c.get_double("channel.interferer_offset_hz");
        ch.interferer = intf;
        art.note("channel.interferer_power_dbm", intf.power_dbm);
        art.note("channel.interferer_offset_hz", intf.offset_hz);
    }
    try {
        ch.validate();
    } catch (const std::invalid_argument& e) {
        throw cfg::ConfigError("channel", e.what());
    }
    art.note("channel.noise_figure_db", ch.noise_figure_db);
    art.note("channel.noise", ch.noise_enabled ? "true" : "false");
    return ch;
}

inline channel::FrontendConfig read_frontend(const cfg::Config& c, ArtifactWriter& art) {
    channel::FrontendConfig fe;
    fe.bandwidth_factor = c.get_double("frontend.bandwidth_factor", 4.0);
    fe.stopband_db = c.get_double("frontend.stopband_db", 50.0);
    fe.enabled = c.get_bool("frontend.enabled", true);
    art.note("frontend.bandwidth_factor", fe.bandwidth_factor);
    art.note("frontend.stopband_db", fe.stopband_db);
    art.note("frontend.enabled", fe.enabled ? "true" : "false");
    return fe;
}

inline std::vector<std::uint8_t> parse_hex(const std::string& hex, const std::string& field) {
    if (hex.size() % 2 != 0)
        throw cfg::ConfigError(field, "hex payload must have an even number of digits");
    std::vector<std::uint8_t> bytes;
    bytes.reserve(hex.size() / 2);
    auto nib = [&](char ch) -> int {
        if (ch >= '0' && ch <= '9') return ch - '0';
        if (ch >= 'a' && ch <= 'f') return ch - 'a' + 10;
        if (ch >= 'A' && ch <= 'F') return ch - 'A' + 10;
        throw cfg::ConfigError(field, std::string("bad hex digit `") + ch + "`");
    };
    for (std::size_t i = 0; i < hex.size(); i += 2)
        bytes.push_back(static_cast<std::uint8_t>(nib(hex[i]) * 16 + nib(hex[i + 1])));
    return bytes;
}

inline std::string to_hex(std::span<const std::uint8_t> bytes) {
    static const char* digits = "0123456789ABCDEF";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (const auto b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xF]);
    }
    return out;
}

inline std::string rate_label(const css::ChirpParams& p) {
    return "sf" + std::to_string(p.sf) + "_bw" + std::to_string(static_cast<long>(p.bw_hz)) +
           "_cr4-" + std::to_string(p.cr.coded_bits);
}

inline void reject_unknown_keys(const cfg::Config& c) {
    const auto unknown = c.unknown_keys();
    if (!unknown.empty())
        throw cfg::ConfigError(unknown.front(), "unknown configuration key");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Individual experiments
// ---------------------------------------------------------------------------

inline void run_modulate(const cfg::Config& c, ArtifactWriter& art, std::uint64_t seed) {
    const css::ChirpParams p = detail::read_chirp_params(c, art, 4);
    const auto payload = detail::parse_hex(c.get_string("frame.payload_hex", "DEADBE"),
                                           "frame.payload_hex");
    frame::LoraFrame f(p, payload);
    f.preamble_len = static_cast<int>(c.get_int("frame.preamble_len", 8));
    f.crc_present = c.get_bool("frame.crc", true);
    f.sync[0] = static_cast<int>(c.get_int("frame.sync0", 8));
    f.sync[1] = static_cast<int>(c.get_int("frame.sync1", 16));
    try {
        f.validate();
    } catch (const std::invalid_argument& e) {
        throw cfg::ConfigError("frame", e.what());
    }
    art.note("frame.payload_hex", detail::to_hex(payload));
    art.note("frame.preamble_len", static_cast<long long>(f.preamble_len));
    art.note("frame.crc", f.crc_present ? "true" : "false");
    art.note("frame.sync0", static_cast<long long>(f.sync[0]));
    art.note("frame.sync1", static_cast<long long>(f.sync[1]));
    art.note("run.seed", static_cast<long long>(seed));
    detail::reject_unknown_keys(c);

    const IqSignal sig = frame::modulate_frame(f);
    art.write_iq("modulate.iq", sig);

    std::ostringstream body;
    body << "artifact,n_samples,sample_rate_hz,duration_s,symbol_count\n";
    body << "modulate.iq," << sig.samples.size() << "," << fmt(sig.sample_rate_hz) << ","
         << fmt(sig.duration_s()) << "," << fmt(frame::frame_symbol_count(f)) << "\n";
    body << "symbol_index,value\n";
    const auto symbols = frame::payload_symbols(f);
    for (std::size_t i = 0; i < symbols.size(); ++i)
        body << i << "," << symbols[i].value << "\n";
    art.write_text("modulate_manifest.csv", body.str());
}

inline void run_demodulate(const cfg::Config& c, ArtifactWriter& art, std::uint64_t seed) {
    const css::ChirpParams p = detail::read_chirp_params(c, art, 4);
    const std::string iq_path = c.get_string("input.iq_path");
    frame::ParserConfig parser;
    parser.payload_len = static_cast<std::size_t>(c.get_int("frame.payload_len", 8));
    parser.crc_present = c.get_bool("frame.crc", true);
    parser.sync[0] = static_cast<int>(c.get_int("frame.sync0", 8));
    parser.sync[1] = static_cast<int>(c.get_int("frame.sync1", 16));
    art.note("input.iq_path", iq_path);
    art.note("frame.payload_len", static_cast<long long>(parser.payload_len));
    art.note("frame.crc", parser.crc_present ? "true" : "false");
    art.note("run.seed", static_cast<long long>(seed));
    detail::reject_unknown_keys(c);

    const IqSignal sig = read_iq(iq_path);
    const auto res = frame::parse_frame(sig, p, parser);

    std::ostringstream body;
    body << "status,crc_ok,payload_hex\n";
    body << frame::to_string(res.status) << "," << (res.crc_ok ? 1 : 0) << ","
         << detail::to_hex(res.payload) << "\n";
    body << "symbol_index,peak_to_mean\n";
    for (std::size_t i = 0; i < res.symbol_confidence.size(); ++i)
        body << i << "," << fmt(res.symbol_confidence[i]) << "\n";
    art.write_text("demodulate.csv", body.str());
}

inline void run_spectrum(const cfg::Config& c, ArtifactWriter& art, std::uint64_t seed) {
    const double delta_f = c.get_double("spectrum.delta_f_hz", 3e6);
    const double fs = c.get_double("spectrum.sample_rate_hz", 64.0 * delta_f);
    const std::string source = c.get_string("spectrum.source", "tone");
    const int levels = static_cast<int>(c.get_int("spectrum.levels", 4));
    const double settle_cutoff = c.get_double("spectrum.settle_cutoff_hz", 0.0);
    art.note("spectrum.delta_f_hz", delta_f);
    art.note("spectrum.sample_rate_hz", fs);
    art.note("spectrum.source", source);
    art.note("spectrum.levels", static_cast<long long>(levels));
    art.note("spectrum.settle_cutoff_hz", settle_cutoff);
    art.note("run.seed", static_cast<long long>(seed));

    IqSignal square, multilevel;
    if (source == "tone") {
        const double duration = c.get_double("spectrum.duration_s", (1 << 17) / fs);
        art.note("spectrum.duration_s", duration);
        detail::reject_unknown_keys(c);
        square = waveform::square_exponent(delta_f, duration, fs);
        multilevel =
            waveform::multilevel_exponent(delta_f, duration, fs, levels).to_iq();
    } else if (source == "packet") {
        const css::ChirpParams p = detail::read_chirp_params(c, art, 1);
        const auto payload = detail::parse_hex(
            c.get_string("frame.payload_hex", "0102030405060708"), "frame.payload_hex");
        art.note("frame.payload_hex", detail::to_hex(payload));
        detail::reject_unknown_keys(c);
        frame::LoraFrame f(p.with_osf(1), payload);
        const auto symbols = frame::payload_symbols(f);
        const auto plan = waveform::frequency_plan(p, symbols, delta_f);
        multilevel = waveform::switch_schedule(plan, fs, levels).to_iq();
        // square baseline follows the same plan with the two-level synth
        IqSignal sq;
        sq.sample_rate_hz = fs;
        double psi = 0.0, t_edge = 0.0;
        std::size_t emitted = 0;
        for (const auto& step : plan.steps) {
            t_edge += step.duration_s;
            const auto n_end = static_cast<std::size_t>(std::llround(t_edge * fs));
            const double dpsi =
                (delta_f + step.baseband_freq_hz + plan.step_center_offset_hz) / fs;
            for (; emitted < n_end; ++emitted) {
                sq.samples.emplace_back(waveform::detail::square01(psi + 0.25),
                                        waveform::detail::square01(psi));
                psi += dpsi;
            }
        }
        square = std::move(sq);
    } else {
        throw cfg::ConfigError("spectrum.source", "expected `tone` or `packet`");
    }
    if (settle_cutoff > 0.0) multilevel = waveform::apply_settle_filter(multilevel, settle_cutoff);

    std::ostringstream sq_csv, ml_csv;
    waveform::write_spectrum_csv(waveform::spectrum(square, delta_f), sq_csv);
    waveform::write_spectrum_csv(waveform::spectrum(multilevel, delta_f), ml_csv);
    art.write_text("spectrum_square.csv", sq_csv.str());
    art.write_text("spectrum_multilevel.csv", ml_csv.str());
}

inline void run_per_sweep(const cfg::Config& c, ArtifactWriter& art, std::uint64_t seed) {
    channel::PerExperimentConfig pc;
    pc.payload_len = static_cast<std::size_t>(c.get_int("frame.payload_len", 8));
    pc.crc_present = c.get_bool("frame.crc", true);
    pc.preamble_len = static_cast<int>(c.get_int("frame.preamble_len", 8));
    pc.channel = detail::read_channel(c, art, seed);
    pc.frontend = detail::read_frontend(c, art);
    pc.seed = seed;
    const int n_packets = static_cast<int>(c.get_int("per.n_packets", 1000));
    const int n_packets_slow = static_cast<int>(c.get_int("per.n_packets_slow", 300));
    art.note("frame.payload_len", static_cast<long long>(pc.payload_len));
    art.note("frame.crc", pc.crc_present ? "true" : "false");
    art.note("frame.preamble_len", static_cast<long long>(pc.preamble_len));
    art.note("per.n_packets", static_cast<long long>(n_packets));
    art.note("per.n_packets_slow", static_cast<long long>(n_packets_slow));
    art.note("run.seed", static_cast<long long>(seed));

    std::vector<css::ChirpParams> rates;
    const std::string rates_kind = c.get_string("per.rates", "paper7");
    art.note("per.rates", rates_kind);
    if (rates_kind == "paper7") {
        rates = channel::receiver_characterization_rates();
    } else if (rates_kind == "single") {
        rates.push_back(detail::read_chirp_params(c, art, 1).with_osf(1));
    } else {
        throw cfg::ConfigError("per.rates", "expected `paper7` or `single`");
    }

    const bool has_explicit = c.has("per.rssi_start_dbm");
    double start = 0.0, stop = 0.0, step = 1.0, window = 8.0;
    if (has_explicit) {
        start = c.get_double("per.rssi_start_dbm");
        stop = c.get_double("per.rssi_stop_dbm");
        step = c.get_double("per.rssi_step_db", 1.0);
        art.note("per.rssi_start_dbm", start);
        art.note("per.rssi_stop_dbm", stop);
        art.note("per.rssi_step_db", step);
        if (step <= 0.0 || stop < start)
            throw cfg::ConfigError("per.rssi_step_db", "sweep must run upward");
    } else {
        window = c.get_double("per.window_db", 8.0);
        step = c.get_double("per.rssi_step_db", 1.0);
        art.note("per.window_db", window);
        art.note("per.rssi_step_db", step);
    }
    detail::reject_unknown_keys(c);

    for (const auto& rate : rates) {
        std::vector<double> rssi;
        if (has_explicit) {
            for (double v = start; v <= stop + 1e-9; v += step) rssi.push_back(v);
        } else {
            const double centre =
                channel::estimated_sensitivity_dbm(rate, pc.channel.noise_figure_db,
                                                   pc.payload_len, pc.crc_present);
            for (double v = centre - window; v <= centre + window + 1e-9; v += step)
                rssi.push_back(v);
        }
        const int n = rate.sf >= 10 ? n_packets_slow : n_packets;
        const auto curve = channel::run_per_experiment(rate, rssi, pc, n);
        std::ostringstream body;
        body << "# rate = " << detail::rate_label(rate) << "\n";
        body << "# bit_rate_bps = " << fmt(css::bit_rate_bps(rate)) << "\n";
        body << "x,value,n\n";
        for (const auto& pt : curve.points)
            body << fmt(pt.rssi_dbm) << "," << fmt(pt.per) << "," << pt.n_packets << "\n";
        art.write_text("per_" + detail::rate_label(rate) + ".csv", body.str());
    }
}

inline void run_scenario1(const cfg::Config& c, ArtifactWriter& art, std::uint64_t seed) {
    channel::LinkBudget budget = detail::read_budget(c, art);
    const double d_total = c.get_double("scenario.d_total_m", 475.0);
    const int n_points = static_cast<int>(c.get_int("scenario.n_points", 25));
    const double nf = c.get_double("channel.noise_figure_db", 6.0);
    art.note("scenario.d_total_m", d_total);
    art.note("scenario.n_points", static_cast<long long>(n_points));
    art.note("channel.noise_figure_db", nf);
    art.note("run.seed", static_cast<long long>(seed));
    detail::reject_unknown_keys(c);

    const auto curve = channel::scenario1(budget, d_total, n_points, nf);
    std::ostringstream body;
    body << "x,value,n,best_rate_bps,best_rate\n";
    for (const auto& pt : curve)
        body << fmt(pt.x_m) << "," << fmt(pt.rssi_dbm) << ",1," << fmt(pt.best_rate_bps) << ","
             << pt.best_rate_label << "\n";
    art.write_text("scenario1.csv", body.str());
}

inline void run_scenario2(const cfg::Config& c, ArtifactWriter& art, std::uint64_t seed) {
    channel::LinkBudget budget = detail::read_budget(c, art);
    const double d1 = c.get_double("scenario.d1_m", 5.0);
    const double d2_start = c.get_double("scenario.d2_start_m", 200.0);
    const double d2_stop = c.get_double("scenario.d2_stop_m", 3000.0);
    const double d2_step = c.get_double("scenario.d2_step_m", 200.0);
    const double nf = c.get_double("channel.noise_figure_db", 6.0);
    if (d2_step <= 0.0 || d2_stop < d2_start)
        throw cfg::ConfigError("scenario.d2_step_m", "sweep must run upward");
    art.note("scenario.d1_m", d1);
    art.note("scenario.d2_start_m", d2_start);
    art.note("scenario.d2_stop_m", d2_stop);
    art.note("scenario.d2_step_m", d2_step);
    art.note("channel.noise_figure_db", nf);
    art.note("run.seed", static_cast<long long>(seed));
    detail::reject_unknown_keys(c);

    std::vector<double> d2;
    for (double v = d2_start; v <= d2_stop + 1e-9; v += d2_step) d2.push_back(v);
    const auto curve = channel::scenario2(budget, d1, d2, nf);
    std::ostringstream body;
    body << "x,value,n,best_rate_bps,best_rate\n";
    for (const auto& pt : curve)
        body << fmt(pt.x_m) << "," << fmt(pt.rssi_dbm) << ",1," << fmt(pt.best_rate_bps) << ","
             << pt.best_rate_label << "\n";
    art.write_text("scenario2.csv", body.str());
}

inline void run_mac_sim(const cfg::Config& c, ArtifactWriter& art, std::uint64_t seed) {
    mac::TdmaSchedule schedule;
    schedule.slot_duration_s = c.get_double("mac.slot_duration_s", 8.0);
    schedule.sync_bit_duration_s = c.get_double("mac.sync_bit_duration_s", 0.001);
    const int n_rounds = static_cast<int>(c.get_int("mac.n_rounds", 1000));
    const double traffic = c.get_double("mac.traffic_prob", 1.0);
    const int n_devices = static_cast<int>(c.get_int("devices.count", 3));
    art.note("mac.slot_duration_s", schedule.slot_duration_s);
    art.note("mac.sync_bit_duration_s", schedule.sync_bit_duration_s);
    art.note("mac.n_rounds", static_cast<long long>(n_rounds));
    art.note("mac.traffic_prob", traffic);
    art.note("devices.count", static_cast<long long>(n_devices));
    art.note("run.seed", static_cast<long long>(seed));

    const channel::LinkBudget base_budget = detail::read_budget(c, art);
    std::vector<mac::DeviceState> devices;
    std::map<int, channel::LinkBudget> budgets;
    for (int k = 0; k < n_devices; ++k) {
        const std::string pref = "device" + std::to_string(k) + ".";
        mac::DeviceState dev;
        dev.id = k;
        dev.channel_index = static_cast<int>(c.get_int(pref + "channel", k));
        const int sf = static_cast<int>(c.get_int(pref + "sf", 12));
        const double bw = c.get_double(pref + "bw_hz", 31250.0);
        const css::CodeRate cr =
            detail::parse_code_rate(c.get_string(pref + "cr", "4/8"), pref + "cr");
        try {
            dev.params = css::ChirpParams(sf, bw, cr, 1);
        } catch (const std::invalid_argument& e) {
            throw cfg::ConfigError(pref + "sf", e.what());
        }
        dev.detector_threshold_dbm = c.get_double(pref + "detector_threshold_dbm", -71.0);
        dev.has_data = c.get_bool(pref + "has_data", true);
        dev.payload_len = static_cast<std::size_t>(c.get_int(pref + "payload_len", 8));
        schedule.device_slots[dev.id] = static_cast<int>(c.get_int(pref + "slot", k));
        channel::LinkBudget b = base_budget;
        b.d1_m = c.get_double(pref + "d1_m", base_budget.d1_m);
        b.d2_m = c.get_double(pref + "d2_m", base_budget.d2_m);
        budgets[dev.id] = b;
        art.note(pref + "channel", static_cast<long long>(dev.channel_index));
        art.note(pref + "sf", static_cast<long long>(sf));
        art.note(pref + "bw_hz", bw);
        art.note(pref + "cr", cr.label());
        art.note(pref + "slot", static_cast<long long>(schedule.device_slots[dev.id]));
        art.note(pref + "d1_m", b.d1_m);
        devices.push_back(dev);
    }
    detail::reject_unknown_keys(c);

    try {
        schedule.validate();
    } catch (const std::invalid_argument& e) {
        throw cfg::ConfigError("deviceN.slot", e.what());
    }
    const auto transcript = mac::simulate_rounds(schedule, devices, budgets, n_rounds, traffic, seed);
    std::ostringstream body;
    mac::write_transcript_csv(transcript, body);
    art.write_text("transcript.csv", body.str());
}

inline void run_concurrent(const cfg::Config& c, ArtifactWriter& art, std::uint64_t seed) {
    const int n_devices = static_cast<int>(c.get_int("devices.count", 2));
    const int n_packets = static_cast<int>(c.get_int("conc.n_packets", 200));
    const double snr_db = c.get_double("conc.snr_db", 20.0);
    const double nf = c.get_double("channel.noise_figure_db", 6.0);
    const channel::FrontendConfig fe = detail::read_frontend(c, art);
    art.note("devices.count", static_cast<long long>(n_devices));
    art.note("conc.n_packets", static_cast<long long>(n_packets));
    art.note("conc.snr_db", snr_db);
    art.note("channel.noise_figure_db", nf);
    art.note("run.seed", static_cast<long long>(seed));

    std::vector<mac::ConcurrentDevice> devices;
    for (int k = 0; k < n_devices; ++k) {
        const std::string pref = "device" + std::to_string(k) + ".";
        mac::ConcurrentDevice dev;
        const int sf = static_cast<int>(c.get_int(pref + "sf", 7));
        const double bw = c.get_double(pref + "bw_hz", 125000.0);
        const css::CodeRate cr =
            detail::parse_code_rate(c.get_string(pref + "cr", "4/8"), pref + "cr");
        try {
            dev.params = css::ChirpParams(sf, bw, cr, 1);
        } catch (const std::invalid_argument& e) {
            throw cfg::ConfigError(pref + "sf", e.what());
        }
        dev.band_offset_hz = c.get_double(pref + "offset_hz", 0.75e6 + 0.25e6 * k);
        dev.payload_len = static_cast<std::size_t>(c.get_int(pref + "payload_len", 8));
        dev.rssi_dbm = channel::kThermalNoiseDbmHz + nf + db10(bw) + snr_db;
        art.note(pref + "sf", static_cast<long long>(sf));
        art.note(pref + "bw_hz", bw);
        art.note(pref + "cr", cr.label());
        art.note(pref + "offset_hz", dev.band_offset_hz);
        art.note(pref + "rssi_dbm", dev.rssi_dbm);
        devices.push_back(dev);
    }
    detail::reject_unknown_keys(c);

    const auto results = mac::simulate_concurrent(devices, nf, n_packets, seed, fe);
    std::ostringstream body;
    body << "device,per_solo,per_concurrent,n\n";
    for (std::size_t d = 0; d < results.size(); ++d)
        body << d << "," << fmt(results[d].per_solo) << "," << fmt(results[d].per_concurrent)
             << "," << n_packets << "\n";
    art.write_text("concurrent.csv", body.str());
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

/// Seed priority: explicit override (CLI), CHIRPSCATTER_SEED, config, 1.
inline std::uint64_t resolve_seed(const cfg::Config& c,
                                  std::optional<std::uint64_t> override_seed) {
    if (override_seed) {
        (void)c.get_int("run.seed", 1);  // mark as consumed either way
        return *override_seed;
    }
    if (const char* env = std::getenv("CHIRPSCATTER_SEED")) {
        (void)c.get_int("run.seed", 1);
        try {
            return static_cast<std::uint64_t>(std::stoull(env));
        } catch (const std::exception&) {
            throw cfg::ConfigError("CHIRPSCATTER_SEED", "expected an integer");
        }
    }
    return static_cast<std::uint64_t>(c.get_int("run.seed", 1));
}

inline void run_experiment(const std::string& kind, const cfg::Config& c,
                           std::optional<std::string> out_dir_override = std::nullopt,
                           std::optional<std::uint64_t> seed_override = std::nullopt) {
    const std::uint64_t seed = resolve_seed(c, seed_override);
    const std::string out_dir =
        out_dir_override ? *out_dir_override : c.get_string("run.out_dir", "out");
    ArtifactWriter art(kind, out_dir);
    if (kind == "modulate")
        run_modulate(c, art, seed);
    else if (kind == "demodulate")
        run_demodulate(c, art, seed);
    else if (kind == "spectrum")
        run_spectrum(c, art, seed);
    else if (kind == "per-sweep")
        run_per_sweep(c, art, seed);
    else if (kind == "range-scenario1")
        run_scenario1(c, art, seed);
    else if (kind == "range-scenario2")
        run_scenario2(c, art, seed);
    else if (kind == "mac-sim")
        run_mac_sim(c, art, seed);
    else if (kind == "concurrent")
        run_concurrent(c, art, seed);
    else
        throw cfg::ConfigError("experiment", "unknown experiment kind `" + kind + "`");
}

// ---------------------------------------------------------------------------
// Loopback
// ---------------------------------------------------------------------------

struct LoopbackResult {
    bool decoded = false;
    bool crc_ok = false;
    std::string payload_hex;
    std::string status;
};

/** @brief modulate -> channel -> frontend -> parse in one call. With
 * noiseless=true the pipeline must be the identity on the payload. */
inline LoopbackResult loopback(const std::string& payload_hex, const css::ChirpParams& p,
                               bool noiseless, double rssi_dbm = -60.0, std::uint64_t seed = 1) {
    const auto payload = detail::parse_hex(payload_hex, "payload");
    frame::LoraFrame f(p, payload);
    IqSignal sig = frame::modulate_frame(f);

    channel::ChannelConfig ch;
    ch.rng_seed = seed;
    ch.noise_enabled = !noiseless;
    sig = channel::apply_channel_rssi(sig, ch, rssi_dbm);
    sig = channel::receiver_frontend(sig, p);

    frame::ParserConfig parser;
    parser.payload_len = payload.size();
    const auto res = frame::parse_frame(sig, p, parser);

    LoopbackResult out;
    out.decoded = res.status == frame::ParseStatus::Ok;
    out.crc_ok = res.crc_ok;
    out.payload_hex = detail::to_hex(res.payload);
    out.status = frame::to_string(res.status);
    return out;
}

}  // namespace chirpscatter::expt

#endif
