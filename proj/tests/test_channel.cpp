#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "chirpscatter/channel.hpp"
#include "chirpscatter/fft.hpp"

using namespace chirpscatter;

namespace {

/// Average power (mW) in [f0-half, f0+half], via segmented periodograms.
double band_power_mw(const IqSignal& sig, double f0, double half) {
    const std::size_t nfft = 8192;
    std::vector<std::complex<double>> seg(nfft);
    double acc = 0.0;
    int n_seg = 0;
    for (std::size_t start = 0; start + nfft <= sig.samples.size(); start += nfft) {
        std::copy(sig.samples.begin() + static_cast<std::ptrdiff_t>(start),
                  sig.samples.begin() + static_cast<std::ptrdiff_t>(start + nfft), seg.begin());
        fft::transform(seg.data(), nfft);
        double band = 0.0;
        for (std::size_t k = 0; k < nfft; ++k) {
            const long sk = k < nfft / 2 ? static_cast<long>(k)
                                         : static_cast<long>(k) - static_cast<long>(nfft);
            const double f = static_cast<double>(sk) * sig.sample_rate_hz / nfft;
            if (f >= f0 - half && f <= f0 + half) band += std::norm(seg[k]);
        }
        acc += band / (static_cast<double>(nfft) * nfft);
        ++n_seg;
    }
    return acc / n_seg;
}

}  // namespace

TEST_CASE("free-space path loss closed form") {
    CHECK(channel::free_space_path_loss_db(1.0, 915e6) == Catch::Approx(31.68).margin(0.05));
    const double d = 37.0;
    CHECK(channel::free_space_path_loss_db(2 * d, 915e6) -
              channel::free_space_path_loss_db(d, 915e6) ==
          Catch::Approx(6.0206).margin(1e-6));
    CHECK_THROWS_AS(channel::free_space_path_loss_db(0.0, 915e6), std::invalid_argument);
}

TEST_CASE("backscatter RSSI: symmetry, calibration anchor, two-hop slopes") {
    channel::LinkBudget b = channel::calibrated_reference_budget();

    // anchor reproduced exactly by construction
    b.d1_m = 200.0;
    b.d2_m = 200.0;
    CHECK(channel::backscatter_rssi_dbm(b) == Catch::Approx(-134.0).margin(1e-9));

    // d1 <-> d2 swap symmetry
    b.d1_m = 13.0;
    b.d2_m = 310.0;
    const double a = channel::backscatter_rssi_dbm(b);
    std::swap(b.d1_m, b.d2_m);
    CHECK(channel::backscatter_rssi_dbm(b) == Catch::Approx(a).margin(1e-12));

    // grid-search oracle: fixed d1+d2 is minimized at the midpoint
    const double total = 400.0;
    double best_rssi = 1e9, best_d1 = 0.0;
    for (double d1 = 20.0; d1 <= total - 20.0; d1 += 1.0) {
        b.d1_m = d1;
        b.d2_m = total - d1;
        const double r = channel::backscatter_rssi_dbm(b);
        if (r < best_rssi) {
            best_rssi = r;
            best_d1 = d1;
        }
    }
    CHECK(best_d1 == Catch::Approx(total / 2).margin(1.0));

    // regression over a decade grid: -20 dB/decade per leg within 0.1 dB
    for (const bool vary_d1 : {true, false}) {
        std::vector<double> lx, ly;
        for (double d = 10.0; d <= 1000.0; d *= 1.5) {
            b.d1_m = vary_d1 ? d : 55.0;
            b.d2_m = vary_d1 ? 55.0 : d;
            lx.push_back(std::log10(d));
            ly.push_back(channel::backscatter_rssi_dbm(b));
        }
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const double n = static_cast<double>(lx.size());
        for (std::size_t i = 0; i < lx.size(); ++i) {
            sx += lx[i];
            sy += ly[i];
            sxx += lx[i] * lx[i];
            sxy += lx[i] * ly[i];
        }
        const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        CHECK(slope == Catch::Approx(-20.0).margin(0.1));
    }
}

TEST_CASE("apply_channel: pure scaling when noise and interferer are off") {
    IqSignal sig;
    sig.sample_rate_hz = 125000.0;
    sig.samples.assign(1024, {1.0, 0.0});
    channel::ChannelConfig cfg;
    cfg.noise_enabled = false;
    const auto out = channel::apply_channel_rssi(sig, cfg, -80.0);
    CHECK(db10(mean_power(out)) == Catch::Approx(-80.0).margin(1e-9));
    for (const auto& s : out.samples) CHECK(s.imag() == 0.0);
}

TEST_CASE("apply_channel: thermal noise density lands on -174 dBm/Hz + NF") {
    IqSignal silence;
    silence.sample_rate_hz = 500000.0;
    silence.samples.assign(1 << 16, {0.0, 0.0});
    channel::ChannelConfig cfg;
    cfg.noise_figure_db = 6.0;
    cfg.rng_seed = 31;
    auto noisy = channel::apply_channel_rssi(silence, cfg, -60.0);

    const double measured = db10(band_power_mw(noisy, 0.0, 31250.0 / 2));
    const double expected = -174.0 + 6.0 + db10(31250.0);
    CHECK(measured == Catch::Approx(expected).margin(0.5));
}

TEST_CASE("apply_channel: interferer tone appears at its configured power") {
    IqSignal silence;
    silence.sample_rate_hz = 2.5e6;
    silence.samples.assign(1 << 16, {0.0, 0.0});
    channel::ChannelConfig cfg;
    cfg.noise_enabled = false;
    cfg.interferer = channel::Interferer{-1e6, -30.0};
    cfg.rng_seed = 5;
    const auto out = channel::apply_channel_rssi(silence, cfg, -60.0);
    const double tone = db10(band_power_mw(out, -1e6, 20e3));
    CHECK(tone == Catch::Approx(-30.0).margin(0.5));
}

TEST_CASE("channel is deterministic in its seed") {
    IqSignal sig;
    sig.sample_rate_hz = 125000.0;
    sig.samples.assign(4096, {0.5, -0.25});
    channel::ChannelConfig cfg;
    cfg.rng_seed = 77;
    cfg.interferer = channel::Interferer{-30e3, -90.0};
    const auto a = channel::apply_channel_rssi(sig, cfg, -100.0);
    const auto b = channel::apply_channel_rssi(sig, cfg, -100.0);
    REQUIRE(a.samples == b.samples);
}

TEST_CASE("receiver frontend: in-band flat, out-of-band tone crushed") {
    const css::ChirpParams p{12, 31250.0, {4, 8}, 80};  // fs = 2.5 MHz
    const double fs = p.sample_rate_hz();

    auto make_tone = [&](double f) {
        IqSignal t;
        t.sample_rate_hz = fs;
        t.samples.resize(1 << 15);
        for (std::size_t n = 0; n < t.samples.size(); ++n) {
            const double ph = 2.0 * waveform::kPi * f * static_cast<double>(n) / fs;
            t.samples[n] = {std::cos(ph), std::sin(ph)};
        }
        return t;
    };

    for (const double f : {0.0, 10e3, -14e3}) {
        const auto out = channel::receiver_frontend(make_tone(f), p);
        // steady-state gain, away from the FIR edge transient
        double pwr = 0.0;
        for (std::size_t n = 4096; n < 20000; ++n) pwr += std::norm(out.samples[n]);
        pwr /= (20000 - 4096);
        CHECK(db10(pwr) == Catch::Approx(0.0).margin(0.5));
    }

    const auto blocked = channel::receiver_frontend(make_tone(-1e6), p);
    double pwr = 0.0;
    for (std::size_t n = 4096; n < 20000; ++n) pwr += std::norm(blocked.samples[n]);
    pwr /= (20000 - 4096);
    CHECK(db10(pwr) <= -50.0);

    // disabled: bit-identical passthrough
    channel::FrontendConfig off;
    off.enabled = false;
    const auto same = channel::receiver_frontend(make_tone(0.0), p, off);
    CHECK(same.samples == make_tone(0.0).samples);
}

TEST_CASE("frontend group delay stays on the chip grid") {
    const css::ChirpParams p{7, 125000.0, {4, 8}, 4};
    const double fs = p.sample_rate_hz();
    const auto taps = channel::detail::kaiser_lowpass(2 * p.bw_hz, 125000.0, fs, 50.0, p.osf);
    CHECK(taps.size() % 2 == 1);
    CHECK(((taps.size() - 1) / 2) % static_cast<std::size_t>(p.osf) == 0);
}

TEST_CASE("frontend response probe matches the design") {
    const css::ChirpParams p{12, 31250.0, {4, 8}, 80};  // fs = 2.5 MHz
    const channel::FrontendConfig fe;
    const double fs = p.sample_rate_hz();
    CHECK(channel::frontend_attenuation_db(p, fe, fs, 0.0) == Catch::Approx(0.0).margin(0.1));
    CHECK(channel::frontend_attenuation_db(p, fe, fs, 10e3) == Catch::Approx(0.0).margin(0.5));
    CHECK(channel::frontend_attenuation_db(p, fe, fs, -1e6) >= 50.0);
    CHECK(channel::frontend_attenuation_db(p, fe, fs, 1e6) >= 50.0);

    // bypassed when the passband covers the simulated band
    const css::ChirpParams narrow{7, 125000.0, {4, 8}, 4};
    CHECK(channel::frontend_attenuation_db(narrow, fe, narrow.sample_rate_hz(), 200e3) == 0.0);
}

TEST_CASE("PER extremes: clean at high RSSI, lost far below threshold") {
    const css::ChirpParams p{7, 500000.0, {4, 5}, 1};
    channel::PerExperimentConfig cfg;
    cfg.seed = 3;
    const auto curve = channel::run_per_experiment(p, {-150.0, -60.0}, cfg, 60);
    CHECK(curve.points[0].per == 1.0);   // 30 dB below any plausible threshold
    CHECK(curve.points[1].per < 0.01);   // effectively noiseless
}

TEST_CASE("PER experiment is deterministic and thread-schedule independent") {
    const css::ChirpParams p{7, 500000.0, {4, 8}, 1};
    channel::PerExperimentConfig cfg;
    cfg.seed = 11;
    const std::vector<double> rssi = {-118.0, -116.0, -114.0, -112.0};

    cfg.n_threads = 1;
    const auto serial = channel::run_per_experiment(p, rssi, cfg, 40);
    cfg.n_threads = 4;
    const auto parallel = channel::run_per_experiment(p, rssi, cfg, 40);
    REQUIRE(serial.points.size() == parallel.points.size());
    for (std::size_t i = 0; i < serial.points.size(); ++i) {
        CHECK(serial.points[i].per == parallel.points[i].per);
        CHECK(serial.points[i].rssi_dbm == parallel.points[i].rssi_dbm);
    }
}

TEST_CASE("PER curve is monotone non-increasing beyond binomial noise") {
    const css::ChirpParams p{7, 500000.0, {4, 5}, 1};
    channel::PerExperimentConfig cfg;
    cfg.seed = 9;
    std::vector<double> rssi;
    for (double v = -122.0; v <= -110.0; v += 2.0) rssi.push_back(v);
    const int n = 150;
    const auto curve = channel::run_per_experiment(p, rssi, cfg, n);
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const double a = curve.points[i - 1].per;
        const double b = curve.points[i].per;
        const double sigma = std::sqrt(std::max(a * (1 - a), b * (1 - b)) / n) + 1e-9;
        CHECK(b <= a + 2.0 * sigma);
    }
}

TEST_CASE("decode threshold interpolation") {
    channel::PerCurve curve;
    curve.points = {{-120.0, 1.0, 100}, {-119.0, 0.5, 100}, {-118.0, 0.05, 100},
                    {-117.0, 0.0, 100}};
    // crossing between (-119, 0.5) and (-118, 0.05): t = 0.4/0.45
    CHECK(channel::decode_threshold_dbm(curve, 0.1) ==
          Catch::Approx(-119.0 + 0.4 / 0.45).margin(1e-9));
    channel::PerCurve flat;
    flat.points = {{-120.0, 1.0, 100}, {-119.0, 1.0, 100}};
    CHECK(std::isnan(channel::decode_threshold_dbm(flat, 0.1)));
}

TEST_CASE("sensitivity model orders the seven characterization rates") {
    const auto rates = channel::receiver_characterization_rates();
    REQUIRE(rates.size() == 7);
    for (std::size_t i = 1; i < rates.size(); ++i) {
        CHECK(css::bit_rate_bps(rates[i]) < css::bit_rate_bps(rates[i - 1]));
        CHECK(channel::estimated_sensitivity_dbm(rates[i], 6.0) <
              channel::estimated_sensitivity_dbm(rates[i - 1], 6.0));
    }
    CHECK(css::bit_rate_bps(rates.front()) == Catch::Approx(21875.0));
    CHECK(css::bit_rate_bps(rates.back()) == Catch::Approx(45.78).margin(0.01));
}

TEST_CASE("scenario 1: symmetric U-shape with midpoint minimum, annotated") {
    const auto budget = channel::calibrated_reference_budget();
    const auto curve = channel::scenario1(budget, 475.0, 21);
    REQUIRE(curve.size() == 21);

    // symmetry: rssi(d1) == rssi(d_total - d1) on the symmetric grid
    for (std::size_t i = 0; i < curve.size(); ++i) {
        const auto& mirror = curve[curve.size() - 1 - i];
        CHECK(curve[i].rssi_dbm == Catch::Approx(mirror.rssi_dbm).margin(1e-9));
    }
    // midpoint minimum
    const auto min_it =
        std::min_element(curve.begin(), curve.end(),
                         [](const auto& a, const auto& b) { return a.rssi_dbm < b.rssi_dbm; });
    CHECK(min_it->x_m == Catch::Approx(475.0 / 2).margin(475.0 / 20));

    // every point carries a usable rate annotation; the slowest mode always fits
    for (const auto& pt : curve) {
        CHECK(pt.best_rate_bps > 0.0);
        CHECK(pt.best_rate_label != "none");
    }
}

TEST_CASE("scenario 2: monotone decay with receiver distance") {
    const auto budget = channel::calibrated_reference_budget();
    std::vector<double> d2;
    for (double d = 100.0; d <= 3000.0; d += 200.0) d2.push_back(d);
    const auto curve = channel::scenario2(budget, 5.0, d2);
    REQUIRE(curve.size() == d2.size());
    for (std::size_t i = 1; i < curve.size(); ++i)
        CHECK(curve[i].rssi_dbm < curve[i - 1].rssi_dbm);

    // with the tag at the source, the budget predicts kilometer-scale range:
    // some rate still clears the link at the far end of the sweep
    CHECK(curve.back().x_m >= 2800.0);
    CHECK(curve.back().best_rate_label != "none");
}
