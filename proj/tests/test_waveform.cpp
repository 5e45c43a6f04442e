#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "chirpscatter/css.hpp"
#include "chirpscatter/waveform.hpp"

using namespace chirpscatter;

namespace {

// Brute-force Fourier coefficient oracle: project one exact period of the
// waveform onto e^{j2*pi*m*delta_f*t}. Independent of the Welch estimator.
std::complex<double> fourier_coefficient(const IqSignal& sig, double delta_f, int m) {
    const double fs = sig.sample_rate_hz;
    std::complex<double> acc{};
    const double w = -2.0 * waveform::kPi * m * delta_f / fs;
    for (std::size_t n = 0; n < sig.samples.size(); ++n)
        acc += sig.samples[n] * std::complex<double>(std::cos(w * n), std::sin(w * n));
    return acc / static_cast<double>(sig.samples.size());
}

double coeff_db(const IqSignal& sig, double delta_f, int m) {
    const double fund = std::abs(fourier_coefficient(sig, delta_f, 1));
    return db20(std::abs(fourier_coefficient(sig, delta_f, m)) / fund);
}

// Whole number of periods so the projection is exact.
IqSignal tone_periods(double delta_f, double fs, int periods, int levels) {
    return waveform::multilevel_exponent(delta_f, periods / delta_f, fs, levels).to_iq();
}

}  // namespace

TEST_CASE("frequency plan enumerates the cyclically shifted chips") {
    // spreading factor 2 is below the LoRa set; emulate its plan with sf=6
    // by checking the general rule instead, then pin the sf-style example
    // via direct construction on the smallest supported sf.
    const css::ChirpParams p{6, 125000.0};
    const std::vector<css::ChirpSymbol> syms = {{1}};
    const auto plan = waveform::frequency_plan(p, syms, 3e6);
    REQUIRE(plan.steps.size() == 64);
    CHECK(plan.delta_f_hz == 3e6);

    const double bin = p.bw_hz / 64.0;
    // value=1: rotation starts one bin up (f1, f2, ..., f63, f0)
    CHECK(plan.steps[0].baseband_freq_hz == Catch::Approx(-p.bw_hz / 2 + bin));
    CHECK(plan.steps[62].baseband_freq_hz == Catch::Approx(p.bw_hz / 2 - bin));
    CHECK(plan.steps[63].baseband_freq_hz == Catch::Approx(-p.bw_hz / 2));

    // value=0 is monotonic
    const auto plan0 = waveform::frequency_plan(p, std::vector<css::ChirpSymbol>{{0}}, 3e6);
    for (std::size_t k = 1; k < plan0.steps.size(); ++k)
        CHECK(plan0.steps[k].baseband_freq_hz > plan0.steps[k - 1].baseband_freq_hz);

    // any value: the multiset of frequencies equals {-bw/2 + k*bw/N}
    const auto plan7 = waveform::frequency_plan(p, std::vector<css::ChirpSymbol>{{7}}, 3e6);
    std::multiset<long> freqs, expect;
    for (int k = 0; k < 64; ++k) {
        freqs.insert(std::lround(plan7.steps[static_cast<std::size_t>(k)].baseband_freq_hz));
        expect.insert(std::lround(-p.bw_hz / 2 + k * bin));
    }
    CHECK(freqs == expect);

    // per-chip durations are 1/bw
    for (const auto& s : plan7.steps) CHECK(s.duration_s == Catch::Approx(1.0 / p.bw_hz));
}

TEST_CASE("square exponent is two-level per rail and single-sideband") {
    const double delta_f = 1e6, fs = 64e6;
    const auto sig = waveform::square_exponent(delta_f, 512 / delta_f, fs);

    for (const auto& s : sig.samples) {
        CHECK(std::abs(std::abs(s.real()) - 1.0) < 1e-12);
        CHECK(std::abs(std::abs(s.imag()) - 1.0) < 1e-12);
    }

    // mirror absent, odd harmonics at the Fourier-series levels
    CHECK(coeff_db(sig, delta_f, -1) < -60.0);
    CHECK(coeff_db(sig, delta_f, -3) == Catch::Approx(-9.54).margin(0.1));
    CHECK(coeff_db(sig, delta_f, +5) == Catch::Approx(-13.98).margin(0.1));
    CHECK(coeff_db(sig, delta_f, +3) < -60.0);  // 3rd lives on the mirror side only
    CHECK(coeff_db(sig, delta_f, -5) < -60.0);
}

TEST_CASE("square exponent requires 16x sampling") {
    CHECK_THROWS_AS(waveform::square_exponent(1e6, 1e-3, 8e6), std::invalid_argument);
}

TEST_CASE("four-level staircase uses the 8-state alphabet exactly") {
    const auto wave = waveform::multilevel_exponent(1e6, 64e-6, 64e6, 4);
    REQUIRE(wave.alphabet.size() == 8);

    const std::set<long> expected_re = {9239, 3827, -3827, -9239};
    for (const auto& v : wave.alphabet) {
        CHECK(std::abs(std::abs(v) - 1.0) < 1e-12);
        const long re4 = std::lround(v.real() * 10000.0);
        CHECK(expected_re.count(re4) == 1);
    }
    // canonical first state e^{j*pi/8}
    CHECK(wave.alphabet[0].real() == Catch::Approx(0.9239).margin(1e-4));
    CHECK(wave.alphabet[0].imag() == Catch::Approx(0.3827).margin(1e-4));

    // all 8 states appear over one full period
    std::set<int> seen;
    const std::size_t period = 64;  // fs / delta_f
    for (std::size_t i = 0; i < period; ++i) seen.insert(wave.state_index[i]);
    CHECK(seen.size() == 8);

    // staircase level ratio 0.9239/0.3827 = 1 + sqrt(2)
    CHECK(0.9239 / 0.3827 == Catch::Approx(1.0 + std::sqrt(2.0)).margin(2e-4));
}

TEST_CASE("staircase transitions sit on eighth-of-period boundaries") {
    const double delta_f = 1e6, fs = 64e6;
    const auto wave = waveform::multilevel_exponent(delta_f, 32 / delta_f, fs, 4);
    const double eighth = fs / (8.0 * delta_f);  // samples per eighth period
    for (std::size_t i = 1; i < wave.state_index.size(); ++i) {
        if (wave.state_index[i] != wave.state_index[i - 1]) {
            const double phase = std::fmod(static_cast<double>(i), eighth);
            CHECK((phase < 1.0 || eighth - phase < 1.0));  // on-grid up to one sample
        }
    }
}

TEST_CASE("four-level waveform cancels harmonics 3 and 5, keeps 1/h residuals") {
    // dense grid: sampling aliases land only on m == 1 mod 8 images, so the
    // cancelled orders stay exactly null and the residual bias shrinks
    const double delta_f = 1e6, fs = 256e6;
    const auto sig = tone_periods(delta_f, fs, 256, 4);

    // cancelled set: orders == +-3 mod 8, both sides
    for (const int m : {3, -3, 5, -5, 11, -11, 13, -13}) {
        INFO("order " << m);
        CHECK(coeff_db(sig, delta_f, m) < -60.0);
    }
    // surviving set: m == 1 mod 8 at 1/|m| amplitude
    CHECK(coeff_db(sig, delta_f, -7) == Catch::Approx(db20(1.0 / 7)).margin(0.3));
    CHECK(coeff_db(sig, delta_f, +9) == Catch::Approx(db20(1.0 / 9)).margin(0.3));
    CHECK(coeff_db(sig, delta_f, +7) < -60.0);   // 7th only on the mirror side
    CHECK(coeff_db(sig, delta_f, -9) < -60.0);   // 9th only on the signal side
    CHECK(coeff_db(sig, delta_f, -1) < -60.0);   // single sideband
}

TEST_CASE("five and six level staircases cancel the 7th and 9th") {
    const double delta_f = 1e6, fs = 240e6;  // generous grid for the 1/20 sectors
    const auto five = tone_periods(delta_f, fs, 256, 5);
    for (const int m : {3, -3, 5, -5, 7, -7}) {
        INFO("levels=5 order " << m);
        CHECK(coeff_db(five, delta_f, m) < -55.0);
    }
    CHECK(std::max(coeff_db(five, delta_f, 9), coeff_db(five, delta_f, -9)) >
          db20(1.0 / 9) - 1.0);  // 9th survives for 5 levels

    const auto six = tone_periods(delta_f, fs, 256, 6);
    for (const int m : {3, -3, 5, -5, 7, -7, 9, -9}) {
        INFO("levels=6 order " << m);
        CHECK(coeff_db(six, delta_f, m) < -55.0);
    }
    CHECK(std::max(coeff_db(six, delta_f, 11), coeff_db(six, delta_f, -11)) >
          db20(1.0 / 11) - 1.0);
    CHECK(coeff_db(five, delta_f, -1) < -55.0);
    CHECK(coeff_db(six, delta_f, -1) < -55.0);
}

TEST_CASE("unsupported level counts are rejected") {
    CHECK_THROWS_AS(waveform::multilevel_exponent(1e6, 1e-3, 64e6, 3), UnsupportedLevels);
    CHECK_THROWS_AS(waveform::multilevel_exponent(1e6, 1e-3, 64e6, 7), UnsupportedLevels);
}

TEST_CASE("switch schedule: constant plan equals the plain exponent") {
    const double delta_f = 1e6, fs = 64e6;
    waveform::FrequencyPlan plan;
    plan.delta_f_hz = delta_f - 100e3;
    plan.steps.push_back({64e-6, 100e3});  // delta_f + f = 1 MHz total
    const auto scheduled = waveform::switch_schedule(plan, fs, 4);
    const auto direct = waveform::multilevel_exponent(delta_f, 64e-6, fs, 4);
    REQUIRE(scheduled.state_index.size() == direct.state_index.size());
    for (std::size_t i = 0; i < scheduled.state_index.size(); ++i)
        REQUIRE(scheduled.state_index[i] == direct.state_index[i]);
}

TEST_CASE("switch schedule keeps phase across step boundaries") {
    // two steps at the same frequency must be indistinguishable from one
    const double fs = 64e6;
    waveform::FrequencyPlan split, whole;
    split.delta_f_hz = whole.delta_f_hz = 1e6;
    split.steps.push_back({17e-6, 0.0});
    split.steps.push_back({15e-6, 0.0});
    whole.steps.push_back({32e-6, 0.0});
    const auto a = waveform::switch_schedule(split, fs, 4);
    const auto b = waveform::switch_schedule(whole, fs, 4);
    REQUIRE(a.state_index.size() == b.state_index.size());
    for (std::size_t i = 0; i < a.state_index.size(); ++i)
        REQUIRE(a.state_index[i] == b.state_index[i]);
}

TEST_CASE("end-to-end: demodulating the ideal-mixed staircase recovers symbols") {
    for (const int sf : {6, 7, 8}) {
        const css::ChirpParams p{sf, 125000.0, {4, 8}, 2};
        const double delta_f = 1e6;
        // simulation rate: integer multiple of the demod rate, >= 16*(df+bw/2)
        const int ratio = 80;
        const double fs = ratio * p.sample_rate_hz();  // 20 MHz

        std::vector<css::ChirpSymbol> symbols;
        for (int v = 0; v < p.chips(); v += std::max(1, p.chips() / 8)) symbols.push_back({v});

        const auto plan = waveform::frequency_plan(p, symbols, delta_f);
        const auto wave = waveform::switch_schedule(plan, fs, 4);
        IqSignal rf = waveform::backscatter_mix(0.0, wave);

        mix(rf, -delta_f);  // down-shift the backscatter band to baseband
        const IqSignal bb = decimate(rf, static_cast<std::size_t>(ratio));

        css::Demodulator demod(p);
        const std::size_t nn = p.samples_per_symbol();
        for (std::size_t i = 0; i < symbols.size(); ++i) {
            const auto r = demod.demodulate(
                std::span(bb.samples).subspan(i * nn, nn));
            INFO("sf=" << sf << " symbol " << i);
            REQUIRE(r.value == symbols[i].value);
        }
    }
}

TEST_CASE("backscatter mix with a constant state is a scaled tone") {
    waveform::MultiLevelWave wave;
    wave.levels = 4;
    wave.sample_rate_hz = 1e6;
    wave.alphabet = waveform::detail::sector_alphabet(4);
    wave.state_index.assign(1000, 0);
    const auto sig = waveform::backscatter_mix(0.0, wave);
    for (const auto& s : sig.samples) CHECK(std::abs(s - wave.alphabet[0]) < 1e-12);
}

TEST_CASE("square baseline vs 4-level differ by >= 25 dB on the 3rd harmonic") {
    const double delta_f = 1e6, fs = 64e6;
    const auto square = waveform::square_exponent(delta_f, 512 / delta_f, fs);
    const auto multi = tone_periods(delta_f, fs, 512, 4);
    const double sq3 = std::max(coeff_db(square, delta_f, 3), coeff_db(square, delta_f, -3));
    const double ml3 = std::max(coeff_db(multi, delta_f, 3), coeff_db(multi, delta_f, -3));
    CHECK(sq3 - ml3 >= 25.0);
}

TEST_CASE("welch spectrum report matches the coefficient oracle") {
    const double delta_f = 1e6, fs = 64e6;

    // pure complex tone: everything except the fundamental is far down
    IqSignal tone;
    tone.sample_rate_hz = fs;
    tone.samples.resize(1 << 15);
    for (std::size_t n = 0; n < tone.samples.size(); ++n) {
        const double ph = 2.0 * waveform::kPi * delta_f * static_cast<double>(n) / fs;
        tone.samples[n] = {std::cos(ph), std::sin(ph)};
    }
    const auto pure = waveform::spectrum(tone, delta_f);
    CHECK(pure.mirror_level_db < -60.0);
    for (const auto& [n, db] : pure.harmonic_levels)
        if (n > 1) CHECK(db < -60.0);

    const auto sq = waveform::spectrum(waveform::square_exponent(delta_f, (1 << 15) / fs, fs),
                                       delta_f);
    CHECK(sq.harmonic_levels.at(3) == Catch::Approx(-9.54).margin(0.5));
    CHECK(sq.harmonic_levels.at(5) == Catch::Approx(-13.98).margin(0.5));
    CHECK(sq.mirror_level_db < -60.0);
    CHECK(sq.harmonic_mirror_side.at(3) > sq.harmonic_signal_side.at(3));  // SSB side split

    const auto ml = waveform::spectrum(tone_periods(delta_f, fs, 512, 4), delta_f);
    CHECK(ml.harmonic_levels.at(3) < -38.0);
    CHECK(ml.harmonic_levels.at(5) < -38.0);
    CHECK(ml.mirror_level_db < -60.0);
    CHECK(ml.harmonic_mirror_side.at(7) == Catch::Approx(db20(1.0 / 7)).margin(1.0));
    CHECK(ml.harmonic_signal_side.at(9) == Catch::Approx(db20(1.0 / 9)).margin(1.0));
}

TEST_CASE("spectrum requires 2^14 samples") {
    IqSignal sig;
    sig.sample_rate_hz = 1e6;
    sig.samples.resize(1000);
    CHECK_THROWS_AS(waveform::spectrum(sig, 1e5), LengthMismatch);
}

TEST_CASE("settle filter trims harmonics >= 11 by at least 6 dB more") {
    const double delta_f = 1e6, fs = 64e6;
    const auto raw = tone_periods(delta_f, fs, 512, 4);
    const auto filtered = waveform::apply_settle_filter(raw, 4.0 * delta_f);

    for (const int m : {-15, 17}) {  // surviving high-order images (m == 1 mod 8)
        const double before = coeff_db(raw, delta_f, m);
        const double after = coeff_db(filtered, delta_f, m);
        INFO("order " << m << " before " << before << " after " << after);
        CHECK(before - after >= 6.0);
    }
    // cancellation of 3 and 5 is untouched
    CHECK(coeff_db(filtered, delta_f, -3) < -55.0);
    CHECK(coeff_db(filtered, delta_f, 5) < -55.0);
}

TEST_CASE("chirped packet spreads harmonics relative to the single tone") {
    const css::ChirpParams p{6, 500000.0, {4, 8}, 1};
    const double delta_f = 3e6;
    const double fs = 64e6;

    std::vector<css::ChirpSymbol> symbols;
    for (int i = 0; i < 48; ++i) symbols.push_back({(i * 29) % p.chips()});
    const auto plan = waveform::frequency_plan(p, symbols, delta_f);
    const auto chirped = waveform::switch_schedule(plan, fs, 4).to_iq();

    // two-level baseline of the same plan, via the square synth per step
    const auto sq_tone = waveform::square_exponent(delta_f, chirped.duration_s(), fs);

    const auto rep_chirp = waveform::spectrum(chirped, delta_f);
    const auto rep_tone = waveform::spectrum(sq_tone, delta_f);

    // the square tone's 3rd is concentrated; the chirped staircase has no
    // measurable 3rd at all, and even a chirped square spreads it lower.
    CHECK(rep_chirp.harmonic_levels.at(3) < rep_tone.harmonic_levels.at(3) - 10.0);
}
