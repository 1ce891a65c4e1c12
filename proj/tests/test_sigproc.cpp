#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "unisig/sigproc.hpp"

using namespace unisig;

namespace {

std::vector<double> sine(double f_hz, double fs, double seconds, double amp = 1.0) {
    int64_t n = static_cast<int64_t>(fs * seconds);
    std::vector<double> x(n);
    for (int64_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * M_PI * f_hz * i / fs);
    return x;
}

// Steady-state amplitude at f_hz, measured over the center half of the signal
// by projection onto quadrature references.
double steady_amplitude(const std::vector<double>& x, double f_hz, double fs) {
    int64_t n = static_cast<int64_t>(x.size());
    int64_t periods_len = static_cast<int64_t>(std::floor(n / 2 / (fs / f_hz)) * (fs / f_hz));
    int64_t start = n / 4;
    int64_t len = periods_len;
    double a = 0, b = 0;
    for (int64_t i = 0; i < len; ++i) {
        double t = static_cast<double>(start + i);
        a += x[start + i] * std::sin(2.0 * M_PI * f_hz * t / fs);
        b += x[start + i] * std::cos(2.0 * M_PI * f_hz * t / fs);
    }
    return 2.0 * std::hypot(a, b) / static_cast<double>(len);
}

}  // namespace

TEST(Bandpass, DcRejected) {
    std::vector<double> x(static_cast<size_t>(30 * 256), 1.0);
    auto y = bandpass_filter(x, FilterSpec::bandpass(0.1, 75.0, 256.0));
    ASSERT_EQ(y.size(), x.size());
    double mid = 0.0;
    for (int64_t i = 3000; i < 4700; ++i) mid = std::max(mid, std::abs(y[i]));
    EXPECT_LT(mid, 1e-3);
}

TEST(Bandpass, MidbandGainMatchesAnalogOracle) {
    auto spec = FilterSpec::bandpass(0.1, 75.0, 256.0);
    auto x = sine(10.0, 256.0, 30.0);
    auto y = bandpass_filter(x, spec);
    double measured = steady_amplitude(y, 10.0, 256.0);
    double oracle = oracles::butter_bandpass_gain(10.0, 0.1, 75.0, 256.0, 4);
    // zero-phase application squares the one-way magnitude
    EXPECT_NEAR(measured, oracle * oracle, 0.01 * oracle * oracle);
}

TEST(Bandpass, StopbandAttenuationPpgBand) {
    auto x = sine(50.0, 256.0, 30.0);
    auto y = bandpass_filter(x, FilterSpec::bandpass(0.5, 8.0, 256.0));
    double measured = steady_amplitude(y, 50.0, 256.0);
    EXPECT_LT(20.0 * std::log10(std::max(measured, 1e-300)), -40.0);
    double oracle = oracles::butter_bandpass_gain(50.0, 0.5, 8.0, 256.0, 4);
    EXPECT_LT(20.0 * std::log10(oracle * oracle), -40.0);
}

TEST(Bandpass, DigitalGainTracksAnalogPrototypeAcrossBand) {
    auto spec = FilterSpec::bandpass(0.5, 40.0, 256.0);
    for (double f : {1.0, 4.0, 10.0, 30.0, 60.0}) {
        double dig = bandpass_gain(spec, f);
        double ana = oracles::butter_bandpass_gain(f, 0.5, 40.0, 256.0, 4);
        EXPECT_NEAR(dig, ana, 1e-6 + 1e-6 * ana) << "f=" << f;
    }
}

TEST(Bandpass, HighCutoffClampedNotRejected) {
    // ECG band at fs=200: 120 Hz >= Nyquist, must clamp to 0.99*Nyquist
    auto x = sine(10.0, 200.0, 10.0);
    auto y = bandpass_filter(x, FilterSpec::bandpass(0.5, 120.0, 200.0));
    ASSERT_EQ(y.size(), x.size());
    for (double v : y) ASSERT_TRUE(std::isfinite(v));
}

TEST(Bandpass, InvalidSpecThrows) {
    EXPECT_THROW(bandpass_filter({0.0}, FilterSpec::bandpass(10.0, 5.0, 256.0)), ConfigError);
    EXPECT_THROW(bandpass_filter({0.0}, FilterSpec::bandpass(0.0, 5.0, 256.0)), ConfigError);
}

TEST(Notch, KillsNotchFrequency) {
    auto x = sine(50.0, 256.0, 20.0);
    auto y = notch_filter(x, 50.0, 256.0);
    double measured = steady_amplitude(y, 50.0, 256.0);
    EXPECT_LT(20.0 * std::log10(std::max(measured, 1e-300)), -30.0);
}

TEST(Notch, SparesNeighboringBand) {
    auto x = sine(10.0, 256.0, 20.0);
    auto y = notch_filter(x, 50.0, 256.0);
    double measured = steady_amplitude(y, 10.0, 256.0);
    double oracle = oracles::notch_gain(10.0, 50.0, 30.0, 256.0);
    EXPECT_NEAR(measured, 1.0, 0.01);
    EXPECT_NEAR(measured, oracle * oracle, 0.005);
}

TEST(Notch, ZerosInZerosOut) {
    std::vector<double> x(1000, 0.0);
    auto y = notch_filter(x, 50.0, 256.0);
    for (double v : y) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Notch, AboveNyquistThrows) {
    EXPECT_THROW(notch_filter({0.0}, 130.0, 256.0), ConfigError);
}

TEST(Filters, Linearity) {
    Rng rng(5);
    std::vector<double> x(2000), y(2000);
    for (auto& v : x) v = rng.gauss();
    for (auto& v : y) v = rng.gauss();
    const double a = 1.7, b = -0.6;
    std::vector<double> mix(2000);
    for (int i = 0; i < 2000; ++i) mix[i] = a * x[i] + b * y[i];
    auto spec = FilterSpec::bandpass(0.5, 40.0, 256.0);
    auto fx = bandpass_filter(x, spec), fy = bandpass_filter(y, spec),
         fm = bandpass_filter(mix, spec);
    double scale = 0.0;
    for (double v : fm) scale = std::max(scale, std::abs(v));
    for (int i = 0; i < 2000; ++i)
        EXPECT_NEAR(fm[i], a * fx[i] + b * fy[i], 1e-6 * scale);
}

TEST(Filters, ZeroPhaseNoLag) {
    // a band-centered sine and its filtered version peak-correlate at lag 0
    auto x = sine(6.0, 256.0, 20.0);
    auto y = bandpass_filter(x, FilterSpec::bandpass(0.5, 40.0, 256.0));
    int64_t best_lag = -1000;
    double best = -1e300;
    for (int64_t lag = -20; lag <= 20; ++lag) {
        double c = 0.0;
        for (int64_t i = 300; i < 4800; ++i) c += x[i] * y[i + lag];
        if (c > best) {
            best = c;
            best_lag = lag;
        }
    }
    EXPECT_EQ(best_lag, 0);
}

TEST(Resample, IdentityWhenRatesEqual) {
    Rng rng(7);
    std::vector<double> x(777);
    for (auto& v : x) v = rng.gauss();
    auto y = resample(x, 256.0, 256.0);
    ASSERT_EQ(y.size(), x.size());
    for (size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(y[i], x[i]);
}

TEST(Resample, LengthArithmetic) {
    std::vector<double> x(5000, 0.0);
    auto y = resample(x, 500.0, 256.0);
    EXPECT_EQ(y.size(), 2560u);
}

TEST(Resample, SineCorrelationAgainstAnalyticOracle) {
    auto x = sine(5.0, 500.0, 10.0);
    auto y = resample(x, 500.0, 256.0);
    auto ref = sine(5.0, 256.0, 10.0);
    ASSERT_EQ(y.size(), ref.size());
    // correlation over the interior (edges see zero padding)
    int64_t lo = 128, hi = static_cast<int64_t>(y.size()) - 128;
    double sxy = 0, sxx = 0, syy = 0;
    for (int64_t i = lo; i < hi; ++i) {
        sxy += y[i] * ref[i];
        sxx += y[i] * y[i];
        syy += ref[i] * ref[i];
    }
    EXPECT_GT(sxy / std::sqrt(sxx * syy), 0.999);
}

TEST(Zscore, HandCase) {
    auto y = zscore_normalize({1.0, 2.0, 3.0});
    EXPECT_NEAR(y[0], -1.2247, 5e-4);
    EXPECT_NEAR(y[1], 0.0, 1e-9);
    EXPECT_NEAR(y[2], 1.2247, 5e-4);
}

TEST(Zscore, ConstantChannelGivesZeros) {
    auto y = zscore_normalize(std::vector<double>(100, 42.0));
    for (double v : y) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Zscore, MomentsOnRandomInput) {
    Rng rng(11);
    std::vector<double> x(4096);
    for (auto& v : x) v = 3.0 + 2.0 * rng.gauss();
    auto y = zscore_normalize(x);
    double m = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
    double var = 0;
    for (double v : y) var += (v - m) * (v - m);
    var /= y.size();
    EXPECT_LT(std::abs(m), 1e-6);
    EXPECT_NEAR(std::sqrt(var), 1.0, 1e-6);
}

namespace {

MultimodalRecord random_record(int channels, double seconds, uint64_t seed) {
    Rng rng(seed);
    MultimodalRecord rec;
    rec.sample_rate_hz = kTargetFs;
    int64_t n = static_cast<int64_t>(seconds * kTargetFs);
    for (int c = 0; c < channels; ++c) {
        ChannelInfo info;
        info.modality = static_cast<Modality>(c % 3);
        info.label = "ch" + std::to_string(c);
        rec.channels.push_back(info);
        std::vector<double> x(n);
        for (auto& v : x) v = rng.gauss();
        rec.samples.push_back(std::move(x));
    }
    return rec;
}

}  // namespace

TEST(Patching, FiveSecondWindowShape) {
    auto rec = random_record(3, 5.0, 1);
    auto grids = segment_and_patch<float>(rec, 5.0);
    ASSERT_EQ(grids.size(), 1u);
    EXPECT_EQ(grids[0].values.shape(), (Shape{3, 40, 32}));
}

TEST(Patching, TenSecondTwelveChannel) {
    auto rec = random_record(12, 10.0, 2);
    auto grids = segment_and_patch<float>(rec, 10.0);
    ASSERT_EQ(grids.size(), 1u);
    EXPECT_EQ(grids[0].values.shape(), (Shape{12, 80, 32}));
}

TEST(Patching, ThirtySecondFiveChannel) {
    auto rec = random_record(5, 30.0, 3);
    auto grids = segment_and_patch<float>(rec, 30.0);
    ASSERT_EQ(grids.size(), 1u);
    EXPECT_EQ(grids[0].values.shape(), (Shape{5, 240, 32}));
}

TEST(Patching, TrailingRemainderDropped) {
    auto rec = random_record(2, 12.5, 4);
    auto grids = segment_and_patch<float>(rec, 5.0);
    EXPECT_EQ(grids.size(), 2u);
}

TEST(Patching, WindowShorterThanPatchThrows) {
    auto rec = random_record(1, 5.0, 5);
    EXPECT_THROW(segment_and_patch<float>(rec, 0.05), ConfigError);
}

TEST(Patching, GridIsZscoredPerChannel) {
    auto rec = random_record(3, 10.0, 6);
    for (auto& ch : rec.samples)
        for (auto& v : ch) v = v * 7.0 + 100.0;  // arbitrary offset/scale upstream
    auto grids = segment_and_patch<float>(rec, 5.0);
    for (const auto& g : grids)
        for (int64_t c = 0; c < g.channels(); ++c) {
            double mean = 0;
            int64_t n = g.patches() * kPatchLen;
            for (int64_t p = 0; p < g.patches(); ++p)
                for (int64_t i = 0; i < kPatchLen; ++i) mean += g.values.at({c, p, i});
            mean /= n;
            double var = 0;
            for (int64_t p = 0; p < g.patches(); ++p)
                for (int64_t i = 0; i < kPatchLen; ++i)
                    var += (g.values.at({c, p, i}) - mean) * (g.values.at({c, p, i}) - mean);
            var /= n;
            EXPECT_LT(std::abs(mean), 1e-5);
            EXPECT_NEAR(std::sqrt(var), 1.0, 1e-3);
        }
}

TEST(Patching, ReassemblyReproducesWindow) {
    auto rec = random_record(2, 5.0, 7);
    auto grids = segment_and_patch<float>(rec, 5.0);
    // patches of channel 0 stitched back equal the z-scored window
    auto expected = zscore_normalize(
        std::vector<double>(rec.samples[0].begin(), rec.samples[0].begin() + 1280));
    const auto& g = grids[0];
    for (int64_t i = 0; i < 1280; ++i)
        EXPECT_NEAR(g.values.at({0, i / 32, i % 32}), expected[i], 1e-6);
}

TEST(Pipeline, PerChannelProcessingIsIndependent) {
    auto rec = random_record(3, 6.0, 8);
    rec.sample_rate_hz = 500.0;
    auto joint = condition_record(rec);
    for (int64_t c = 0; c < 3; ++c) {
        MultimodalRecord single;
        single.sample_rate_hz = 500.0;
        single.channels = {rec.channels[c]};
        single.samples = {rec.samples[c]};
        auto alone = condition_record(single);
        ASSERT_EQ(alone.samples[0].size(), joint.samples[c].size());
        for (size_t i = 0; i < alone.samples[0].size(); ++i)
            EXPECT_DOUBLE_EQ(alone.samples[0][i], joint.samples[c][i]);
    }
}
