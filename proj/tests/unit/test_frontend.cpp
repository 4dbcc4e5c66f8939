#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "prune_ast/error.hpp"
#include "prune_ast/frontend.hpp"
#include "prune_ast/weights.hpp"

using namespace prune_ast;

namespace {

Waveform tone(double hz, double seconds, double amp = 0.5, int sr = 16000) {
    Waveform w;
    w.sample_rate = sr;
    w.samples.resize(static_cast<std::size_t>(seconds * sr));
    for (std::size_t i = 0; i < w.samples.size(); ++i)
        w.samples[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * hz * i / sr));
    return w;
}

Errc parse_error_code(const std::vector<unsigned char>& bytes) {
    try {
        parse_wav(bytes);
    } catch (const Error& e) {
        return e.code();
    }
    return Errc::numerical;  // sentinel: parsed without error
}

std::size_t argmax(std::span<const float> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

TEST(Wav, ZeroSamples) {
    std::vector<float> zeros(16000, 0.0f);
    const Waveform w = parse_wav(encode_wav_pcm16(zeros, 16000, 1));
    EXPECT_EQ(w.sample_rate, 16000);
    ASSERT_EQ(w.samples.size(), 16000u);
    for (float s : w.samples) EXPECT_EQ(s, 0.0f);
}

TEST(Wav, FullScaleSquareWave) {
    std::vector<float> sq(100);
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = i % 2 ? -1.0f : 1.0f;
    const Waveform w = parse_wav(encode_wav_pcm16(sq, 16000, 1));
    for (std::size_t i = 0; i < sq.size(); ++i) {
        EXPECT_EQ(w.samples[i], (i % 2 ? -1.0f : 1.0f) * 32767.0f / 32768.0f);
    }
}

TEST(Wav, StereoOppositeChannelsDownmixToZero) {
    std::vector<float> inter;
    for (int i = 0; i < 500; ++i) {
        const float x = 0.3f * std::sin(0.01f * i);
        inter.push_back(x);
        inter.push_back(-x);
    }
    const Waveform w = parse_wav(encode_wav_pcm16(inter, 16000, 2));
    ASSERT_EQ(w.samples.size(), 500u);
    for (float s : w.samples) EXPECT_EQ(s, 0.0f);
}

TEST(Wav, DistinctErrors) {
    std::vector<float> one(10, 0.1f);
    auto good = encode_wav_pcm16(one, 16000, 1);

    auto bad_magic = good;
    bad_magic[0] = 'X';
    EXPECT_EQ(parse_error_code(bad_magic), Errc::wav_malformed_header);

    auto truncated = good;
    truncated.resize(30);
    EXPECT_EQ(parse_error_code(truncated), Errc::wav_malformed_header);

    auto float_codec = good;
    float_codec[20] = 3;  // format tag: IEEE float
    EXPECT_EQ(parse_error_code(float_codec), Errc::wav_unsupported_codec);

    auto eight_bit = good;
    eight_bit[34] = 8;
    EXPECT_EQ(parse_error_code(eight_bit), Errc::wav_unsupported_codec);

    auto empty = encode_wav_pcm16(std::vector<float>{}, 16000, 1);
    EXPECT_EQ(parse_error_code(empty), Errc::wav_empty_payload);
}

TEST(Wav, FileRoundTrip) {
    const auto dir = fixture::temp_dir("wav");
    Waveform w = tone(440, 0.1);
    write_wav_pcm16(dir / "t.wav", w);
    const Waveform r = load_wav(dir / "t.wav");
    ASSERT_EQ(r.samples.size(), w.samples.size());
    for (std::size_t i = 0; i < w.samples.size(); ++i) EXPECT_NEAR(r.samples[i], w.samples[i], 1.0 / 32767);
    EXPECT_THROW(load_wav(dir / "missing.wav"), Error);
}

TEST(LogMel, SilenceIsLogFloor) {
    Waveform w;
    w.sample_rate = 16000;
    w.samples.assign(16000, 0.0f);
    const MelSpectrogram m = compute_log_mel(w, {});
    EXPECT_EQ(m.bins(), 128u);
    for (float v : m.values.data()) EXPECT_EQ(v, static_cast<float>(std::log(1e-10)));
}

TEST(LogMel, FrameCountsGiveTableTokenCounts) {
    const std::size_t expected_tokens[] = {64, 256, 512};
    const double seconds[] = {1.0, 5.0, 10.0};
    for (int i = 0; i < 3; ++i) {
        Waveform w;
        w.sample_rate = 16000;
        w.samples.assign(static_cast<std::size_t>(seconds[i] * 16000), 0.0f);
        const MelSpectrogram m = compute_log_mel(w, {});
        const PatchGrid g = patchify(pad_or_trim(m, default_target_frames(m.frames())));
        EXPECT_EQ(g.size(), expected_tokens[i]) << seconds[i] << " s";
    }
}

TEST(LogMel, ToneArgmaxIsNearestCenterBin) {
    const FrontendConfig cfg;
    const MelSpectrogram m = compute_log_mel(tone(1000.0, 0.5), cfg);
    const auto centers = mel_center_frequencies(cfg);
    std::size_t nearest = 0;
    for (std::size_t j = 1; j < centers.size(); ++j) {
        if (std::fabs(hz_to_mel(centers[j]) - hz_to_mel(1000.0)) <
            std::fabs(hz_to_mel(centers[nearest]) - hz_to_mel(1000.0)))
            nearest = j;
    }
    for (std::size_t f = 0; f < m.frames(); ++f) EXPECT_EQ(argmax(m.values.row(f)), nearest) << "frame " << f;
}

TEST(LogMel, MatchesDirectDftOracle) {
    const FrontendConfig cfg;
    const Waveform w = tone(2345.0, 0.06, 0.3);
    const MelSpectrogram m = compute_log_mel(w, cfg);
    const auto ref = oracle::log_mel_dft(w.samples, 16000, 400, 160, 512, 128, 0.0, 8000.0, 1e-10);
    ASSERT_EQ(m.frames(), ref.size());
    for (std::size_t f = 0; f < ref.size(); ++f)
        for (std::size_t j = 0; j < 128; ++j) EXPECT_NEAR(m.values(f, j), ref[f][j], 1e-3 + 1e-5 * std::fabs(ref[f][j]));
}

TEST(LogMel, DoublingAmplitudeAddsTwoLogTwo) {
    const FrontendConfig cfg;
    std::mt19937 rng(11);
    std::uniform_real_distribution<float> u(-0.25f, 0.25f);
    Waveform w;
    w.sample_rate = 16000;
    w.samples.resize(8000);
    for (float& s : w.samples) s = u(rng);
    Waveform w2 = w;
    for (float& s : w2.samples) s *= 2.0f;
    const MelSpectrogram a = compute_log_mel(w, cfg), b = compute_log_mel(w2, cfg);
    const float floor = static_cast<float>(std::log(1e-10));
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        if (a.values.data()[i] <= floor + 1.0f) continue;
        EXPECT_NEAR(b.values.data()[i] - a.values.data()[i], 2.0 * std::log(2.0), 1e-4);
    }
}

TEST(LogMel, Errors) {
    Waveform w = tone(440, 1.0);
    w.sample_rate = 44100;
    try {
        compute_log_mel(w, {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::bad_sample_rate);
    }
    Waveform short_w = tone(440, 0.01);
    try {
        compute_log_mel(short_w, {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::input_too_short);
    }
}

TEST(Fft, MatchesDirectDft) {
    std::mt19937 rng(12);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> re(64), im(64, 0.0);
    for (double& v : re) v = u(rng);
    const auto x = re;
    fft_inplace(re, im);
    for (std::size_t k = 0; k < 64; ++k) {
        double r = 0, i = 0;
        for (std::size_t t = 0; t < 64; ++t) {
            r += x[t] * std::cos(-2 * std::numbers::pi * k * t / 64.0);
            i += x[t] * std::sin(-2 * std::numbers::pi * k * t / 64.0);
        }
        EXPECT_NEAR(re[k], r, 1e-9);
        EXPECT_NEAR(im[k], i, 1e-9);
    }
    std::vector<double> bad(48), bad_im(48);
    EXPECT_THROW(fft_inplace(bad, bad_im), Error);
}

TEST(PadOrTrim, Cases) {
    MelSpectrogram m;
    m.log_floor_value = -23.0f;
    std::mt19937 rng(13);
    m.values = fixture::random_matrix(1024, 128, rng);
    m.content_frames = 1024;
    EXPECT_EQ(pad_or_trim(m, 1024).values, m.values);

    MelSpectrogram shorter = m;
    shorter.values = fixture::random_matrix(900, 128, rng);
    shorter.content_frames = 900;
    const MelSpectrogram p = pad_or_trim(shorter, 1024);
    EXPECT_EQ(p.frames(), 1024u);
    EXPECT_EQ(p.content_frames, 900u);
    for (std::size_t f = 0; f < 900; ++f)
        for (std::size_t c = 0; c < 128; ++c) ASSERT_EQ(p.values(f, c), shorter.values(f, c));
    for (std::size_t f = 900; f < 1024; ++f)
        for (std::size_t c = 0; c < 128; ++c) ASSERT_EQ(p.values(f, c), -23.0f);

    MelSpectrogram longer = m;
    longer.values = fixture::random_matrix(1100, 128, rng);
    longer.content_frames = 1100;
    const MelSpectrogram t = pad_or_trim(longer, 1024);
    for (std::size_t f = 0; f < 1024; ++f)
        for (std::size_t c = 0; c < 128; ++c) ASSERT_EQ(t.values(f, c), longer.values(f, c));

    EXPECT_THROW(pad_or_trim(m, 1000), Error);
}

TEST(Normalize, Cases) {
    std::mt19937 rng(14);
    MelSpectrogram m;
    m.values = fixture::random_matrix(32, 128, rng, -20.0f, 5.0f);
    EXPECT_EQ(normalize(m, 0.0f, 0.5f).values, m.values);

    MelSpectrogram c;
    c.values = Matrix(16, 128, -4.2677f);
    for (float v : normalize(c, -4.2677f, 4.569f).values.data()) EXPECT_EQ(v, 0.0f);

    const MelSpectrogram back = denormalize(normalize(m, -4.2677f, 4.569f));
    for (std::size_t i = 0; i < m.values.size(); ++i)
        EXPECT_NEAR(back.values.data()[i], m.values.data()[i], 1e-6 * std::max(1.0f, std::fabs(m.values.data()[i])));

    EXPECT_THROW(normalize(m, 0.0f, 0.0f), Error);
    EXPECT_THROW(normalize(m, 0.0f, -1.0f), Error);
}

TEST(Normalize, PaddingAfterNormalizationUsesNormalizedFloor) {
    MelSpectrogram m;
    m.values = Matrix(10, 128, 1.0f);
    m.content_frames = 10;
    m.log_floor_value = -23.0f;
    const MelSpectrogram n = pad_or_trim(normalize(m, -4.0f, 2.0f), 16);
    EXPECT_FLOAT_EQ(n.values(15, 0), (-23.0f + 4.0f) / 4.0f);
}

TEST(Patchify, TokenCounts) {
    MelSpectrogram a;
    a.values = Matrix(1024, 128);
    EXPECT_EQ(patchify(a).size(), 512u);
    MelSpectrogram b;
    b.values = Matrix(128, 128);
    EXPECT_EQ(patchify(b).size(), 64u);
    MelSpectrogram bad;
    bad.values = Matrix(100, 128);
    EXPECT_THROW(patchify(bad), Error);
}

TEST(Patchify, RoundTripAndTimeMajorOrder) {
    std::mt19937 rng(15);
    MelSpectrogram m;
    m.values = fixture::random_matrix(64, 128, rng);
    m.content_frames = 64;
    const PatchGrid g = patchify(m);
    EXPECT_EQ(g.n_time, 4u);
    EXPECT_EQ(g.n_freq, 8u);
    EXPECT_EQ(unpatchify(g), m.values);
    // Patch 9 is time block 1, frequency block 1; its first value is frame 16, bin 16.
    EXPECT_EQ(g.patches[9][0], m.values(16, 16));
    EXPECT_EQ(g.patches[9][17], m.values(17, 17));
}

TEST(PatchStats, Cases) {
    PatchGrid g;
    g.n_time = 1;
    g.n_freq = 3;
    g.content_frames = 16;
    g.patches.push_back(std::vector<float>(256, 2.5f));
    std::vector<float> alt(256);
    for (std::size_t i = 0; i < 256; ++i) alt[i] = static_cast<float>(i % 2);
    g.patches.push_back(alt);
    std::mt19937 rng(16);
    std::normal_distribution<float> nd(1.0f, 3.0f);
    std::vector<float> rnd(256);
    for (float& v : rnd) v = nd(rng);
    g.patches.push_back(rnd);

    const PatchStats s = patch_stats(g);
    EXPECT_EQ(s.std[0], 0.0f);
    EXPECT_FLOAT_EQ(s.mean[0], 2.5f);
    EXPECT_FLOAT_EQ(s.mean[1], 0.5f);
    EXPECT_FLOAT_EQ(s.std[1], 0.5f);

    double mean = 0.0;
    for (float v : rnd) mean += v;
    mean /= 256.0;
    double ss = 0.0;
    for (float v : rnd) ss += (v - mean) * (v - mean);
    EXPECT_NEAR(s.mean[2], mean, 1e-6);
    EXPECT_NEAR(s.std[2], std::sqrt(ss / 256.0), 1e-6);
}

TEST(PatchStats, PaddingFlagsAndProvenanceCoverage) {
    MelSpectrogram m;
    m.values = Matrix(100, 128, 0.0f);
    m.content_frames = 100;
    m.log_floor_value = -23.0f;
    const PatchGrid g = patchify(pad_or_trim(m, 128));
    const PatchStats s = patch_stats(g);
    // Frames 100..127 are padding; only time block 7 (frames 112..127) lies wholly inside.
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(s.padding[i], g.time_index(i) >= 7) << i;
}

TEST(PatchStats, CsvRoundTrip) {
    std::mt19937 rng(17);
    const PatchGrid g = fixture::random_grid(2, rng);
    const PatchStats s = patch_stats(g);
    std::stringstream ss;
    write_patch_stats_csv(ss, s);
    EXPECT_EQ(ss.str().substr(0, 39), "patch_index,time_idx,freq_idx,mean,std\n");
    const PatchStats r = read_patch_stats_csv(ss);
    EXPECT_EQ(r.mean, s.mean);
    EXPECT_EQ(r.std, s.std);
    EXPECT_EQ(r.time_idx, s.time_idx);
    EXPECT_EQ(r.freq_idx, s.freq_idx);
}

TEST(Import, CsvAndTensor) {
    const auto dir = fixture::temp_dir("import");
    {
        std::ofstream out(dir / "s.csv");
        for (int f = 0; f < 20; ++f) {
            for (int b = 0; b < 128; ++b) out << (b ? "," : "") << f * 0.5 + b;
            out << '\n';
        }
    }
    const MelSpectrogram c = import_spectrogram_csv(dir / "s.csv", -23.0f);
    EXPECT_EQ(c.frames(), 20u);
    EXPECT_EQ(c.bins(), 128u);
    EXPECT_FLOAT_EQ(c.values(3, 5), 6.5f);

    TensorMap t;
    t["spectrogram"] = Tensor{{16, 128}, std::vector<float>(16 * 128, 1.25f)};
    save_weights(t, dir / "s.tpwt");
    const MelSpectrogram w = import_spectrogram_tensor(dir / "s.tpwt", -23.0f);
    EXPECT_EQ(w.frames(), 16u);
    EXPECT_EQ(w.values(15, 127), 1.25f);

    {
        std::ofstream out(dir / "ragged.csv");
        out << "1,2,3\n4,5\n";
    }
    EXPECT_THROW(import_spectrogram_csv(dir / "ragged.csv", 0.0f), Error);
}
