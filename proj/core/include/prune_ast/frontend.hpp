#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "prune_ast/tensor.hpp"

namespace prune_ast {

inline constexpr std::size_t kPatchSize = 16;
inline constexpr std::size_t kPatchValues = kPatchSize * kPatchSize;

struct Waveform {
    std::vector<float> samples;
    int sample_rate = 0;
};

/// STFT + mel filterbank parameters. Defaults produce 64/256/512 tokens for 1/5/10 s clips.
struct FrontendConfig {
    int sample_rate = 16000;
    double window_ms = 25.0;
    double hop_ms = 10.0;
    std::size_t n_fft = 512;
    std::size_t num_mel_bins = 128;
    double low_freq = 0.0;
    double high_freq = 8000.0;
    double log_floor = 1e-10;
    /// 0 selects the next power of two >= the frame count (minimum 16).
    std::size_t target_frames = 0;

    std::size_t window_length() const;
    std::size_t hop_length() const;
};

struct MelSpectrogram {
    /// frames x bins; log-magnitudes (or normalized values once `normalized` is set).
    Matrix values;
    /// Frames that came from audio; anything past this was appended by pad_or_trim.
    std::size_t content_frames = 0;
    bool normalized = false;
    float norm_mean = 0.0f;
    float norm_std = 1.0f;
    float log_floor_value = 0.0f;

    std::size_t frames() const noexcept { return values.rows(); }
    std::size_t bins() const noexcept { return values.cols(); }
};

struct PatchGrid {
    std::size_t n_time = 0;
    std::size_t n_freq = 0;
    /// patches[i] holds 256 values, row-major over (time offset, freq offset).
    /// Patch i sits at time block i / n_freq, frequency block i % n_freq.
    std::vector<std::vector<float>> patches;
    std::size_t content_frames = 0;

    std::size_t size() const noexcept { return patches.size(); }
    std::size_t time_index(std::size_t i) const noexcept { return i / n_freq; }
    std::size_t freq_index(std::size_t i) const noexcept { return i % n_freq; }
    /// True when the patch starts at or after the first appended padding frame.
    bool is_padding(std::size_t i) const noexcept {
        return time_index(i) * kPatchSize >= content_frames;
    }
};

struct PatchStats {
    std::vector<float> mean;
    std::vector<float> std;
    std::vector<std::size_t> time_idx;
    std::vector<std::size_t> freq_idx;
    std::vector<bool> padding;

    std::size_t size() const noexcept { return mean.size(); }
};

Waveform load_wav(const std::filesystem::path& path);
Waveform parse_wav(std::span<const unsigned char> bytes);
/// Mono PCM16 writer; samples are clipped to [-1, 1] and scaled by 32767.
void write_wav_pcm16(const std::filesystem::path& path, const Waveform& w, int channels = 1);
std::vector<unsigned char> encode_wav_pcm16(std::span<const float> interleaved, int sample_rate,
                                            int channels);

/// Mel filterbank weights, num_mel_bins x (n_fft/2 + 1), triangles on the HTK mel scale.
Matrix mel_filterbank(const FrontendConfig& cfg);
double hz_to_mel(double hz);
double mel_to_hz(double mel);
/// Center frequency of each mel filter in Hz.
std::vector<double> mel_center_frequencies(const FrontendConfig& cfg);

/// In-place radix-2 FFT over interleaved (re, im) pairs; size must be a power of two.
void fft_inplace(std::span<double> re, std::span<double> im);

MelSpectrogram compute_log_mel(const Waveform& w, const FrontendConfig& cfg);

std::size_t default_target_frames(std::size_t frames);
MelSpectrogram pad_or_trim(const MelSpectrogram& m, std::size_t target_frames);

MelSpectrogram normalize(const MelSpectrogram& m, float mean, float std);
MelSpectrogram denormalize(const MelSpectrogram& m);

PatchGrid patchify(const MelSpectrogram& m);
Matrix unpatchify(const PatchGrid& g);

PatchStats patch_stats(const PatchGrid& g);

/// Plain numeric CSV: one frame per line, one column per mel bin.
MelSpectrogram import_spectrogram_csv(const std::filesystem::path& path, float log_floor_value);
/// Weight-container file holding a tensor named "spectrogram" of shape [frames, bins].
MelSpectrogram import_spectrogram_tensor(const std::filesystem::path& path, float log_floor_value);

/// Header `patch_index,time_idx,freq_idx,mean,std`.
void write_patch_stats_csv(std::ostream& os, const PatchStats& stats);
PatchStats read_patch_stats_csv(std::istream& is);

}  // namespace prune_ast
