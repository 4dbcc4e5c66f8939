#include "prune_ast/frontend.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <numbers>
#include <sstream>
#include <string>

#include "prune_ast/error.hpp"
#include "prune_ast/weights.hpp"

namespace prune_ast {

namespace {

std::uint32_t read_u32(std::span<const unsigned char> b, std::size_t off) {
    return static_cast<std::uint32_t>(b[off]) | (static_cast<std::uint32_t>(b[off + 1]) << 8) |
           (static_cast<std::uint32_t>(b[off + 2]) << 16) |
           (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

std::uint16_t read_u16(std::span<const unsigned char> b, std::size_t off) {
    return static_cast<std::uint16_t>(b[off] | (b[off + 1] << 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xff));
    out.push_back(static_cast<unsigned char>(v >> 8));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace

std::size_t FrontendConfig::window_length() const {
    return static_cast<std::size_t>(std::lround(sample_rate * window_ms / 1000.0));
}

std::size_t FrontendConfig::hop_length() const {
    return static_cast<std::size_t>(std::lround(sample_rate * hop_ms / 1000.0));
}

Waveform parse_wav(std::span<const unsigned char> b) {
    if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 ||
        std::memcmp(b.data() + 8, "WAVE", 4) != 0) {
        fail(Errc::wav_malformed_header, "wav: missing RIFF/WAVE signature");
    }
    bool have_fmt = false;
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    std::span<const unsigned char> payload;
    bool have_data = false;

    std::size_t off = 12;
    while (off + 8 <= b.size()) {
        const std::uint32_t chunk_size = read_u32(b, off + 4);
        const std::size_t body = off + 8;
        if (chunk_size > b.size() - body) {
            fail(Errc::wav_malformed_header, "wav: chunk extends past end of file");
        }
        if (std::memcmp(b.data() + off, "fmt ", 4) == 0) {
            if (chunk_size < 16) fail(Errc::wav_malformed_header, "wav: fmt chunk too small");
            format = read_u16(b, body);
            channels = read_u16(b, body + 2);
            rate = read_u32(b, body + 4);
            bits = read_u16(b, body + 14);
            if (format == kFormatExtensible) {
                if (chunk_size < 40) {
                    fail(Errc::wav_malformed_header, "wav: extensible fmt chunk too small");
                }
                // First two bytes of the subformat GUID carry the legacy format tag.
                format = read_u16(b, body + 24);
            }
            have_fmt = true;
        } else if (std::memcmp(b.data() + off, "data", 4) == 0) {
            payload = b.subspan(body, chunk_size);
            have_data = true;
        }
        off = body + chunk_size + (chunk_size & 1u);
    }
    if (!have_fmt || !have_data) {
        fail(Errc::wav_malformed_header, "wav: missing fmt or data chunk");
    }
    if (format != kFormatPcm || bits != 16) {
        fail(Errc::wav_unsupported_codec, "wav: only PCM 16-bit is supported (format tag " +
                                              std::to_string(format) + ", " +
                                              std::to_string(bits) + " bits)");
    }
    if (channels != 1 && channels != 2) {
        fail(Errc::wav_unsupported_codec,
             "wav: unsupported channel count " + std::to_string(channels));
    }
    if (rate == 0) fail(Errc::wav_malformed_header, "wav: zero sample rate");
    const std::size_t frame_bytes = 2u * channels;
    const std::size_t frames = payload.size() / frame_bytes;
    if (frames == 0) fail(Errc::wav_empty_payload, "wav: data chunk holds no samples");

    Waveform w;
    w.sample_rate = static_cast<int>(rate);
    w.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
        float acc = 0.0f;
        for (std::size_t c = 0; c < channels; ++c) {
            const auto raw =
                static_cast<std::int16_t>(read_u16(payload, i * frame_bytes + 2 * c));
            acc += static_cast<float>(raw) / 32768.0f;
        }
        w.samples[i] = acc / static_cast<float>(channels);
    }
    return w;
}

Waveform load_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io_failure, "cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return parse_wav(bytes);
}

std::vector<unsigned char> encode_wav_pcm16(std::span<const float> interleaved, int sample_rate,
                                            int channels) {
    const auto data_bytes = static_cast<std::uint32_t>(interleaved.size() * 2);
    std::vector<unsigned char> out;
    out.reserve(44 + data_bytes);
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    put_u32(out, 36 + data_bytes);
    out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    put_u32(out, 16);
    put_u16(out, kFormatPcm);
    put_u16(out, static_cast<std::uint16_t>(channels));
    put_u32(out, static_cast<std::uint32_t>(sample_rate));
    put_u32(out, static_cast<std::uint32_t>(sample_rate * channels * 2));
    put_u16(out, static_cast<std::uint16_t>(channels * 2));
    put_u16(out, 16);
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    put_u32(out, data_bytes);
    for (float s : interleaved) {
        const float c = std::clamp(s, -1.0f, 1.0f);
        put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0f))));
    }
    return out;
}

void write_wav_pcm16(const std::filesystem::path& path, const Waveform& w, int channels) {
    std::vector<float> interleaved;
    interleaved.reserve(w.samples.size() * static_cast<std::size_t>(channels));
    for (float s : w.samples)
        for (int c = 0; c < channels; ++c) interleaved.push_back(s);
    const auto bytes = encode_wav_pcm16(interleaved, w.sample_rate, channels);
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Errc::io_failure, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(Errc::io_failure, "short write to " + path.string());
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_center_frequencies(const FrontendConfig& cfg) {
    const double lo = hz_to_mel(cfg.low_freq);
    const double hi = hz_to_mel(cfg.high_freq);
    const double step = (hi - lo) / static_cast<double>(cfg.num_mel_bins + 1);
    std::vector<double> centers(cfg.num_mel_bins);
    for (std::size_t m = 0; m < cfg.num_mel_bins; ++m) {
        centers[m] = mel_to_hz(lo + step * static_cast<double>(m + 1));
    }
    return centers;
}

Matrix mel_filterbank(const FrontendConfig& cfg) {
    const std::size_t n_bins = cfg.n_fft / 2 + 1;
    const double lo = hz_to_mel(cfg.low_freq);
    const double hi = hz_to_mel(cfg.high_freq);
    const double step = (hi - lo) / static_cast<double>(cfg.num_mel_bins + 1);
    Matrix fb(cfg.num_mel_bins, n_bins);
    for (std::size_t m = 0; m < cfg.num_mel_bins; ++m) {
        const double left = lo + step * static_cast<double>(m);
        const double center = left + step;
        const double right = center + step;
        for (std::size_t k = 0; k < n_bins; ++k) {
            const double hz = static_cast<double>(k) * cfg.sample_rate / static_cast<double>(cfg.n_fft);
            const double mel = hz_to_mel(hz);
            double w = 0.0;
            if (mel > left && mel < center) {
                w = (mel - left) / step;
            } else if (mel >= center && mel < right) {
                w = (right - mel) / step;
            }
            fb(m, k) = static_cast<float>(w);
        }
    }
    return fb;
}

void fft_inplace(std::span<double> re, std::span<double> im) {
    const std::size_t n = re.size();
    if (n != im.size() || !std::has_single_bit(n)) {
        fail(Errc::invalid_argument, "fft: size must be a power of two");
    }
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < len / 2; ++k) {
                const double wr = std::cos(ang * static_cast<double>(k));
                const double wi = std::sin(ang * static_cast<double>(k));
                const std::size_t a = i + k;
                const std::size_t b = a + len / 2;
                const double xr = re[b] * wr - im[b] * wi;
                const double xi = re[b] * wi + im[b] * wr;
                re[b] = re[a] - xr;
                im[b] = im[a] - xi;
                re[a] += xr;
                im[a] += xi;
            }
        }
    }
}

MelSpectrogram compute_log_mel(const Waveform& w, const FrontendConfig& cfg) {
    if (w.sample_rate != cfg.sample_rate) {
        fail(Errc::bad_sample_rate, "frontend expects " + std::to_string(cfg.sample_rate) +
                                        " Hz input, got " + std::to_string(w.sample_rate) +
                                        " Hz (resampling is not supported)");
    }
    const std::size_t win = cfg.window_length();
    const std::size_t hop = cfg.hop_length();
    if (win > cfg.n_fft || !std::has_single_bit(cfg.n_fft)) {
        fail(Errc::config, "frontend: n_fft must be a power of two >= window length");
    }
    if (w.samples.size() < win) {
        fail(Errc::input_too_short, "waveform of " + std::to_string(w.samples.size()) +
                                        " samples is shorter than one window (" +
                                        std::to_string(win) + ")");
    }
    const std::size_t frames = 1 + (w.samples.size() - win) / hop;
    const std::size_t n_bins = cfg.n_fft / 2 + 1;
    const Matrix fb = mel_filterbank(cfg);

    std::vector<double> window(win);
    for (std::size_t i = 0; i < win; ++i) {
        window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                         static_cast<double>(win - 1));
    }

    MelSpectrogram out;
    out.values = Matrix(frames, cfg.num_mel_bins);
    out.content_frames = frames;
    out.log_floor_value = static_cast<float>(std::log(cfg.log_floor));

    std::vector<double> re(cfg.n_fft), im(cfg.n_fft), power(n_bins);
    for (std::size_t f = 0; f < frames; ++f) {
        std::fill(re.begin(), re.end(), 0.0);
        std::fill(im.begin(), im.end(), 0.0);
        const std::size_t start = f * hop;
        for (std::size_t i = 0; i < win; ++i) re[i] = w.samples[start + i] * window[i];
        fft_inplace(re, im);
        for (std::size_t k = 0; k < n_bins; ++k) power[k] = re[k] * re[k] + im[k] * im[k];
        auto dst = out.values.row(f);
        for (std::size_t m = 0; m < cfg.num_mel_bins; ++m) {
            auto weights = fb.row(m);
            double e = 0.0;
            for (std::size_t k = 0; k < n_bins; ++k) e += weights[k] * power[k];
            dst[m] = static_cast<float>(std::log(std::max(e, cfg.log_floor)));
        }
    }
    return out;
}

std::size_t default_target_frames(std::size_t frames) {
    return std::max<std::size_t>(kPatchSize, std::bit_ceil(frames));
}

MelSpectrogram pad_or_trim(const MelSpectrogram& m, std::size_t target_frames) {
    if (target_frames == 0 || target_frames % kPatchSize != 0) {
        fail(Errc::invalid_argument, "pad_or_trim: target " + std::to_string(target_frames) +
                                         " is not a positive multiple of 16");
    }
    MelSpectrogram out = m;
    const float fill = m.normalized
                           ? (m.log_floor_value - m.norm_mean) / (2.0f * m.norm_std)
                           : m.log_floor_value;
    out.values = Matrix(target_frames, m.bins(), fill);
    const std::size_t keep = std::min(target_frames, m.frames());
    for (std::size_t f = 0; f < keep; ++f) {
        std::copy_n(m.values.row(f).begin(), m.bins(), out.values.row(f).begin());
    }
    out.content_frames = std::min(m.content_frames, target_frames);
    return out;
}

MelSpectrogram normalize(const MelSpectrogram& m, float mean, float std) {
    if (!(std > 0.0f)) fail(Errc::invalid_argument, "normalize: std must be positive");
    if (m.normalized) fail(Errc::invalid_argument, "normalize: spectrogram already normalized");
    MelSpectrogram out = m;
    for (float& v : out.values.data()) v = (v - mean) / (2.0f * std);
    out.normalized = true;
    out.norm_mean = mean;
    out.norm_std = std;
    return out;
}

MelSpectrogram denormalize(const MelSpectrogram& m) {
    MelSpectrogram out = m;
    if (!m.normalized) return out;
    for (float& v : out.values.data()) v = v * 2.0f * m.norm_std + m.norm_mean;
    out.normalized = false;
    return out;
}

PatchGrid patchify(const MelSpectrogram& m) {
    if (m.frames() == 0 || m.frames() % kPatchSize != 0 || m.bins() % kPatchSize != 0) {
        fail(Errc::shape_mismatch, "patchify: spectrogram " + m.values.shape_string() +
                                       " is not divisible into 16x16 patches");
    }
    PatchGrid g;
    g.n_time = m.frames() / kPatchSize;
    g.n_freq = m.bins() / kPatchSize;
    g.content_frames = m.content_frames;
    g.patches.reserve(g.n_time * g.n_freq);
    for (std::size_t t = 0; t < g.n_time; ++t) {
        for (std::size_t fq = 0; fq < g.n_freq; ++fq) {
            std::vector<float> patch(kPatchValues);
            for (std::size_t dt = 0; dt < kPatchSize; ++dt) {
                const auto row = m.values.row(t * kPatchSize + dt);
                std::copy_n(row.begin() + static_cast<std::ptrdiff_t>(fq * kPatchSize), kPatchSize,
                            patch.begin() + static_cast<std::ptrdiff_t>(dt * kPatchSize));
            }
            g.patches.push_back(std::move(patch));
        }
    }
    return g;
}

Matrix unpatchify(const PatchGrid& g) {
    Matrix out(g.n_time * kPatchSize, g.n_freq * kPatchSize);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const std::size_t t = g.time_index(i), fq = g.freq_index(i);
        for (std::size_t dt = 0; dt < kPatchSize; ++dt)
            for (std::size_t df = 0; df < kPatchSize; ++df)
                out(t * kPatchSize + dt, fq * kPatchSize + df) = g.patches[i][dt * kPatchSize + df];
    }
    return out;
}

PatchStats patch_stats(const PatchGrid& g) {
    PatchStats s;
    const std::size_t n = g.size();
    s.mean.resize(n);
    s.std.resize(n);
    s.time_idx.resize(n);
    s.freq_idx.resize(n);
    s.padding.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& p = g.patches[i];
        double mean = 0.0;
        for (float v : p) mean += v;
        mean /= static_cast<double>(p.size());
        double var = 0.0;
        for (float v : p) var += (v - mean) * (v - mean);
        var /= static_cast<double>(p.size());
        s.mean[i] = static_cast<float>(mean);
        s.std[i] = static_cast<float>(std::sqrt(var));
        s.time_idx[i] = g.time_index(i);
        s.freq_idx[i] = g.freq_index(i);
        s.padding[i] = g.is_padding(i);
    }
    return s;
}

MelSpectrogram import_spectrogram_csv(const std::filesystem::path& path, float log_floor_value) {
    std::ifstream in(path);
    if (!in) fail(Errc::io_failure, "cannot open " + path.string());
    std::vector<float> values;
    std::size_t cols = 0, rows = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        std::size_t count = 0;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                values.push_back(std::stof(cell));
            } catch (const std::exception&) {
                fail(Errc::parse_error, path.string() + ": bad number '" + cell + "' on row " +
                                            std::to_string(rows + 1));
            }
            ++count;
        }
        if (cols == 0) cols = count;
        if (count != cols) {
            fail(Errc::parse_error, path.string() + ": ragged row " + std::to_string(rows + 1));
        }
        ++rows;
    }
    if (rows == 0) fail(Errc::parse_error, path.string() + ": empty spectrogram");
    MelSpectrogram m;
    m.values = Matrix(rows, cols, std::move(values));
    m.content_frames = rows;
    m.log_floor_value = log_floor_value;
    return m;
}

MelSpectrogram import_spectrogram_tensor(const std::filesystem::path& path, float log_floor_value) {
    const TensorMap tensors = read_weight_file(path);
    const auto it = tensors.find("spectrogram");
    if (it == tensors.end()) {
        fail(Errc::missing_entry, path.string() + ": no 'spectrogram' entry");
    }
    const Tensor& t = it->second;
    if (t.dims.size() != 2) {
        fail(Errc::shape_mismatch, path.string() + ": 'spectrogram' must be rank 2");
    }
    MelSpectrogram m;
    m.values = Matrix(t.dims[0], t.dims[1], t.data);
    m.content_frames = t.dims[0];
    m.log_floor_value = log_floor_value;
    return m;
}

void write_patch_stats_csv(std::ostream& os, const PatchStats& stats) {
    os << "patch_index,time_idx,freq_idx,mean,std\n";
    os << std::setprecision(9);
    for (std::size_t i = 0; i < stats.size(); ++i) {
        os << i << ',' << stats.time_idx[i] << ',' << stats.freq_idx[i] << ',' << stats.mean[i]
           << ',' << stats.std[i] << '\n';
    }
}

PatchStats read_patch_stats_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("patch_index,time_idx,freq_idx,mean,std", 0) != 0) {
        fail(Errc::parse_error, "patch stats: unexpected header");
    }
    PatchStats s;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string f[5];
        for (auto& cell : f) {
            if (!std::getline(ss, cell, ',')) fail(Errc::parse_error, "patch stats: short row");
        }
        try {
            if (std::stoul(f[0]) != s.size()) {
                fail(Errc::parse_error, "patch stats: patch_index out of sequence");
            }
            s.time_idx.push_back(std::stoul(f[1]));
            s.freq_idx.push_back(std::stoul(f[2]));
            s.mean.push_back(std::stof(f[3]));
            s.std.push_back(std::stof(f[4]));
        } catch (const std::logic_error&) {
            fail(Errc::parse_error, "patch stats: bad number in row '" + line + "'");
        }
        s.padding.push_back(false);
    }
    return s;
}

}  // namespace prune_ast
