#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

#include "commands.hpp"
#include "fixtures.hpp"
#include "prune_ast/error.hpp"
#include "prune_ast/trace_io.hpp"

using namespace prune_ast;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

/// Noise under a tone whose level steps up halfway, so patch means spread widely.
fs::path write_clip(const fs::path& dir, const std::string& name, double seconds, unsigned seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<float> nd(0.0f, 0.05f);
    Waveform w;
    w.sample_rate = 16000;
    const auto n = static_cast<std::size_t>(seconds * 16000);
    w.samples.resize(n);
    const double f = 300.0 + 150.0 * seed;
    for (std::size_t i = 0; i < n; ++i) {
        const double amp = i < n / 2 ? 0.05 : 0.5;
        w.samples[i] = static_cast<float>(amp * std::sin(2 * std::numbers::pi * f * i / 16000.0)) + nd(rng);
    }
    const fs::path p = dir / name;
    write_wav_pcm16(p, w);
    return p;
}

std::size_t count_lines(const std::string& text) {
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

struct CliFixture : ::testing::Test {
    fs::path dir;
    fs::path weights;

    void SetUp() override {
        dir = fixture::temp_dir(::testing::UnitTest::GetInstance()->current_test_info()->name());
        weights = dir / "toy.tpwt";
        ASSERT_EQ(run_cli({"make-toy-weights", weights.string(), "--seed", "3", "--sigma", "0.1"}).code, 0);
    }
};

}  // namespace

TEST_F(CliFixture, InferFullKeepRateMatchesNoPruning) {
    const auto clip = write_clip(dir, "a.wav", 1.0, 1);
    const auto r1 = run_cli({"infer", "--weights", weights.string(), "--keep-rate", "1.0", "--out-dir",
                             (dir / "kr1").string(), clip.string()});
    const auto r2 = run_cli({"infer", "--weights", weights.string(), "--prune-blocks", "none", "--out-dir",
                             (dir / "none").string(), clip.string()});
    ASSERT_EQ(r1.code, 0) << r1.err;
    ASSERT_EQ(r2.code, 0) << r2.err;
    EXPECT_EQ(read_text_file(dir / "kr1" / "logits.csv"), read_text_file(dir / "none" / "logits.csv"));
    EXPECT_TRUE(fs::exists(dir / "kr1" / "run_manifest.json"));
    const auto manifest = nlohmann::json::parse(read_text_file(dir / "kr1" / "run_manifest.json"));
    EXPECT_EQ(manifest["command"], "infer");
}

TEST_F(CliFixture, TenSecondClipGives512Tokens) {
    const auto clip = write_clip(dir, "long.wav", 10.0, 2);
    const auto r = run_cli({"infer", "--weights", weights.string(), "--keep-rate", "0.5", "--out-dir", dir.string(),
                            clip.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream mac(read_text_file(dir / "mac.csv"));
    std::string header, row;
    std::getline(mac, header);
    std::getline(mac, row);
    EXPECT_EQ(header, "input,N,keep_rate,total_G");
    EXPECT_NE(row.find(",512,0.5,"), std::string::npos) << row;
}

TEST_F(CliFixture, ExitCodesByErrorClass) {
    const auto clip = write_clip(dir, "a.wav", 1.0, 1);
    EXPECT_EQ(run_cli({"infer", clip.string()}).code, 1);
    EXPECT_EQ(run_cli({"infer", "--weights", (dir / "missing.tpwt").string(), clip.string()}).code, 2);
    EXPECT_EQ(run_cli({"infer", "--weights", weights.string(), (dir / "missing.wav").string()}).code, 2);
    EXPECT_EQ(run_cli({"no-such-command"}).code, 1);
    write_text_file(dir / "bad.wav", "RIFF");
    EXPECT_NE(run_cli({"infer", "--weights", weights.string(), (dir / "bad.wav").string()}).code, 0);
}

TEST_F(CliFixture, ValidationNamesEveryField) {
    const auto r = run_cli({"infer", "--keep-rate", "1.5", "--prune-blocks", "0,13"});
    EXPECT_EQ(r.code, 1);
    for (const char* needle : {"keep_rate", "block 0", "block 13", "weights", "inputs"})
        EXPECT_NE(r.err.find(needle), std::string::npos) << needle << "\n" << r.err;

    const auto m = run_cli({"infer", "--metric", "bogus", "--aggregation", "nope", "--weights", weights.string()});
    EXPECT_EQ(m.code, 1);
    EXPECT_NE(m.err.find("bogus"), std::string::npos) << m.err;
    EXPECT_NE(m.err.find("nope"), std::string::npos) << m.err;
}

TEST_F(CliFixture, TraceRowCountsAndSchema) {
    const auto clip = write_clip(dir, "a.wav", 1.0, 1);
    const auto r = run_cli({"trace", "--weights", weights.string(), "--keep-rate", "0.9", "--out-dir",
                            (dir / "t").string(), clip.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(count_lines(read_text_file(dir / "t" / "a.attn.csv")), 1u + 64 * 4 + 58 * 3 + 53 * 3 + 48 * 2);
    EXPECT_EQ(count_lines(read_text_file(dir / "t" / "a.stats.csv")), 1u + 64);
    const std::string json_text = read_text_file(dir / "t" / "a.trace.json");
    EXPECT_TRUE(validate_trace_json(json_text).empty());
    const auto samples = load_trace_dir(dir / "t");
    ASSERT_EQ(samples.size(), 1u);
    ASSERT_EQ(samples[0].trace.steps.size(), 3u);
    EXPECT_EQ(samples[0].trace.steps[2].retained.size(), 48u);
}

TEST_F(CliFixture, OutputsIdenticalAcrossJobCounts) {
    std::vector<std::string> clips;
    for (unsigned i = 0; i < 4; ++i) clips.push_back(write_clip(dir, "c" + std::to_string(i) + ".wav", 1.0 + i, i).string());
    for (const char* jobs : {"1", "3"}) {
        for (const char* cmd : {"trace", "infer"}) {
            std::vector<std::string> args{cmd, "--weights", weights.string(), "--keep-rate", "0.6", "--jobs", jobs,
                                          "--out-dir", (dir / (std::string(cmd) + jobs)).string()};
            args.insert(args.end(), clips.begin(), clips.end());
            ASSERT_EQ(run_cli(args).code, 0);
        }
    }
    for (const char* cmd : {"trace", "infer"}) {
        std::size_t compared = 0;
        for (const auto& e : fs::directory_iterator(dir / (std::string(cmd) + "1"))) {
            const auto name = e.path().filename();
            if (name == "run_manifest.json") continue;
            EXPECT_EQ(read_text_file(e.path()), read_text_file(dir / (std::string(cmd) + "3") / name)) << name;
            ++compared;
        }
        EXPECT_GT(compared, 0u);
    }
}

TEST_F(CliFixture, AnalyzeMonotoneAndUniformLogs) {
    const ClusterModel cm = fixture::integer_clusters();
    write_text_file(dir / "clusters.json", cli::clusters_to_json(cm));
    std::mt19937 rng(14);
    std::uniform_real_distribution<float> u(0.6f, 5.4f);
    for (const char* kind : {"mono", "flat"}) {
        const fs::path td = dir / kind;
        fs::create_directories(td);
        for (int k = 0; k < 6; ++k) {
            std::vector<float> means(64);
            for (float& m : means) m = u(rng);
            const bool mono = std::string(kind) == "mono";
            auto s = fixture::synthetic_sample(means, {4, 7, 10}, 0.5, 12, [&](std::size_t, std::size_t p) {
                return mono ? static_cast<float>(assign_cluster(cm, means[p])) : 0.5f;
            });
            TraceMeta meta;
            meta.input = "s" + std::to_string(k);
            meta.locations = s.locations;
            meta.num_tokens = 64;
            meta.n_time = 8;
            meta.n_freq = 8;
            meta.content_frames = 128;
            const std::string stem = "s" + std::to_string(k);
            write_text_file(td / (stem + ".trace.json"), trace_to_json(s.trace, meta));
            std::ostringstream log, stats;
            write_attention_log_csv(log, s.log);
            write_patch_stats_csv(stats, s.stats);
            write_text_file(td / (stem + ".attn.csv"), log.str());
            write_text_file(td / (stem + ".stats.csv"), stats.str());
        }
        const auto r = run_cli({"analyze", td.string(), "--clusters", (dir / "clusters.json").string(), "--bins", "7"});
        ASSERT_EQ(r.code, 0) << r.err;
        EXPECT_EQ(count_lines(read_text_file(td / "hist2d_input.csv")), 1u + 49);
        EXPECT_EQ(count_lines(read_text_file(td / "hist2d_retained.csv")), 1u + 49);
        if (std::string(kind) == "mono") {
            std::istringstream tau(read_text_file(td / "tau_report.csv"));
            std::string line;
            std::getline(tau, line);
            std::size_t rows = 0;
            while (std::getline(tau, line)) {
                EXPECT_EQ(line.substr(line.find(',') + 1), "1") << line;
                ++rows;
            }
            EXPECT_EQ(rows, 12u);
        } else {
            EXPECT_EQ(read_text_file(td / "Gamma_report.csv"), "group,Gamma\n1,1\n2,1\n3,1\n");
        }
    }
}

TEST_F(CliFixture, AblateLowGroupRemovesPadding) {
    const auto clip = write_clip(dir, "short.wav", 0.7, 1);  // 68 frames padded to 128
    const auto r = run_cli({"ablate", "--weights", weights.string(), "--group", "L", "--block", "1", "--out-dir",
                            dir.string(), clip.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const ClusterModel cm = cli::clusters_from_json(read_text_file(dir / "clusters.json"));
    {
        cli::RunConfig rc;
        const PatchGrid g = cli::load_input(clip, rc);
        const PatchStats st = patch_stats(g);
        std::size_t padding = 0;
        for (std::size_t p = 0; p < st.size(); ++p) {
            if (!st.padding[p]) continue;
            ++padding;
            EXPECT_EQ(assign_cluster(cm, st.mean[p]), 1u) << p;
        }
        EXPECT_EQ(padding, 3u * 8);
    }
    std::istringstream surv(read_text_file(dir / "survivors.csv"));
    std::string line;
    std::getline(surv, line);
    while (std::getline(surv, line)) {
        std::stringstream ss(line);
        std::string input, cluster, in_count, kept;
        std::getline(ss, input, ',');
        std::getline(ss, cluster, ',');
        std::getline(ss, in_count, ',');
        std::getline(ss, kept, ',');
        if (cluster == "1" || cluster == "2") EXPECT_EQ(kept, "0") << line;
        else EXPECT_EQ(kept, in_count) << line;
    }
}

TEST_F(CliFixture, AblateEmptyHighGroupMatchesInfer) {
    const auto clip = write_clip(dir, "a.wav", 1.0, 1);
    ClusterModel far;
    far.centroids = {100, 200, 300, 400, 500};
    far.boundaries = {150, 250, 350, 450};
    write_text_file(dir / "far.json", cli::clusters_to_json(far));
    const auto a = run_cli({"ablate", "--weights", weights.string(), "--group", "H", "--block", "3", "--keep-rate",
                            "0.7", "--clusters", (dir / "far.json").string(), "--out-dir", (dir / "ab").string(),
                            clip.string()});
    const auto i = run_cli({"infer", "--weights", weights.string(), "--keep-rate", "0.7", "--out-dir",
                            (dir / "in").string(), clip.string()});
    ASSERT_EQ(a.code, 0) << a.err;
    ASSERT_EQ(i.code, 0) << i.err;
    EXPECT_EQ(read_text_file(dir / "ab" / "logits.csv"), read_text_file(dir / "in" / "logits.csv"));
}

TEST_F(CliFixture, AblateBlockOutOfRange) {
    const auto clip = write_clip(dir, "a.wav", 1.0, 1);
    const auto r = run_cli({"ablate", "--weights", weights.string(), "--block", "13", clip.string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("13"), std::string::npos);
}

TEST(CliMisc, ScheduleEndpoints) {
    std::ostringstream out, err;
    ASSERT_EQ(cli::run({"schedule", "--start", "5", "--duration", "10", "--target", "0.5", "--epochs", "20"}, out, err), 0);
    std::istringstream rows(out.str());
    std::vector<std::string> lines;
    for (std::string l; std::getline(rows, l);) lines.push_back(l);
    ASSERT_EQ(lines.size(), 21u);
    EXPECT_EQ(lines[1], "0,1");
    EXPECT_EQ(lines[6], "5,1");
    EXPECT_EQ(lines[11], "10,0.75");
    EXPECT_EQ(lines[16], "15,0.5");
    EXPECT_EQ(lines[20], "19,0.5");
}

TEST(CliMisc, MacTable) {
    std::ostringstream out, err;
    ASSERT_EQ(cli::run({"mac", "--tokens", "512", "--keep-rates", "1.0,0.4"}, out, err), 0);
    EXPECT_EQ(out.str(), "N,keep_rate,total_G\n512,1.0,48.5\n512,0.4,20.8\n");
}

TEST(CliMisc, BlockListParsing) {
    EXPECT_EQ(cli::parse_block_list("4,7,10"), (std::set<std::size_t>{4, 7, 10}));
    EXPECT_TRUE(cli::parse_block_list("none").empty());
    EXPECT_TRUE(cli::parse_block_list("").empty());
    EXPECT_THROW(cli::parse_block_list("4,x"), Error);
}

TEST(CliMisc, ConfigFileAndOverrides) {
    const auto dir = fixture::temp_dir("cli_config");
    write_text_file(dir / "c.json", R"({"prune":{"locations":[2,3],"keep_rate":0.25},"model":{"depth":4}})");
    cli::Overrides o;
    o.config_path = (dir / "c.json").string();
    cli::RunConfig rc = cli::resolve_config(o);
    EXPECT_EQ(rc.prune.locations, (std::set<std::size_t>{2, 3}));
    EXPECT_EQ(rc.prune.keep_rate, 0.25);
    EXPECT_EQ(rc.model.depth, 4u);
    EXPECT_EQ(rc.prune.metric, PruneMetric::attn_mp);
    o.keep_rate = 0.5;
    o.aggregation = "cls";
    rc = cli::resolve_config(o);
    EXPECT_EQ(rc.prune.keep_rate, 0.5);
    EXPECT_EQ(rc.prune.metric, PruneMetric::attn_cls);
    write_text_file(dir / "bad.json", "{");
    o.config_path = (dir / "bad.json").string();
    EXPECT_THROW(cli::resolve_config(o), Error);
}
