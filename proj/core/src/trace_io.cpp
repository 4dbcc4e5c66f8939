#include "prune_ast/trace_io.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "prune_ast/error.hpp"

namespace prune_ast {

using nlohmann::json;

namespace {

constexpr const char* kTraceFormat = "prune-ast-trace";

template <typename T>
std::vector<T> array_of(const json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_array()) {
        fail(Errc::parse_error, std::string("trace: '") + key + "' must be an array");
    }
    return j.at(key).get<std::vector<T>>();
}

}  // namespace

void write_attention_log_csv(std::ostream& os, const AttentionLog& log) {
    os << "block,provenance,score,retained_flag\n" << std::setprecision(9);
    for (const auto& e : log) {
        os << e.block << ',' << e.provenance << ',' << e.score << ',' << (e.retained ? 1 : 0) << '\n';
    }
}

AttentionLog read_attention_log_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("block,provenance,score,retained_flag", 0) != 0) {
        fail(Errc::parse_error, "attention log: unexpected header");
    }
    AttentionLog log;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string f[4];
        for (auto& cell : f) {
            if (!std::getline(ss, cell, ',')) fail(Errc::parse_error, "attention log: short row");
        }
        try {
            AttentionLogEntry e;
            e.block = std::stoul(f[0]);
            e.provenance = std::stoul(f[1]);
            e.score = std::stof(f[2]);
            e.retained = std::stoi(f[3]) != 0;
            log.push_back(e);
        } catch (const std::logic_error&) {
            fail(Errc::parse_error, "attention log: bad row '" + line + "'");
        }
    }
    return log;
}

std::string trace_to_json(const PruneTrace& trace, const TraceMeta& meta) {
    json j;
    j["format"] = kTraceFormat;
    j["version"] = kTraceFormatVersion;
    j["input"] = meta.input;
    j["metric"] = std::string(to_string(trace.metric));
    j["keep_rate"] = trace.keep_rate;
    j["locations"] = std::vector<std::size_t>(meta.locations.begin(), meta.locations.end());
    j["num_tokens"] = meta.num_tokens;
    j["n_time"] = meta.n_time;
    j["n_freq"] = meta.n_freq;
    j["content_frames"] = meta.content_frames;
    json steps = json::array();
    for (const auto& s : trace.steps) {
        steps.push_back({{"block", s.block},
                         {"retained", s.retained},
                         {"retained_scores", s.retained_scores},
                         {"pruned", s.pruned},
                         {"pruned_scores", s.pruned_scores}});
    }
    j["steps"] = std::move(steps);
    return j.dump(1) + "\n";
}

std::vector<std::string> validate_trace_json(const std::string& text) {
    std::vector<std::string> problems;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        return {std::string("not valid JSON: ") + e.what()};
    }
    if (!j.is_object()) return {"top level must be an object"};
    auto require = [&](const char* key, auto pred, const char* what) {
        if (!j.contains(key)) {
            problems.push_back(std::string("missing '") + key + "'");
        } else if (!pred(j.at(key))) {
            problems.push_back(std::string("'") + key + "' must be " + what);
        }
    };
    auto is_uint = [](const json& v) { return v.is_number_unsigned(); };
    auto is_uint_array = [](const json& v) {
        return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number_unsigned(); });
    };
    auto is_num_array = [](const json& v) {
        return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number(); });
    };
    require("format", [](const json& v) { return v.is_string() && v.get<std::string>() == kTraceFormat; },
            "\"prune-ast-trace\"");
    require("version", [](const json& v) { return v.is_number_integer() && v.get<int>() == kTraceFormatVersion; },
            "1");
    require("input", [](const json& v) { return v.is_string(); }, "a string");
    require("metric", [](const json& v) {
        if (!v.is_string()) return false;
        const auto s = v.get<std::string>();
        return s == "attn-mp" || s == "attn-cls" || s == "intensity" || s == "variation";
    }, "a known metric");
    require("keep_rate", [](const json& v) {
        return v.is_number() && v.get<double>() > 0.0 && v.get<double>() <= 1.0;
    }, "a number in (0, 1]");
    require("locations", is_uint_array, "an array of block indices");
    require("num_tokens", is_uint, "a non-negative integer");
    require("n_time", is_uint, "a non-negative integer");
    require("n_freq", is_uint, "a non-negative integer");
    require("content_frames", is_uint, "a non-negative integer");
    require("steps", [](const json& v) { return v.is_array(); }, "an array");
    if (!problems.empty()) return problems;

    const double kr = j["keep_rate"].get<double>();
    for (std::size_t i = 0; i < j["steps"].size(); ++i) {
        const json& s = j["steps"][i];
        const std::string at = "steps[" + std::to_string(i) + "]";
        if (!s.is_object()) {
            problems.push_back(at + " must be an object");
            continue;
        }
        bool ok = s.contains("block") && s["block"].is_number_unsigned();
        for (const char* k : {"retained", "pruned"}) ok = ok && s.contains(k) && is_uint_array(s[k]);
        for (const char* k : {"retained_scores", "pruned_scores"}) ok = ok && s.contains(k) && is_num_array(s[k]);
        if (!ok) {
            problems.push_back(at + " needs block, retained, retained_scores, pruned, pruned_scores");
            continue;
        }
        const auto r = s["retained"].get<std::vector<std::size_t>>();
        const auto p = s["pruned"].get<std::vector<std::size_t>>();
        if (r.size() != s["retained_scores"].size() || p.size() != s["pruned_scores"].size()) {
            problems.push_back(at + ": score arrays must match id arrays");
        }
        std::vector<std::size_t> all = r;
        all.insert(all.end(), p.begin(), p.end());
        std::sort(all.begin(), all.end());
        if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
            problems.push_back(at + ": retained and pruned ids overlap or repeat");
        }
        if (r.size() != keep_count(all.size(), kr)) {
            problems.push_back(at + ": retained count is not ceil(n * keep_rate)");
        }
    }
    return problems;
}

void parse_trace_json(const std::string& text, PruneTrace& trace, TraceMeta& meta) {
    if (auto problems = validate_trace_json(text); !problems.empty()) {
        std::string msg = "trace JSON does not match schema:";
        for (const auto& p : problems) msg += "\n  " + p;
        fail(Errc::parse_error, msg);
    }
    const json j = json::parse(text);
    trace.metric = parse_metric(j["metric"].get<std::string>());
    trace.keep_rate = j["keep_rate"].get<double>();
    trace.steps.clear();
    for (const json& s : j["steps"]) {
        PruneStep st;
        st.block = s["block"].get<std::size_t>();
        st.retained = array_of<std::size_t>(s, "retained");
        st.retained_scores = array_of<float>(s, "retained_scores");
        st.pruned = array_of<std::size_t>(s, "pruned");
        st.pruned_scores = array_of<float>(s, "pruned_scores");
        trace.steps.push_back(std::move(st));
    }
    meta.input = j["input"].get<std::string>();
    const auto locs = j["locations"].get<std::vector<std::size_t>>();
    meta.locations = {locs.begin(), locs.end()};
    meta.num_tokens = j["num_tokens"].get<std::size_t>();
    meta.n_time = j["n_time"].get<std::size_t>();
    meta.n_freq = j["n_freq"].get<std::size_t>();
    meta.content_frames = j["content_frames"].get<std::size_t>();
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io_failure, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::io_failure, "cannot write " + path.string());
    out << text;
    if (!out) fail(Errc::io_failure, "short write to " + path.string());
}

std::vector<SampleRecord> load_trace_dir(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) fail(Errc::io_failure, dir.string() + " is not a directory");
    const std::string suffix = ".trace.json";
    std::vector<std::string> stems;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.size() > suffix.size() && name.ends_with(suffix)) {
            stems.push_back(name.substr(0, name.size() - suffix.size()));
        }
    }
    std::sort(stems.begin(), stems.end());
    if (stems.empty()) fail(Errc::io_failure, "no *.trace.json files in " + dir.string());

    std::vector<SampleRecord> samples;
    for (const auto& stem : stems) {
        SampleRecord s;
        s.name = stem;
        TraceMeta meta;
        parse_trace_json(read_text_file(dir / (stem + suffix)), s.trace, meta);
        s.locations = meta.locations;
        {
            std::ifstream in(dir / (stem + ".attn.csv"));
            if (!in) fail(Errc::io_failure, "missing " + stem + ".attn.csv in " + dir.string());
            s.log = read_attention_log_csv(in);
        }
        {
            std::ifstream in(dir / (stem + ".stats.csv"));
            if (!in) fail(Errc::io_failure, "missing " + stem + ".stats.csv in " + dir.string());
            s.stats = read_patch_stats_csv(in);
        }
        if (s.stats.size() != meta.num_tokens) {
            fail(Errc::parse_error, stem + ": stats cover " + std::to_string(s.stats.size()) +
                                        " patches, trace reports " + std::to_string(meta.num_tokens));
        }
        for (std::size_t i = 0; i < s.stats.size(); ++i) {
            s.stats.padding[i] = s.stats.time_idx[i] * kPatchSize >= meta.content_frames;
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace prune_ast
