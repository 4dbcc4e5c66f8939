#include "run_config.hpp"

#include <sstream>

#include "prune_ast/error.hpp"
#include "prune_ast/trace_io.hpp"

namespace prune_ast::cli {

using nlohmann::json;

namespace {

template <typename T>
void read_field(const json& obj, const char* key, T& dst, std::vector<std::string>& problems,
                const std::string& section) {
    if (!obj.contains(key)) return;
    try {
        dst = obj.at(key).get<T>();
    } catch (const json::exception&) {
        problems.push_back(section + "." + key + " has the wrong type");
    }
}

void apply_prune_object(const json& p, RunConfig& rc, std::optional<std::string>& metric,
                        std::vector<std::string>& problems) {
    if (p.contains("locations")) {
        try {
            const auto locs = p.at("locations").get<std::vector<std::size_t>>();
            rc.prune.locations = {locs.begin(), locs.end()};
        } catch (const json::exception&) {
            problems.emplace_back("prune.locations must be an array of block indices");
        }
    }
    read_field(p, "keep_rate", rc.prune.keep_rate, problems, "prune");
    if (p.contains("metric")) {
        if (p.at("metric").is_string()) {
            metric = p.at("metric").get<std::string>();
        } else {
            problems.emplace_back("prune.metric must be a string");
        }
    }
}

}  // namespace

std::set<std::size_t> parse_block_list(const std::string& text) {
    std::set<std::size_t> out;
    if (text.empty() || text == "none") return out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        unsigned long v = 0;
        try {
            v = std::stoul(item, &used);
        } catch (const std::logic_error&) {
            used = 0;
        }
        if (used == 0 || used != item.size() || item.front() == '-') {
            fail(Errc::config, "--prune-blocks: '" + item + "' is not a block index");
        }
        out.insert(v);
    }
    return out;
}

RunConfig resolve_config(const Overrides& o) {
    RunConfig rc;
    std::vector<std::string> problems;
    std::optional<std::string> metric;
    std::optional<std::string> aggregation;

    if (o.config_path) {
        json j;
        try {
            j = json::parse(read_text_file(*o.config_path));
        } catch (const json::exception& e) {
            fail(Errc::config, "config " + *o.config_path + ": " + e.what());
        }
        if (!j.is_object()) fail(Errc::config, "config " + *o.config_path + ": must be a JSON object");
        if (j.contains("model")) {
            const json& m = j["model"];
            read_field(m, "depth", rc.model.depth, problems, "model");
            read_field(m, "dim", rc.model.dim, problems, "model");
            read_field(m, "heads", rc.model.heads, problems, "model");
            read_field(m, "mlp_ratio", rc.model.mlp_ratio, problems, "model");
            read_field(m, "num_classes", rc.model.num_classes, problems, "model");
            read_field(m, "max_tokens", rc.model.max_tokens, problems, "model");
            read_field(m, "ln_eps", rc.model.ln_eps, problems, "model");
            if (m.contains("aggregation")) {
                if (m["aggregation"].is_string()) {
                    aggregation = m["aggregation"].get<std::string>();
                } else {
                    problems.emplace_back("model.aggregation must be a string");
                }
            }
        }
        if (j.contains("prune")) apply_prune_object(j["prune"], rc, metric, problems);
        if (j.contains("locations") || j.contains("keep_rate") || j.contains("metric")) {
            apply_prune_object(j, rc, metric, problems);
        }
        if (j.contains("frontend")) {
            const json& f = j["frontend"];
            read_field(f, "sample_rate", rc.frontend.sample_rate, problems, "frontend");
            read_field(f, "window_ms", rc.frontend.window_ms, problems, "frontend");
            read_field(f, "hop_ms", rc.frontend.hop_ms, problems, "frontend");
            read_field(f, "n_fft", rc.frontend.n_fft, problems, "frontend");
            read_field(f, "num_mel_bins", rc.frontend.num_mel_bins, problems, "frontend");
            read_field(f, "low_freq", rc.frontend.low_freq, problems, "frontend");
            read_field(f, "high_freq", rc.frontend.high_freq, problems, "frontend");
            read_field(f, "log_floor", rc.frontend.log_floor, problems, "frontend");
            read_field(f, "target_frames", rc.frontend.target_frames, problems, "frontend");
        }
        if (j.contains("normalization")) {
            read_field(j["normalization"], "mean", rc.norm_mean, problems, "normalization");
            read_field(j["normalization"], "std", rc.norm_std, problems, "normalization");
        }
        read_field(j, "seed", rc.seed, problems, "config");
        read_field(j, "jobs", rc.jobs, problems, "config");
        if (j.contains("weights") && j["weights"].is_string()) rc.weights = j["weights"].get<std::string>();
        if (j.contains("out_dir") && j["out_dir"].is_string()) rc.out_dir = j["out_dir"].get<std::string>();
    }

    if (o.weights) rc.weights = *o.weights;
    if (o.keep_rate) rc.prune.keep_rate = *o.keep_rate;
    if (o.metric) metric = *o.metric;
    if (o.prune_blocks) rc.prune.locations = parse_block_list(*o.prune_blocks);
    if (o.aggregation) aggregation = *o.aggregation;
    if (o.seed) rc.seed = *o.seed;
    if (o.jobs) rc.jobs = *o.jobs;
    if (o.out_dir) rc.out_dir = *o.out_dir;

    if (aggregation) {
        try {
            rc.model.aggregation = parse_aggregation(*aggregation);
        } catch (const Error& e) {
            problems.emplace_back(e.what());
        }
    }
    if (metric) {
        try {
            rc.prune.metric = parse_metric(*metric);
        } catch (const Error& e) {
            problems.emplace_back(e.what());
        }
    } else {
        rc.prune.metric = rc.model.aggregation == Aggregation::cls ? PruneMetric::attn_cls
                                                                   : PruneMetric::attn_mp;
    }
    if (!problems.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& p : problems) msg += "\n  " + p;
        fail(Errc::config, msg);
    }
    return rc;
}

void validate(const RunConfig& rc, const ValidationNeeds& needs) {
    std::vector<std::string> problems;
    auto collect = [&](auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            std::string msg = e.what();
            // Nested validators prefix a title line; keep only the field lines.
            std::stringstream ss(msg);
            std::string line;
            bool first = true;
            bool multi = msg.find('\n') != std::string::npos;
            while (std::getline(ss, line)) {
                if (first && multi) {
                    first = false;
                    continue;
                }
                first = false;
                const auto start = line.find_first_not_of(' ');
                problems.push_back(start == std::string::npos ? line : line.substr(start));
            }
        }
    };
    collect([&] { rc.model.validate(); });
    collect([&] { rc.prune.validate(rc.model); });
    if (rc.frontend.sample_rate <= 0) problems.emplace_back("frontend.sample_rate must be positive");
    if (rc.frontend.num_mel_bins == 0 || rc.frontend.num_mel_bins % kPatchSize != 0) {
        problems.emplace_back("frontend.num_mel_bins must be a positive multiple of 16");
    }
    if (rc.frontend.target_frames % kPatchSize != 0) {
        problems.emplace_back("frontend.target_frames must be 0 or a multiple of 16");
    }
    if (!(rc.frontend.high_freq > rc.frontend.low_freq)) {
        problems.emplace_back("frontend.high_freq must exceed frontend.low_freq");
    }
    if (!(rc.norm_std > 0.0f)) problems.emplace_back("normalization.std must be positive");
    if (rc.jobs < 1) problems.emplace_back("jobs must be >= 1");
    if (needs.weights && rc.weights.empty()) problems.emplace_back("weights: a weights file is required");
    if (needs.inputs && rc.inputs.empty()) problems.emplace_back("inputs: at least one input file is required");
    if (problems.empty()) return;
    std::string msg = "invalid configuration:";
    for (const auto& p : problems) msg += "\n  " + p;
    fail(Errc::config, msg);
}

json to_json(const RunConfig& rc) {
    json j;
    j["model"] = {{"depth", rc.model.depth},
                  {"dim", rc.model.dim},
                  {"heads", rc.model.heads},
                  {"mlp_ratio", rc.model.mlp_ratio},
                  {"patch_dim", rc.model.patch_dim},
                  {"num_classes", rc.model.num_classes},
                  {"max_tokens", rc.model.max_tokens},
                  {"ln_eps", rc.model.ln_eps},
                  {"aggregation", std::string(to_string(rc.model.aggregation))}};
    j["prune"] = {{"locations", std::vector<std::size_t>(rc.prune.locations.begin(), rc.prune.locations.end())},
                  {"keep_rate", rc.prune.keep_rate},
                  {"metric", std::string(to_string(rc.prune.metric))}};
    j["frontend"] = {{"sample_rate", rc.frontend.sample_rate},
                     {"window_ms", rc.frontend.window_ms},
                     {"hop_ms", rc.frontend.hop_ms},
                     {"n_fft", rc.frontend.n_fft},
                     {"num_mel_bins", rc.frontend.num_mel_bins},
                     {"low_freq", rc.frontend.low_freq},
                     {"high_freq", rc.frontend.high_freq},
                     {"log_floor", rc.frontend.log_floor},
                     {"mel_scale", "htk"},
                     {"window", "hann"},
                     {"target_frames", rc.frontend.target_frames}};
    j["normalization"] = {{"mean", rc.norm_mean}, {"std", rc.norm_std}};
    j["seed"] = rc.seed;
    j["weights"] = rc.weights.string();
    return j;
}

}  // namespace prune_ast::cli
