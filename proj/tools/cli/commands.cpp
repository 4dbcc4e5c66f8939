#include "commands.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "prune_ast/error.hpp"
#include "prune_ast/trace_io.hpp"
#include "prune_ast/weights.hpp"

namespace prune_ast::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kToolName = "prune-ast";
constexpr const char* kToolVersion = "0.1.0";

std::string fmt_float(double v, int digits = 9) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

std::string fmt_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the lowest-index failure.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
    std::vector<std::exception_ptr> errors(n);
    std::size_t next = 0;
    std::mutex mu;
    auto worker = [&] {
        for (;;) {
            std::size_t i;
            {
                std::lock_guard lock(mu);
                if (next >= n) return;
                i = next++;
            }
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min(std::max<std::size_t>(jobs, 1), std::max<std::size_t>(n, 1));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(Errc::io_failure, "cannot create " + dir.string() + ": " + ec.message());
}

void write_manifest(const RunConfig& rc, const std::string& command, const json& extra = json::object()) {
    json j;
    j["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
    j["command"] = command;
    j["config"] = to_json(rc);
    j["formats"] = {{"weights", kWeightFormatVersion}, {"trace", kTraceFormatVersion}};
    json inputs = json::array();
    for (const auto& p : rc.inputs) inputs.push_back(p.string());
    j["inputs"] = inputs;
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    write_text_file(rc.out_dir / "run_manifest.json", j.dump(1) + "\n");
}

void check_unique_stems(const std::vector<fs::path>& inputs) {
    std::set<std::string> seen;
    for (const auto& p : inputs) {
        if (!seen.insert(stem_of(p)).second) {
            fail(Errc::config, "inputs: two inputs share the stem '" + stem_of(p) + "'");
        }
    }
}

std::vector<PatchGrid> load_inputs(const RunConfig& rc) {
    std::vector<PatchGrid> grids(rc.inputs.size());
    parallel_for(rc.inputs.size(), rc.jobs, [&](std::size_t i) { grids[i] = load_input(rc.inputs[i], rc); });
    return grids;
}

void write_logits_csv(const fs::path& path, const std::vector<fs::path>& inputs,
                      const std::vector<std::vector<float>>& logits) {
    std::ostringstream os;
    os << "input";
    const std::size_t classes = logits.empty() ? 0 : logits.front().size();
    for (std::size_t c = 0; c < classes; ++c) os << ",logit_" << c;
    os << '\n';
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        os << inputs[i].string();
        for (float v : logits[i]) os << ',' << fmt_float(v);
        os << '\n';
    }
    write_text_file(path, os.str());
}

ClusterModel clusters_for(const fs::path& path, const std::vector<SampleRecord>& samples,
                          ClusterFeature feature, bool exclude_padding) {
    if (!path.empty()) return clusters_from_json(read_text_file(path));
    return fit_patch_clusters(samples, feature, exclude_padding);
}

}  // namespace

std::string stem_of(const fs::path& path) { return path.stem().string(); }

PatchGrid load_input(const fs::path& path, const RunConfig& rc) {
    const std::string ext = path.extension().string();
    const float floor_value = static_cast<float>(std::log(rc.frontend.log_floor));
    MelSpectrogram mel;
    if (ext == ".wav" || ext == ".WAV") {
        mel = compute_log_mel(load_wav(path), rc.frontend);
    } else if (ext == ".csv") {
        mel = import_spectrogram_csv(path, floor_value);
    } else if (ext == ".tpwt") {
        mel = import_spectrogram_tensor(path, floor_value);
    } else {
        fail(Errc::config, "input " + path.string() + ": unsupported extension (use .wav, .csv or .tpwt)");
    }
    if (mel.bins() != rc.frontend.num_mel_bins) {
        fail(Errc::shape_mismatch, "input " + path.string() + ": " + std::to_string(mel.bins()) +
                                       " mel bins, expected " + std::to_string(rc.frontend.num_mel_bins));
    }
    const std::size_t target = rc.frontend.target_frames ? rc.frontend.target_frames
                                                         : default_target_frames(mel.frames());
    mel = normalize(pad_or_trim(mel, target), rc.norm_mean, rc.norm_std);
    spdlog::debug("{}: {} content frames padded to {}", path.string(), mel.content_frames, target);
    return patchify(mel);
}

void cmd_infer(const RunConfig& rc, std::ostream& out) {
    validate(rc, {.weights = true, .inputs = true});
    const VitWeights w = load_weights(rc.weights, rc.model);
    ensure_dir(rc.out_dir);
    const auto grids = load_inputs(rc);
    std::vector<std::vector<float>> logits(grids.size());
    parallel_for(grids.size(), rc.jobs, [&](std::size_t i) {
        logits[i] = classify_forward(grids[i], w, rc.prune).logits;
    });
    write_logits_csv(rc.out_dir / "logits.csv", rc.inputs, logits);

    std::ostringstream mac;
    mac << "input,N,keep_rate,total_G\n";
    for (std::size_t i = 0; i < grids.size(); ++i) {
        const CostReport cost = total_macs(grids[i].size(), rc.model, rc.prune);
        mac << rc.inputs[i].string() << ',' << grids[i].size() << ',' << fmt_float(rc.prune.keep_rate, 6)
            << ',' << fmt_float(cost.total_g(), 6) << '\n';
        out << rc.inputs[i].string() << ": " << grids[i].size() << " tokens, "
            << fmt_float(cost.total_g(), 6) << " GMAC\n";
    }
    write_text_file(rc.out_dir / "mac.csv", mac.str());
    write_manifest(rc, "infer");
}

void cmd_trace(const RunConfig& rc, std::ostream& out) {
    validate(rc, {.weights = true, .inputs = true});
    check_unique_stems(rc.inputs);
    const VitWeights w = load_weights(rc.weights, rc.model);
    ensure_dir(rc.out_dir);
    parallel_for(rc.inputs.size(), rc.jobs, [&](std::size_t i) {
        const PatchGrid grid = load_input(rc.inputs[i], rc);
        const ForwardResult r = classify_forward(grid, w, rc.prune);
        const std::string stem = stem_of(rc.inputs[i]);

        std::ostringstream log;
        write_attention_log_csv(log, r.log);
        write_text_file(rc.out_dir / (stem + ".attn.csv"), log.str());

        std::ostringstream stats;
        write_patch_stats_csv(stats, patch_stats(grid));
        write_text_file(rc.out_dir / (stem + ".stats.csv"), stats.str());

        TraceMeta meta;
        meta.input = rc.inputs[i].string();
        meta.locations = rc.prune.locations;
        meta.num_tokens = grid.size();
        meta.n_time = grid.n_time;
        meta.n_freq = grid.n_freq;
        meta.content_frames = grid.content_frames;
        write_text_file(rc.out_dir / (stem + ".trace.json"), trace_to_json(r.trace, meta));
    });
    for (const auto& in : rc.inputs) out << "traced " << in.string() << '\n';
    write_manifest(rc, "trace");
}

void cmd_mac(const std::vector<std::size_t>& tokens, const std::vector<double>& keep_rates,
             const ModelConfig& model, const std::set<std::size_t>& locations, std::ostream& out) {
    for (double kr : keep_rates) {
        if (!(kr > 0.0 && kr <= 1.0)) fail(Errc::config, "--keep-rates: values must be in (0, 1]");
    }
    for (std::size_t b : locations) {
        if (b < 1 || b > model.depth) fail(Errc::config, "--prune-blocks: block outside model depth");
    }
    out << "N,keep_rate,total_G\n";
    for (std::size_t n : tokens) {
        for (double kr : keep_rates) {
            const CostReport r = total_macs(n, kr, model, locations);
            out << n << ',' << fmt_fixed(kr, 1) << ',' << fmt_fixed(r.total_g_rounded(), 1) << '\n';
        }
    }
}

AnalyzeMode parse_analyze_mode(const std::string& s) {
    if (s == "tau") return AnalyzeMode::tau;
    if (s == "gamma") return AnalyzeMode::gamma;
    if (s == "hist") return AnalyzeMode::hist;
    if (s == "cdf") return AnalyzeMode::cdf;
    if (s == "cluster") return AnalyzeMode::cluster;
    if (s == "all") return AnalyzeMode::all;
    fail(Errc::config, "--mode must be tau, gamma, hist, cdf, cluster or all");
}

std::string clusters_to_json(const ClusterModel& cm) {
    json j;
    j["feature"] = std::string(to_string(cm.feature));
    j["k"] = cm.k();
    j["centroids"] = cm.centroids;
    j["boundaries"] = cm.boundaries;
    j["shares"] = cm.shares;
    j["iterations"] = cm.iterations;
    return j.dump(1) + "\n";
}

ClusterModel clusters_from_json(const std::string& text) {
    ClusterModel cm;
    try {
        const json j = json::parse(text);
        cm.feature = parse_cluster_feature(j.at("feature").get<std::string>());
        cm.centroids = j.at("centroids").get<std::vector<double>>();
        cm.boundaries = j.at("boundaries").get<std::vector<double>>();
        cm.shares = j.value("shares", std::vector<double>{});
        cm.iterations = j.value("iterations", std::size_t{0});
    } catch (const json::exception& e) {
        fail(Errc::parse_error, std::string("clusters.json: ") + e.what());
    }
    if (cm.centroids.empty() || cm.boundaries.size() + 1 != cm.centroids.size() ||
        !std::is_sorted(cm.centroids.begin(), cm.centroids.end())) {
        fail(Errc::parse_error, "clusters.json: centroids must be sorted with k-1 boundaries");
    }
    return cm;
}

void cmd_analyze(const AnalyzeOptions& o, std::ostream& out) {
    if (o.bins < 1) fail(Errc::config, "--bins must be >= 1");
    const auto samples = load_trace_dir(o.trace_dir);
    const fs::path dir = o.out_dir.empty() ? o.trace_dir : o.out_dir;
    ensure_dir(dir);
    const ClusterModel cm = clusters_for(o.clusters, samples, o.feature, o.exclude_padding);
    const bool all = o.mode == AnalyzeMode::all;

    if (all || o.mode == AnalyzeMode::cluster || o.mode == AnalyzeMode::cdf) {
        write_text_file(dir / "clusters.json", clusters_to_json(cm));
        out << "clusters:";
        for (double c : cm.centroids) out << ' ' << fmt_float(c, 6);
        out << '\n';
    }
    if (all || o.mode == AnalyzeMode::tau) {
        const CorrelationReport r = tau_report(samples, cm);
        std::ostringstream os;
        os << "block,tau\n";
        for (const auto& [block, tau] : r.per_block) os << block << ',' << fmt_float(tau, 12) << '\n';
        write_text_file(dir / "tau_report.csv", os.str());
        out << "average tau " << fmt_float(r.average, 6) << '\n';
    }
    if (all || o.mode == AnalyzeMode::gamma) {
        const RatioReport r = ratio_report(samples, cm);
        std::ostringstream os;
        os << "block,cluster,gamma\n";
        for (const auto& [key, g] : r.gamma) os << key.first << ',' << key.second << ',' << fmt_float(g, 12) << '\n';
        write_text_file(dir / "gamma_report.csv", os.str());
        std::ostringstream gs;
        gs << "group,Gamma\n";
        for (const auto& g : r.groups) {
            gs << g.index << ',';
            try {
                const double v = gamma_group(r, g.index);
                gs << fmt_float(v, 12);
                out << "Gamma(" << g.index << ") " << fmt_float(v, 6) << '\n';
            } catch (const Error& e) {
                if (e.code() != Errc::undefined_value) throw;
                spdlog::warn("{}", e.what());
                gs << "NA";
            }
            gs << '\n';
        }
        write_text_file(dir / "Gamma_report.csv", gs.str());
    }
    if (all || o.mode == AnalyzeMode::hist) {
        const RetentionHistograms h = retention_histogram2d(samples, o.bins, o.exclude_padding);
        auto dump = [&](const Histogram2D& hist, const char* name) {
            std::ostringstream os;
            os << "mean_bin,std_bin,lognorm\n";
            const auto ln = hist.log_normalized();
            for (std::size_t m = 0; m < hist.bins; ++m)
                for (std::size_t s = 0; s < hist.bins; ++s)
                    os << m << ',' << s << ',' << fmt_float(ln[m * hist.bins + s], 9) << '\n';
            write_text_file(dir / name, os.str());
        };
        dump(h.input, "hist2d_input.csv");
        dump(h.retained, "hist2d_retained.csv");
        out << "histogram: " << h.input.total() << " input patches, " << h.retained.total() << " retained\n";
    }
    if (all || o.mode == AnalyzeMode::cdf) {
        const RetentionCdf c = retention_cdf(samples, &cm, o.exclude_padding);
        std::ostringstream os;
        os << "mean,cum_fraction\n";
        for (const auto& [m, f] : c.points) os << fmt_float(m, 9) << ',' << fmt_float(f, 12) << '\n';
        write_text_file(dir / "cdf.csv", os.str());
    }
}

void cmd_ablate(const RunConfig& rc, const AblateOptions& o, std::ostream& out) {
    validate(rc, {.weights = true, .inputs = true});
    if (o.block < 1 || o.block > rc.model.depth) {
        fail(Errc::config, "--block " + std::to_string(o.block) + " outside [1, " +
                               std::to_string(rc.model.depth) + "]");
    }
    const VitWeights w = load_weights(rc.weights, rc.model);
    ensure_dir(rc.out_dir);
    const auto grids = load_inputs(rc);

    std::vector<PatchStats> stats;
    for (const auto& g : grids) stats.push_back(patch_stats(g));
    ClusterModel cm;
    if (!o.clusters.empty()) {
        cm = clusters_from_json(read_text_file(o.clusters));
    } else {
        std::vector<double> means;
        for (const auto& s : stats) means.insert(means.end(), s.mean.begin(), s.mean.end());
        cm = kmeans_1d(std::span<const double>(means));
        cm.feature = ClusterFeature::mean;
    }

    std::vector<ForwardResult> results(grids.size());
    parallel_for(grids.size(), rc.jobs, [&](std::size_t i) {
        ForwardOptions opts;
        opts.discard = DiscardSpec{o.block, o.group, cm};
        results[i] = classify_forward(grids[i], w, rc.prune, opts);
    });

    std::vector<std::vector<float>> logits;
    std::ostringstream os;
    os << "input,cluster,input_count,survivor_count\n";
    for (std::size_t i = 0; i < grids.size(); ++i) {
        logits.push_back(results[i].logits);
        std::vector<std::size_t> in_count(cm.k() + 1, 0), kept(cm.k() + 1, 0);
        for (std::size_t p = 0; p < stats[i].size(); ++p) ++in_count[assign_cluster(cm, stats[i].mean[p])];
        for (std::size_t p : results[i].discard->survivors) ++kept[assign_cluster(cm, stats[i].mean[p])];
        for (std::size_t c = 1; c <= cm.k(); ++c) {
            os << rc.inputs[i].string() << ',' << c << ',' << in_count[c] << ',' << kept[c] << '\n';
        }
        out << rc.inputs[i].string() << ": " << results[i].discard->removed.size() << " tokens discarded after block "
            << o.block << '\n';
    }
    write_logits_csv(rc.out_dir / "logits.csv", rc.inputs, logits);
    write_text_file(rc.out_dir / "survivors.csv", os.str());
    write_text_file(rc.out_dir / "clusters.json", clusters_to_json(cm));
    write_manifest(rc, "ablate",
                   {{"ablation", {{"group", std::string(to_string(o.group))}, {"block", o.block}}}});
}

void cmd_schedule(const KeepRateSchedule& s, std::size_t epochs, std::ostream& out) {
    if (!(s.target_kr > 0.0 && s.target_kr <= 1.0)) fail(Errc::config, "--target must be in (0, 1]");
    out << "epoch,keep_rate\n";
    for (std::size_t e = 0; e < epochs; ++e) out << e << ',' << fmt_float(keep_rate_at_epoch(s, e), 9) << '\n';
}

void cmd_make_toy_weights(const RunConfig& rc, const fs::path& path, double sigma) {
    rc.model.validate();
    if (!(sigma >= 0.0)) fail(Errc::config, "--sigma must be >= 0");
    if (path.has_parent_path()) ensure_dir(path.parent_path());
    save_weights(random_init(rc.model, rc.seed, sigma), path);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Token-pruned audio spectrogram transformer: inference, tracing and analysis", kToolName};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    Overrides ov;
    std::vector<std::string> inputs;
    auto add_common = [&](CLI::App* sub, bool with_inputs) {
        sub->add_option("--config", ov.config_path, "JSON run configuration");
        sub->add_option("--weights", ov.weights, "weight file (TPWT container)");
        sub->add_option("--keep-rate", ov.keep_rate, "fraction of tokens kept at each pruning block");
        sub->add_option("--metric", ov.metric, "attn-mp | attn-cls | intensity | variation");
        sub->add_option("--prune-blocks", ov.prune_blocks, "comma-separated 1-based blocks, or 'none'");
        sub->add_option("--aggregation", ov.aggregation, "cls | mean");
        sub->add_option("--seed", ov.seed, "seed for toy weights");
        sub->add_option("--jobs", ov.jobs, "inputs processed concurrently");
        sub->add_option("--out-dir", ov.out_dir, "output directory");
        if (with_inputs) sub->add_option("inputs", inputs, "input .wav / .csv / .tpwt files");
    };

    auto* infer = app.add_subcommand("infer", "classify inputs; writes logits.csv and mac.csv");
    add_common(infer, true);
    auto* trace = app.add_subcommand("trace", "write per-input attention logs and prune traces");
    add_common(trace, true);

    auto* mac = app.add_subcommand("mac", "MAC table in G for a ViT-B sized model");
    std::string mac_tokens = "64,256,512";
    std::string mac_rates = "1.0,0.9,0.8,0.7,0.6,0.5,0.4";
    std::string mac_blocks = "4,7,10";
    std::string mac_agg = "cls";
    mac->add_option("--tokens", mac_tokens, "comma-separated token counts");
    mac->add_option("--keep-rates", mac_rates, "comma-separated keep rates");
    mac->add_option("--prune-blocks", mac_blocks, "comma-separated 1-based blocks");
    mac->add_option("--aggregation", mac_agg, "cls counts the CLS token, mean does not");

    auto* analyze = app.add_subcommand("analyze", "statistics over a trace directory");
    AnalyzeOptions aopt;
    std::string mode = "all", feature = "mean", analyze_out, clusters_path;
    std::string trace_dir;
    analyze->add_option("trace_dir", trace_dir, "directory written by `trace`")->required();
    analyze->add_option("--mode", mode, "tau | gamma | hist | cdf | cluster | all");
    analyze->add_option("--feature", feature, "cluster feature: mean | std");
    analyze->add_option("--bins", aopt.bins, "histogram bins per axis");
    analyze->add_flag("--exclude-padding", aopt.exclude_padding, "drop patches from appended frames");
    analyze->add_option("--clusters", clusters_path, "reuse a clusters.json instead of fitting");
    analyze->add_option("--out-dir", analyze_out, "output directory (default: trace_dir)");

    auto* ablate = app.add_subcommand("ablate", "discard an intensity group after a block");
    add_common(ablate, true);
    std::string group = "L", ablate_clusters;
    std::size_t ablate_block = 1;
    ablate->add_option("--group", group, "L (C1, C2) or H (C4, C5)");
    ablate->add_option("--block", ablate_block, "1-based block after which the group is dropped");
    ablate->add_option("--clusters", ablate_clusters, "clusters.json fitted on intensity");

    auto* schedule = app.add_subcommand("schedule", "keep-rate per epoch");
    KeepRateSchedule sched{0, 0, 0.5};
    std::size_t epochs = 100;
    schedule->add_option("--start", sched.start_epoch, "epoch at which the keep rate starts to fall");
    schedule->add_option("--duration", sched.duration_epochs, "epochs spent decaying");
    schedule->add_option("--target", sched.target_kr, "final keep rate");
    schedule->add_option("--epochs", epochs, "rows to print");

    auto* toy = app.add_subcommand("make-toy-weights", "write deterministic random weights");
    add_common(toy, false);
    std::string toy_path;
    double sigma = 0.02;
    toy->add_option("path", toy_path, "output weight file")->required();
    toy->add_option("--sigma", sigma, "truncated-normal standard deviation");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << kToolVersion << '\n';
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }

    try {
        auto resolved = [&] {
            RunConfig rc = resolve_config(ov);
            rc.inputs.assign(inputs.begin(), inputs.end());
            return rc;
        };
        if (*infer) {
            cmd_infer(resolved(), out);
        } else if (*trace) {
            cmd_trace(resolved(), out);
        } else if (*mac) {
            ModelConfig m = ModelConfig::vit_base(parse_aggregation(mac_agg));
            std::vector<std::size_t> tokens;
            for (std::size_t n : parse_block_list(mac_tokens)) tokens.push_back(n);
            std::vector<double> rates;
            std::stringstream ss(mac_rates);
            for (std::string item; std::getline(ss, item, ',');) {
                try {
                    rates.push_back(std::stod(item));
                } catch (const std::logic_error&) {
                    fail(Errc::config, "--keep-rates: '" + item + "' is not a number");
                }
            }
            cmd_mac(tokens, rates, m, parse_block_list(mac_blocks), out);
        } else if (*analyze) {
            aopt.trace_dir = trace_dir;
            aopt.out_dir = analyze_out;
            aopt.mode = parse_analyze_mode(mode);
            aopt.feature = parse_cluster_feature(feature);
            aopt.clusters = clusters_path;
            cmd_analyze(aopt, out);
        } else if (*ablate) {
            AblateOptions o{parse_discard_group(group), ablate_block, ablate_clusters};
            cmd_ablate(resolved(), o, out);
        } else if (*schedule) {
            cmd_schedule(sched, epochs, out);
        } else if (*toy) {
            cmd_make_toy_weights(resolved(), toy_path, sigma);
        }
    } catch (const Error& e) {
        err << "error [" << errc_name(e.code()) << "]: " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const fs::filesystem_error& e) {
        err << "error [io_failure]: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace prune_ast::cli
