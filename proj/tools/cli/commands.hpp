#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "prune_ast/analysis.hpp"
#include "prune_ast/forward.hpp"
#include "prune_ast/frontend.hpp"
#include "prune_ast/mac.hpp"
#include "run_config.hpp"

namespace prune_ast::cli {

/// Parses `args` (without the program name), runs the subcommand and returns the
/// process exit status: 0 ok, 1 usage/config, 2 I/O, 3 numerical.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Input file -> normalized, padded spectrogram patch grid. Dispatches on extension:
/// .wav audio, .csv raw log-mel frames, .tpwt tensor container.
PatchGrid load_input(const std::filesystem::path& path, const RunConfig& rc);

std::string stem_of(const std::filesystem::path& path);

void cmd_infer(const RunConfig& rc, std::ostream& out);
void cmd_trace(const RunConfig& rc, std::ostream& out);
void cmd_mac(const std::vector<std::size_t>& tokens, const std::vector<double>& keep_rates,
             const ModelConfig& model, const std::set<std::size_t>& locations, std::ostream& out);

enum class AnalyzeMode { tau, gamma, hist, cdf, cluster, all };
AnalyzeMode parse_analyze_mode(const std::string& s);

struct AnalyzeOptions {
    std::filesystem::path trace_dir;
    std::filesystem::path out_dir;
    AnalyzeMode mode = AnalyzeMode::all;
    ClusterFeature feature = ClusterFeature::mean;
    std::size_t bins = 20;
    bool exclude_padding = false;
    std::filesystem::path clusters;  // optional clusters.json to reuse
};
void cmd_analyze(const AnalyzeOptions& opts, std::ostream& out);

struct AblateOptions {
    DiscardGroup group = DiscardGroup::low;
    std::size_t block = 1;
    std::filesystem::path clusters;  // optional; otherwise fitted on the inputs
};
void cmd_ablate(const RunConfig& rc, const AblateOptions& opts, std::ostream& out);

void cmd_schedule(const KeepRateSchedule& s, std::size_t epochs, std::ostream& out);

void cmd_make_toy_weights(const RunConfig& rc, const std::filesystem::path& path, double sigma);

std::string clusters_to_json(const ClusterModel& cm);
ClusterModel clusters_from_json(const std::string& text);

}  // namespace prune_ast::cli
