#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "prune_ast/analysis.hpp"
#include "prune_ast/forward.hpp"
#include "prune_ast/pruning.hpp"

namespace prune_ast {

inline constexpr int kTraceFormatVersion = 1;

/// Header `block,provenance,score,retained_flag`.
void write_attention_log_csv(std::ostream& os, const AttentionLog& log);
AttentionLog read_attention_log_csv(std::istream& is);

struct TraceMeta {
    std::string input;
    std::set<std::size_t> locations;
    std::size_t num_tokens = 0;
    std::size_t n_time = 0;
    std::size_t n_freq = 0;
    std::size_t content_frames = 0;
};

/// JSON document:
/// {"format":"prune-ast-trace","version":1,"input":..., "metric":..., "keep_rate":...,
///  "locations":[...], "num_tokens":N, "n_time":..., "n_freq":..., "content_frames":...,
///  "steps":[{"block":b,"retained":[...],"retained_scores":[...],
///            "pruned":[...],"pruned_scores":[...]}]}
std::string trace_to_json(const PruneTrace& trace, const TraceMeta& meta);
void parse_trace_json(const std::string& text, PruneTrace& trace, TraceMeta& meta);

/// Empty when the document conforms; otherwise one message per violation.
std::vector<std::string> validate_trace_json(const std::string& text);

/// Reads every `<stem>.trace.json` in `dir` with its `.attn.csv` and `.stats.csv`
/// siblings, sorted by stem.
std::vector<SampleRecord> load_trace_dir(const std::filesystem::path& dir);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace prune_ast
