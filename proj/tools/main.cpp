#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cli/commands.hpp"

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("prune-ast"));
    spdlog::set_level(spdlog::level::warn);
    if (const char* level = std::getenv("PRUNE_AST_LOG")) spdlog::set_level(spdlog::level::from_str(level));
    std::vector<std::string> args(argv + 1, argv + argc);
    return prune_ast::cli::run(args, std::cout, std::cerr);
}
