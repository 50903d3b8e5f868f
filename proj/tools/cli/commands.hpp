#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace symploc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFailed = 1;
inline constexpr int kExitInvalidConfig = 2;
inline constexpr int kExitDiverged = 3;
inline constexpr int kExitIo = 4;  // unreadable or malformed input files, unwritable outputs

struct ConfigSource {
    std::string path;                    // empty: built-in defaults
    std::vector<std::string> overrides;  // "key=value", applied after the file
};

// Defaults, then the file, then overrides; validated. Throws ConfigError.
RunConfig load_run_config(const ConfigSource& source);

struct TrainPaths {
    std::string data;
    std::string checkpoint;
    std::string curve;
    std::string divergence_dump;  // empty: <checkpoint>.divergence.json
};

struct EvalPaths {
    std::string data;
    std::string checkpoint;
    std::string metrics;
    std::string table;  // empty: table only on stdout
};

// Each returns the process exit code and reports to `out` / `err`.
int gen_data(const ConfigSource& source, const std::string& out_path, std::ostream& out, std::ostream& err);
int train(const ConfigSource& source, const TrainPaths& paths, std::ostream& out, std::ostream& err);
int eval(const ConfigSource& source, const EvalPaths& paths, std::ostream& out, std::ostream& err);
int grad_check(std::ostream& out);
int verify(std::ostream& out);

}  // namespace symploc::cli
