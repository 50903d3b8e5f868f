#pragma once

#include <utility>
#include <stdexcept>
#include <string>
#include <vector>

#include "symploc/pipeline/evaluate.hpp"
#include "symploc/pipeline/train.hpp"

namespace symploc::cli {

// Any problem with configuration text or values; maps to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class EvalSplit { val, train };

// Every setting the command line can touch. Keys are dotted and flat,
// e.g. `train.lr_coarse = 5e-4`.
struct RunConfig {
    pipeline::DataConfig data;
    pipeline::ModelConfig model;
    std::uint64_t model_seed = 42;
    pipeline::TrainConfig train;
    pipeline::EvalConfig eval;
    EvalSplit eval_split = EvalSplit::val;

    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;
    // Cross-field checks of the underlying pipeline configs.
    void validate() const;
};

// All keys in schema order.
const std::vector<std::string>& config_keys();

// Parses `key = value` lines; '#' starts a comment, blank lines are skipped.
// `source` names the input in error messages.
void apply_config_text(RunConfig& config, const std::string& text, const std::string& source = "config");
void apply_config_file(RunConfig& config, const std::string& path);

// Splits "key=value".
std::pair<std::string, std::string> split_override(const std::string& assignment);

// Effective value of every key, in schema order.
std::vector<std::pair<std::string, std::string>> describe(const RunConfig& config);

}  // namespace symploc::cli
