#include "run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace symploc::cli {

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const char* first = text.data();
    const char* last = first + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) throw ConfigError(key + ": cannot parse '" + text + "'");
    if constexpr (std::is_floating_point_v<T>) {
        if (!std::isfinite(value)) throw ConfigError(key + ": value must be finite");
    }
    return value;
}

std::size_t parse_count(const std::string& key, const std::string& text) {
    if (!text.empty() && text[0] == '-') throw ConfigError(key + ": must be non-negative");
    return parse_number<std::size_t>(key, text);
}

template <class T>
std::vector<T> parse_list(const std::string& key, std::string text, const std::function<T(const std::string&)>& item) {
    text = trim(text);
    if (text.size() >= 2 && text.front() == '[' && text.back() == ']') text = text.substr(1, text.size() - 2);
    std::vector<T> out;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        part = trim(part);
        if (part.empty()) throw ConfigError(key + ": empty list element");
        out.push_back(item(part));
    }
    if (out.empty()) throw ConfigError(key + ": list must not be empty");
    return out;
}

// Shortest decimal text that reads back to the same double.
std::string shortest(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

template <class T>
std::string join(const std::vector<T>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ',';
        if constexpr (std::is_floating_point_v<T>) {
            out += shortest(items[i]);
        } else {
            out += std::to_string(items[i]);
        }
    }
    return out;
}

struct Field {
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <class Member>
Field count_field(std::string key, Member member) {
    return {key, [key, member](RunConfig& c, const std::string& v) { member(c) = parse_count(key, v); },
            [member](const RunConfig& c) { return std::to_string(member(c)); }};
}

template <class Member>
Field seed_field(std::string key, Member member) {
    return {key,
            [key, member](RunConfig& c, const std::string& v) {
                if (!v.empty() && v[0] == '-') throw ConfigError(key + ": must be non-negative");
                member(c) = parse_number<std::uint64_t>(key, v);
            },
            [member](const RunConfig& c) { return std::to_string(member(c)); }};
}

template <class Member>
Field real_field(std::string key, Member member) {
    return {key, [key, member](RunConfig& c, const std::string& v) { member(c) = parse_number<double>(key, v); },
            [member](const RunConfig& c) { return shortest(member(c)); }};
}

template <class E, class Member>
Field enum_field(std::string key, Member member, std::vector<std::pair<std::string, E>> names) {
    return {key,
            [key, member, names](RunConfig& c, const std::string& v) {
                for (const auto& [n, e] : names)
                    if (n == v) {
                        member(c) = e;
                        return;
                    }
                std::string allowed;
                for (const auto& [n, e] : names) allowed += (allowed.empty() ? "" : "|") + n;
                throw ConfigError(key + ": expected one of " + allowed + ", got '" + v + "'");
            },
            [member, names](const RunConfig& c) {
                for (const auto& [n, e] : names)
                    if (member(c) == e) return n;
                return std::string("?");
            }};
}

#define MEMBER(path) [](auto& c) -> auto& { return c.path; }

const std::vector<Field>& schema() {
    using hyperbolic::GeometryMode;
    using relation::SymplecticVariant;
    static const std::vector<Field> fields = {
        seed_field("data.seed", MEMBER(data.seed)),
        count_field("data.submaps", MEMBER(data.num_submaps)),
        count_field("data.train_queries", MEMBER(data.train_queries)),
        count_field("data.val_queries", MEMBER(data.val_queries)),
        count_field("data.classes", MEMBER(data.num_classes)),
        count_field("data.feature_dim", MEMBER(data.feature_dim)),
        count_field("data.class_text_dim", MEMBER(data.class_text_dim)),
        count_field("data.direction_dim", MEMBER(data.direction_dim)),
        count_field("data.min_instances", MEMBER(data.min_instances)),
        count_field("data.max_instances", MEMBER(data.max_instances)),
        count_field("data.min_hints", MEMBER(data.min_hints)),
        count_field("data.max_hints", MEMBER(data.max_hints)),
        real_field("data.cell_stride", MEMBER(data.cell_stride)),
        real_field("data.cell_side", MEMBER(data.cell_side)),
        real_field("data.feature_noise", MEMBER(data.feature_noise)),
        real_field("data.hint_noise", MEMBER(data.hint_noise)),
        real_field("data.shared_multiset_prob", MEMBER(data.shared_multiset_prob)),

        seed_field("model.seed", MEMBER(model_seed)),
        count_field("model.dim", MEMBER(model.dim)),
        count_field("model.cheb_order", MEMBER(model.cheb_order)),
        enum_field<GeometryMode>("model.geometry", MEMBER(model.geometry),
                                 {{"standard", GeometryMode::standard}, {"paper_literal", GeometryMode::paper_literal}}),
        enum_field<SymplecticVariant>(
            "model.variant", MEMBER(model.variant),
            {{"paper_literal", SymplecticVariant::paper_literal}, {"symplectic", SymplecticVariant::symplectic}}),
        real_field("model.gamma", MEMBER(model.gamma)),
        real_field("model.alpha_res", MEMBER(model.alpha_res)),
        real_field("model.dt_init", MEMBER(model.dt_init)),

        seed_field("train.seed", MEMBER(train.seed)),
        count_field("train.coarse_steps", MEMBER(train.coarse_steps)),
        count_field("train.fine_steps", MEMBER(train.fine_steps)),
        count_field("train.batch_size", MEMBER(train.batch_size)),
        real_field("train.lr_coarse", MEMBER(train.lr_coarse)),
        real_field("train.lr_fine", MEMBER(train.lr_fine)),

        {"eval.k_list",
         [](RunConfig& c, const std::string& v) {
             c.eval.k_list = parse_list<std::size_t>("eval.k_list", v, [](const std::string& s) {
                 std::size_t k = parse_count("eval.k_list", s);
                 if (k == 0) throw ConfigError("eval.k_list: k must be at least 1");
                 return k;
             });
         },
         [](const RunConfig& c) { return join(c.eval.k_list); }},
        {"eval.epsilon_list",
         [](RunConfig& c, const std::string& v) {
             c.eval.epsilon_list = parse_list<double>("eval.epsilon_list", v, [](const std::string& s) {
                 double e = parse_number<double>("eval.epsilon_list", s);
                 if (!(e > 0)) throw ConfigError("eval.epsilon_list: thresholds must be positive");
                 return e;
             });
         },
         [](const RunConfig& c) { return join(c.eval.epsilon_list); }},
        count_field("eval.threads", MEMBER(eval.threads)),
        enum_field<EvalSplit>("eval.split", MEMBER(eval_split), {{"val", EvalSplit::val}, {"train", EvalSplit::train}}),
    };
    return fields;
}

#undef MEMBER

const Field& field(const std::string& key) {
    for (const auto& f : schema())
        if (f.key == key) return f;
    throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) { field(key).set(*this, trim(value)); }

std::string RunConfig::get(const std::string& key) const { return field(key).get(*this); }

void RunConfig::validate() const {
    try {
        data.validate();
        pipeline::ModelConfig m = model;
        m.feature_dim = data.feature_dim;
        m.text_dim = data.text_dim();
        m.validate();
        train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (eval.threads == 0) throw ConfigError("eval.threads must be at least 1");
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& f : schema()) k.push_back(f.key);
        return k;
    }();
    return keys;
}

void apply_config_text(RunConfig& config, const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        std::string where = source + ":" + std::to_string(lineno) + ": ";
        if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
        try {
            config.set(trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
}

void apply_config_file(RunConfig& config, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    apply_config_text(config, buf.str(), path);
}

std::pair<std::string, std::string> split_override(const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
    return {trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1))};
}

std::vector<std::pair<std::string, std::string>> describe(const RunConfig& config) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& f : schema()) out.emplace_back(f.key, f.get(config));
    return out;
}

}  // namespace symploc::cli
