#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "symploc/checks.hpp"
#include "symploc/pipeline/checkpoint.hpp"

namespace symploc::cli {

using namespace symploc::pipeline;
using json = nlohmann::ordered_json;

namespace {

std::string shortest(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << text;
    if (!f) throw std::runtime_error("write failed: " + path);
}

// Dimensions a dataset dictates to the model.
ModelConfig model_for(const RunConfig& cfg, const Dataset& data) {
    ModelConfig m = cfg.model;
    m.feature_dim = data.dims.feature;
    m.text_dim = data.dims.text;
    try {
        m.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return m;
}

// Shared error-to-exit-code mapping.
template <class Body>
int guarded(std::ostream& err, Body body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "invalid configuration: " << e.what() << '\n';
        return kExitInvalidConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    }
}

json recall_json(const RecallTable& t) {
    json retrieval = json::object(), localization = json::object();
    for (const auto& [k, v] : t.retrieval) retrieval[std::to_string(k)] = v;
    for (const auto& [k, by_eps] : t.localization) {
        json row = json::object();
        for (const auto& [eps, v] : by_eps) row[shortest(eps)] = v;
        localization[std::to_string(k)] = row;
    }
    return json{{"retrieval", retrieval}, {"localization", localization}};
}

std::string recall_table_text(const EvalReport& report, const EvalConfig& ec) {
    std::vector<std::string> header = {"ranking", "k", "retrieval"};
    for (double e : ec.epsilon_list) header.push_back("loc<" + shortest(e) + "m");
    std::vector<std::vector<std::string>> rows;
    auto add_rows = [&](const std::string& name, const RecallTable& t) {
        for (std::size_t k : ec.k_list) {
            std::vector<std::string> r = {name, std::to_string(k)};
            std::ostringstream v;
            v << std::fixed << std::setprecision(4) << t.retrieval.at(k);
            r.push_back(v.str());
            for (double e : ec.epsilon_list) {
                std::ostringstream l;
                l << std::fixed << std::setprecision(4) << t.localization.at(k).at(e);
                r.push_back(l.str());
            }
            rows.push_back(std::move(r));
        }
    };
    add_rows("combined", report.combined);
    for (Branch b : kBranches) add_rows(branch_name(b), report.per_branch.at(b));

    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) {
        width[c] = header[c].size();
        for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
    }
    std::ostringstream out;
    auto emit = [&](const std::vector<std::string>& r) {
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (c) out << "  ";
            // Names left-aligned, numbers right-aligned.
            if (c == 0) {
                out << std::left << std::setw(static_cast<int>(width[c])) << r[c];
            } else {
                out << std::right << std::setw(static_cast<int>(width[c])) << r[c];
            }
        }
        out << '\n';
    };
    emit(header);
    for (const auto& r : rows) emit(r);
    out << "queries: " << report.num_queries << "  mean fine error (gt submap): " << std::fixed
        << std::setprecision(3) << report.mean_fine_error << " m\n";
    return out.str();
}

}  // namespace

RunConfig load_run_config(const ConfigSource& source) {
    RunConfig cfg;
    if (!source.path.empty()) apply_config_file(cfg, source.path);
    for (const auto& o : source.overrides) {
        auto [k, v] = split_override(o);
        cfg.set(k, v);
    }
    cfg.validate();
    return cfg;
}

int gen_data(const ConfigSource& source, const std::string& out_path, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        RunConfig cfg = load_run_config(source);
        Dataset data = generate_synthetic_dataset(cfg.data);
        save_dataset(out_path, data);
        out << "wrote " << out_path << ": " << data.gallery.size() << " submaps, "
            << data.split(Split::train).size() << " train / " << data.split(Split::val).size() << " val queries\n";
        return kExitOk;
    });
}

int train(const ConfigSource& source, const TrainPaths& paths, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        RunConfig cfg = load_run_config(source);
        Dataset data = load_dataset(paths.data);
        ModelConfig mc = model_for(cfg, data);
        ParamStore params = init_params(mc, cfg.model_seed);

        std::ostringstream curve;
        curve << "step,phase,instance,relation,global,fine,total\n";
        auto on_step = [&](const LossRecord& r) {
            curve << r.step << ',' << (r.phase == Phase::coarse ? "coarse" : "fine") << ',' << shortest(r.instance)
                  << ',' << shortest(r.relation) << ',' << shortest(r.global) << ',' << shortest(r.fine) << ','
                  << shortest(r.total) << '\n';
            if ((r.step + 1) % 100 == 0) err << "step " << r.step + 1 << " loss " << r.total << '\n';
        };
        try {
            pipeline::train(data, params, mc, cfg.train, on_step);
        } catch (const TrainingDiverged& e) {
            std::string dump = paths.divergence_dump.empty() ? paths.checkpoint + ".divergence.json"
                                                              : paths.divergence_dump;
            json d{{"error", e.what()},
                   {"step", e.step},
                   {"dataset", paths.data},
                   {"query_ids", e.query_ids},
                   {"submap_ids", e.submap_ids}};
            write_text(dump, d.dump(2) + "\n");
            write_text(paths.curve, curve.str());
            err << "training diverged at step " << e.step << ": " << e.what() << "\nbatch written to " << dump
                << '\n';
            return kExitDiverged;
        }
        save_checkpoint(paths.checkpoint, params);
        write_text(paths.curve, curve.str());
        out << "wrote " << paths.checkpoint << " (" << params.size() << " tensors, " << params.scalar_count()
            << " scalars) and " << paths.curve << '\n';
        return kExitOk;
    });
}

int eval(const ConfigSource& source, const EvalPaths& paths, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        RunConfig cfg = load_run_config(source);
        Dataset data = load_dataset(paths.data);
        ModelConfig mc = model_for(cfg, data);
        ParamStore params = init_params(mc, cfg.model_seed);
        ParamStore loaded = load_checkpoint(paths.checkpoint);
        try {
            assign_checkpoint(params, loaded);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("checkpoint does not match the model config: ") + e.what());
        }
        for (std::size_t k : cfg.eval.k_list)
            if (k > data.gallery.size())
                throw ConfigError("eval.k_list: k = " + std::to_string(k) + " exceeds the gallery size " +
                                  std::to_string(data.gallery.size()));

        Split split = cfg.eval_split == EvalSplit::val ? Split::val : Split::train;
        EvalReport report = evaluate_recall(data.split(split), data, params, mc, cfg.eval);

        json overrides = json::object();
        for (const auto& o : source.overrides) {
            auto [k, v] = split_override(o);
            overrides[k] = v;
        }
        json config = json::object();
        for (const auto& [k, v] : describe(cfg)) config[k] = v;
        json branches = json::object();
        for (Branch b : kBranches) branches[branch_name(b)] = recall_json(report.per_branch.at(b));

        json metrics{{"split", split == Split::val ? "val" : "train"},
                     {"num_queries", report.num_queries},
                     {"gallery_size", data.gallery.size()},
                     {"k_list", cfg.eval.k_list},
                     {"epsilon_list", cfg.eval.epsilon_list},
                     {"combined", recall_json(report.combined)},
                     {"branches", branches},
                     {"mean_fine_error_m", report.mean_fine_error},
                     {"overrides", overrides},
                     {"config", config}};
        write_text(paths.metrics, metrics.dump(2) + "\n");
        std::string table = recall_table_text(report, cfg.eval);
        if (!paths.table.empty()) write_text(paths.table, table);
        out << table;
        return kExitOk;
    });
}

int grad_check(std::ostream& out) {
    auto suite = checks::gradient_suite();
    out << checks::format_suite(suite);
    double worst = 0.0;
    for (const auto& c : suite.checks) worst = std::max(worst, c.worst);
    out << "max relative error " << std::scientific << std::setprecision(3) << worst << " over "
        << suite.checks.size() << " checks (" << std::fixed << std::setprecision(2) << suite.seconds << " s)\n";
    out << (suite.passed() ? "PASS" : "FAIL") << " gradient\n";
    return suite.passed() ? kExitOk : kExitVerifyFailed;
}

int verify(std::ostream& out) {
    bool ok = true;
    for (const auto& suite : checks::invariant_suites()) {
        out << checks::format_suite(suite);
        out << (suite.passed() ? "PASS " : "FAIL ") << suite.name << " suite\n";
        ok = ok && suite.passed();
    }
    return ok ? kExitOk : kExitVerifyFailed;
}

}  // namespace symploc::cli
