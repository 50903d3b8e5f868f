// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any fail.
//
//   acceptance <path to symploc CLI> <scratch directory> [criterion numbers...]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "symploc/checks.hpp"
#include "symploc/pipeline/evaluate.hpp"
#include "symploc/pipeline/train.hpp"

namespace fs = std::filesystem;
using namespace symploc;
using namespace symploc::pipeline;

namespace {

struct Outcome {
    bool passed;
    std::string summary;
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

Outcome from_suite(const checks::SuiteResult& s) {
    std::size_t failed = 0;
    std::string first_failure;
    for (const auto& c : s.checks) {
        if (!c.passed) {
            ++failed;
            if (first_failure.empty()) first_failure = c.name + " worst " + fmt("%.3e", c.worst);
        }
    }
    std::string summary = std::to_string(s.checks.size() - failed) + "/" + std::to_string(s.checks.size()) +
                          " checks in " + fmt("%.2f", s.seconds) + " s";
    if (!first_failure.empty()) summary += "; first failure: " + first_failure;
    if (!s.passed()) std::cerr << checks::format_suite(s);
    return {s.passed(), summary};
}

Outcome gradient_oracle() {
    auto s = checks::gradient_suite();
    Outcome o = from_suite(s);
    double worst = 0.0;
    for (const auto& c : s.checks) worst = std::max(worst, c.worst);
    o.summary += ", max rel error " + fmt("%.3e", worst);
    if (s.seconds >= 60.0) {
        o.passed = false;
        o.summary += " (over the 60 s budget)";
    }
    return o;
}

// Criteria 7 and 8 share one training run.
struct Benchmark {
    EvalReport report;
    std::size_t steps = 0;
    double seconds = 0.0;
};

const Benchmark& benchmark() {
    static const Benchmark b = [] {
        Benchmark out;
        DataConfig dc;  // 64 submaps, 512 / 128 queries, D_f = 16, seed 42
        Dataset data = generate_synthetic_dataset(dc);
        ModelConfig mc;  // D = 32
        mc.feature_dim = data.dims.feature;
        mc.text_dim = data.dims.text;
        ParamStore params = init_params(mc, 42);
        TrainConfig tc;
        auto t0 = Clock::now();
        auto result = train(data, params, mc, tc);
        out.seconds = since(t0);
        out.steps = result.curve.size();
        out.report = evaluate_recall(data.split(Split::val), data, params, mc, EvalConfig{{1, 5}, {5, 10, 15}, 1});
        return out;
    }();
    return b;
}

Outcome toy_benchmark() {
    const auto& b = benchmark();
    double r1 = b.report.combined.retrieval.at(1), r5 = b.report.combined.retrieval.at(5);
    bool ok = r1 >= 0.5 && r5 >= 0.8 && b.steps <= 2000 && b.seconds < 600.0;
    return {ok, "recall@1 " + fmt("%.4f", r1) + " (>= 0.5), recall@5 " + fmt("%.4f", r5) + " (>= 0.8), " +
                    std::to_string(b.steps) + " steps in " + fmt("%.1f", b.seconds) + " s"};
}

Outcome ablation() {
    const auto& b = benchmark();
    double full = b.report.combined.retrieval.at(1);
    bool ok = true;
    std::string summary = "full " + fmt("%.4f", full);
    for (Branch br : kBranches) {
        double single = b.report.per_branch.at(br).retrieval.at(1);
        ok = ok && full >= single;
        summary += std::string(", ") + branch_name(br) + " " + fmt("%.4f", single);
    }
    return {ok, summary};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome determinism(const std::string& cli, const fs::path& dir) {
    fs::create_directories(dir);
    {
        std::ofstream cfg(dir / "run.cfg");
        cfg << "data.submaps = 16\ndata.train_queries = 64\ndata.val_queries = 32\nmodel.dim = 16\n"
               "train.coarse_steps = 60\ntrain.fine_steps = 20\neval.threads = 2\n";
    }
    auto run = [&](int i) -> std::string {
        std::string s = std::to_string(i);
        fs::path cfg = dir / "run.cfg";
        std::vector<std::string> cmds = {
            "gen-data -c " + cfg.string() + " -o " + (dir / ("data" + s + ".jsonl")).string(),
            "train -c " + cfg.string() + " -d " + (dir / ("data" + s + ".jsonl")).string() + " --checkpoint " +
                (dir / ("model" + s + ".ckpt")).string() + " --curve " + (dir / ("loss" + s + ".csv")).string(),
            "eval -c " + cfg.string() + " -d " + (dir / ("data" + s + ".jsonl")).string() + " --checkpoint " +
                (dir / ("model" + s + ".ckpt")).string() + " --metrics " +
                (dir / ("metrics" + s + ".json")).string() + " --table " + (dir / ("table" + s + ".txt")).string()};
        for (const auto& c : cmds) {
            std::string full = "\"" + cli + "\" " + c + " > " + (dir / "cli.log").string() + " 2>&1";
            if (std::system(full.c_str()) != 0) return "command failed: " + c;
        }
        return {};
    };
    for (int i : {1, 2}) {
        std::string err = run(i);
        if (!err.empty()) return {false, err};
    }
    std::string summary;
    bool ok = true;
    for (const char* stem : {"data%.jsonl", "model%.ckpt", "loss%.csv", "metrics%.json", "table%.txt"}) {
        std::string a = stem, b = stem;
        a.replace(a.find('%'), 1, "1");
        b.replace(b.find('%'), 1, "2");
        std::string ca = slurp(dir / a), cb = slurp(dir / b);
        bool same = !ca.empty() && ca == cb;
        ok = ok && same;
        std::string name = std::string(stem).substr(std::string(stem).find('.') + 1);
        summary += (summary.empty() ? "" : ", ") + name + (same ? " identical" : " DIFFERS");
    }
    return {ok, summary};
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 3) {
        std::cerr << "usage: acceptance <symploc cli> <scratch dir> [criteria...]\n";
        return 2;
    }
    std::string cli = argv[1];
    fs::path scratch = argv[2];
    std::set<int> only;
    for (int i = 3; i < argc; ++i) only.insert(std::atoi(argv[i]));

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient oracle", gradient_oracle},
        {"hyperbolic suite", [] { return from_suite(checks::hyperbolic_suite()); }},
        {"symplectic suite", [] { return from_suite(checks::symplectic_suite()); }},
        {"spectral suite", [] { return from_suite(checks::spectral_suite()); }},
        {"permutation suite", [] { return from_suite(checks::permutation_suite()); }},
        {"loss well-definedness", [] { return from_suite(checks::loss_suite()); }},
        {"toy end-to-end benchmark", toy_benchmark},
        {"toy ablation (full >= each branch)", ablation},
        {"determinism (gen-data, train, eval)", [&] { return determinism(cli, scratch / "determinism"); }},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        int id = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::cout << (o.passed ? "PASS" : "FAIL") << " criterion " << id << " " << criteria[i].first << ": "
                  << o.summary << std::endl;
        failures += !o.passed;
    }
    return failures == 0 ? 0 : 1;
}
