#include "symploc/pipeline/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <set>
#include <stdexcept>
#include <thread>

#include "symploc/losses.hpp"

namespace symploc::pipeline {

using namespace symploc::ad;

BranchMask BranchMask::only(Branch b) {
    return BranchMask{b == Branch::instance, b == Branch::relation, b == Branch::global};
}

bool BranchMask::has(Branch b) const {
    switch (b) {
        case Branch::instance: return instance;
        case Branch::relation: return relation;
        case Branch::global: return global;
    }
    return false;
}

const std::vector<double>& BranchScores::of(Branch b) const {
    switch (b) {
        case Branch::instance: return instance;
        case Branch::relation: return relation;
        case Branch::global: return global;
    }
    throw std::logic_error("unknown branch");
}

GalleryIndex::GalleryIndex(const Dataset& data, const ParamStore& params, const ModelConfig& config) : data_(&data) {
    if (data.gallery.empty()) throw std::invalid_argument("GalleryIndex: empty gallery");
    ParamView view(params);
    enc_.reserve(data.gallery.size());
    for (const auto& s : data.gallery) enc_.push_back(encode_submap(view, config, s));
}

namespace {

std::vector<double> set_scores(const std::vector<Tensor>& gallery_sets, const Tensor& query_set) {
    auto l = losses::batch_lambdas(gallery_sets, {query_set});
    std::vector<double> out(gallery_sets.size());
    for (std::size_t g = 0; g < out.size(); ++g) out[g] = 0.5 * (l.xt[g] + l.tx[g]);
    return out;
}

std::vector<double> zscore(const std::vector<double>& v) {
    double n = static_cast<double>(v.size());
    double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    double sd = std::sqrt(var / n);
    std::vector<double> out(v.size(), 0.0);
    if (sd < 1e-12) return out;
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean) / sd;
    return out;
}

std::vector<int> full_ranking(const std::vector<double>& scores) {
    std::vector<int> ids(scores.size());
    std::iota(ids.begin(), ids.end(), 0);
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
        return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
    });
    return ids;
}

double distance(const std::array<double, 2>& a, const std::array<double, 2>& b) {
    return std::hypot(a[0] - b[0], a[1] - b[1]);
}

std::array<double, 2> to_array(const Tensor& t) { return {t[0], t[1]}; }

}  // namespace

BranchScores score_query(const Query& query, const GalleryIndex& index, const ParamStore& params,
                         const ModelConfig& config) {
    ParamView view(params);
    QueryEncoding q = encode_query(view, config, query);
    const auto& enc = index.encodings();
    std::vector<Tensor> inst, rel, glob;
    for (const auto& e : enc) {
        inst.push_back(e.instance);
        rel.push_back(e.relation);
        glob.push_back(e.global);
    }
    BranchScores s;
    s.instance = set_scores(inst, q.instance);
    s.relation = set_scores(rel, q.relation);
    Tensor cos = matmul(normalize(concat(glob, 0), 1), transpose(normalize(q.global, 1)));
    s.global = cos.to_vector();
    return s;
}

std::vector<double> composite_scores(const BranchScores& scores, BranchMask mask) {
    std::vector<double> total(scores.instance.size(), 0.0);
    for (Branch b : kBranches) {
        if (!mask.has(b)) continue;
        auto z = zscore(scores.of(b));
        for (std::size_t i = 0; i < z.size(); ++i) total[i] += z[i];
    }
    return total;
}

std::vector<RankedSubmap> top_k(const std::vector<double>& scores, std::size_t k) {
    if (scores.empty()) throw std::invalid_argument("top_k: empty gallery");
    if (k == 0 || k > scores.size()) throw std::invalid_argument("top_k: k must be in [1, gallery size]");
    auto ids = full_ranking(scores);
    std::vector<RankedSubmap> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back({ids[i], scores[static_cast<std::size_t>(ids[i])]});
    return out;
}

RetrievalResult coarse_retrieve(const Query& query, const GalleryIndex& index, const ParamStore& params,
                                const ModelConfig& config, std::size_t k, BranchMask mask) {
    RetrievalResult r;
    r.query_id = query.id;
    r.ranked = top_k(composite_scores(score_query(query, index, params, config), mask), k);
    ParamView view(params);
    r.position = to_array(fine_predict(view, query, index.data().submap(r.ranked.front().submap_id)));
    return r;
}

RecallTable recall_from_outcomes(const std::vector<QueryOutcome>& outcomes, const EvalConfig& config) {
    RecallTable t;
    double n = static_cast<double>(outcomes.size());
    for (std::size_t k : config.k_list) {
        std::size_t hit = 0;
        std::map<double, std::size_t> loc;
        for (const auto& o : outcomes) {
            std::size_t kk = std::min(k, o.ranked_ids.size());
            bool found = std::find(o.ranked_ids.begin(), o.ranked_ids.begin() + static_cast<long>(kk), o.gt_submap) !=
                         o.ranked_ids.begin() + static_cast<long>(kk);
            if (found) ++hit;
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < kk; ++i) {
                auto it = o.predictions.find(o.ranked_ids[i]);
                if (it != o.predictions.end()) best = std::min(best, distance(it->second, o.gt_pos));
            }
            for (double eps : config.epsilon_list)
                if (best <= eps) ++loc[eps];
        }
        t.retrieval[k] = n > 0 ? static_cast<double>(hit) / n : 0.0;
        for (double eps : config.epsilon_list) t.localization[k][eps] = n > 0 ? static_cast<double>(loc[eps]) / n : 0.0;
    }
    return t;
}

EvalReport evaluate_recall(const std::vector<const Query*>& queries, const Dataset& data, const ParamStore& params,
                           const ModelConfig& config, const EvalConfig& eval) {
    if (eval.k_list.empty()) throw std::invalid_argument("evaluate_recall: empty k list");
    std::size_t kmax = *std::max_element(eval.k_list.begin(), eval.k_list.end());
    if (kmax == 0 || kmax > data.gallery.size()) throw std::invalid_argument("evaluate_recall: k out of range");

    GalleryIndex index(data, params, config);
    constexpr std::size_t kRankings = 4;  // combined, then one per branch
    std::vector<std::array<QueryOutcome, kRankings>> outcomes(queries.size());
    std::vector<double> fine_errors(queries.size(), 0.0);

    auto work = [&](std::size_t i) {
        const Query& q = *queries[i];
        BranchScores scores = score_query(q, index, params, config);
        std::array<std::vector<double>, kRankings> composite = {
            composite_scores(scores), composite_scores(scores, BranchMask::only(Branch::instance)),
            composite_scores(scores, BranchMask::only(Branch::relation)),
            composite_scores(scores, BranchMask::only(Branch::global))};
        std::set<int> needed = {q.gt_submap};
        for (std::size_t r = 0; r < kRankings; ++r) {
            auto& o = outcomes[i][r];
            o.gt_submap = q.gt_submap;
            o.gt_pos = q.gt_pos;
            o.ranked_ids = full_ranking(composite[r]);
            needed.insert(o.ranked_ids.begin(), o.ranked_ids.begin() + static_cast<long>(kmax));
        }
        ParamView view(params);
        std::map<int, std::array<double, 2>> preds;
        for (int id : needed) preds[id] = to_array(fine_predict(view, q, data.submap(id)));
        fine_errors[i] = distance(preds.at(q.gt_submap), q.gt_pos);
        for (auto& o : outcomes[i]) o.predictions = preds;
    };

    std::size_t threads = std::max<std::size_t>(1, std::min(eval.threads, queries.size()));
    if (threads == 1) {
        for (std::size_t i = 0; i < queries.size(); ++i) work(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < queries.size(); i = next++) {
                    try {
                        work(i);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        }
        for (auto& th : pool) th.join();
        if (failure) std::rethrow_exception(failure);
    }

    EvalReport report;
    report.num_queries = queries.size();
    for (std::size_t r = 0; r < kRankings; ++r) {
        std::vector<QueryOutcome> per;
        per.reserve(queries.size());
        for (auto& o : outcomes) per.push_back(std::move(o[r]));
        RecallTable table = recall_from_outcomes(per, eval);
        if (r == 0) {
            report.combined = table;
        } else {
            report.per_branch[kBranches[r - 1]] = table;
        }
    }
    if (!queries.empty()) {
        report.mean_fine_error =
            std::accumulate(fine_errors.begin(), fine_errors.end(), 0.0) / static_cast<double>(queries.size());
    }
    return report;
}

}  // namespace symploc::pipeline
