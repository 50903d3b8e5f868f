#pragma once

#include <array>
#include <map>
#include <optional>
#include <vector>

#include "symploc/pipeline/model.hpp"

namespace symploc::pipeline {

// Which branch scores enter the composite; all three by default.
struct BranchMask {
    bool instance = true, relation = true, global = true;
    static BranchMask only(Branch b);
    bool has(Branch b) const;
};

// Point-side encodings of the whole gallery, computed once per parameter set.
class GalleryIndex {
public:
    GalleryIndex(const Dataset& data, const ParamStore& params, const ModelConfig& config);
    const Dataset& data() const { return *data_; }
    const std::vector<SubmapEncoding>& encodings() const { return enc_; }

private:
    const Dataset* data_;
    std::vector<SubmapEncoding> enc_;
};

// Raw per-branch scores of one query against every gallery submap, indexed
// by submap id.
struct BranchScores {
    std::vector<double> instance, relation, global;
    const std::vector<double>& of(Branch b) const;
};

BranchScores score_query(const Query& query, const GalleryIndex& index, const ParamStore& params,
                         const ModelConfig& config);

// Sum of the selected branch scores, each z-normalized across the gallery.
std::vector<double> composite_scores(const BranchScores& scores, BranchMask mask = {});

struct RankedSubmap {
    int submap_id;
    double score;
};

struct RetrievalResult {
    int query_id = 0;
    std::vector<RankedSubmap> ranked;          // descending score, ties to lower id
    std::optional<std::array<double, 2>> position;  // fine prediction in the top submap
};

// Descending top-k of a score vector indexed by submap id.
std::vector<RankedSubmap> top_k(const std::vector<double>& scores, std::size_t k);

RetrievalResult coarse_retrieve(const Query& query, const GalleryIndex& index, const ParamStore& params,
                                const ModelConfig& config, std::size_t k, BranchMask mask = {});

struct RecallTable {
    std::map<std::size_t, double> retrieval;                            // k -> recall
    std::map<std::size_t, std::map<double, double>> localization;       // k -> eps -> recall
};

struct EvalConfig {
    std::vector<std::size_t> k_list = {1, 3, 5};
    std::vector<double> epsilon_list = {5.0, 10.0, 15.0};
    std::size_t threads = 1;
};

struct EvalReport {
    std::size_t num_queries = 0;
    RecallTable combined;
    std::map<Branch, RecallTable> per_branch;
    double mean_fine_error = 0.0;  // fine prediction in the ground-truth submap, meters
};

// Per-query rankings plus fine predictions for every submap that appears in
// any top-k list.
struct QueryOutcome {
    int gt_submap = 0;
    std::array<double, 2> gt_pos{};
    std::vector<int> ranked_ids;  // full ranking, best first
    std::map<int, std::array<double, 2>> predictions;
};

// Recall from precomputed outcomes; this is the scorer-agnostic core.
RecallTable recall_from_outcomes(const std::vector<QueryOutcome>& outcomes, const EvalConfig& config);

EvalReport evaluate_recall(const std::vector<const Query*>& queries, const Dataset& data, const ParamStore& params,
                           const ModelConfig& config, const EvalConfig& eval);

}  // namespace symploc::pipeline
