#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "symploc/hyperbolic.hpp"
#include "symploc/losses.hpp"
#include "symploc/nn.hpp"
#include "symploc/pipeline/dataset.hpp"
#include "symploc/relation.hpp"

namespace symploc::pipeline {

struct ModelConfig {
    std::size_t dim = 32;  // D
    std::size_t feature_dim = 16;
    std::size_t text_dim = 16;
    std::size_t cheb_order = 4;
    hyperbolic::GeometryMode geometry = hyperbolic::GeometryMode::standard;
    relation::SymplecticVariant variant = relation::SymplecticVariant::paper_literal;
    double gamma = 0.07;
    double alpha_res = 0.1;
    double dt_init = 0.1;

    void validate() const;
};

enum class Branch { instance, relation, global };
inline constexpr std::array<Branch, 3> kBranches = {Branch::instance, Branch::relation, Branch::global};
const char* branch_name(Branch b);

// Every learnable tensor of the three coarse branches and the fine stage.
// Branch parameters live under disjoint prefixes: inst., rel., glob., fine.
ParamStore init_params(const ModelConfig& config, std::uint64_t seed);

// Point-side encodings of one submap for all branches.
struct SubmapEncoding {
    ad::Tensor instance;  // [N, D]
    ad::Tensor relation;  // [N, D]
    ad::Tensor global;    // [1, D]
};

struct QueryEncoding {
    ad::Tensor instance;  // [N_q, D]
    ad::Tensor relation;  // [N_q, D]
    ad::Tensor global;    // [1, D]
};

SubmapEncoding encode_submap(const ParamView& p, const ModelConfig& config, const Submap& submap);
QueryEncoding encode_query(const ParamView& p, const ModelConfig& config, const Query& query);

struct CoarseLosses {
    ad::Tensor instance;
    ad::Tensor relation;
    ad::Tensor global;
    ad::Tensor total() const;
};

// Batch losses with query i paired against submap i as the positive.
CoarseLosses coarse_losses(const ParamView& p, const ModelConfig& config, const std::vector<const Submap*>& submaps,
                           const std::vector<const Query*>& queries);

// 2D position (meters) predicted for `query` inside `submap`, shape [1, 2].
ad::Tensor fine_predict(const ParamView& p, const Query& query, const Submap& submap);

// Mean squared offset error in half-cell units over the pairs.
ad::Tensor fine_loss(const ParamView& p, const std::vector<const Submap*>& submaps, const std::vector<const Query*>& queries);

// Input tensors for a submap: features [N, D_f] and centroids relative to
// the cell anchor in half-cell units [N, 3].
ad::Tensor submap_features(const Submap& submap);
ad::Tensor submap_local_centroids(const Submap& submap);
ad::Tensor query_hints(const Query& query);

}  // namespace symploc::pipeline
