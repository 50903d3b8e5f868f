#include "symploc/pipeline/model.hpp"

#include <cmath>
#include <stdexcept>

#include "symploc/spectral.hpp"

namespace symploc::pipeline {

using namespace symploc::ad;
namespace hyp = symploc::hyperbolic;
namespace rel = symploc::relation;

namespace {

constexpr double kInitialOverlapLogit = -4.0;
// The residual gate starts nearly closed, so the enhancer begins close to
// the identity map and opens as training finds attention useful.
constexpr double kInitialGateLogit = -3.0;

double inverse_softplus(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

void add_rie_params(ParamStore& store, Rng& rng, const std::string& prefix, std::size_t d) {
    store.add(prefix + ".c_raw", Tensor::scalar(inverse_softplus(1.0 - hyp::BallParams::eps)));
    store.add(prefix + ".zeta", Tensor::scalar(1.0));
    store.add(prefix + ".beta_raw", Tensor::scalar(kInitialGateLogit));
    for (const char* w : {".wq", ".wk", ".wv"}) store.add(prefix + w, nn::glorot(rng, d, d));
}

void add_isre_params(ParamStore& store, Rng& rng, const std::string& prefix, std::size_t in, std::size_t geo_in,
                     std::size_t d, double dt_init) {
    std::size_t h = d / 4;
    nn::add_mlp(store, rng, prefix + ".geo", geo_in, h, h);
    nn::add_mlp(store, rng, prefix + ".fuse", 2 * in + h, d, d);
    store.add(prefix + ".w_eta", nn::glorot(rng, d, d));
    store.add(prefix + ".w_v", nn::glorot(rng, d / 2, d / 2));
    store.add(prefix + ".dt_raw", Tensor::scalar(inverse_softplus(dt_init)));
}

void add_loss_params(ParamStore& store, const std::string& prefix, bool learnable_overlap) {
    store.add(prefix + ".a_raw", Tensor::scalar(losses::raw_from_scale(1.0)));
    if (learnable_overlap) store.add(prefix + ".j_raw", Tensor::scalar(kInitialOverlapLogit));
}

Tensor rie(const ParamView& p, const std::string& prefix, const Tensor& x, hyp::GeometryMode mode) {
    hyp::BallParams ball{p(prefix + ".c_raw"), p(prefix + ".zeta"), p(prefix + ".beta_raw")};
    hyp::AttentionWeights w{p(prefix + ".wq"), p(prefix + ".wk"), p(prefix + ".wv")};
    return hyp::rie_forward(x, ball, w, mode);
}

Tensor isre(const ParamView& p, const std::string& prefix, const Tensor& x, const Tensor& offsets,
            const ModelConfig& cfg) {
    auto layer = [&](const std::string& name, const char* part) { return p(prefix + name + part); };
    rel::EdgeMlp mlp{layer(".geo.0", ".w"),  layer(".geo.0", ".b"),  layer(".geo.1", ".w"),  layer(".geo.1", ".b"),
                     layer(".fuse.0", ".w"), layer(".fuse.0", ".b"), layer(".fuse.1", ".w"), layer(".fuse.1", ".b")};
    rel::IsreWeights w{mlp, p(prefix + ".w_eta"), p(prefix + ".w_v"), p(prefix + ".dt_raw")};
    return rel::isre_forward(x, offsets, w, rel::IsreConfig{cfg.variant, cfg.alpha_res});
}

Tensor branch_loss(const ParamView& p, const std::string& prefix, const Tensor& s, const Tensor& overlap) {
    return losses::negative_repulsion_loss(s, overlap, losses::scale_from_raw(p(prefix + ".a_raw")));
}

Tensor rows_tensor(const std::vector<std::vector<double>>& rows) {
    std::size_t w = rows.front().size();
    std::vector<double> flat;
    flat.reserve(rows.size() * w);
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    return Tensor({rows.size(), w}, std::move(flat));
}

void check_pairs(const std::vector<const Submap*>& submaps, const std::vector<const Query*>& queries,
                 const char* what) {
    if (submaps.empty() || submaps.size() != queries.size()) {
        throw std::invalid_argument(std::string(what) + ": need one submap per query");
    }
}

}  // namespace

void ModelConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("model config: " + m); };
    if (dim < 4 || dim % 4 != 0) fail("dim must be a positive multiple of 4");
    if (feature_dim == 0 || text_dim == 0) fail("input dimensions must be positive");
    if (cheb_order == 0) fail("cheb_order must be at least 1");
    if (!(gamma > 0.0)) fail("gamma must be positive");
    if (!(dt_init > 0.0)) fail("dt_init must be positive");
    if (!std::isfinite(alpha_res)) fail("alpha_res must be finite");
}

const char* branch_name(Branch b) {
    switch (b) {
        case Branch::instance: return "instance";
        case Branch::relation: return "relation";
        case Branch::global: return "global";
    }
    return "?";
}

ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    ParamStore store;
    std::size_t d = cfg.dim, df = cfg.feature_dim, dt = cfg.text_dim;

    nn::add_linear(store, rng, "inst.pin", df, d);
    nn::add_linear(store, rng, "inst.tin", dt, d);
    add_rie_params(store, rng, "inst.p", d);
    add_rie_params(store, rng, "inst.t", d);
    add_loss_params(store, "inst", true);

    add_isre_params(store, rng, "rel.p", df, 3, d, cfg.dt_init);
    add_isre_params(store, rng, "rel.t", dt, 2 * dt, d, cfg.dt_init);
    add_loss_params(store, "rel", true);

    nn::add_linear(store, rng, "glob.pin", df, d);
    nn::add_linear(store, rng, "glob.tin", dt, d);
    spectral::add_point_global_params(store, rng, "glob.smt", spectral::SmtConfig{d, cfg.cheb_order});
    spectral::add_language_pool_params(store, rng, "glob.lang", d);
    add_loss_params(store, "glob", false);

    nn::add_linear(store, rng, "fine.pin", df + 3, d);
    nn::add_linear(store, rng, "fine.tin", dt, d);
    for (const char* w : {"fine.q", "fine.k", "fine.v"}) nn::add_linear(store, rng, w, d, d, false);
    nn::add_mlp(store, rng, "fine.head", d, d, 2);
    return store;
}

Tensor submap_features(const Submap& s) {
    std::vector<std::vector<double>> rows;
    for (const auto& inst : s.instances) rows.push_back(inst.feature);
    return rows_tensor(rows);
}

Tensor submap_local_centroids(const Submap& s) {
    auto anchor = s.anchor();
    double half = s.side / 2;
    std::vector<std::vector<double>> rows;
    for (const auto& inst : s.instances) {
        rows.push_back({(inst.centroid[0] - anchor[0]) / half, (inst.centroid[1] - anchor[1]) / half,
                        inst.centroid[2] / half});
    }
    return rows_tensor(rows);
}

Tensor query_hints(const Query& q) { return rows_tensor(q.hints); }

SubmapEncoding encode_submap(const ParamView& p, const ModelConfig& cfg, const Submap& s) {
    if (s.instances.empty()) throw std::invalid_argument("encode_submap: empty submap");
    Tensor f = submap_features(s);
    Tensor c = submap_local_centroids(s);
    SubmapEncoding e;
    e.instance = rie(p, "inst.p", nn::linear(p, "inst.pin", f), cfg.geometry);
    e.relation = isre(p, "rel.p", f, rel::build_offset_tensor(c), cfg);
    e.global = spectral::point_global_descriptor(p, "glob.smt", nn::linear(p, "glob.pin", f), c);
    return e;
}

QueryEncoding encode_query(const ParamView& p, const ModelConfig& cfg, const Query& q) {
    if (q.hints.empty()) throw std::invalid_argument("encode_query: query without hints");
    Tensor t = query_hints(q);
    QueryEncoding e;
    e.instance = rie(p, "inst.t", nn::linear(p, "inst.tin", t), cfg.geometry);
    e.relation = isre(p, "rel.t", t, rel::build_text_relation_tensor(t), cfg);
    e.global = spectral::pool_language_global(p, "glob.lang", nn::linear(p, "glob.tin", t)).descriptor;
    return e;
}

Tensor CoarseLosses::total() const { return add(add(instance, relation), global); }

CoarseLosses coarse_losses(const ParamView& p, const ModelConfig& cfg, const std::vector<const Submap*>& submaps,
                           const std::vector<const Query*>& queries) {
    check_pairs(submaps, queries, "coarse_losses");
    std::size_t b = submaps.size();
    std::vector<Tensor> xi, xr, xg, ti, tr, tg;
    for (std::size_t i = 0; i < b; ++i) {
        SubmapEncoding se = encode_submap(p, cfg, *submaps[i]);
        QueryEncoding qe = encode_query(p, cfg, *queries[i]);
        xi.push_back(se.instance);
        xr.push_back(se.relation);
        xg.push_back(se.global);
        ti.push_back(qe.instance);
        tr.push_back(qe.relation);
        tg.push_back(qe.global);
    }
    std::vector<double> iou(b * b);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < b; ++j) iou[i * b + j] = iou_overlap(*submaps[i], *submaps[j]);

    CoarseLosses out;
    auto li = losses::batch_lambdas(xi, ti);
    out.instance = branch_loss(p, "inst", losses::bidirectional_similarity(li.xt, li.tx, cfg.gamma),
                               sigmoid(p("inst.j_raw")));
    auto lr = losses::batch_lambdas(xr, tr);
    out.relation = branch_loss(p, "rel", losses::bidirectional_similarity(lr.xt, lr.tx, cfg.gamma),
                               sigmoid(p("rel.j_raw")));
    Tensor sg = losses::global_similarity(concat(xg, 0), concat(tg, 0), cfg.gamma);
    out.global = branch_loss(p, "glob", sg, Tensor({b, b}, std::move(iou)));
    return out;
}

Tensor fine_predict(const ParamView& p, const Query& q, const Submap& s) {
    if (s.instances.empty()) throw std::invalid_argument("fine_predict: empty submap");
    Tensor inst = nn::linear(p, "fine.pin", concat({submap_features(s), submap_local_centroids(s)}, 1));
    Tensor hints = nn::linear(p, "fine.tin", query_hints(q));
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(inst.dim(1)));
    Tensor attn = softmax(
        scale(matmul(nn::linear(p, "fine.q", hints), transpose(nn::linear(p, "fine.k", inst))), inv_sqrt), 1);
    Tensor mixed = layer_norm(add(hints, matmul(attn, nn::linear(p, "fine.v", inst))));
    Tensor offset = nn::mlp(p, "fine.head", mean(mixed, 0, true));
    auto anchor = s.anchor();
    return add(Tensor({1, 2}, std::vector<double>{anchor[0], anchor[1]}), scale(offset, s.side / 2));
}

Tensor fine_loss(const ParamView& p, const std::vector<const Submap*>& submaps, const std::vector<const Query*>& queries) {
    check_pairs(submaps, queries, "fine_loss");
    Tensor total = Tensor::scalar(0.0);
    for (std::size_t i = 0; i < submaps.size(); ++i) {
        const Query& q = *queries[i];
        Tensor gt({1, 2}, std::vector<double>{q.gt_pos[0], q.gt_pos[1]});
        Tensor err = scale(sub(fine_predict(p, q, *submaps[i]), gt), 2.0 / submaps[i]->side);
        total = add(total, sum(square(err)));
    }
    return scale(total, 1.0 / static_cast<double>(submaps.size()));
}

}  // namespace symploc::pipeline
