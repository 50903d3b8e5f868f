#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <set>
#include <sstream>

#include "doctest.h"
#include "symploc/pipeline/checkpoint.hpp"
#include "symploc/pipeline/evaluate.hpp"
#include "symploc/pipeline/train.hpp"

using namespace symploc;
using namespace symploc::pipeline;

namespace {

DataConfig small_data(std::uint64_t seed = 3) {
    DataConfig c;
    c.seed = seed;
    c.num_submaps = 16;
    c.train_queries = 96;
    c.val_queries = 32;
    c.feature_dim = 8;
    c.class_text_dim = 4;
    c.direction_dim = 4;
    c.min_instances = 2;
    c.max_instances = 5;
    c.min_hints = 2;
    c.max_hints = 4;
    return c;
}

ModelConfig small_model(const DataConfig& d) {
    ModelConfig m;
    m.dim = 8;
    m.feature_dim = d.feature_dim;
    m.text_dim = d.text_dim();
    m.cheb_order = 3;
    return m;
}

std::string serialize(const Dataset& d) {
    std::ostringstream out;
    write_dataset(out, d);
    return out.str();
}

bool same_params(const ParamStore& a, const ParamStore& b) {
    if (a.names() != b.names()) return false;
    for (const auto& n : a.names())
        if (!ad::bitwise_equal(a.get(n), b.get(n))) return false;
    return true;
}

bool inside(const Submap& s, double x, double y) {
    return x >= s.origin[0] && x <= s.origin[0] + s.side && y >= s.origin[1] && y <= s.origin[1] + s.side;
}

// Three standard deviations of a binomial proportion.
double three_sigma(double p, std::size_t n) { return 3.0 * std::sqrt(p * (1 - p) / static_cast<double>(n)); }

}  // namespace

TEST_CASE("synthetic dataset is deterministic and well formed") {
    DataConfig cfg = small_data();
    Dataset a = generate_synthetic_dataset(cfg);
    CHECK(serialize(a) == serialize(generate_synthetic_dataset(cfg)));
    CHECK(serialize(a) != serialize(generate_synthetic_dataset(small_data(4))));

    CHECK(a.gallery.size() == 16);
    CHECK(a.split(Split::train).size() == 96);
    CHECK(a.split(Split::val).size() == 32);
    for (const auto& s : a.gallery) {
        CHECK(s.instances.size() >= cfg.min_instances);
        CHECK(s.instances.size() <= cfg.max_instances);
        for (const auto& inst : s.instances) {
            CHECK(inside(s, inst.centroid[0], inst.centroid[1]));
            CHECK(inst.feature.size() == cfg.feature_dim);
        }
    }
    for (const auto& q : a.queries) {
        const Submap& gt = a.submap(q.gt_submap);
        CHECK(inside(gt, q.gt_pos[0], q.gt_pos[1]));
        CHECK(!q.hints.empty());
        CHECK(q.hints.size() <= std::min(cfg.max_hints, gt.instances.size()));
        for (const auto& h : q.hints) CHECK(h.size() == cfg.text_dim());
    }
}

TEST_CASE("some submaps share a class multiset") {
    DataConfig cfg;
    cfg.train_queries = 1;
    cfg.val_queries = 0;
    Dataset d = generate_synthetic_dataset(cfg);
    std::set<std::multiset<int>> seen;
    std::size_t repeats = 0;
    for (const auto& s : d.gallery) {
        std::multiset<int> classes;
        for (const auto& inst : s.instances) classes.insert(inst.class_id);
        if (!seen.insert(classes).second) ++repeats;
    }
    CHECK(repeats > 0);
}

TEST_CASE("dataset file round trip") {
    Dataset a = generate_synthetic_dataset(small_data());
    std::string text = serialize(a);
    std::istringstream in(text);
    Dataset b = read_dataset(in);
    CHECK(serialize(b) == text);
    CHECK(b.gallery[3].instances[0].feature == a.gallery[3].instances[0].feature);
    CHECK(b.queries[5].hints == a.queries[5].hints);

    std::istringstream bad("{\"type\":\"submap\"}\n");
    CHECK_THROWS(read_dataset(bad));
}

TEST_CASE("noise-free hints let a nearest-class baseline retrieve perfectly") {
    DataConfig cfg = small_data();
    cfg.hint_noise = 0.0;
    cfg.num_classes = 12;
    Vocabulary vocab = make_vocabulary(cfg);
    std::vector<Submap> gallery;
    for (int id = 0; id < 4; ++id) {
        Submap s;
        s.id = id;
        s.origin = {40.0 * id, 0.0};
        s.side = 30.0;
        for (int k = 0; k < 3; ++k) {
            Instance inst;
            inst.class_id = 3 * id + k;  // disjoint class sets
            inst.centroid = {s.origin[0] + 5.0 + 8.0 * k, 10.0 + 3.0 * k, 1.0};
            inst.feature = vocab.point_class[static_cast<std::size_t>(inst.class_id)];
            s.instances.push_back(inst);
        }
        gallery.push_back(s);
    }
    std::mt19937_64 rng(11);
    std::size_t hits = 0, total = 0;
    for (int i = 0; i < 200; ++i) {
        const Submap& gt = gallery[static_cast<std::size_t>(i % 4)];
        Query q = synthesize_query(rng, cfg, vocab, gt, i, Split::val);
        std::vector<int> votes(4, 0);
        for (const auto& h : q.hints) {
            int best = 0;
            double best_d = 1e300;
            for (std::size_t c = 0; c < cfg.num_classes; ++c) {
                double d = 0;
                for (std::size_t j = 0; j < cfg.class_text_dim; ++j) d += std::pow(h[j] - vocab.text_class[c][j], 2);
                if (d < best_d) best_d = d, best = static_cast<int>(c);
            }
            for (const auto& s : gallery)
                for (const auto& inst : s.instances)
                    if (inst.class_id == best) ++votes[static_cast<std::size_t>(s.id)];
        }
        int pick = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
        hits += pick == q.gt_submap;
        ++total;
    }
    CHECK(hits == total);
}

TEST_CASE("iou_overlap") {
    Submap a, b;
    a.side = b.side = 1.0;
    a.origin = b.origin = {0.0, 0.0};
    CHECK(iou_overlap(a, b) == 1.0);
    b.origin = {2.0, 0.0};
    CHECK(iou_overlap(a, b) == 0.0);
    b.origin = {0.5, 0.0};
    CHECK(std::abs(iou_overlap(a, b) - 1.0 / 3.0) <= 1e-15);
    CHECK(iou_overlap(a, b) == iou_overlap(b, a));
}

TEST_CASE("retrieval tie and gallery rules") {
    DataConfig cfg = small_data();
    Dataset data = generate_synthetic_dataset(cfg);
    ModelConfig mc = small_model(cfg);
    ParamStore params = init_params(mc, 1);

    Dataset one = data;
    one.gallery.resize(1);
    for (auto& q : one.queries) q.gt_submap = 0;
    GalleryIndex single(one, params, mc);
    auto r = coarse_retrieve(one.queries[0], single, params, mc, 1);
    CHECK(r.ranked.size() == 1);
    CHECK(r.ranked[0].submap_id == 0);
    CHECK(r.position.has_value());

    Dataset dup = data;
    dup.gallery[1] = dup.gallery[0];
    dup.gallery[1].id = 1;
    GalleryIndex index(dup, params, mc);
    for (int i = 0; i < 10; ++i) {
        auto rr = coarse_retrieve(dup.queries[static_cast<std::size_t>(i)], index, params, mc, dup.gallery.size());
        auto pos0 = std::find_if(rr.ranked.begin(), rr.ranked.end(), [](auto& x) { return x.submap_id == 0; });
        auto pos1 = std::find_if(rr.ranked.begin(), rr.ranked.end(), [](auto& x) { return x.submap_id == 1; });
        CHECK(pos0 < pos1);
        CHECK(pos1 - pos0 == 1);
        for (std::size_t k = 1; k < rr.ranked.size(); ++k) CHECK(rr.ranked[k - 1].score >= rr.ranked[k].score);
    }
    CHECK_THROWS(top_k({}, 1));
    CHECK_THROWS(top_k({1.0, 2.0}, 3));
}

TEST_CASE("composite ranking ignores per-branch constant shifts") {
    DataConfig cfg = small_data();
    Dataset data = generate_synthetic_dataset(cfg);
    ModelConfig mc = small_model(cfg);
    ParamStore params = init_params(mc, 2);
    GalleryIndex index(data, params, mc);
    for (int i = 0; i < 8; ++i) {
        BranchScores s = score_query(data.queries[static_cast<std::size_t>(i)], index, params, mc);
        auto base = top_k(composite_scores(s), data.gallery.size());
        BranchScores shifted = s;
        for (auto& v : shifted.relation) v += 3.25;
        auto moved = top_k(composite_scores(shifted), data.gallery.size());
        for (std::size_t k = 0; k < base.size(); ++k) {
            CHECK(base[k].submap_id == moved[k].submap_id);
            CHECK(std::abs(base[k].score - moved[k].score) <= 1e-12);
        }
    }
}

TEST_CASE("untrained parameters retrieve at chance") {
    DataConfig cfg = small_data(21);
    cfg.train_queries = 0;
    cfg.val_queries = 600;
    Dataset data = generate_synthetic_dataset(cfg);
    ModelConfig mc = small_model(cfg);
    ParamStore params = init_params(mc, 5);
    EvalConfig ec{{1, 4}, {5.0}, 1};
    auto report = evaluate_recall(data.split(Split::val), data, params, mc, ec);
    double p1 = 1.0 / 16.0, p4 = 4.0 / 16.0;
    INFO("recall@1 = " << report.combined.retrieval[1] << ", recall@4 = " << report.combined.retrieval[4]);
    CHECK(std::abs(report.combined.retrieval[1] - p1) <= three_sigma(p1, 600));
    CHECK(std::abs(report.combined.retrieval[4] - p4) <= three_sigma(p4, 600));
}

TEST_CASE("recall from outcomes") {
    EvalConfig ec{{1, 2, 5}, {5.0, 10.0}, 1};
    SUBCASE("perfect oracle") {
        std::vector<QueryOutcome> out(20);
        for (int i = 0; i < 20; ++i) {
            auto& o = out[static_cast<std::size_t>(i)];
            o.gt_submap = i % 5;
            o.gt_pos = {1.0 * i, 2.0};
            o.ranked_ids = {o.gt_submap};
            for (int j = 0; j < 5; ++j)
                if (j != o.gt_submap) o.ranked_ids.push_back(j);
            o.predictions[o.gt_submap] = o.gt_pos;
        }
        RecallTable t = recall_from_outcomes(out, ec);
        for (auto [k, v] : t.retrieval) CHECK(v == 1.0);
        for (auto& [k, m] : t.localization)
            for (auto [e, v] : m) CHECK(v == 1.0);
    }
    SUBCASE("random scorer is at chance and recall grows with k") {
        std::mt19937_64 rng(9);
        const std::size_t g = 10, n = 600;
        std::vector<QueryOutcome> out(n);
        for (auto& o : out) {
            o.gt_submap = std::uniform_int_distribution<int>(0, g - 1)(rng);
            o.ranked_ids.resize(g);
            std::iota(o.ranked_ids.begin(), o.ranked_ids.end(), 0);
            std::shuffle(o.ranked_ids.begin(), o.ranked_ids.end(), rng);
        }
        EvalConfig all{{1, 2, 3, 5, 10}, {5.0}, 1};
        RecallTable t = recall_from_outcomes(out, all);
        double prev = 0.0;
        for (auto [k, v] : t.retrieval) {
            double p = static_cast<double>(k) / g;
            if (k < g) CHECK(std::abs(v - p) <= three_sigma(p, n));
            CHECK(v >= prev);
            prev = v;
        }
        CHECK(t.retrieval[10] == 1.0);
    }
}

TEST_CASE("fine stage") {
    DataConfig cfg = small_data();
    Dataset data = generate_synthetic_dataset(cfg);
    ModelConfig mc = small_model(cfg);
    ParamStore params = init_params(mc, 3);
    const Query& q = data.queries[0];
    const Submap& s = data.submap(q.gt_submap);
    ParamView view(params);
    CHECK(ad::bitwise_equal(fine_predict(view, q, s), fine_predict(view, q, s)));

    params.set("fine.head.0.w", ad::Tensor(params.get("fine.head.0.w").shape(), 0.0));
    params.set("fine.head.1.w", ad::Tensor(params.get("fine.head.1.w").shape(), 0.0));
    params.set("fine.head.1.b", ad::Tensor(params.get("fine.head.1.b").shape(), {0.25, -0.5}));
    ParamView zeroed(params);
    ad::Tensor p = fine_predict(zeroed, q, s);
    auto anchor = s.anchor();
    CHECK(p[0] == anchor[0] + 0.25 * s.side / 2);
    CHECK(p[1] == anchor[1] - 0.5 * s.side / 2);
}

TEST_CASE("training: lr = 0 is a no-op and runs are reproducible") {
    DataConfig cfg = small_data();
    Dataset data = generate_synthetic_dataset(cfg);
    ModelConfig mc = small_model(cfg);
    ParamStore params = init_params(mc, 4);
    ParamStore frozen = params;
    TrainConfig tc;
    tc.coarse_steps = 5;
    tc.fine_steps = 3;
    tc.batch_size = 4;
    tc.lr_coarse = 0.0;
    tc.lr_fine = 0.0;
    train(data, frozen, mc, tc);
    CHECK(same_params(frozen, params));

    tc.lr_coarse = 5e-4;
    tc.lr_fine = 3e-4;
    ParamStore a = params, b = params;
    auto ra = train(data, a, mc, tc);
    auto rb = train(data, b, mc, tc);
    CHECK(same_params(a, b));
    CHECK(!same_params(a, params));
    REQUIRE(ra.curve.size() == 8);
    for (std::size_t i = 0; i < ra.curve.size(); ++i) {
        CHECK(std::memcmp(&ra.curve[i].total, &rb.curve[i].total, sizeof(double)) == 0);
        CHECK(ra.curve[i].phase == (i < 5 ? Phase::coarse : Phase::fine));
    }
}

TEST_CASE("batches pair distinct ground-truth submaps") {
    Dataset data = generate_synthetic_dataset(small_data());
    auto qs = data.split(Split::train);
    Rng rng(1);
    for (int rep = 0; rep < 20; ++rep) {
        auto idx = sample_batch(rng, qs, 8);
        CHECK(idx.size() == 8);
        std::set<int> gts;
        for (auto i : idx) gts.insert(qs[i]->gt_submap);
        CHECK(gts.size() == idx.size());
    }
}

TEST_CASE("training lowers the loss and improves the fine stage") {
    DataConfig cfg = small_data(8);
    Dataset data = generate_synthetic_dataset(cfg);
    ModelConfig mc = small_model(cfg);
    ParamStore params = init_params(mc, 8);
    EvalConfig ec{{1}, {5.0}, 1};
    double before = evaluate_recall(data.split(Split::val), data, params, mc, ec).mean_fine_error;

    TrainConfig tc;
    tc.coarse_steps = 200;
    tc.fine_steps = 200;
    tc.batch_size = 8;
    auto res = train(data, params, mc, tc);
    auto window = [&](std::size_t from) {
        double s = 0;
        for (std::size_t i = from; i < from + 50; ++i) s += res.curve[i].total;
        return s / 50;
    };
    CHECK(window(150) < window(0));
    CHECK(window(150) < res.curve[0].total);
    CHECK(window(350) < window(200));

    double after = evaluate_recall(data.split(Split::val), data, params, mc, ec).mean_fine_error;
    INFO("fine error before " << before << " after " << after);
    CHECK(after < before);
}

TEST_CASE("non-finite training aborts with the offending batch") {
    DataConfig cfg = small_data();
    Dataset data = generate_synthetic_dataset(cfg);
    ModelConfig mc = small_model(cfg);
    ParamStore params = init_params(mc, 4);
    auto w = params.get("inst.pin.w").to_vector();
    w[0] = std::nan("");
    params.set("inst.pin.w", ad::Tensor(params.get("inst.pin.w").shape(), w));
    TrainConfig tc;
    tc.coarse_steps = 3;
    tc.fine_steps = 0;
    tc.batch_size = 4;
    try {
        train(data, params, mc, tc);
        FAIL("expected divergence");
    } catch (const TrainingDiverged& e) {
        CHECK(e.step == 0);
        CHECK(e.query_ids.size() == 4);
        CHECK(e.submap_ids.size() == 4);
    }
}

TEST_CASE("checkpoint round trip") {
    ModelConfig mc = small_model(small_data());
    ParamStore params = init_params(mc, 6);
    std::stringstream buf;
    write_checkpoint(buf, params);
    ParamStore loaded = read_checkpoint(buf);
    CHECK(same_params(params, loaded));

    ParamStore target = init_params(mc, 7);
    assign_checkpoint(target, loaded);
    CHECK(same_params(target, params));

    ModelConfig other = mc;
    other.dim = 12;
    ParamStore wrong = init_params(other, 7);
    CHECK_THROWS(assign_checkpoint(wrong, loaded));

    std::stringstream bad("NOTACKPT");
    CHECK_THROWS(read_checkpoint(bad));
    std::stringstream truncated;
    write_checkpoint(truncated, params);
    std::string cut = truncated.str().substr(0, truncated.str().size() - 5);
    std::stringstream cut_stream(cut);
    CHECK_THROWS(read_checkpoint(cut_stream));
}

TEST_CASE("parallel evaluation matches serial evaluation") {
    DataConfig cfg = small_data();
    Dataset data = generate_synthetic_dataset(cfg);
    ModelConfig mc = small_model(cfg);
    ParamStore params = init_params(mc, 10);
    EvalConfig serial{{1, 3, 5}, {5.0, 10.0, 15.0}, 1};
    EvalConfig parallel = serial;
    parallel.threads = 4;
    auto a = evaluate_recall(data.split(Split::val), data, params, mc, serial);
    auto b = evaluate_recall(data.split(Split::val), data, params, mc, parallel);
    CHECK(a.combined.retrieval == b.combined.retrieval);
    CHECK(a.combined.localization == b.combined.localization);
    CHECK(a.mean_fine_error == b.mean_fine_error);
    for (Branch br : kBranches) CHECK(a.per_branch[br].retrieval == b.per_branch[br].retrieval);
}

TEST_CASE("branch and fine losses match central differences") {
    DataConfig cfg = small_data(12);
    cfg.feature_dim = 4;
    cfg.class_text_dim = 2;
    cfg.direction_dim = 2;
    cfg.min_instances = cfg.max_instances = 4;
    Dataset data = generate_synthetic_dataset(cfg);
    ModelConfig mc = small_model(cfg);
    ParamStore params = init_params(mc, 12);
    auto qs = data.split(Split::train);
    Rng rng(12);
    auto idx = sample_batch(rng, qs, 2);
    std::vector<const Query*> batch_q = {qs[idx[0]], qs[idx[1]]};
    std::vector<const Submap*> batch_s = {&data.submap(batch_q[0]->gt_submap), &data.submap(batch_q[1]->gt_submap)};

    auto check_branch = [&](const char* prefix, auto pick) {
        auto names = params.names_with_prefix(prefix);
        auto r = nn::gradient_check(params, [&](const ParamView& p) { return pick(p); }, names);
        INFO(prefix << " worst " << names[r.worst_param] << "[" << r.worst_index << "] ad=" << r.analytic
                    << " fd=" << r.numeric);
        CHECK(r.max_rel_error <= 1e-4);
    };
    check_branch("inst.", [&](const ParamView& p) { return coarse_losses(p, mc, batch_s, batch_q).instance; });
    check_branch("rel.", [&](const ParamView& p) { return coarse_losses(p, mc, batch_s, batch_q).relation; });
    check_branch("glob.", [&](const ParamView& p) { return coarse_losses(p, mc, batch_s, batch_q).global; });
    check_branch("fine.", [&](const ParamView& p) { return fine_loss(p, batch_s, batch_q); });
}
