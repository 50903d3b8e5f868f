#include "symploc/pipeline/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace symploc::pipeline {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;
constexpr double kMaxHeight = 3.0;

std::vector<std::vector<double>> gaussian_table(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<std::vector<double>> t(rows, std::vector<double>(cols));
    for (auto& r : t)
        for (auto& v : r) v = n(rng);
    return t;
}

std::size_t uniform_count(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Submap make_submap(std::mt19937_64& rng, const DataConfig& cfg, const Vocabulary& vocab, int id,
                   const std::vector<Submap>& earlier) {
    std::size_t cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(cfg.num_submaps))));
    Submap s;
    s.id = id;
    s.origin = {static_cast<double>(static_cast<std::size_t>(id) % cols) * cfg.cell_stride,
                static_cast<double>(static_cast<std::size_t>(id) / cols) * cfg.cell_stride};
    s.side = cfg.cell_side;

    std::vector<int> classes;
    std::bernoulli_distribution share(cfg.shared_multiset_prob);
    if (!earlier.empty() && share(rng)) {
        const Submap& src = earlier[std::uniform_int_distribution<std::size_t>(0, earlier.size() - 1)(rng)];
        for (const auto& inst : src.instances) classes.push_back(inst.class_id);
    } else {
        std::uniform_int_distribution<int> cls(0, static_cast<int>(cfg.num_classes) - 1);
        classes.resize(uniform_count(rng, cfg.min_instances, cfg.max_instances));
        for (auto& c : classes) c = cls(rng);
    }

    std::uniform_real_distribution<double> ux(s.origin[0], s.origin[0] + s.side);
    std::uniform_real_distribution<double> uy(s.origin[1], s.origin[1] + s.side);
    std::uniform_real_distribution<double> uz(0.0, kMaxHeight);
    std::normal_distribution<double> noise(0.0, cfg.feature_noise > 0.0 ? cfg.feature_noise : 1.0);
    for (int c : classes) {
        Instance inst;
        inst.class_id = c;
        inst.centroid = {ux(rng), uy(rng), uz(rng)};
        inst.feature = vocab.point_class[static_cast<std::size_t>(c)];
        if (cfg.feature_noise > 0.0)
            for (auto& v : inst.feature) v += noise(rng);
        s.instances.push_back(std::move(inst));
    }
    return s;
}

Query make_query(std::mt19937_64& rng, const DataConfig& cfg, const Vocabulary& vocab, const Dataset& data, int id,
                 Split split) {
    const Submap& gt = data.gallery[std::uniform_int_distribution<std::size_t>(0, data.gallery.size() - 1)(rng)];
    return synthesize_query(rng, cfg, vocab, gt, id, split);
}

json vec_json(const double* p, std::size_t n) { return json(std::vector<double>(p, p + n)); }

template <std::size_t N>
std::array<double, N> array_from(const json& j, const char* what) {
    if (!j.is_array() || j.size() != N) throw std::runtime_error(std::string("dataset: bad ") + what);
    std::array<double, N> a{};
    for (std::size_t i = 0; i < N; ++i) a[i] = j[i].get<double>();
    return a;
}

}  // namespace

void DataConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("data config: " + m); };
    if (num_submaps == 0) fail("num_submaps must be positive");
    if (train_queries + val_queries == 0) fail("at least one query is required");
    if (num_classes == 0) fail("num_classes must be positive");
    if (feature_dim == 0 || class_text_dim == 0 || direction_dim == 0) fail("dimensions must be positive");
    if (min_instances == 0 || min_instances > max_instances) fail("need 1 <= min_instances <= max_instances");
    if (min_hints == 0 || min_hints > max_hints) fail("need 1 <= min_hints <= max_hints");
    if (!(cell_side > 0.0) || !(cell_stride > 0.0)) fail("cell side and stride must be positive");
    if (!(feature_noise >= 0.0) || !(hint_noise >= 0.0)) fail("noise levels must be non-negative");
    if (!(shared_multiset_prob >= 0.0 && shared_multiset_prob <= 1.0)) fail("shared_multiset_prob must be in [0, 1]");
}

std::vector<const Query*> Dataset::split(Split s) const {
    std::vector<const Query*> out;
    for (const auto& q : queries)
        if (q.split == s) out.push_back(&q);
    return out;
}

const Submap& Dataset::submap(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= gallery.size() || gallery[static_cast<std::size_t>(id)].id != id) {
        throw std::out_of_range("dataset: unknown submap id " + std::to_string(id));
    }
    return gallery[static_cast<std::size_t>(id)];
}

Vocabulary make_vocabulary(const DataConfig& config) {
    std::mt19937_64 rng(config.seed ^ 0x5eedULL);
    Vocabulary v;
    v.point_class = gaussian_table(rng, config.num_classes, config.feature_dim);
    v.text_class = gaussian_table(rng, config.num_classes, config.class_text_dim);
    v.direction = gaussian_table(rng, 8, config.direction_dim);
    return v;
}

int direction_sector(double dx, double dy) {
    constexpr double kSector = 2.0 * 3.14159265358979323846 / 8.0;
    long s = std::lround(std::atan2(dy, dx) / kSector);
    return static_cast<int>(((s % 8) + 8) % 8);
}

Dataset generate_synthetic_dataset(const DataConfig& config) {
    config.validate();
    Vocabulary vocab = make_vocabulary(config);
    std::mt19937_64 rng(config.seed);
    Dataset data;
    data.seed = config.seed;
    data.dims = Dimensions{config.feature_dim, config.text_dim(), config.num_classes};
    for (std::size_t i = 0; i < config.num_submaps; ++i) {
        data.gallery.push_back(make_submap(rng, config, vocab, static_cast<int>(i), data.gallery));
    }
    int next_id = 0;
    for (std::size_t i = 0; i < config.train_queries; ++i) {
        data.queries.push_back(make_query(rng, config, vocab, data, next_id++, Split::train));
    }
    for (std::size_t i = 0; i < config.val_queries; ++i) {
        data.queries.push_back(make_query(rng, config, vocab, data, next_id++, Split::val));
    }
    return data;
}

Query synthesize_query(std::mt19937_64& rng, const DataConfig& cfg, const Vocabulary& vocab, const Submap& gt,
                       int id, Split split) {
    Query q;
    q.id = id;
    q.split = split;
    q.gt_submap = gt.id;
    std::uniform_real_distribution<double> ux(gt.origin[0], gt.origin[0] + gt.side);
    std::uniform_real_distribution<double> uy(gt.origin[1], gt.origin[1] + gt.side);
    q.gt_pos = {ux(rng), uy(rng)};

    std::vector<std::size_t> pick(gt.instances.size());
    std::iota(pick.begin(), pick.end(), 0);
    std::shuffle(pick.begin(), pick.end(), rng);
    std::size_t n = std::min(uniform_count(rng, cfg.min_hints, cfg.max_hints), pick.size());
    pick.resize(n);

    std::normal_distribution<double> noise(0.0, cfg.hint_noise > 0.0 ? cfg.hint_noise : 1.0);
    for (std::size_t idx : pick) {
        const Instance& inst = gt.instances[idx];
        int sector = direction_sector(inst.centroid[0] - q.gt_pos[0], inst.centroid[1] - q.gt_pos[1]);
        std::vector<double> h = vocab.text_class[static_cast<std::size_t>(inst.class_id)];
        const auto& dir = vocab.direction[static_cast<std::size_t>(sector)];
        h.insert(h.end(), dir.begin(), dir.end());
        if (cfg.hint_noise > 0.0)
            for (auto& v : h) v += noise(rng);
        q.hints.push_back(std::move(h));
    }
    return q;
}

double iou_overlap(const Submap& a, const Submap& b) {
    double ix = std::max(0.0, std::min(a.origin[0] + a.side, b.origin[0] + b.side) - std::max(a.origin[0], b.origin[0]));
    double iy = std::max(0.0, std::min(a.origin[1] + a.side, b.origin[1] + b.side) - std::max(a.origin[1], b.origin[1]));
    double inter = ix * iy;
    double uni = a.side * a.side + b.side * b.side - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

void write_dataset(std::ostream& out, const Dataset& data) {
    json header = {{"type", "header"},
                   {"version", kFormatVersion},
                   {"seed", data.seed},
                   {"dims", {{"feature", data.dims.feature}, {"text", data.dims.text}, {"classes", data.dims.classes}}}};
    out << header.dump() << '\n';
    for (const auto& s : data.gallery) {
        json insts = json::array();
        for (const auto& inst : s.instances) {
            insts.push_back({{"class", inst.class_id},
                             {"centroid", vec_json(inst.centroid.data(), 3)},
                             {"feature", inst.feature}});
        }
        json rec = {{"type", "submap"},
                    {"id", s.id},
                    {"origin", vec_json(s.origin.data(), 2)},
                    {"side", s.side},
                    {"instances", insts}};
        out << rec.dump() << '\n';
    }
    for (const auto& q : data.queries) {
        json rec = {{"type", "query"},
                    {"id", q.id},
                    {"split", q.split == Split::train ? "train" : "val"},
                    {"hints", q.hints},
                    {"gt_submap", q.gt_submap},
                    {"gt_pos", vec_json(q.gt_pos.data(), 2)}};
        out << rec.dump() << '\n';
    }
}

Dataset read_dataset(std::istream& in) {
    Dataset data;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error("dataset line " + std::to_string(lineno) + ": " + e.what());
        }
        std::string type = rec.value("type", "");
        if (!have_header) {
            if (type != "header" || rec.at("version").get<int>() != kFormatVersion) {
                throw std::runtime_error("dataset: missing or unsupported header");
            }
            data.seed = rec.at("seed").get<std::uint64_t>();
            const auto& d = rec.at("dims");
            data.dims = Dimensions{d.at("feature").get<std::size_t>(), d.at("text").get<std::size_t>(),
                                   d.at("classes").get<std::size_t>()};
            have_header = true;
        } else if (type == "submap") {
            Submap s;
            s.id = rec.at("id").get<int>();
            s.origin = array_from<2>(rec.at("origin"), "origin");
            s.side = rec.at("side").get<double>();
            for (const auto& ij : rec.at("instances")) {
                Instance inst;
                inst.class_id = ij.at("class").get<int>();
                inst.centroid = array_from<3>(ij.at("centroid"), "centroid");
                inst.feature = ij.at("feature").get<std::vector<double>>();
                if (inst.feature.size() != data.dims.feature) throw std::runtime_error("dataset: feature width");
                s.instances.push_back(std::move(inst));
            }
            if (s.instances.empty()) throw std::runtime_error("dataset: empty submap");
            data.gallery.push_back(std::move(s));
        } else if (type == "query") {
            Query q;
            q.id = rec.at("id").get<int>();
            q.split = rec.value("split", "train") == "val" ? Split::val : Split::train;
            q.hints = rec.at("hints").get<std::vector<std::vector<double>>>();
            q.gt_submap = rec.at("gt_submap").get<int>();
            q.gt_pos = array_from<2>(rec.at("gt_pos"), "gt_pos");
            if (q.hints.empty()) throw std::runtime_error("dataset: query without hints");
            for (const auto& h : q.hints)
                if (h.size() != data.dims.text) throw std::runtime_error("dataset: hint width");
            data.queries.push_back(std::move(q));
        } else {
            throw std::runtime_error("dataset line " + std::to_string(lineno) + ": unknown record type");
        }
    }
    if (!have_header) throw std::runtime_error("dataset: empty file");
    for (std::size_t i = 0; i < data.gallery.size(); ++i) {
        if (data.gallery[i].id != static_cast<int>(i)) throw std::runtime_error("dataset: submap ids must be 0..n-1");
    }
    for (const auto& q : data.queries) data.submap(q.gt_submap);
    return data;
}

void save_dataset(const std::string& path, const Dataset& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    write_dataset(out, data);
    if (!out) throw std::runtime_error("write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    return read_dataset(in);
}

}  // namespace symploc::pipeline
