#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

namespace symploc::pipeline {

struct Instance {
    int class_id = 0;
    std::array<double, 3> centroid{};  // meters
    std::vector<double> feature;       // D_f
};

struct Submap {
    int id = 0;
    std::array<double, 2> origin{};  // lower-left corner of the square cell
    double side = 0.0;
    std::vector<Instance> instances;

    std::array<double, 2> anchor() const { return {origin[0] + side / 2, origin[1] + side / 2}; }
};

enum class Split { train, val };

struct Query {
    int id = 0;
    Split split = Split::train;
    std::vector<std::vector<double>> hints;  // N_q x D_t
    int gt_submap = 0;
    std::array<double, 2> gt_pos{};
};

struct DataConfig {
    std::uint64_t seed = 42;
    std::size_t num_submaps = 64;
    std::size_t train_queries = 512;
    std::size_t val_queries = 128;
    std::size_t num_classes = 20;
    std::size_t feature_dim = 16;
    // Hints are [class text embedding; direction embedding], D_t = sum of both.
    std::size_t class_text_dim = 8;
    std::size_t direction_dim = 8;
    std::size_t min_instances = 4;
    std::size_t max_instances = 8;
    std::size_t min_hints = 3;
    std::size_t max_hints = 6;
    double cell_stride = 20.0;
    double cell_side = 30.0;
    double feature_noise = 0.1;
    double hint_noise = 0.1;
    // Probability that a submap reuses the class multiset of an earlier one.
    double shared_multiset_prob = 0.125;

    std::size_t text_dim() const { return class_text_dim + direction_dim; }
    // Throws std::invalid_argument describing the first bad field.
    void validate() const;
};

// Embedding tables the generator draws from. Point and text class
// embeddings are independent, so matching has to be learned.
struct Vocabulary {
    std::vector<std::vector<double>> point_class;  // C x D_f
    std::vector<std::vector<double>> text_class;   // C x class_text_dim
    std::vector<std::vector<double>> direction;    // 8 x direction_dim
};

struct Dimensions {
    std::size_t feature = 0;
    std::size_t text = 0;
    std::size_t classes = 0;
};

struct Dataset {
    std::uint64_t seed = 0;
    Dimensions dims;
    std::vector<Submap> gallery;  // gallery[i].id == i
    std::vector<Query> queries;   // train queries first, then val

    std::vector<const Query*> split(Split s) const;
    const Submap& submap(int id) const;
};

Vocabulary make_vocabulary(const DataConfig& config);

// Index of the nearest of the eight compass sectors for a planar offset
// (0 = +x, counter-clockwise).
int direction_sector(double dx, double dy);

Dataset generate_synthetic_dataset(const DataConfig& config);

// One query against `gt`: pose uniform in the cell, hints from a random
// subset of its instances.
Query synthesize_query(std::mt19937_64& rng, const DataConfig& config, const Vocabulary& vocab, const Submap& gt,
                       int id, Split split);

// Intersection over union of two axis-aligned square footprints.
double iou_overlap(const Submap& a, const Submap& b);

// Newline-delimited JSON: header, submaps, queries.
void write_dataset(std::ostream& out, const Dataset& data);
Dataset read_dataset(std::istream& in);
void save_dataset(const std::string& path, const Dataset& data);
Dataset load_dataset(const std::string& path);

}  // namespace symploc::pipeline
