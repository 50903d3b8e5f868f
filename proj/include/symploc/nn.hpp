#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include <functional>

#include "symploc/autodiff/gradcheck.hpp"
#include "symploc/autodiff/ops.hpp"

namespace symploc {

using ad::Shape;
using ad::Tensor;
using Rng = std::mt19937_64;

// Named learnable tensors in registration order. Names are unique.
class ParamStore {
public:
    void add(const std::string& name, Tensor value);
    const Tensor& get(const std::string& name) const;
    void set(const std::string& name, Tensor value);
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    const std::vector<std::string>& names() const { return names_; }
    std::size_t size() const { return names_.size(); }
    std::size_t scalar_count() const;

    // Names starting with `prefix`.
    std::vector<std::string> names_with_prefix(const std::string& prefix) const;

private:
    std::vector<std::string> names_;
    std::vector<Tensor> values_;
    std::map<std::string, std::size_t> index_;
};

// Read access to a ParamStore for one forward pass. With a tape, each
// parameter is bound as a tape variable the first time it is requested.
class ParamView {
public:
    explicit ParamView(const ParamStore& store, ad::Tape* tape = nullptr) : store_(&store), tape_(tape) {}

    Tensor operator()(const std::string& name) const;
    bool has(const std::string& name) const { return store_->contains(name); }
    ad::Tape* tape() const { return tape_; }

    // Serve `value` instead of the stored tensor for `name` (shapes must match).
    void substitute(const std::string& name, Tensor value);

    // Gradients of every parameter touched by this view; call after backward.
    std::map<std::string, std::vector<double>> gradients() const;

private:
    const ParamStore* store_;
    ad::Tape* tape_;
    mutable std::map<std::string, Tensor> bound_;
};

namespace nn {

Tensor glorot(Rng& rng, std::size_t fan_in, std::size_t fan_out);
Tensor normal(Rng& rng, Shape shape, double stddev);

// Registers `<prefix>.w` [in, out] and, optionally, `<prefix>.b` [out].
void add_linear(ParamStore& store, Rng& rng, const std::string& prefix, std::size_t in, std::size_t out,
                bool bias = true);
// Registers a one-hidden-layer tanh MLP as `<prefix>.0` and `<prefix>.1`.
void add_mlp(ParamStore& store, Rng& rng, const std::string& prefix, std::size_t in, std::size_t hidden,
             std::size_t out);

// x @ W (+ b) over the last axis; any leading shape is kept.
Tensor linear(const ParamView& p, const std::string& prefix, const Tensor& x);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor* b);
Tensor mlp(const ParamView& p, const std::string& prefix, const Tensor& x);

// Central-difference check of `loss` against reverse mode over the named
// parameters (all of them when `names` is empty).
ad::GradCheckResult gradient_check(const ParamStore& store, const std::function<Tensor(const ParamView&)>& loss,
                                   std::vector<std::string> names = {}, double h = 1e-5);

}  // namespace nn
}  // namespace symploc
