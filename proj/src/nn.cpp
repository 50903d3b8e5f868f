#include "symploc/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace symploc {

void ParamStore::add(const std::string& name, Tensor value) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    index_[name] = names_.size();
    names_.push_back(name);
    values_.push_back(value.detach());
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    return values_[it->second];
}

void ParamStore::set(const std::string& name, Tensor value) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    if (value.shape() != values_[it->second].shape()) {
        throw ad::ShapeError("parameter " + name + " shape " + ad::shape_string(value.shape()) + " != " +
                             ad::shape_string(values_[it->second].shape()));
    }
    values_[it->second] = value.detach();
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
}

std::vector<std::string> ParamStore::names_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& n : names_) {
        if (n.compare(0, prefix.size(), prefix) == 0) out.push_back(n);
    }
    return out;
}

Tensor ParamView::operator()(const std::string& name) const {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    if (!tape_) return store_->get(name);
    Tensor v = tape_->variable(store_->get(name));
    bound_.emplace(name, v);
    return v;
}

void ParamView::substitute(const std::string& name, Tensor value) {
    if (value.shape() != store_->get(name).shape()) {
        throw ad::ShapeError("substitute: shape mismatch for " + name);
    }
    bound_.insert_or_assign(name, std::move(value));
}

std::map<std::string, std::vector<double>> ParamView::gradients() const {
    std::map<std::string, std::vector<double>> out;
    if (!tape_) return out;
    for (const auto& [name, t] : bound_) out[name] = tape_->grad(t);
    return out;
}

namespace nn {

ad::GradCheckResult gradient_check(const ParamStore& store, const std::function<Tensor(const ParamView&)>& loss,
                                   std::vector<std::string> names, double h) {
    if (names.empty()) names = store.names();
    std::vector<Tensor> values;
    values.reserve(names.size());
    for (const auto& n : names) values.push_back(store.get(n));
    auto f = [&](const std::vector<Tensor>& args) {
        ParamView view(store);
        for (std::size_t i = 0; i < names.size(); ++i) view.substitute(names[i], args[i]);
        return loss(view);
    };
    return ad::finite_difference_check(f, values, h);
}

Tensor glorot(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    std::vector<double> v(fan_in * fan_out);
    for (auto& x : v) x = dist(rng);
    return Tensor(Shape{fan_in, fan_out}, std::move(v));
}

Tensor normal(Rng& rng, Shape shape, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> v(ad::shape_size(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v));
}

void add_linear(ParamStore& store, Rng& rng, const std::string& prefix, std::size_t in, std::size_t out,
                bool bias) {
    store.add(prefix + ".w", glorot(rng, in, out));
    if (bias) store.add(prefix + ".b", Tensor(Shape{out}, 0.0));
}

void add_mlp(ParamStore& store, Rng& rng, const std::string& prefix, std::size_t in, std::size_t hidden,
             std::size_t out) {
    add_linear(store, rng, prefix + ".0", in, hidden);
    add_linear(store, rng, prefix + ".1", hidden, out);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor* b) {
    if (x.rank() == 0) throw ad::ShapeError("linear: scalar input");
    std::size_t in = x.shape().back();
    Tensor flat = x.rank() == 2 ? x : ad::reshape(x, Shape{x.size() / in, in});
    Tensor y = ad::matmul(flat, w);
    if (b) y = ad::add(y, *b);
    if (x.rank() == 2) return y;
    Shape out = x.shape();
    out.back() = w.dim(1);
    return ad::reshape(y, out);
}

Tensor linear(const ParamView& p, const std::string& prefix, const Tensor& x) {
    Tensor w = p(prefix + ".w");
    if (!p.has(prefix + ".b")) return linear(x, w, nullptr);
    Tensor b = p(prefix + ".b");
    return linear(x, w, &b);
}

Tensor mlp(const ParamView& p, const std::string& prefix, const Tensor& x) {
    return linear(p, prefix + ".1", ad::tanh(linear(p, prefix + ".0", x)));
}

}  // namespace nn
}  // namespace symploc
