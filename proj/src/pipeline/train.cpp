#include "symploc/pipeline/train.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace symploc::pipeline {

using namespace symploc::ad;

void Adam::step(ParamStore& store, const std::map<std::string, std::vector<double>>& grads) {
    ++t_;
    double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (const auto& [name, g] : grads) {
        const Tensor& cur = store.get(name);
        auto& st = state_[name];
        if (st.m.empty()) {
            st.m.assign(g.size(), 0.0);
            st.v.assign(g.size(), 0.0);
        }
        std::vector<double> next = cur.to_vector();
        for (std::size_t i = 0; i < g.size(); ++i) {
            st.m[i] = config_.beta1 * st.m[i] + (1.0 - config_.beta1) * g[i];
            st.v[i] = config_.beta2 * st.v[i] + (1.0 - config_.beta2) * g[i] * g[i];
            double mhat = st.m[i] / c1;
            double vhat = st.v[i] / c2;
            next[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
        }
        store.set(name, Tensor(cur.shape(), std::move(next)));
    }
}

void TrainConfig::validate() const {
    if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be positive");
    if (!(lr_coarse >= 0.0) || !(lr_fine >= 0.0)) throw std::invalid_argument("train config: lr must be >= 0");
}

std::vector<std::size_t> sample_batch(Rng& rng, const std::vector<const Query*>& queries, std::size_t batch_size) {
    std::vector<std::size_t> order(queries.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> batch;
    std::set<int> seen;
    for (std::size_t idx : order) {
        if (seen.insert(queries[idx]->gt_submap).second) batch.push_back(idx);
        if (batch.size() == batch_size) break;
    }
    return batch;
}

namespace {

bool all_finite(const std::map<std::string, std::vector<double>>& grads) {
    for (const auto& [_, g] : grads)
        for (double v : g)
            if (!std::isfinite(v)) return false;
    return true;
}

// Only the parameters of the active phase are updated.
std::map<std::string, std::vector<double>> phase_grads(std::map<std::string, std::vector<double>> grads, Phase phase) {
    for (auto it = grads.begin(); it != grads.end();) {
        bool fine = it->first.rfind("fine.", 0) == 0;
        if (fine != (phase == Phase::fine)) {
            it = grads.erase(it);
        } else {
            ++it;
        }
    }
    return grads;
}

}  // namespace

TrainResult train(const Dataset& data, ParamStore& params, const ModelConfig& model, const TrainConfig& config,
                  const StepCallback& on_step) {
    config.validate();
    auto queries = data.split(Split::train);
    if (queries.empty()) throw std::invalid_argument("train: dataset has no training queries");

    Rng rng(config.seed);
    Adam coarse_opt(AdamConfig{config.lr_coarse});
    Adam fine_opt(AdamConfig{config.lr_fine});
    TrainResult result;
    std::size_t total_steps = config.coarse_steps + config.fine_steps;

    for (std::size_t step = 0; step < total_steps; ++step) {
        Phase phase = step < config.coarse_steps ? Phase::coarse : Phase::fine;
        auto idx = sample_batch(rng, queries, config.batch_size);
        std::vector<const Query*> qs;
        std::vector<const Submap*> ss;
        std::vector<int> qids, sids;
        for (std::size_t i : idx) {
            qs.push_back(queries[i]);
            ss.push_back(&data.submap(queries[i]->gt_submap));
            qids.push_back(queries[i]->id);
            sids.push_back(queries[i]->gt_submap);
        }

        LossRecord rec;
        rec.step = step;
        rec.phase = phase;
        Tape tape;
        ParamView view(params, &tape);
        try {
            Tensor loss;
            if (phase == Phase::coarse) {
                CoarseLosses l = coarse_losses(view, model, ss, qs);
                loss = l.total();
                rec.instance = l.instance.item();
                rec.relation = l.relation.item();
                rec.global = l.global.item();
            } else {
                loss = fine_loss(view, ss, qs);
                rec.fine = loss.item();
            }
            rec.total = loss.item();
            if (!std::isfinite(rec.total)) throw NonFiniteError("loss is not finite");
            tape.backward(loss);
        } catch (const NonFiniteError& e) {
            throw TrainingDiverged(std::string("non-finite value during training: ") + e.what(), step, qids, sids);
        }
        auto grads = phase_grads(view.gradients(), phase);
        if (!all_finite(grads)) throw TrainingDiverged("non-finite gradient during training", step, qids, sids);
        (phase == Phase::coarse ? coarse_opt : fine_opt).step(params, grads);

        result.curve.push_back(rec);
        if (on_step) on_step(rec);
    }
    return result;
}

}  // namespace symploc::pipeline
