#include "metadet/meta.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "metadet/io.hpp"

namespace metadet {

void MetaConfig::validate() const {
    if (inner_steps < 1) throw numeric_error("meta config: inner_steps must be >= 1");
    if (alpha_init <= 0) throw numeric_error("meta config: alpha_init must be positive");
    if (outer_lr < 0) throw numeric_error("meta config: outer_lr must be non-negative");
    if (tasks_per_iteration < 1 || epochs < 1 || iterations_per_epoch < 0)
        throw numeric_error("meta config: bad schedule");
}

std::vector<double> gamma_schedule(int64_t epoch, const MetaConfig& cfg) {
    cfg.validate();
    if (epoch < 0 || epoch >= cfg.epochs) throw numeric_error("gamma_schedule: epoch out of range");
    size_t n = static_cast<size_t>(cfg.inner_steps) + 1;
    std::vector<double> final_w = cfg.gamma_final;
    if (final_w.size() != n) {
        // fall back to weights proportional to (k+1) when K differs from the
        // length of the configured final vector
        final_w.resize(n);
        double total = 0;
        for (size_t k = 0; k < n; ++k) total += static_cast<double>(k + 1);
        for (size_t k = 0; k < n; ++k) final_w[k] = static_cast<double>(k + 1) / total;
    }
    double t = cfg.epochs <= 1 ? 0.0
                               : static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1);
    std::vector<double> w(n);
    double sum = 0;
    for (size_t k = 0; k < n; ++k) {
        double uniform = 1.0 / static_cast<double>(n);
        w[k] = (1 - t) * uniform + t * final_w[k];
        sum += w[k];
    }
    for (auto& x : w) x /= sum;
    return w;
}

namespace {

// alpha broadcast to the weight's shape: rank-4 weights use one rate per
// output kernel, everything else is elementwise.
NodePtr broadcast_alpha(const NodePtr& alpha, const Tensor& weight) {
    if (alpha->value.same_shape(weight)) return alpha;
    int64_t cout = weight.shape()[0];
    int64_t per = weight.numel() / cout;
    auto idx = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(weight.numel()));
    for (int64_t c = 0; c < cout; ++c)
        for (int64_t i = 0; i < per; ++i) (*idx)[static_cast<size_t>(c * per + i)] = c;
    return gather(alpha, idx, weight.shape());
}

std::vector<std::string> trainable_names(const ParamSet& p) {
    std::vector<std::string> names;
    for (const auto& n : p.names())
        if (p.at(n).trainable) names.push_back(n);
    return names;
}

}  // namespace

InnerTrajectory inner_gd_nodes(const ParamSet& init, const ParamLossFn& support_loss, int64_t k,
                               bool second_order, bool alpha_requires_grad) {
    if (k < 1) throw numeric_error("inner_gd: step count must be >= 1");
    InnerTrajectory traj;
    ParamNodeMap theta = make_param_nodes(init, true);
    for (const auto& name : trainable_names(init))
        traj.alpha[name] = leaf(init.at(name).lr, alpha_requires_grad);
    traj.steps.push_back(theta);

    for (int64_t step = 0; step < k; ++step) {
        NodePtr loss;
        std::vector<std::string> names = trainable_names(init);
        std::vector<NodePtr> wrt;
        for (const auto& n : names) wrt.push_back(theta[n]);
        std::vector<NodePtr> gs;
        try {
            loss = support_loss(theta);
            gs = grad(loss, wrt, second_order);
        } catch (const numeric_error& e) {
            throw numeric_error("inner_gd step " + std::to_string(step) + ": " + e.what());
        }
        ParamNodeMap next;
        for (const auto& name : init.names()) {
            if (!init.at(name).trainable) {
                next[name] = theta[name];
                continue;
            }
            size_t i = static_cast<size_t>(std::find(names.begin(), names.end(), name) -
                                           names.begin());
            NodePtr scaled = mul(broadcast_alpha(traj.alpha[name], init.at(name).weight), gs[i]);
            next[name] = sub(theta[name], scaled);
        }
        theta = std::move(next);
        traj.steps.push_back(theta);
    }
    return traj;
}

std::vector<ParamSet> inner_gd(const ParamSet& init,
                               const std::function<NodePtr(const ParamNodeMap&)>& support_loss,
                               int64_t k) {
    // value-level loop: each step starts from fresh leaves, no cross-step graph
    std::vector<ParamSet> traj{init};
    ParamSet cur = init;
    for (int64_t step = 0; step < k; ++step) {
        ParamNodeMap nodes = make_param_nodes(cur, true);
        std::vector<std::string> names = trainable_names(cur);
        std::vector<NodePtr> wrt;
        for (const auto& n : names) wrt.push_back(nodes[n]);
        std::vector<NodePtr> gs;
        try {
            NodePtr loss = support_loss(nodes);
            gs = grad(loss, wrt, false);
        } catch (const numeric_error& e) {
            throw numeric_error("inner_gd step " + std::to_string(step) + ": " + e.what());
        }
        for (size_t i = 0; i < names.size(); ++i) {
            ParamEntry& e = cur.at(names[i]);
            const Tensor& g = gs[i]->value;
            Tensor w = e.weight;
            int64_t cout = w.rank() == 4 ? w.shape()[0] : 0;
            int64_t per = cout > 0 ? w.numel() / cout : 0;
            for (int64_t j = 0; j < w.numel(); ++j) {
                double a = cout > 0 ? e.lr[j / per] : e.lr[j];
                w.set(j, w[j] - a * g[j]);
            }
            if (!w.all_finite())
                throw numeric_error("inner_gd step " + std::to_string(step) +
                                    ": non-finite update for '" + names[i] + "'");
            e.weight = std::move(w);
        }
        traj.push_back(cur);
    }
    return traj;
}

NodePtr outer_loss(const InnerTrajectory& traj, const ParamLossFn& target_loss,
                   const std::vector<double>& gamma) {
    if (gamma.size() != traj.steps.size())
        throw numeric_error("outer_loss: gamma length " + std::to_string(gamma.size()) +
                            " != trajectory length " + std::to_string(traj.steps.size()));
    NodePtr total;
    for (size_t k = 0; k < gamma.size(); ++k) {
        if (gamma[k] == 0.0) continue;
        NodePtr term = mul(constant(Tensor::scalar(gamma[k])), target_loss(traj.steps[k]));
        total = total ? add(total, term) : term;
    }
    if (!total) throw numeric_error("outer_loss: all gamma weights are zero");
    return total;
}

ParamLossFn detector_sample_loss(const std::vector<Sample>& samples, const DetectorConfig& cfg) {
    if (samples.empty()) throw numeric_error("detector_sample_loss: empty sample list");
    auto targets = std::make_shared<std::vector<LabelTargets>>();
    for (const auto& s : samples) targets->push_back(assign_labels(s.box, cfg));
    auto images = std::make_shared<std::vector<Tensor>>();
    for (const auto& s : samples) images->push_back(s.image);
    return [targets, images, cfg](const ParamNodeMap& params) {
        NodePtr total;
        for (size_t i = 0; i < images->size(); ++i) {
            DetectorOutput out = detector_forward(constant((*images)[i]), params, cfg);
            NodePtr l = detection_loss(out, (*targets)[i], cfg);
            total = total ? add(total, l) : l;
        }
        return mul(total, constant(Tensor::scalar(1.0 / static_cast<double>(images->size()))));
    };
}

namespace {

void adam_update(Tensor& w, const Tensor& g, Tensor& m, Tensor& v, const AdamState& st,
                 double lr) {
    double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (int64_t i = 0; i < w.numel(); ++i) {
        double mi = st.beta1 * m[i] + (1 - st.beta1) * g[i];
        double vi = st.beta2 * v[i] + (1 - st.beta2) * g[i] * g[i];
        m.set(i, mi);
        v.set(i, vi);
        double mhat = mi / bc1, vhat = vi / bc2;
        w.set(i, w[i] - lr * mhat / (std::sqrt(vhat) + st.eps));
    }
}

}  // namespace

MetaStepResult meta_step(ParamSet& params, const std::vector<Task>& tasks,
                         const DetectorConfig& det_cfg, const MetaConfig& cfg, AdamState& adam,
                         int64_t epoch) {
    cfg.validate();
    if (tasks.empty()) throw numeric_error("meta_step: no tasks");
    bool second_order = epoch >= cfg.first_order_epochs;
    std::vector<double> gamma = gamma_schedule(std::min(epoch, cfg.epochs - 1), cfg);

    std::vector<std::string> names = trainable_names(params);
    std::map<std::string, Tensor> grad_w, grad_a;
    for (const auto& n : names) {
        grad_w.emplace(n, Tensor::zeros(params.at(n).weight.shape()));
        grad_a.emplace(n, Tensor::zeros(params.at(n).lr.shape()));
    }

    double mean_loss = 0;
    for (size_t ti = 0; ti < tasks.size(); ++ti) {
        const Task& task = tasks[ti];
        if (task.support.empty() || task.target.empty())
            throw numeric_error("meta_step: task " + std::to_string(ti) + " is empty");
        try {
            ParamLossFn support_loss = detector_sample_loss(task.support, det_cfg);
            ParamLossFn target_loss = detector_sample_loss(task.target, det_cfg);
            InnerTrajectory traj =
                inner_gd_nodes(params, support_loss, cfg.inner_steps, second_order);
            NodePtr total = outer_loss(traj, target_loss, gamma);
            mean_loss += scalar_value(total);

            std::vector<NodePtr> wrt;
            for (const auto& n : names) wrt.push_back(traj.steps[0][n]);
            for (const auto& n : names) wrt.push_back(traj.alpha[n]);
            std::vector<NodePtr> gs = grad(total, wrt, false);
            for (size_t i = 0; i < names.size(); ++i) {
                Tensor& gw = grad_w.at(names[i]);
                const Tensor& g = gs[i]->value;
                for (int64_t j = 0; j < gw.numel(); ++j) gw.set(j, gw[j] + g[j]);
                Tensor& ga = grad_a.at(names[i]);
                const Tensor& g2 = gs[names.size() + i]->value;
                for (int64_t j = 0; j < ga.numel(); ++j) ga.set(j, ga[j] + g2[j]);
            }
        } catch (const numeric_error& e) {
            throw numeric_error("meta_step task " + std::to_string(ti) + ": " + e.what());
        }
    }
    double inv = 1.0 / static_cast<double>(tasks.size());
    mean_loss *= inv;

    // global-norm clipping over theta and alpha gradients together
    double sq = 0;
    for (const auto& n : names) {
        for (int64_t j = 0; j < grad_w.at(n).numel(); ++j) {
            double g = grad_w.at(n)[j] * inv;
            grad_w.at(n).set(j, g);
            sq += g * g;
        }
        for (int64_t j = 0; j < grad_a.at(n).numel(); ++j) {
            double g = grad_a.at(n)[j] * inv;
            grad_a.at(n).set(j, g);
            sq += g * g;
        }
    }
    double norm = std::sqrt(sq);
    double scale = norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;
    if (scale != 1.0)
        for (const auto& n : names) {
            for (int64_t j = 0; j < grad_w.at(n).numel(); ++j)
                grad_w.at(n).set(j, grad_w.at(n)[j] * scale);
            for (int64_t j = 0; j < grad_a.at(n).numel(); ++j)
                grad_a.at(n).set(j, grad_a.at(n)[j] * scale);
        }

    if (cfg.outer_lr > 0) {
        adam.step += 1;
        for (const auto& n : names) {
            ParamEntry& e = params.at(n);
            if (!adam.m.count(n)) {
                adam.m.emplace(n, Tensor::zeros(e.weight.shape()));
                adam.v.emplace(n, Tensor::zeros(e.weight.shape()));
            }
            adam_update(e.weight, grad_w.at(n), adam.m.at(n), adam.v.at(n), adam, cfg.outer_lr);
            if (cfg.learn_alpha) {
                std::string an = n + "~alpha";
                if (!adam.m.count(an)) {
                    adam.m.emplace(an, Tensor::zeros(e.lr.shape()));
                    adam.v.emplace(an, Tensor::zeros(e.lr.shape()));
                }
                adam_update(e.lr, grad_a.at(n), adam.m.at(an), adam.v.at(an), adam, cfg.outer_lr);
                for (int64_t j = 0; j < e.lr.numel(); ++j)
                    if (e.lr[j] < 1e-6) e.lr.set(j, 1e-6);
            }
        }
    }
    return {mean_loss, second_order ? 1 : 0};
}

TrainResult meta_train(const DetectorConfig& det_cfg, const MetaConfig& cfg,
                       const TaskSource& source, const ParamSet& init, int64_t start_iteration,
                       const EpochHook& hook, const AdamState& initial_adam) {
    cfg.validate();
    TrainResult res;
    res.params = init;
    res.adam = initial_adam;
    int64_t total_iters = cfg.epochs * cfg.iterations_per_epoch;
    for (int64_t iter = start_iteration; iter < total_iters; ++iter) {
        int64_t epoch = cfg.iterations_per_epoch > 0 ? iter / cfg.iterations_per_epoch : 0;
        auto t0 = std::chrono::steady_clock::now();
        std::vector<Task> tasks = source(iter, cfg.tasks_per_iteration);
        MetaStepResult step;
        try {
            step = meta_step(res.params, tasks, det_cfg, cfg, res.adam, epoch);
        } catch (const numeric_error& e) {
            throw numeric_error("meta_train iteration " + std::to_string(iter) + ": " + e.what());
        }
        res.second_order_steps += step.second_order;
        double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                        .count();
        res.log.push_back({iter, epoch, step.loss, ms});
        bool epoch_end = cfg.iterations_per_epoch > 0 &&
                         (iter + 1) % cfg.iterations_per_epoch == 0;
        if (epoch_end && hook) hook(epoch, res.params, res.adam);
    }
    return res;
}

TrainResult baseline_train(const DetectorConfig& det_cfg, const MetaConfig& cfg,
                           const TaskSource& source, const ParamSet& init) {
    cfg.validate();
    TrainResult res;
    res.params = init;
    int64_t total_iters = cfg.epochs * cfg.iterations_per_epoch;
    for (int64_t iter = 0; iter < total_iters; ++iter) {
        int64_t epoch = cfg.iterations_per_epoch > 0 ? iter / cfg.iterations_per_epoch : 0;
        auto t0 = std::chrono::steady_clock::now();
        std::vector<Task> tasks = source(iter, cfg.tasks_per_iteration);
        std::vector<Sample> batch;
        for (const auto& t : tasks) {
            batch.insert(batch.end(), t.support.begin(), t.support.end());
            batch.insert(batch.end(), t.target.begin(), t.target.end());
        }
        std::vector<std::string> names = trainable_names(res.params);
        double loss_value = 0;
        std::vector<NodePtr> gs;
        try {
            ParamNodeMap nodes = make_param_nodes(res.params, true);
            NodePtr loss = detector_sample_loss(batch, det_cfg)(nodes);
            loss_value = scalar_value(loss);
            std::vector<NodePtr> wrt;
            for (const auto& n : names) wrt.push_back(nodes[n]);
            gs = grad(loss, wrt, false);
        } catch (const numeric_error& e) {
            throw numeric_error("baseline_train iteration " + std::to_string(iter) + ": " +
                                e.what());
        }
        double sq = 0;
        for (const auto& g : gs)
            for (int64_t j = 0; j < g->value.numel(); ++j) sq += g->value[j] * g->value[j];
        double norm = std::sqrt(sq);
        double scale = norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;
        if (cfg.outer_lr > 0) {
            res.adam.step += 1;
            for (size_t i = 0; i < names.size(); ++i) {
                ParamEntry& e = res.params.at(names[i]);
                Tensor g = gs[i]->value;
                if (scale != 1.0)
                    for (int64_t j = 0; j < g.numel(); ++j) g.set(j, g[j] * scale);
                if (!res.adam.m.count(names[i])) {
                    res.adam.m.emplace(names[i], Tensor::zeros(e.weight.shape()));
                    res.adam.v.emplace(names[i], Tensor::zeros(e.weight.shape()));
                }
                adam_update(e.weight, g, res.adam.m.at(names[i]), res.adam.v.at(names[i]),
                            res.adam, cfg.outer_lr);
            }
        }
        double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                        .count();
        res.log.push_back({iter, epoch, loss_value, ms});
    }
    return res;
}

void save_adam_state(const std::string& path, const AdamState& state) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw numeric_error("cannot open '" + path + "' for writing");
    os << "step=" << state.step << "\n\n";
    for (const auto& [name, m] : state.m) {
        uint64_t len = name.size();
        os.write(reinterpret_cast<const char*>(&len), 8);
        os.write(name.data(), static_cast<std::streamsize>(len));
        write_tensor(os, m);
        write_tensor(os, state.v.at(name));
    }
}

AdamState load_adam_state(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw numeric_error("cannot open '" + path + "' for reading");
    AdamState st;
    std::string line;
    std::getline(is, line);
    if (line.rfind("step=", 0) != 0) throw numeric_error("bad adam state file");
    st.step = std::stoll(line.substr(5));
    std::getline(is, line);
    while (is.peek() != EOF && is) {
        uint64_t len = 0;
        is.read(reinterpret_cast<char*>(&len), 8);
        if (!is) break;
        std::string name(len, '\0');
        is.read(name.data(), static_cast<std::streamsize>(len));
        Tensor m = read_tensor(is);
        Tensor v = read_tensor(is);
        st.m.emplace(name, std::move(m));
        st.v.emplace(name, std::move(v));
        is.peek();
    }
    return st;
}

}  // namespace metadet
