#include "fsa/calib.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>

#include "json.hpp"

#include "fsa/adam.hpp"
#include "fsa/checkpoint.hpp"
#include "fsa/errors.hpp"

namespace fsa::calib {

using ad::Graph;
using ad::Param;
using ad::Tensor;
using ad::Var;

void CalibConfig::validate() const {
    if (E < 1 || hidden < 1) throw ConfigError("calib: widths must be >= 1");
    if (n_mc < 1) throw ConfigError("calib: n_mc must be >= 1");
    if (n_samples < 2) throw ConfigError("calib: n_samples must be >= 2");
    if (!(z > 0)) throw ConfigError("calib: z must be positive");
    if (steps < 1 || batch < 1) throw ConfigError("calib: steps/batch must be >= 1");
    if (!(lr > 0)) throw ConfigError("calib: lr must be positive");
    if (min_points < 1) throw ConfigError("calib: min_points must be >= 1");
}

CalibModel::CalibModel(const CalibConfig& c, std::vector<std::string> ids, Rng& rng)
    : cfg(c), app_ids(std::move(ids)) {
    cfg.validate();
    if (app_ids.empty()) throw ConfigError("calib: empty app list");
    int A = static_cast<int>(app_ids.size());
    h1 = ad::Dense("cal.h1", A, cfg.hidden, rng);
    h2 = ad::Dense("cal.h2", cfg.hidden, cfg.E, rng);
    g_A = ad::Dense("cal.g", cfg.E, 4, rng);
    // softplus^{-1}(1): observation noise starts at 1 in model space
    sigma_obs_raw = Param("cal.sigma_obs", Tensor::mat(1, 1, {std::log(std::exp(1.0) - 1.0)}));
}

std::vector<Param*> CalibModel::params() {
    std::vector<Param*> out;
    h1.collect(out);
    h2.collect(out);
    g_A.collect(out);
    out.push_back(&sigma_obs_raw);
    return out;
}

int CalibModel::app_index(const std::string& app_id) const {
    auto it = std::find(app_ids.begin(), app_ids.end(), app_id);
    if (it == app_ids.end()) throw DataError("calib: unknown app: " + app_id);
    return static_cast<int>(it - app_ids.begin());
}

double CalibModel::sigma_obs() const {
    double r = sigma_obs_raw.value.data[0];
    return std::log1p(std::exp(-std::abs(r))) + std::max(r, 0.0);  // stable softplus
}

Var task_embed_graph(const CalibModel& m, Graph& g, int app_index) {
    int A = static_cast<int>(m.app_ids.size());
    if (app_index < 0 || app_index >= A)
        throw DataError("calib: unknown app index " + std::to_string(app_index));
    Tensor onehot = Tensor::zeros({1, A});
    onehot(0, app_index) = 1.0;
    return relu(m.h2(relu(m.h1(g.leaf(onehot)))));
}

std::vector<double> task_embed(const CalibModel& m, int app_index) {
    Graph g;
    return task_embed_graph(m, g, app_index).val().data;
}

PosteriorParams hyper_params(const CalibModel& m, const std::vector<double>& I_tau) {
    if (static_cast<int>(I_tau.size()) != m.cfg.E)
        throw DataError("calib: task embedding width mismatch");
    Graph g;
    Tensor raw = m.g_A(g.leaf(Tensor::mat(1, m.cfg.E, I_tau))).val();
    auto sp = [](double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); };
    return {{raw.data[0], raw.data[1]}, {sp(raw.data[2]), sp(raw.data[3])}};
}

PosteriorParams posterior_for(const CalibModel& m, int app_index) {
    return hyper_params(m, task_embed(m, app_index));
}

EpsMap draw_eps(const std::vector<CalibPoint>& batch, int n_mc, Rng& rng) {
    std::set<int> apps;
    for (const auto& p : batch) apps.insert(p.app_index);
    EpsMap eps;
    for (int a : apps) {
        auto& v = eps[a];
        v.resize(n_mc);
        for (int s = 0; s < n_mc; ++s) v[s] = {rng.gaussian(), rng.gaussian()};
    }
    return eps;
}

Var elbo_graph(const CalibModel& m, Graph& g, const std::vector<CalibPoint>& batch,
               const EpsMap& eps) {
    if (batch.empty()) throw DataError("calib: empty batch");
    std::map<int, std::vector<const CalibPoint*>> by_app;
    for (const auto& p : batch) by_app[p.app_index].push_back(&p);

    Var sig_obs = softplus(g.param(const_cast<Param&>(m.sigma_obs_raw)));
    Var total = g.leaf(Tensor::scalar(0.0));
    for (const auto& [a, pts] : by_app) {
        auto eit = eps.find(a);
        if (eit == eps.end() || eit->second.empty())
            throw DataError("calib: missing reparameterization noise for app index " +
                            std::to_string(a));
        int n_mc = static_cast<int>(eit->second.size());

        Var raw = m.g_A(task_embed_graph(m, g, a));
        Var mu = slice_cols(raw, 0, 2);
        Var sig = softplus(slice_cols(raw, 2, 4));

        // KL(diag N(mu, sig^2) || N(0, I)), closed form
        Var kl_terms = sub(add_scalar(add(square(sig), square(mu)), -1.0), log_op(square(sig)));
        total = add(total, scale(sum(kl_terms), 0.5));

        int n_a = static_cast<int>(pts.size());
        Tensor X = Tensor::zeros({n_a, 2});
        Tensor y = Tensor::zeros({n_a, 1});
        for (int i = 0; i < n_a; ++i) {
            X(i, 0) = pts[i]->cpu;
            X(i, 1) = 1.0;
            y(i, 0) = pts[i]->y;
        }
        Var Xv = g.leaf(X);
        Var sig_mat = matmul(g.leaf(Tensor::full({n_a, 1}, 1.0)), sig_obs);
        Var nll_sum = g.leaf(Tensor::scalar(0.0));
        for (int s = 0; s < n_mc; ++s) {
            Var beta = add(mu, mul(sig, g.leaf(Tensor::mat(
                                       1, 2, {eit->second[s][0], eit->second[s][1]}))));
            Var pred = matmul(Xv, transpose(beta));
            nll_sum = add(nll_sum, scale(gaussian_nll(y, pred, sig_mat), n_a));
        }
        total = add(total, scale(nll_sum, 1.0 / n_mc));
    }
    return scale(total, 1.0 / static_cast<double>(batch.size()));
}

double elbo_loss(const CalibModel& m, const std::vector<CalibPoint>& batch, int n_mc, Rng& rng) {
    if (n_mc < 1) throw ConfigError("calib: n_mc must be >= 1");
    Graph g;
    return elbo_graph(m, g, batch, draw_eps(batch, n_mc, rng)).val().data[0];
}

TrainResult train_calib(CalibModel& model, const std::vector<CalibRecord>& dataset, Rng& rng) {
    const CalibConfig& c = model.cfg;
    std::vector<CalibPoint> pool;
    for (const auto& r : dataset) {
        auto it = std::find(model.app_ids.begin(), model.app_ids.end(), r.app_id);
        if (it == model.app_ids.end()) continue;
        double y = (r.per_pod - model.y_scaler.mean) / model.y_scaler.std;
        pool.push_back({static_cast<int>(it - model.app_ids.begin()), r.cpu, y});
    }
    if (pool.empty()) throw DataError("train_calib: no usable data for the model's apps");

    auto params = model.params();
    ad::Adam opt(c.lr);
    TrainResult result;
    for (int step = 0; step < c.steps; ++step) {
        std::vector<CalibPoint> batch;
        for (int b = 0; b < c.batch; ++b) batch.push_back(pool[rng.uniform_int(0, pool.size())]);
        Graph g;
        Var loss = elbo_graph(model, g, batch, draw_eps(batch, c.n_mc, rng));
        double lv = loss.val().data[0];
        if (!std::isfinite(lv))
            throw NumericError("train_calib: non-finite ELBO at step " + std::to_string(step));
        ad::zero_grad(params);
        g.backward(loss);
        opt.step(params);
        result.elbo_curve.push_back(lv);
    }
    return result;
}

std::pair<CalibModel, TrainResult> train_calib(const std::vector<CalibRecord>& dataset,
                                               const CalibConfig& cfg, Rng& rng) {
    cfg.validate();
    if (dataset.empty()) throw DataError("train_calib: empty dataset");
    std::vector<std::string> order;
    std::map<std::string, int> counts;
    for (const auto& r : dataset) {
        if (counts.find(r.app_id) == counts.end()) order.push_back(r.app_id);
        ++counts[r.app_id];
    }
    std::vector<std::string> eligible, excluded;
    for (const auto& app : order) {
        if (counts[app] >= cfg.min_points)
            eligible.push_back(app);
        else
            excluded.push_back(app);
    }
    for (const auto& app : excluded)
        std::cerr << "train_calib: excluding app " << app << " (" << counts[app] << " < "
                  << cfg.min_points << " points)\n";
    if (eligible.empty()) throw DataError("train_calib: no app has enough data");

    CalibModel model(cfg, eligible, rng);
    if (cfg.standardize_y) {
        double n = 0, mean = 0, m2 = 0;
        for (const auto& r : dataset) {
            if (counts[r.app_id] < cfg.min_points) continue;
            n += 1;
            double d = r.per_pod - mean;
            mean += d / n;
            m2 += d * (r.per_pod - mean);
        }
        model.y_scaler = {mean, std::max(std::sqrt(m2 / n), 1e-8)};
    }
    TrainResult result = train_calib(model, dataset, rng);
    result.excluded = excluded;
    return {std::move(model), std::move(result)};
}

PodWorkloadBounds predict_bounds(const CalibModel& m, const std::string& app_id,
                                 double target_cpu, int n_samples, double z, Rng& rng) {
    if (!(target_cpu > 0 && target_cpu < 1))
        throw ConfigError("predict_bounds: target_cpu must lie in (0,1)");
    if (n_samples < 2) throw ConfigError("predict_bounds: n_samples must be >= 2");
    if (!(z > 0)) throw ConfigError("predict_bounds: z must be positive");
    int a = m.app_index(app_id);
    PosteriorParams post = posterior_for(m, a);

    double n = 0, mean = 0, m2 = 0;
    for (int s = 0; s < n_samples; ++s) {
        double w = post.mu[0] + post.sigma_diag[0] * rng.gaussian();
        double b = post.mu[1] + post.sigma_diag[1] * rng.gaussian();
        double y = (w * target_cpu + b) * m.y_scaler.std + m.y_scaler.mean;
        n += 1;
        double d = y - mean;
        mean += d / n;
        m2 += d * (y - mean);
    }
    double sd = std::sqrt(m2 / n);

    PodWorkloadBounds out;
    out.app_id = app_id;
    out.target_cpu = target_cpu;
    out.mean = mean;
    out.std = sd;
    out.lo = std::max(0.0, mean - z * sd);
    out.hi = std::max(0.0, mean + z * sd);
    out.z = z;
    out.n_samples = n_samples;
    return out;
}

void save_model(const CalibModel& model, const std::string& path) {
    Checkpoint ck;
    ck.meta["format"] = "fsa-calib";
    ck.meta["version"] = 1;
    ck.meta["config"] = {{"E", model.cfg.E},
                         {"hidden", model.cfg.hidden},
                         {"n_mc", model.cfg.n_mc},
                         {"n_samples", model.cfg.n_samples},
                         {"z", model.cfg.z},
                         {"steps", model.cfg.steps},
                         {"batch", model.cfg.batch},
                         {"lr", model.cfg.lr},
                         {"min_points", model.cfg.min_points},
                         {"standardize_y", model.cfg.standardize_y}};
    ck.meta["app_ids"] = model.app_ids;
    ck.meta["y_scaler"] = {{"mean", model.y_scaler.mean}, {"std", model.y_scaler.std}};
    for (Param* p : const_cast<CalibModel&>(model).params()) ck.tensors[p->name] = p->value;
    ck.save(path);
}

CalibModel load_model(const std::string& path) {
    Checkpoint ck = Checkpoint::load(path);
    if (ck.meta.value("format", "") != "fsa-calib" || ck.meta.value("version", 0) != 1)
        throw DataError("not a calibration checkpoint: " + path);
    CalibConfig cfg;
    std::vector<std::string> app_ids;
    try {
        const auto& j = ck.meta.at("config");
        cfg.E = j.at("E");
        cfg.hidden = j.at("hidden");
        cfg.n_mc = j.at("n_mc");
        cfg.n_samples = j.at("n_samples");
        cfg.z = j.at("z");
        cfg.steps = j.at("steps");
        cfg.batch = j.at("batch");
        cfg.lr = j.at("lr");
        cfg.min_points = j.at("min_points");
        cfg.standardize_y = j.at("standardize_y");
        app_ids = ck.meta.at("app_ids").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError("corrupt calibration checkpoint metadata: " + std::string(e.what()));
    }
    Rng dummy(0);
    CalibModel model(cfg, app_ids, dummy);
    model.y_scaler = {ck.meta.at("y_scaler").at("mean").get<double>(),
                      ck.meta.at("y_scaler").at("std").get<double>()};
    for (Param* p : model.params()) {
        const Tensor& t = ck.get(p->name);
        if (t.shape != p->value.shape)
            throw DataError("calibration checkpoint: shape mismatch for " + p->name);
        p->value = t;
        p->grad = Tensor::zeros(t.shape);
    }
    return model;
}

}  // namespace fsa::calib
