#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "fsa/nn.hpp"
#include "fsa/trace.hpp"

namespace fsa::calib {

struct CalibConfig {
    int E = 16;       // task embedding width
    int hidden = 32;  // h_I hidden width
    int n_mc = 8;     // reparameterized draws per ELBO evaluation
    int n_samples = 1000;
    double z = 1.645;  // 90% band
    int steps = 400;
    int batch = 64;
    double lr = 1e-2;
    int min_points = 10;
    bool standardize_y = true;  // fit per-pod workload to unit scale before training

    void validate() const;
};

struct CalibRecord {
    std::string app_id;
    double cpu = 0.0;      // x_cpu in (0,1)
    double per_pod = 0.0;  // workload_rps / pods
};

struct CalibPoint {
    int app_index = 0;
    double cpu = 0.0;
    double y = 0.0;  // model-space target
};

// Task projector h_I (one-hot app -> two ReLU layers -> I_tau) and linear
// hypernetwork g_A (I_tau -> mu_w, mu_b, raw s_w, raw s_b with posterior std
// = softplus(s)). Prior over beta = (w, b) is standard normal; observation
// noise sigma_obs is one learned global parameter.
struct CalibModel {
    CalibConfig cfg;
    std::vector<std::string> app_ids;
    ScalerParams y_scaler;  // identity unless standardize_y

    ad::Dense h1, h2;  // A -> hidden -> E, ReLU after each
    ad::Dense g_A;     // E -> 4
    ad::Param sigma_obs_raw;  // sigma_obs = softplus(raw)

    CalibModel() = default;
    CalibModel(const CalibConfig& cfg, std::vector<std::string> app_ids, Rng& rng);

    std::vector<ad::Param*> params();
    int app_index(const std::string& app_id) const;  // DataError on unknown app
    double sigma_obs() const;
};

// I_tau = h_I(x_id); deterministic per id
std::vector<double> task_embed(const CalibModel& m, int app_index);
ad::Var task_embed_graph(const CalibModel& m, ad::Graph& g, int app_index);

struct PosteriorParams {
    std::array<double, 2> mu;         // (mu_w, mu_b)
    std::array<double, 2> sigma_diag; // posterior stds, > 0
};

PosteriorParams hyper_params(const CalibModel& m, const std::vector<double>& I_tau);
PosteriorParams posterior_for(const CalibModel& m, int app_index);

// Per-app reparameterization noise: eps[app][s] = (eps_w, eps_b) for MC draw s.
using EpsMap = std::map<int, std::vector<std::array<double, 2>>>;
EpsMap draw_eps(const std::vector<CalibPoint>& batch, int n_mc, Rng& rng);

// (1/N)(sum of per-app KL[q||N(0,I)] - sum_i mean_s log N(y_i; w_s x_i + b_s,
// sigma_obs^2)); noise is passed in so gradient checks can hold it fixed.
ad::Var elbo_graph(const CalibModel& m, ad::Graph& g, const std::vector<CalibPoint>& batch,
                   const EpsMap& eps);
double elbo_loss(const CalibModel& m, const std::vector<CalibPoint>& batch, int n_mc, Rng& rng);

struct TrainResult {
    std::vector<double> elbo_curve;
    std::vector<std::string> excluded;  // apps dropped for having < min_points
};

TrainResult train_calib(CalibModel& model, const std::vector<CalibRecord>& dataset, Rng& rng);
// convenience: construct the model from the dataset's eligible apps, then train
std::pair<CalibModel, TrainResult> train_calib(const std::vector<CalibRecord>& dataset,
                                               const CalibConfig& cfg, Rng& rng);

struct PodWorkloadBounds {
    std::string app_id;
    double target_cpu = 0.0;
    double mean = 0.0;
    double std = 0.0;
    double lo = 0.0, hi = 0.0;  // mean -/+ z*std, floored at 0
    double z = 0.0;
    int n_samples = 0;
};

PodWorkloadBounds predict_bounds(const CalibModel& m, const std::string& app_id,
                                 double target_cpu, int n_samples, double z, Rng& rng);

void save_model(const CalibModel& model, const std::string& path);
CalibModel load_model(const std::string& path);

}  // namespace fsa::calib
