#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fsa/nn.hpp"
#include "fsa/repr.hpp"
#include "fsa/trace.hpp"

namespace fsa::forecast {

struct ForecastConfig {
    int L = 144;  // lookback steps
    int N = 12;   // horizon steps
    int H = 32;   // shared fusion / recurrent width
    int embed_dim = 4;
    int heads = 4;
    bool use_reprs = true;  // false = ablated variant (context token only)
    std::vector<repr::Scale> scales{repr::Scale::daily, repr::Scale::weekly};

    int steps = 300;
    int batch = 8;
    double lr = 1e-3;
    std::vector<double> quantile_levels{0.1, 0.5, 0.9};

    void validate() const;
};

struct ForecastResult {
    std::string app_id;
    int64_t origin = 0;  // timestamp of the last observed point
    int horizon = 0;
    std::vector<double> mean, std;
    std::map<double, std::vector<double>> quantiles;
};

struct ForecastModel {
    ForecastConfig cfg;
    int repr_dim = 0;                    // K of the upstream encoder
    std::vector<std::string> app_ids;    // position = embedding row
    std::map<std::string, ScalerParams> scalers;

    ad::Param embed;                        // [A x E]
    ad::Gru encoder;                        // (value + time feats + E) -> H
    std::map<repr::Scale, ad::Dense> scale_proj;  // K -> H
    ad::Dense ctx_proj;                     // H -> H
    ad::MultiHeadAttention fusion;
    ad::Gru decoder;                        // (prev value + time feats + E + H) -> H
    ad::Dense mu_head, sigma_head;          // H -> 1, sigma through softplus

    ForecastModel() = default;
    ForecastModel(const ForecastConfig& cfg, int repr_dim, std::vector<std::string> app_ids,
                  Rng& rng);

    std::vector<ad::Param*> params();
    int app_index(const std::string& app_id) const;  // DataError on unknown app
};

// Self-attention fusion over {projected scale tokens..., projected context
// token}; returns the attention output at the context position. The context is
// optional only to surface the all-empty error case.
ad::Var fuse(const ForecastModel& m, ad::Graph& g, std::optional<ad::Var> context_h,
             const std::map<repr::Scale, std::vector<double>>& reprs);

// Teacher-forced horizon NLL for one window of a standardized series whose
// last observed index is `origin_idx`. Exposed for gradient checks.
ad::Var window_nll(const ForecastModel& m, ad::Graph& g, const WorkloadSeries& s_std,
                   int origin_idx, const std::map<repr::Scale, std::vector<double>>& reprs);

// Earliest origin index with a full lookback and every configured scale's
// history available; shared by both variants so they train on identical
// window distributions.
int min_origin_index(const ForecastConfig& cfg, const WorkloadSeries& s);

struct TrainResult {
    std::vector<double> nll_curve;
};

// Teacher-forced Adam training on randomly sampled (L, N) windows; dataset is
// raw (unstandardized), per-app scalers are fitted here and kept on the model.
TrainResult train_forecast(ForecastModel& model, const std::vector<WorkloadSeries>& dataset,
                           const repr::ReprStore& store, Rng& rng);

// Autoregressive mean-propagation decode of N steps past `origin` (timestamp
// of the last history point used). History is raw; outputs are destandardized.
ForecastResult predict(const ForecastModel& model, const WorkloadSeries& history, int64_t origin,
                       const std::map<repr::Scale, std::vector<double>>& reprs, int N);
// convenience: reprs via at-or-before store lookup at the origin
ForecastResult predict(const ForecastModel& model, const WorkloadSeries& history, int64_t origin,
                       const repr::ReprStore& store, int N);

struct EvalMetrics {
    double mae = 0.0;
    double rmse = 0.0;
    size_t count = 0;
};

EvalMetrics evaluate(const ForecastModel& model, const std::vector<WorkloadSeries>& test,
                     const repr::ReprStore& store);

void save_model(const ForecastModel& model, const std::string& path);
ForecastModel load_model(const std::string& path);

}  // namespace fsa::forecast
