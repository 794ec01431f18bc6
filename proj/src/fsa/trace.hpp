#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fsa/rng.hpp"
#include "fsa/tensor.hpp"

namespace fsa {

struct TraceRecord {
    int64_t timestamp = 0;  // epoch seconds on a uniform grid
    std::string app_id;
    double workload_rps = 0.0;  // max RPS within the bucket
    double cpu_util = 0.0;      // [0, 1]
    int pods = 1;
};

using TraceMap = std::map<std::string, std::vector<TraceRecord>>;

struct WorkloadSeries {
    std::string app_id;
    int64_t start = 0;
    int64_t step = 600;
    std::vector<double> values;
    ad::Tensor covariates;  // T x F_c: [sin_dow, cos_dow, app_index]

    int64_t timestamp_at(size_t i) const { return start + static_cast<int64_t>(i) * step; }
    size_t length() const { return values.size(); }
};

struct ScalerParams {
    double mean = 0.0;
    double std = 1.0;  // floored at 1e-8
};

struct SyntheticConfig {
    int num_apps = 10;
    int days = 60;
    int64_t step = 600;
    double base_level = 1000.0;
    double daily_amp = 400.0;
    double weekly_amp = 200.0;
    double trend_slope = 0.0;    // per day
    double noise_std = 120.0;
    double burst_rate = 0.5;     // expected bursts per day
    double burst_magnitude = 500.0;
    double cpu_slope = 0.01;     // cpu per unit per-pod RPS
    double cpu_offset = 0.05;
    double cpu_noise_std = 0.02;
    uint64_t seed = 42;

    void validate() const;
};

// Calendar features used as model covariates: day-of-week phase encoded as
// sin/cos. Deliberately excludes time-of-day so intraday phase must come
// from observations (or learned representations).
std::vector<double> time_features(int64_t timestamp);
constexpr int kNumTimeFeatures = 2;
constexpr int kNumCovariates = kNumTimeFeatures + 1;  // + app index

// CSV schema: header `timestamp,app_id,workload_rps,cpu_util,pods`.
TraceMap load_trace(const std::string& path);
void save_trace(const TraceMap& traces, const std::string& path);

TraceMap generate_synthetic(const SyntheticConfig& cfg);

// app_index feeds the id covariate column and the embedding tables.
WorkloadSeries series_from_records(const std::vector<TraceRecord>& records, int app_index);

struct SeriesSplit {
    WorkloadSeries train, valid, test;
};
SeriesSplit split(const WorkloadSeries& series, double train_frac, double valid_frac);

std::pair<WorkloadSeries, ScalerParams> standardize(
    const WorkloadSeries& series, std::optional<ScalerParams> params = std::nullopt);
WorkloadSeries destandardize(const WorkloadSeries& series, const ScalerParams& params);

}  // namespace fsa
