#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fsa/calib.hpp"
#include "fsa/forecast.hpp"

namespace fsa::decide {

struct DecisionConfig {
    double target_cpu = 0.5;  // u*, the utilization the fleet should hold
    double theta = 0.5;       // 0 = max savings, 1 = max safety
    double z = 1.645;
    int64_t cadence = 600;    // seconds; default matches the data step
    int min_pods = 1;
    int max_pods = 1000;
    double quantile = 0.0;    // 0 => feed the forecast mean into the interval
    int n_samples = 1000;     // posterior draws per bounds query
    // how many forecast steps to commit before re-planning; 0 = the full
    // forecaster horizon. Shorter means fresher forecasts, more planning.
    int horizon = 0;

    void validate() const;
};

struct PodDecision {
    std::string app_id;
    int64_t timestamp = 0;  // when the decision takes effect
    int n_min = 0, n_max = 0, n_chosen = 0;
    double forecast_total = 0.0;
    calib::PodWorkloadBounds pod_bounds;
};

// pod interval from total workload and per-pod capacity bounds: dividing by
// the high per-pod estimate gives the fewest pods, by the low one the most
std::pair<int, int> pods_interval(double y_total, const calib::PodWorkloadBounds& bounds,
                                  const DecisionConfig& cfg);

// n_min + theta of the way to n_max, rounded up
int select_pods(int n_min, int n_max, double theta);

std::vector<PodDecision> plan(const forecast::ForecastResult& fc, const calib::CalibModel& cm,
                              const DecisionConfig& cfg, Rng& rng);

// CSV: timestamp,app_id,n_min,n_max,n_chosen,forecast_total,pod_lo,pod_hi
void save_decision_log(const std::vector<PodDecision>& decisions, const std::string& path);

}  // namespace fsa::decide
