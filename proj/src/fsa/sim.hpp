#pragma once

#include <deque>
#include <string>
#include <vector>

#include "json.hpp"

#include "fsa/decide.hpp"
#include "fsa/forecast.hpp"
#include "fsa/trace.hpp"

namespace fsa::sim {

struct CpuParams {
    double a = 0.01;          // cpu per unit per-pod RPS
    double c = 0.05;          // idle offset
    double noise_std = 0.02;

    void validate() const;
};

// clip(a * per_pod + c + noise, 0.01, 1); `eps` is a unit-normal draw so the
// same realization can be replayed across policies
double cpu_response(double per_pod_workload, const CpuParams& p, double eps);
double cpu_response(double per_pod_workload, const CpuParams& p, Rng& rng);

struct AppState {
    int pods = 1;
    std::deque<double> cpu_history;  // most recent at the back
    int cooldown = 0;                // ticks until up-scaling is allowed again
};

struct RulePolicyCfg {
    double up_threshold = 0.6;
    double down_threshold = 0.3;
    double step_frac = 0.25;
    int cooldown = 3;

    void validate() const;
};

struct AutopilotCfg {
    int window = 12;
    double percentile = 95.0;  // nearest-rank over the trailing window
    double target_cpu = 0.5;

    void validate() const;
};

int rule_based_policy(const AppState& state, const RulePolicyCfg& cfg, int min_pods, int max_pods);
int autopilot_like_policy(const AppState& state, const AutopilotCfg& cfg, int min_pods,
                          int max_pods);

struct PolicySpec {
    enum class Kind { fsa, rule_based, autopilot_like, fixed };
    Kind kind = Kind::rule_based;
    RulePolicyCfg rule;
    AutopilotCfg autopilot;
    int fixed_pods = 10;
    decide::DecisionConfig decision;  // fsa only

    std::string name() const;
};

struct FsaArtifacts {
    const forecast::ForecastModel* forecaster = nullptr;
    const calib::CalibModel* calibrator = nullptr;
    const repr::ReprStore* store = nullptr;
    std::vector<decide::PodDecision>* decision_log = nullptr;  // optional audit sink
};

struct SimConfig {
    CpuParams cpu;
    int min_pods = 1;
    int max_pods = 1000;
    int initial_pods = 10;
    double slo_threshold = 0.85;
    double target_cpu = 0.5;  // u* for the stability metric
    double kwh_per_pod_hour = 0.05;
    double kg_co2_per_kwh = 947000.0 / 1538000.0;
    uint64_t seed = 42;
    int eval_start = 0;  // metrics ignore ticks before this index (warm-up)

    void validate() const;
};

struct PolicyAppStats {
    std::string app_id;
    double pod_hours = 0;
    double slo_rate = 0;
    double mean_abs_dev = 0;  // mean |cpu - u*|
    double rrc = 0;           // vs rule-based; 0 when no baseline in the run
    std::vector<int> pods;    // full per-tick series
    std::vector<double> cpu;
};

struct PolicyStats {
    std::string policy;
    double pod_hours = 0;
    double mean_rrc = 0;
    double slo_rate = 0;
    double mean_abs_dev = 0;
    double kwh = 0;
    double kg_co2 = 0;
    std::vector<PolicyAppStats> apps;
};

struct SimReport {
    int64_t start = 0;
    int64_t step = 0;
    int ticks = 0;
    int eval_start = 0;
    uint64_t seed = 0;
    std::vector<PolicyStats> policies;

    nlohmann::json to_json() const;
};

// Replays the workload series under each policy with shared cpu-noise
// realizations; pod changes take effect one tick later.
SimReport simulate(const std::vector<WorkloadSeries>& traces,
                   const std::vector<PolicySpec>& policies, const FsaArtifacts& artifacts,
                   const SimConfig& cfg);

double rrc(double c, double c_r);

struct CarbonReport {
    double kwh = 0;
    double kg_co2 = 0;
};
CarbonReport carbon_report(double pod_hours_saved, double kwh_per_pod_hour,
                           double kg_co2_per_kwh);

void save_report(const SimReport& report, const std::string& path);
// CSV: policy,app_id,timestamp,workload_rps,pods,cpu_util
void save_tick_log(const SimReport& report, const std::vector<WorkloadSeries>& traces,
                   const std::string& path);

}  // namespace fsa::sim
