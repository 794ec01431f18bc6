#include "fsa/decide.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "fsa/errors.hpp"

namespace fsa::decide {

void DecisionConfig::validate() const {
    if (!(target_cpu > 0 && target_cpu < 1))
        throw ConfigError("decide: target_cpu must lie in (0,1)");
    if (!(theta >= 0 && theta <= 1)) throw ConfigError("decide: theta must lie in [0,1]");
    if (!(z > 0)) throw ConfigError("decide: z must be positive");
    if (cadence < 1) throw ConfigError("decide: cadence must be positive");
    if (min_pods < 1 || max_pods < min_pods)
        throw ConfigError("decide: need 1 <= min_pods <= max_pods");
    if (quantile < 0 || quantile >= 1) throw ConfigError("decide: quantile must lie in [0,1)");
    if (n_samples < 2) throw ConfigError("decide: n_samples must be >= 2");
    if (horizon < 0) throw ConfigError("decide: horizon must be >= 0");
}

std::pair<int, int> pods_interval(double y_total, const calib::PodWorkloadBounds& bounds,
                                  const DecisionConfig& cfg) {
    if (y_total < 0) throw DataError("pods_interval: negative total workload");
    if (!(bounds.hi > 0)) throw DataError("pods_interval: non-positive per-pod upper bound");
    auto clamp = [&](double n) {
        double c = std::ceil(n);  // clamp before the int cast; y/lo can overflow int
        if (c >= cfg.max_pods) return cfg.max_pods;
        if (c <= cfg.min_pods) return cfg.min_pods;
        return static_cast<int>(c);
    };
    if (y_total == 0) return {cfg.min_pods, cfg.min_pods};
    int n_min = clamp(y_total / bounds.hi);
    int n_max = bounds.lo <= 0 ? cfg.max_pods : clamp(y_total / std::max(bounds.lo, 1e-9));
    return {n_min, std::max(n_min, n_max)};
}

int select_pods(int n_min, int n_max, double theta) {
    if (n_min > n_max) throw ConfigError("select_pods: n_min > n_max");
    if (!(theta >= 0 && theta <= 1)) throw ConfigError("select_pods: theta must lie in [0,1]");
    return static_cast<int>(std::ceil(n_min + theta * (n_max - n_min)));
}

std::vector<PodDecision> plan(const forecast::ForecastResult& fc, const calib::CalibModel& cm,
                              const DecisionConfig& cfg, Rng& rng) {
    cfg.validate();
    if (fc.horizon < 1) throw DataError("plan: empty forecast horizon");
    std::vector<PodDecision> out;
    for (int k = 0; k < fc.horizon; ++k) {
        double y;
        if (cfg.quantile > 0) {
            auto it = fc.quantiles.find(cfg.quantile);
            if (it == fc.quantiles.end())
                throw ConfigError("plan: forecast lacks quantile " + std::to_string(cfg.quantile));
            y = it->second[k];
        } else {
            y = fc.mean[k];
        }
        y = std::max(y, 0.0);  // a negative forecast means idle, not negative pods
        calib::PodWorkloadBounds b =
            calib::predict_bounds(cm, fc.app_id, cfg.target_cpu, cfg.n_samples, cfg.z, rng);
        auto [n_min, n_max] = pods_interval(y, b, cfg);
        PodDecision d;
        d.app_id = fc.app_id;
        d.timestamp = fc.origin + static_cast<int64_t>(k + 1) * cfg.cadence;
        d.n_min = n_min;
        d.n_max = n_max;
        d.n_chosen = select_pods(n_min, n_max, cfg.theta);
        d.forecast_total = y;
        d.pod_bounds = b;
        out.push_back(std::move(d));
    }
    return out;
}

void save_decision_log(const std::vector<PodDecision>& decisions, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write decision log: " + path);
    out << "timestamp,app_id,n_min,n_max,n_chosen,forecast_total,pod_lo,pod_hi\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    for (const auto& d : decisions)
        out << d.timestamp << ',' << d.app_id << ',' << d.n_min << ',' << d.n_max << ','
            << d.n_chosen << ',' << num(d.forecast_total) << ',' << num(d.pod_bounds.lo) << ','
            << num(d.pod_bounds.hi) << '\n';
    if (!out) throw DataError("write failed for decision log: " + path);
}

}  // namespace fsa::decide
