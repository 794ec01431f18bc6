#include "fsa/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "fsa/errors.hpp"

namespace fsa::sim {

void CpuParams::validate() const {
    if (!(a > 0)) throw ConfigError("sim: cpu slope must be positive");
    if (c < 0 || c >= 1) throw ConfigError("sim: cpu offset must lie in [0,1)");
    if (noise_std < 0) throw ConfigError("sim: cpu noise std must be non-negative");
}

void RulePolicyCfg::validate() const {
    if (!(up_threshold > down_threshold))
        throw ConfigError("sim: rule policy needs up_threshold > down_threshold");
    if (!(step_frac > 0 && step_frac < 1))
        throw ConfigError("sim: rule step_frac must lie in (0,1)");
    if (cooldown < 0) throw ConfigError("sim: rule cooldown must be non-negative");
}

void AutopilotCfg::validate() const {
    if (window < 1) throw ConfigError("sim: autopilot window must be >= 1");
    if (!(percentile > 0 && percentile <= 100))
        throw ConfigError("sim: autopilot percentile must lie in (0,100]");
    if (!(target_cpu > 0 && target_cpu < 1))
        throw ConfigError("sim: autopilot target_cpu must lie in (0,1)");
}

void SimConfig::validate() const {
    cpu.validate();
    if (min_pods < 1 || max_pods < min_pods)
        throw ConfigError("sim: need 1 <= min_pods <= max_pods");
    if (initial_pods < min_pods || initial_pods > max_pods)
        throw ConfigError("sim: initial_pods outside pod clamps");
    if (!(slo_threshold > 0 && slo_threshold <= 1))
        throw ConfigError("sim: slo_threshold must lie in (0,1]");
    if (!(target_cpu > 0 && target_cpu < 1)) throw ConfigError("sim: target_cpu must lie in (0,1)");
    if (!(kwh_per_pod_hour > 0) || !(kg_co2_per_kwh > 0))
        throw ConfigError("sim: energy/carbon factors must be positive");
    if (eval_start < 0) throw ConfigError("sim: eval_start must be non-negative");
}

double cpu_response(double per_pod_workload, const CpuParams& p, double eps) {
    if (per_pod_workload < 0) throw DataError("cpu_response: negative per-pod workload");
    return std::clamp(p.a * per_pod_workload + p.c + p.noise_std * eps, 0.01, 1.0);
}

double cpu_response(double per_pod_workload, const CpuParams& p, Rng& rng) {
    return cpu_response(per_pod_workload, p, rng.gaussian());
}

int rule_based_policy(const AppState& state, const RulePolicyCfg& cfg, int min_pods,
                      int max_pods) {
    if (state.cpu_history.empty()) return state.pods;
    double cpu = state.cpu_history.back();
    int pods = state.pods;
    // the 1e-9 slack keeps 100 * 1.1 = 110.000000000000014 from rounding to 111
    if (cpu > cfg.up_threshold && state.cooldown == 0)
        pods = static_cast<int>(std::ceil(pods * (1.0 + cfg.step_frac) - 1e-9));
    else if (cpu < cfg.down_threshold)
        pods = static_cast<int>(std::floor(pods * (1.0 - cfg.step_frac) + 1e-9));
    return std::clamp(pods, min_pods, max_pods);
}

static double nearest_rank_percentile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    int rank = static_cast<int>(std::ceil(p / 100.0 * v.size()));
    return v[std::clamp(rank, 1, static_cast<int>(v.size())) - 1];
}

int autopilot_like_policy(const AppState& state, const AutopilotCfg& cfg, int min_pods,
                          int max_pods) {
    if (static_cast<int>(state.cpu_history.size()) < cfg.window) return state.pods;  // hold
    std::vector<double> win(state.cpu_history.end() - cfg.window, state.cpu_history.end());
    double peak = nearest_rank_percentile(std::move(win), cfg.percentile);
    int pods = static_cast<int>(std::ceil(state.pods * peak / cfg.target_cpu));
    return std::clamp(pods, min_pods, max_pods);
}

std::string PolicySpec::name() const {
    switch (kind) {
        case Kind::fsa: return "fsa";
        case Kind::rule_based: return "rule_based";
        case Kind::autopilot_like: return "autopilot_like";
        case Kind::fixed: return "fixed";
    }
    return "?";
}

namespace {

struct FsaRunner {
    const PolicySpec& spec;
    const FsaArtifacts& art;
    const WorkloadSeries& series;
    uint64_t seed;
    std::map<int64_t, int> queue;  // tick index -> pod count

    bool ready(int t) const {
        const auto& fc = *art.forecaster;
        if (t < fc.cfg.L - 1) return false;
        if (!fc.cfg.use_reprs) return true;
        for (repr::Scale sc : fc.cfg.scales)
            if (!art.store->get(series.app_id, sc, series.timestamp_at(t))) return false;
        return true;
    }

    // plan the next horizon once the queue runs dry
    void maybe_refill(int t) {
        if (queue.count(t + 1) || !ready(t)) return;
        const auto& fcfg = art.forecaster->cfg;
        int horizon =
            spec.decision.horizon > 0 ? std::min(spec.decision.horizon, fcfg.N) : fcfg.N;
        forecast::ForecastResult fr = forecast::predict(*art.forecaster, series,
                                                        series.timestamp_at(t), *art.store, horizon);
        decide::DecisionConfig dc = spec.decision;
        dc.cadence = series.step;
        Rng bounds_rng =
            Rng(seed).fork(Rng::hash_str(series.app_id)).fork(static_cast<uint64_t>(t));
        auto decisions = decide::plan(fr, *art.calibrator, dc, bounds_rng);
        for (int k = 0; k < static_cast<int>(decisions.size()); ++k) {
            int tick = t + 1 + k;
            if (tick < static_cast<int>(series.length())) queue[tick] = decisions[k].n_chosen;
        }
        if (art.decision_log)
            art.decision_log->insert(art.decision_log->end(), decisions.begin(), decisions.end());
    }

    int desired(int t, int current) {
        maybe_refill(t);
        auto it = queue.find(t + 1);
        return it == queue.end() ? current : it->second;
    }
};

}  // namespace

SimReport simulate(const std::vector<WorkloadSeries>& traces,
                   const std::vector<PolicySpec>& policies, const FsaArtifacts& artifacts,
                   const SimConfig& cfg) {
    cfg.validate();
    if (traces.empty()) throw DataError("simulate: no traces");
    if (policies.empty()) throw ConfigError("simulate: no policies");
    for (const auto& p : policies) {
        if (p.kind == PolicySpec::Kind::rule_based) p.rule.validate();
        if (p.kind == PolicySpec::Kind::autopilot_like) p.autopilot.validate();
        if (p.kind == PolicySpec::Kind::fsa) {
            p.decision.validate();
            if (!artifacts.forecaster || !artifacts.calibrator || !artifacts.store)
                throw ConfigError(
                    "simulate: fsa policy requires forecaster, calibrator and repr store");
        }
        if (p.kind == PolicySpec::Kind::fixed &&
            (p.fixed_pods < cfg.min_pods || p.fixed_pods > cfg.max_pods))
            throw ConfigError("simulate: fixed_pods outside pod clamps");
    }
    int T = static_cast<int>(traces[0].length());
    for (const auto& s : traces)
        if (static_cast<int>(s.length()) != T)
            throw DataError("simulate: traces differ in length");
    if (cfg.eval_start >= T) throw ConfigError("simulate: eval_start beyond trace end");

    SimReport report;
    report.start = traces[0].start;
    report.step = traces[0].step;
    report.ticks = T;
    report.eval_start = cfg.eval_start;
    report.seed = cfg.seed;

    double hours_per_tick = static_cast<double>(traces[0].step) / 3600.0;

    for (const auto& spec : policies) {
        PolicyStats ps;
        ps.policy = spec.name();
        double slo_ticks = 0, dev_sum = 0, eval_ticks = 0;
        for (const auto& s : traces) {
            PolicyAppStats as;
            as.app_id = s.app_id;
            AppState st;
            st.pods = cfg.initial_pods;
            FsaRunner runner{spec, artifacts, s, cfg.seed, {}};
            uint64_t app_stream = Rng::hash_str(s.app_id);

            for (int t = 0; t < T; ++t) {
                double per_pod = s.values[t] / st.pods;
                // same (app, tick) noise for every policy: common random numbers
                double eps = keyed_gaussian(cfg.seed, app_stream, static_cast<uint64_t>(t));
                double cpu = cpu_response(per_pod, cfg.cpu, eps);
                st.cpu_history.push_back(cpu);
                as.pods.push_back(st.pods);
                as.cpu.push_back(cpu);
                if (t >= cfg.eval_start) {
                    as.pod_hours += st.pods * hours_per_tick;
                    if (cpu > cfg.slo_threshold) as.slo_rate += 1;
                    as.mean_abs_dev += std::abs(cpu - cfg.target_cpu);
                }

                int next = st.pods;
                switch (spec.kind) {
                    case PolicySpec::Kind::rule_based:
                        next = rule_based_policy(st, spec.rule, cfg.min_pods, cfg.max_pods);
                        break;
                    case PolicySpec::Kind::autopilot_like:
                        next = autopilot_like_policy(st, spec.autopilot, cfg.min_pods,
                                                     cfg.max_pods);
                        break;
                    case PolicySpec::Kind::fixed:
                        next = spec.fixed_pods;
                        break;
                    case PolicySpec::Kind::fsa:
                        next = std::clamp(runner.desired(t, st.pods), cfg.min_pods, cfg.max_pods);
                        break;
                }
                if (st.cooldown > 0) --st.cooldown;
                if (next > st.pods && spec.kind == PolicySpec::Kind::rule_based)
                    st.cooldown = spec.rule.cooldown;
                st.pods = next;  // takes effect at the next tick
            }
            int n_eval = T - cfg.eval_start;
            as.slo_rate /= n_eval;
            as.mean_abs_dev /= n_eval;
            slo_ticks += as.slo_rate;
            dev_sum += as.mean_abs_dev;
            eval_ticks += 1;
            ps.pod_hours += as.pod_hours;
            ps.apps.push_back(std::move(as));
        }
        ps.slo_rate = slo_ticks / eval_ticks;
        ps.mean_abs_dev = dev_sum / eval_ticks;
        ps.kwh = ps.pod_hours * cfg.kwh_per_pod_hour;
        ps.kg_co2 = ps.kwh * cfg.kg_co2_per_kwh;
        report.policies.push_back(std::move(ps));
    }

    // RRC against the rule-based run of the same simulation
    const PolicyStats* base = nullptr;
    for (const auto& ps : report.policies)
        if (ps.policy == "rule_based") base = &ps;
    if (base) {
        for (auto& ps : report.policies) {
            ps.mean_rrc = rrc(ps.pod_hours, base->pod_hours);
            for (size_t i = 0; i < ps.apps.size(); ++i)
                ps.apps[i].rrc = rrc(ps.apps[i].pod_hours, base->apps[i].pod_hours);
        }
    }
    return report;
}

double rrc(double c, double c_r) {
    if (c_r <= 0) throw DataError("rrc: baseline consumption must be positive");
    return c / c_r;
}

CarbonReport carbon_report(double pod_hours_saved, double kwh_per_pod_hour,
                           double kg_co2_per_kwh) {
    if (!(kwh_per_pod_hour > 0) || !(kg_co2_per_kwh > 0))
        throw ConfigError("carbon_report: factors must be positive");
    CarbonReport r;
    r.kwh = pod_hours_saved * kwh_per_pod_hour;
    r.kg_co2 = r.kwh * kg_co2_per_kwh;
    return r;
}

nlohmann::json SimReport::to_json() const {
    nlohmann::json j;
    j["start"] = start;
    j["step"] = step;
    j["ticks"] = ticks;
    j["eval_start"] = eval_start;
    j["seed"] = seed;
    j["policies"] = nlohmann::json::array();
    for (const auto& ps : policies) {
        nlohmann::json p;
        p["policy"] = ps.policy;
        p["pod_hours"] = ps.pod_hours;
        p["mean_rrc"] = ps.mean_rrc;
        p["slo_rate"] = ps.slo_rate;
        p["mean_abs_dev"] = ps.mean_abs_dev;
        p["kwh"] = ps.kwh;
        p["kg_co2"] = ps.kg_co2;
        p["apps"] = nlohmann::json::array();
        for (const auto& as : ps.apps) {
            p["apps"].push_back({{"app_id", as.app_id},
                                 {"pod_hours", as.pod_hours},
                                 {"slo_rate", as.slo_rate},
                                 {"mean_abs_dev", as.mean_abs_dev},
                                 {"rrc", as.rrc}});
        }
        j["policies"].push_back(std::move(p));
    }
    return j;
}

void save_report(const SimReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write report: " + path);
    out << report.to_json().dump(2) << '\n';
    if (!out) throw DataError("write failed for report: " + path);
}

void save_tick_log(const SimReport& report, const std::vector<WorkloadSeries>& traces,
                   const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write tick log: " + path);
    out << "policy,app_id,timestamp,workload_rps,pods,cpu_util\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    for (const auto& ps : report.policies) {
        for (size_t ai = 0; ai < ps.apps.size(); ++ai) {
            const auto& as = ps.apps[ai];
            const auto& s = traces[ai];
            for (size_t t = 0; t < as.pods.size(); ++t)
                out << ps.policy << ',' << as.app_id << ',' << s.timestamp_at(t) << ','
                    << num(s.values[t]) << ',' << as.pods[t] << ',' << num(as.cpu[t]) << '\n';
        }
    }
    if (!out) throw DataError("write failed for tick log: " + path);
}

}  // namespace fsa::sim
