#include "fsa/pipeline.hpp"

#include <atomic>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "fsa/errors.hpp"

namespace fsa::pipeline {

namespace fs = std::filesystem;

namespace {

void require_file(const std::string& path, const std::string& producer) {
    if (!fs::exists(path))
        throw DataError("missing artifact: " + path + " (run `fsa " + producer + "` first)");
}

nlohmann::json write_meta(const RunConfig& cfg, const Paths& paths, const std::string& command,
                          nlohmann::json body) {
    body["command"] = command;
    body["config_hash"] = cfg.hash_hex();
    body["seed"] = cfg.seed;
    std::ofstream out(paths.meta(command));
    if (!out) throw DataError("cannot write " + paths.meta(command));
    out << body.dump(2) << "\n";
    return body;
}

Paths make_paths(const RunConfig& cfg) {
    fs::create_directories(cfg.artifacts_dir);
    return Paths{cfg.artifacts_dir};
}

nlohmann::json scalers_to_json(const std::map<std::string, ScalerParams>& scalers) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [app, sc] : scalers) j[app] = {{"mean", sc.mean}, {"std", sc.std}};
    return j;
}

std::map<std::string, ScalerParams> scalers_from_json(const nlohmann::json& j) {
    std::map<std::string, ScalerParams> out;
    for (const auto& [app, sc] : j.items())
        out[app] = {sc.at("mean").get<double>(), sc.at("std").get<double>()};
    return out;
}

// per-app scalers fitted on the training slice; shared by train-repr (fit)
// and encode (apply), carried in the repr checkpoint metadata
std::map<std::string, ScalerParams> fit_train_scalers(const std::vector<WorkloadSeries>& series,
                                                      const RunConfig& cfg) {
    std::map<std::string, ScalerParams> out;
    for (const auto& s : series) {
        SeriesSplit sp = split(s, cfg.train_frac, cfg.valid_frac);
        out[s.app_id] = standardize(sp.train).second;
    }
    return out;
}

}  // namespace

std::vector<WorkloadSeries> series_from_trace(const TraceMap& traces) {
    std::vector<WorkloadSeries> out;
    int idx = 0;
    for (const auto& [app, records] : traces) out.push_back(series_from_records(records, idx++));
    return out;
}

nlohmann::json cmd_generate(const RunConfig& cfg) {
    Paths paths = make_paths(cfg);
    TraceMap traces = generate_synthetic(cfg.data);
    save_trace(traces, paths.trace());

    size_t rows = 0;
    for (const auto& [app, records] : traces) rows += records.size();
    return write_meta(cfg, paths, "generate",
                      {{"trace", paths.trace()},
                       {"apps", traces.size()},
                       {"rows", rows},
                       {"ticks_per_app", traces.empty() ? 0 : traces.begin()->second.size()}});
}

nlohmann::json cmd_train_repr(const RunConfig& cfg) {
    Paths paths = make_paths(cfg);
    require_file(paths.trace(), "generate");
    std::vector<WorkloadSeries> series = series_from_trace(load_trace(paths.trace()));
    auto scalers = fit_train_scalers(series, cfg);

    std::vector<WorkloadSeries> train_std;
    for (const auto& s : series) {
        SeriesSplit sp = split(s, cfg.train_frac, cfg.valid_frac);
        train_std.push_back(standardize(sp.train, scalers.at(s.app_id)).first);
    }

    Rng rng = Rng(cfg.seed).fork(Rng::hash_str("train-repr"));
    repr::ReprModel model(cfg.repr, rng);
    repr::TrainResult tr = repr::train_repr(model, train_std, rng);
    repr::save_model(model, paths.repr_ckpt(), {{"scalers", scalers_to_json(scalers)}});

    return write_meta(cfg, paths, "train-repr",
                      {{"checkpoint", paths.repr_ckpt()},
                       {"steps", tr.loss_curve.size()},
                       {"final_loss", tr.loss_curve.empty() ? 0.0 : tr.loss_curve.back()}});
}

nlohmann::json cmd_encode(const RunConfig& cfg) {
    Paths paths = make_paths(cfg);
    require_file(paths.trace(), "generate");
    require_file(paths.repr_ckpt(), "train-repr");

    nlohmann::json extra;
    repr::ReprModel model = repr::load_model(paths.repr_ckpt(), &extra);
    auto scalers = scalers_from_json(extra.at("scalers"));
    std::vector<WorkloadSeries> series = series_from_trace(load_trace(paths.trace()));

    std::vector<std::vector<repr::MultiScaleRepr>> per_app(series.size());
    auto encode_app = [&](size_t si) {
        const WorkloadSeries& s = series[si];
        auto it = scalers.find(s.app_id);
        if (it == scalers.end())
            throw DataError("encode: app " + s.app_id + " absent from the trained checkpoint");
        WorkloadSeries std_s = standardize(s, it->second).first;
        int T = static_cast<int>(s.length());
        for (repr::Scale sc : cfg.encode_scales) {
            // anchor the stride grid at each scale's first full window so the
            // earliest forecastable origin always has an at-or-before entry
            int64_t first = repr::scale_seconds(sc) / s.step - 1;
            for (int64_t t = first; t < T; t += cfg.encode_stride)
                per_app[si].push_back(
                    repr::encode_multiscale(model, std_s, {sc}, s.timestamp_at(t)));
        }
    };

    if (cfg.jobs <= 1) {
        for (size_t i = 0; i < series.size(); ++i) encode_app(i);
    } else {
        // apps are independent; merge order below keeps the output stable
        std::vector<std::thread> workers;
        std::atomic<size_t> next{0};
        for (int w = 0; w < cfg.jobs; ++w)
            workers.emplace_back([&] {
                for (size_t i = next.fetch_add(1); i < series.size(); i = next.fetch_add(1))
                    encode_app(i);
            });
        for (auto& th : workers) th.join();
    }

    repr::ReprStore store;
    for (const auto& app_reprs : per_app)
        for (const auto& r : app_reprs) store.put_all(r);
    store.save(paths.repr_store());

    return write_meta(cfg, paths, "encode",
                      {{"store", paths.repr_store()}, {"entries", store.size()}});
}

nlohmann::json cmd_train_forecast(const RunConfig& cfg) {
    Paths paths = make_paths(cfg);
    require_file(paths.trace(), "generate");
    std::vector<WorkloadSeries> series = series_from_trace(load_trace(paths.trace()));

    repr::ReprStore store;
    int repr_dim = 0;
    if (cfg.forecast.use_reprs) {
        require_file(paths.repr_ckpt(), "train-repr");
        require_file(paths.repr_store(), "encode");
        repr_dim = repr::load_model(paths.repr_ckpt()).cfg.K();
        store = repr::ReprStore::load(paths.repr_store());
    }

    std::vector<std::string> app_ids;
    std::vector<WorkloadSeries> train;
    for (const auto& s : series) {
        app_ids.push_back(s.app_id);
        train.push_back(split(s, cfg.train_frac, cfg.valid_frac).train);
    }

    Rng rng = Rng(cfg.seed).fork(Rng::hash_str("train-forecast"));
    forecast::ForecastModel model(cfg.forecast, repr_dim, app_ids, rng);
    forecast::TrainResult tr = forecast::train_forecast(model, train, store, rng);
    forecast::save_model(model, paths.forecast_ckpt());

    std::vector<WorkloadSeries> test;
    for (const auto& s : series) test.push_back(split(s, cfg.train_frac, cfg.valid_frac).test);
    forecast::EvalMetrics ev = forecast::evaluate(model, test, store);

    return write_meta(cfg, paths, "train-forecast",
                      {{"checkpoint", paths.forecast_ckpt()},
                       {"use_reprs", cfg.forecast.use_reprs},
                       {"final_nll", tr.nll_curve.empty() ? 0.0 : tr.nll_curve.back()},
                       {"test_mae", ev.mae},
                       {"test_rmse", ev.rmse},
                       {"test_windows", ev.count}});
}

nlohmann::json cmd_train_calib(const RunConfig& cfg) {
    Paths paths = make_paths(cfg);
    require_file(paths.trace(), "generate");
    TraceMap traces = load_trace(paths.trace());

    std::vector<calib::CalibRecord> records;
    for (const auto& [app, recs] : traces) {
        size_t train_end = static_cast<size_t>(recs.size() * cfg.train_frac);
        for (size_t i = 0; i < train_end; ++i) {
            if (recs[i].pods < 1) throw DataError("train-calib: app " + app + " has pods < 1");
            records.push_back({app, recs[i].cpu_util, recs[i].workload_rps / recs[i].pods});
        }
    }

    Rng rng = Rng(cfg.seed).fork(Rng::hash_str("train-calib"));
    auto [model, tr] = calib::train_calib(records, cfg.calib, rng);
    calib::save_model(model, paths.calib_ckpt());

    return write_meta(cfg, paths, "train-calib",
                      {{"checkpoint", paths.calib_ckpt()},
                       {"apps", model.app_ids.size()},
                       {"excluded", tr.excluded},
                       {"final_elbo", tr.elbo_curve.empty() ? 0.0 : tr.elbo_curve.back()},
                       {"sigma_obs", model.sigma_obs()}});
}

nlohmann::json cmd_simulate(const RunConfig& cfg, const std::vector<std::string>& policies) {
    if (policies.empty()) throw ConfigError("simulate: no policies requested");

    bool wants_fsa = false;
    std::vector<sim::PolicySpec> specs;
    for (const std::string& name : policies) {
        sim::PolicySpec spec;
        if (name == "fsa") {
            spec.kind = sim::PolicySpec::Kind::fsa;
            spec.decision = cfg.decide;
            wants_fsa = true;
        } else if (name == "rule_based") {
            spec.kind = sim::PolicySpec::Kind::rule_based;
            spec.rule = cfg.rule;
        } else if (name == "autopilot_like") {
            spec.kind = sim::PolicySpec::Kind::autopilot_like;
            spec.autopilot = cfg.autopilot;
        } else {
            throw ConfigError("simulate: unknown policy '" + name +
                              "' (expected fsa, rule_based or autopilot_like)");
        }
        specs.push_back(std::move(spec));
    }

    Paths paths = make_paths(cfg);
    require_file(paths.trace(), "generate");
    std::vector<WorkloadSeries> series = series_from_trace(load_trace(paths.trace()));

    forecast::ForecastModel fm;
    calib::CalibModel cm;
    repr::ReprStore store;
    std::vector<decide::PodDecision> decision_log;
    sim::FsaArtifacts artifacts;
    sim::SimConfig scfg = cfg.sim;
    scfg.seed = cfg.seed;

    if (wants_fsa) {
        require_file(paths.forecast_ckpt(), "train-forecast");
        require_file(paths.calib_ckpt(), "train-calib");
        fm = forecast::load_model(paths.forecast_ckpt());
        cm = calib::load_model(paths.calib_ckpt());
        if (fm.cfg.use_reprs) {
            require_file(paths.repr_store(), "encode");
            store = repr::ReprStore::load(paths.repr_store());
        }
        artifacts = {&fm, &cm, &store, &decision_log};
        // never score ticks the forecaster cannot cover yet
        for (const auto& s : series)
            scfg.eval_start =
                std::max(scfg.eval_start, forecast::min_origin_index(fm.cfg, s) + 1);
    }

    sim::SimReport report = sim::simulate(series, specs, artifacts, scfg);
    sim::save_report(report, paths.report());
    sim::save_tick_log(report, series, paths.ticks());
    if (wants_fsa) decide::save_decision_log(decision_log, paths.decisions());

    nlohmann::json body{{"report", paths.report()},
                        {"ticks_csv", paths.ticks()},
                        {"policies", policies},
                        {"eval_start", scfg.eval_start}};
    if (wants_fsa) body["decisions_csv"] = paths.decisions();
    for (const auto& ps : report.policies)
        body["summary"][ps.policy] = {{"mean_rrc", ps.mean_rrc},
                                      {"slo_rate", ps.slo_rate},
                                      {"mean_abs_dev", ps.mean_abs_dev},
                                      {"pod_hours", ps.pod_hours},
                                      {"kg_co2", ps.kg_co2}};
    return write_meta(cfg, paths, "simulate", body);
}

nlohmann::json cmd_report(const RunConfig& cfg) {
    Paths paths{cfg.artifacts_dir};
    require_file(paths.report(), "simulate");
    std::ifstream in(paths.report());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("report: " + paths.report() + " is not valid JSON: " + e.what());
    }

    std::printf("simulation: %d ticks (scored from tick %d), seed %" PRIu64 "\n",
                j.at("ticks").get<int>(), j.at("eval_start").get<int>(),
                j.at("seed").get<uint64_t>());
    std::printf("%-16s %10s %10s %12s %12s %12s\n", "policy", "rrc", "slo_rate", "|cpu-u*|",
                "pod_hours", "kg_co2");
    for (const auto& p : j.at("policies"))
        std::printf("%-16s %10.4f %10.4f %12.4f %12.1f %12.3f\n",
                    p.at("policy").get<std::string>().c_str(), p.at("mean_rrc").get<double>(),
                    p.at("slo_rate").get<double>(), p.at("mean_abs_dev").get<double>(),
                    p.at("pod_hours").get<double>(), p.at("kg_co2").get<double>());

    // savings relative to the rule baseline, when both were in the run
    const nlohmann::json* rule = nullptr;
    for (const auto& p : j.at("policies"))
        if (p.at("policy") == "rule_based") rule = &p;
    if (rule)
        for (const auto& p : j.at("policies")) {
            if (p.at("policy") == "rule_based") continue;
            double saved = rule->at("pod_hours").get<double>() - p.at("pod_hours").get<double>();
            sim::CarbonReport cr =
                sim::carbon_report(std::max(saved, 0.0), cfg.sim.kwh_per_pod_hour,
                                   cfg.sim.kg_co2_per_kwh);
            std::printf("%s vs rule_based: %.1f pod-hours saved, %.1f kWh, %.3f kg CO2\n",
                        p.at("policy").get<std::string>().c_str(), saved, cr.kwh, cr.kg_co2);
        }
    std::fflush(stdout);
    return j;
}

}  // namespace fsa::pipeline
