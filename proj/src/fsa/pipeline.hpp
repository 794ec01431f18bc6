#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "fsa/config.hpp"

namespace fsa::pipeline {

// Fixed artifact layout under artifacts_dir; every command reads its inputs
// and writes its outputs here so runs are resumable and inspectable.
struct Paths {
    std::string dir;

    std::string trace() const { return dir + "/trace.csv"; }
    std::string repr_ckpt() const { return dir + "/repr.ckpt"; }
    std::string repr_store() const { return dir + "/repr_store.jsonl"; }
    std::string forecast_ckpt() const { return dir + "/forecast.ckpt"; }
    std::string calib_ckpt() const { return dir + "/calib.ckpt"; }
    std::string report() const { return dir + "/report.json"; }
    std::string ticks() const { return dir + "/ticks.csv"; }
    std::string decisions() const { return dir + "/decisions.csv"; }
    std::string meta(const std::string& command) const {
        return dir + "/" + command + "_meta.json";
    }
};

// Per-app series in a stable order (sorted app id = embedding index).
std::vector<WorkloadSeries> series_from_trace(const TraceMap& traces);

// Each command returns the metadata document it also writes next to its
// artifacts (always carries config_hash and seed).
nlohmann::json cmd_generate(const RunConfig& cfg);
nlohmann::json cmd_train_repr(const RunConfig& cfg);
nlohmann::json cmd_encode(const RunConfig& cfg);
nlohmann::json cmd_train_forecast(const RunConfig& cfg);
nlohmann::json cmd_train_calib(const RunConfig& cfg);
nlohmann::json cmd_simulate(const RunConfig& cfg, const std::vector<std::string>& policies);
// prints a human-readable summary of report.json to stdout
nlohmann::json cmd_report(const RunConfig& cfg);

}  // namespace fsa::pipeline
