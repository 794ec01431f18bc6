#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "fsa/calib.hpp"
#include "fsa/decide.hpp"
#include "fsa/forecast.hpp"
#include "fsa/repr.hpp"
#include "fsa/sim.hpp"
#include "fsa/trace.hpp"

namespace fsa {

// One config document drives every command; unknown keys are rejected so a
// typo can't silently fall back to a default.
struct RunConfig {
    uint64_t seed = 42;
    std::string artifacts_dir = "artifacts";
    int jobs = 1;
    double train_frac = 0.7;
    double valid_frac = 0.1;
    int encode_stride = 6;  // encode a representation every this many ticks
    std::vector<repr::Scale> encode_scales{repr::Scale::daily, repr::Scale::weekly};

    SyntheticConfig data;
    repr::ReprConfig repr;
    forecast::ForecastConfig forecast;
    calib::CalibConfig calib;
    decide::DecisionConfig decide;
    sim::SimConfig sim;
    sim::RulePolicyCfg rule;
    sim::AutopilotCfg autopilot;

    static RunConfig from_json(const nlohmann::json& j);  // strict
    static RunConfig load(const std::string& path);
    nlohmann::json to_json() const;

    uint64_t hash() const;         // FNV-1a over the canonical dump
    std::string hash_hex() const;
};

// "section.key=value" applied onto a JSON document before parsing, so
// overrides get the same strict validation as file keys
void apply_override(nlohmann::json& doc, const std::string& assignment);

}  // namespace fsa
