#include "fsa/config.hpp"

#include <fstream>
#include <set>

#include "fsa/errors.hpp"

namespace fsa {

namespace {

// tracks which keys were consumed so leftovers can be rejected by name
class Strict {
  public:
    Strict(nlohmann::json j, std::string prefix) : j_(std::move(j)), prefix_(std::move(prefix)) {
        if (!j_.is_object())
            throw ConfigError("config section '" + label() + "' must be an object");
    }

    template <typename T>
    void get(const char* key, T& target) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            target = it->get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError("bad value for config key '" + qualify(key) + "'");
        }
    }

    void get_scales(const char* key, std::vector<repr::Scale>& target) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        if (!it->is_array()) throw ConfigError("config key '" + qualify(key) + "' must be a list");
        target.clear();
        for (const auto& v : *it) {
            if (!v.is_string())
                throw ConfigError("config key '" + qualify(key) + "' entries must be strings");
            try {
                target.push_back(repr::scale_from_string(v.get<std::string>()));
            } catch (const std::exception&) {
                throw ConfigError("config key '" + qualify(key) + "': unknown scale '" +
                                  v.get<std::string>() + "'");
            }
        }
    }

    bool has(const char* key) const { return j_.contains(key); }

    nlohmann::json section(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nlohmann::json::object() : *it;
    }

    void finish() const {
        for (const auto& [key, value] : j_.items())
            if (!seen_.count(key)) throw ConfigError("unknown config key '" + qualify(key) + "'");
    }

  private:
    std::string label() const { return prefix_.empty() ? "<root>" : prefix_; }
    std::string qualify(const std::string& key) const {
        return prefix_.empty() ? key : prefix_ + "." + key;
    }
    nlohmann::json j_;
    std::string prefix_;
    std::set<std::string> seen_;
};

nlohmann::json scales_json(const std::vector<repr::Scale>& scales) {
    nlohmann::json out = nlohmann::json::array();
    for (repr::Scale s : scales) out.push_back(repr::to_string(s));
    return out;
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig c;
    Strict root(j, "");
    root.get("seed", c.seed);
    root.get("artifacts_dir", c.artifacts_dir);
    root.get("jobs", c.jobs);
    root.get("train_frac", c.train_frac);
    root.get("valid_frac", c.valid_frac);
    root.get("encode_stride", c.encode_stride);
    root.get_scales("encode_scales", c.encode_scales);

    {
        Strict s(root.section("data"), "data");
        bool own_seed = s.has("seed");
        s.get("num_apps", c.data.num_apps);
        s.get("days", c.data.days);
        s.get("step", c.data.step);
        s.get("base_level", c.data.base_level);
        s.get("daily_amp", c.data.daily_amp);
        s.get("weekly_amp", c.data.weekly_amp);
        s.get("trend_slope", c.data.trend_slope);
        s.get("noise_std", c.data.noise_std);
        s.get("burst_rate", c.data.burst_rate);
        s.get("burst_magnitude", c.data.burst_magnitude);
        s.get("cpu_slope", c.data.cpu_slope);
        s.get("cpu_offset", c.data.cpu_offset);
        s.get("cpu_noise_std", c.data.cpu_noise_std);
        s.get("seed", c.data.seed);
        s.finish();
        if (!own_seed) c.data.seed = c.seed;  // one seed drives everything by default
    }
    {
        Strict s(root.section("repr"), "repr");
        s.get("proj_hidden", c.repr.proj_hidden);
        s.get("D", c.repr.D);
        s.get("K_T", c.repr.K_T);
        s.get("K_F", c.repr.K_F);
        s.get("L", c.repr.L);
        s.get("heads", c.repr.heads);
        s.get("qkv_kernel", c.repr.qkv_kernel);
        s.get("freq_channels", c.repr.freq_channels);
        s.get("freq_window", c.repr.freq_window);
        s.get("mask_p", c.repr.mask_p);
        s.get("steps", c.repr.steps);
        s.get("batch", c.repr.batch);
        s.get("window", c.repr.window);
        s.get("min_overlap", c.repr.min_overlap);
        s.get("loss_timestamps", c.repr.loss_timestamps);
        s.get("freq_timestamps", c.repr.freq_timestamps);
        s.get("lr", c.repr.lr);
        s.get("max_encode_len", c.repr.max_encode_len);
        s.finish();
    }
    {
        Strict s(root.section("forecast"), "forecast");
        s.get("L", c.forecast.L);
        s.get("N", c.forecast.N);
        s.get("H", c.forecast.H);
        s.get("embed_dim", c.forecast.embed_dim);
        s.get("heads", c.forecast.heads);
        s.get("use_reprs", c.forecast.use_reprs);
        s.get_scales("scales", c.forecast.scales);
        s.get("steps", c.forecast.steps);
        s.get("batch", c.forecast.batch);
        s.get("lr", c.forecast.lr);
        s.get("quantile_levels", c.forecast.quantile_levels);
        s.finish();
    }
    {
        Strict s(root.section("calib"), "calib");
        s.get("E", c.calib.E);
        s.get("hidden", c.calib.hidden);
        s.get("n_mc", c.calib.n_mc);
        s.get("n_samples", c.calib.n_samples);
        s.get("z", c.calib.z);
        s.get("steps", c.calib.steps);
        s.get("batch", c.calib.batch);
        s.get("lr", c.calib.lr);
        s.get("min_points", c.calib.min_points);
        s.get("standardize_y", c.calib.standardize_y);
        s.finish();
    }
    {
        Strict s(root.section("decide"), "decide");
        s.get("target_cpu", c.decide.target_cpu);
        s.get("theta", c.decide.theta);
        s.get("z", c.decide.z);
        s.get("cadence", c.decide.cadence);
        s.get("min_pods", c.decide.min_pods);
        s.get("max_pods", c.decide.max_pods);
        s.get("quantile", c.decide.quantile);
        s.get("n_samples", c.decide.n_samples);
        s.get("horizon", c.decide.horizon);
        s.finish();
    }
    {
        Strict s(root.section("sim"), "sim");
        s.get("cpu_a", c.sim.cpu.a);
        s.get("cpu_c", c.sim.cpu.c);
        s.get("cpu_noise_std", c.sim.cpu.noise_std);
        s.get("min_pods", c.sim.min_pods);
        s.get("max_pods", c.sim.max_pods);
        s.get("initial_pods", c.sim.initial_pods);
        s.get("slo_threshold", c.sim.slo_threshold);
        s.get("target_cpu", c.sim.target_cpu);
        s.get("kwh_per_pod_hour", c.sim.kwh_per_pod_hour);
        s.get("kg_co2_per_kwh", c.sim.kg_co2_per_kwh);
        s.get("eval_start", c.sim.eval_start);
        s.finish();
    }
    {
        Strict s(root.section("rule"), "rule");
        s.get("up_threshold", c.rule.up_threshold);
        s.get("down_threshold", c.rule.down_threshold);
        s.get("step_frac", c.rule.step_frac);
        s.get("cooldown", c.rule.cooldown);
        s.finish();
    }
    {
        Strict s(root.section("autopilot"), "autopilot");
        s.get("window", c.autopilot.window);
        s.get("percentile", c.autopilot.percentile);
        s.get("target_cpu", c.autopilot.target_cpu);
        s.finish();
    }
    root.finish();

    if (c.jobs < 1) throw ConfigError("jobs must be >= 1");
    if (!(c.train_frac > 0) || !(c.valid_frac >= 0) || c.train_frac + c.valid_frac >= 1)
        throw ConfigError("train_frac/valid_frac must satisfy 0 < train, train+valid < 1");
    if (c.encode_stride < 1) throw ConfigError("encode_stride must be >= 1");
    if (c.encode_scales.empty()) throw ConfigError("encode_scales must not be empty");
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["artifacts_dir"] = artifacts_dir;
    j["jobs"] = jobs;
    j["train_frac"] = train_frac;
    j["valid_frac"] = valid_frac;
    j["encode_stride"] = encode_stride;
    j["encode_scales"] = scales_json(encode_scales);
    j["data"] = {{"num_apps", data.num_apps},
                 {"days", data.days},
                 {"step", data.step},
                 {"base_level", data.base_level},
                 {"daily_amp", data.daily_amp},
                 {"weekly_amp", data.weekly_amp},
                 {"trend_slope", data.trend_slope},
                 {"noise_std", data.noise_std},
                 {"burst_rate", data.burst_rate},
                 {"burst_magnitude", data.burst_magnitude},
                 {"cpu_slope", data.cpu_slope},
                 {"cpu_offset", data.cpu_offset},
                 {"cpu_noise_std", data.cpu_noise_std},
                 {"seed", data.seed}};
    j["repr"] = {{"proj_hidden", repr.proj_hidden},
                 {"D", repr.D},
                 {"K_T", repr.K_T},
                 {"K_F", repr.K_F},
                 {"L", repr.L},
                 {"heads", repr.heads},
                 {"qkv_kernel", repr.qkv_kernel},
                 {"freq_channels", repr.freq_channels},
                 {"freq_window", repr.freq_window},
                 {"mask_p", repr.mask_p},
                 {"steps", repr.steps},
                 {"batch", repr.batch},
                 {"window", repr.window},
                 {"min_overlap", repr.min_overlap},
                 {"loss_timestamps", repr.loss_timestamps},
                 {"freq_timestamps", repr.freq_timestamps},
                 {"lr", repr.lr},
                 {"max_encode_len", repr.max_encode_len}};
    j["forecast"] = {{"L", forecast.L},
                     {"N", forecast.N},
                     {"H", forecast.H},
                     {"embed_dim", forecast.embed_dim},
                     {"heads", forecast.heads},
                     {"use_reprs", forecast.use_reprs},
                     {"scales", scales_json(forecast.scales)},
                     {"steps", forecast.steps},
                     {"batch", forecast.batch},
                     {"lr", forecast.lr},
                     {"quantile_levels", forecast.quantile_levels}};
    j["calib"] = {{"E", calib.E},
                  {"hidden", calib.hidden},
                  {"n_mc", calib.n_mc},
                  {"n_samples", calib.n_samples},
                  {"z", calib.z},
                  {"steps", calib.steps},
                  {"batch", calib.batch},
                  {"lr", calib.lr},
                  {"min_points", calib.min_points},
                  {"standardize_y", calib.standardize_y}};
    j["decide"] = {{"target_cpu", decide.target_cpu},
                   {"theta", decide.theta},
                   {"z", decide.z},
                   {"cadence", decide.cadence},
                   {"min_pods", decide.min_pods},
                   {"max_pods", decide.max_pods},
                   {"quantile", decide.quantile},
                   {"n_samples", decide.n_samples},
                   {"horizon", decide.horizon}};
    j["sim"] = {{"cpu_a", sim.cpu.a},
                {"cpu_c", sim.cpu.c},
                {"cpu_noise_std", sim.cpu.noise_std},
                {"min_pods", sim.min_pods},
                {"max_pods", sim.max_pods},
                {"initial_pods", sim.initial_pods},
                {"slo_threshold", sim.slo_threshold},
                {"target_cpu", sim.target_cpu},
                {"kwh_per_pod_hour", sim.kwh_per_pod_hour},
                {"kg_co2_per_kwh", sim.kg_co2_per_kwh},
                {"eval_start", sim.eval_start}};
    j["rule"] = {{"up_threshold", rule.up_threshold},
                 {"down_threshold", rule.down_threshold},
                 {"step_frac", rule.step_frac},
                 {"cooldown", rule.cooldown}};
    j["autopilot"] = {{"window", autopilot.window},
                      {"percentile", autopilot.percentile},
                      {"target_cpu", autopilot.target_cpu}};
    return j;
}

uint64_t RunConfig::hash() const { return Rng::hash_str(to_json().dump()); }

std::string RunConfig::hash_hex() const {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash()));
    return buf;
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override must look like section.key=value: " + assignment);
    std::string key = assignment.substr(0, eq);
    std::string value = assignment.substr(eq + 1);

    nlohmann::json* node = &doc;
    size_t pos = 0;
    while (true) {
        size_t dot = key.find('.', pos);
        std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
        if (part.empty()) throw ConfigError("bad override key: " + key);
        if (dot == std::string::npos) {
            nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
            (*node)[part] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
            return;
        }
        node = &(*node)[part];
        pos = dot + 1;
    }
}

}  // namespace fsa
