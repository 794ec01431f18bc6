#include "fsa/trace.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fsa/errors.hpp"

namespace fsa {

void SyntheticConfig::validate() const {
    if (num_apps < 1) throw ConfigError("synthetic: num_apps must be positive");
    if (days < 1) throw ConfigError("synthetic: days must be positive");
    if (step < 1) throw ConfigError("synthetic: step must be positive");
    if (daily_amp < 0 || weekly_amp < 0 || noise_std < 0 || burst_rate < 0 ||
        burst_magnitude < 0 || cpu_noise_std < 0)
        throw ConfigError("synthetic: amplitudes and rates must be non-negative");
    if (cpu_slope <= 0) throw ConfigError("synthetic: cpu_slope must be positive");
}

std::vector<double> time_features(int64_t timestamp) {
    double dow = static_cast<double>((timestamp / 86400) % 7);
    double ang = 2.0 * M_PI * dow / 7.0;
    return {std::sin(ang), std::cos(ang)};
}

// ---------------- CSV ----------------

static std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

static void validate_record(const TraceRecord& r, size_t lineno) {
    auto fail = [lineno](const std::string& what) {
        throw DataError("trace line " + std::to_string(lineno) + ": " + what);
    };
    if (r.app_id.empty()) fail("empty app_id");
    if (!(r.workload_rps >= 0.0)) fail("workload_rps must be >= 0");
    if (!(r.cpu_util >= 0.0 && r.cpu_util <= 1.0)) fail("cpu_util out of [0,1]");
    if (r.pods < 1) fail("pods must be >= 1");
}

static void validate_grid(const TraceMap& traces) {
    for (const auto& [app, recs] : traces) {
        if (recs.size() < 2) continue;
        int64_t step = recs[1].timestamp - recs[0].timestamp;
        if (step <= 0)
            throw DataError("app " + app + ": timestamps not strictly increasing");
        for (size_t i = 1; i < recs.size(); ++i) {
            int64_t gap = recs[i].timestamp - recs[i - 1].timestamp;
            if (gap != step)
                throw DataError("app " + app + ": non-uniform grid, gap " +
                                std::to_string(gap) + " at t=" + std::to_string(recs[i].timestamp) +
                                " (expected " + std::to_string(step) + ")");
        }
    }
}

TraceMap load_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open trace file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty trace file: " + path);
    if (split_fields(line) != std::vector<std::string>{"timestamp", "app_id", "workload_rps",
                                                       "cpu_util", "pods"})
        throw DataError("trace header mismatch in " + path);

    TraceMap traces;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = split_fields(line);
        if (f.size() != 5)
            throw DataError("trace line " + std::to_string(lineno) + ": expected 5 fields, got " +
                            std::to_string(f.size()));
        TraceRecord r;
        try {
            r.timestamp = std::stoll(f[0]);
            r.app_id = f[1];
            r.workload_rps = std::stod(f[2]);
            r.cpu_util = std::stod(f[3]);
            r.pods = std::stoi(f[4]);
        } catch (const std::exception&) {
            throw DataError("trace line " + std::to_string(lineno) + ": malformed value");
        }
        validate_record(r, lineno);
        traces[r.app_id].push_back(r);
    }
    for (auto& [app, recs] : traces)
        std::sort(recs.begin(), recs.end(),
                  [](const TraceRecord& a, const TraceRecord& b) { return a.timestamp < b.timestamp; });
    validate_grid(traces);
    return traces;
}

static std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

void save_trace(const TraceMap& traces, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write trace file: " + path);
    out << "timestamp,app_id,workload_rps,cpu_util,pods\n";
    for (const auto& [app, recs] : traces)
        for (const auto& r : recs)
            out << r.timestamp << ',' << r.app_id << ',' << fmt_double(r.workload_rps) << ','
                << fmt_double(r.cpu_util) << ',' << r.pods << '\n';
}

// ---------------- synthetic generator ----------------

static double clip(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

TraceMap generate_synthetic(const SyntheticConfig& cfg) {
    cfg.validate();
    TraceMap traces;
    int64_t steps_per_day = 86400 / cfg.step;
    int64_t total = steps_per_day * cfg.days;
    double burst_p = cfg.burst_rate / static_cast<double>(steps_per_day);

    Rng root(cfg.seed);
    for (int a = 0; a < cfg.num_apps; ++a) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "app-%03d", a);
        std::string app_id = buf;
        Rng rng = root.fork(Rng::hash_str(app_id));
        double phi = rng.uniform(0.0, 2.0 * M_PI);
        double psi = rng.uniform(0.0, 2.0 * M_PI);
        double level = cfg.base_level;

        // simple threshold controller keeps the pod series self-consistent
        // with the cpu response; same shape as the simulator's rule-based
        // baseline.
        int pods = std::max(1, static_cast<int>(std::lround(
                       level * cfg.cpu_slope / std::max(0.45, 1e-9))));
        int burst_left = 0;
        double burst_level = 0.0;
        int cooldown = 0;

        std::vector<TraceRecord>& recs = traces[app_id];
        recs.reserve(total);
        for (int64_t i = 0; i < total; ++i) {
            int64_t ts = static_cast<int64_t>(i) * cfg.step;
            double t_sec = static_cast<double>(ts);
            double w = level + cfg.daily_amp * std::sin(2.0 * M_PI * t_sec / 86400.0 + phi) +
                       cfg.weekly_amp * std::sin(2.0 * M_PI * t_sec / 604800.0 + psi) +
                       cfg.trend_slope * t_sec / 86400.0;
            if (burst_left > 0) {
                w += burst_level;
                --burst_left;
            } else if (cfg.burst_magnitude > 0 && rng.bernoulli(burst_p)) {
                burst_left = static_cast<int>(rng.uniform_int(1, 7));
                burst_level = cfg.burst_magnitude * rng.uniform(0.5, 1.5);
            }
            w += cfg.noise_std * rng.gaussian();
            w = std::max(0.0, w);

            double per_pod = w / pods;
            double cpu = clip(cfg.cpu_slope * per_pod + cfg.cpu_offset +
                                  cfg.cpu_noise_std * rng.gaussian(),
                              0.01, 1.0);

            TraceRecord r;
            r.timestamp = ts;
            r.app_id = app_id;
            r.workload_rps = w;
            r.cpu_util = cpu;
            r.pods = pods;
            recs.push_back(r);

            if (cooldown > 0) --cooldown;
            if (cpu > 0.60 && cooldown == 0) {
                pods = std::max(pods + 1, static_cast<int>(std::ceil(pods * 1.25)));
                cooldown = 3;
            } else if (cpu < 0.30 && cooldown == 0) {
                pods = std::max(1, static_cast<int>(std::floor(pods * 0.9)));
                cooldown = 3;
            }
        }
    }
    return traces;
}

// ---------------- series ----------------

WorkloadSeries series_from_records(const std::vector<TraceRecord>& records, int app_index) {
    if (records.empty()) throw DataError("series_from_records: no records");
    WorkloadSeries s;
    s.app_id = records[0].app_id;
    s.start = records[0].timestamp;
    s.step = records.size() > 1 ? records[1].timestamp - records[0].timestamp : 600;
    size_t T = records.size();
    s.values.reserve(T);
    s.covariates = ad::Tensor::zeros({static_cast<int>(T), kNumCovariates});
    for (size_t i = 0; i < T; ++i) {
        s.values.push_back(records[i].workload_rps);
        auto tf = time_features(records[i].timestamp);
        for (int j = 0; j < kNumTimeFeatures; ++j) s.covariates(static_cast<int>(i), j) = tf[j];
        s.covariates(static_cast<int>(i), kNumTimeFeatures) = static_cast<double>(app_index);
    }
    return s;
}

static WorkloadSeries slice_series(const WorkloadSeries& s, size_t lo, size_t hi) {
    WorkloadSeries out;
    out.app_id = s.app_id;
    out.step = s.step;
    out.start = s.start + static_cast<int64_t>(lo) * s.step;
    out.values.assign(s.values.begin() + lo, s.values.begin() + hi);
    int n = static_cast<int>(hi - lo);
    out.covariates = ad::Tensor::zeros({n, s.covariates.cols()});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < s.covariates.cols(); ++j)
            out.covariates(i, j) = s.covariates(static_cast<int>(lo) + i, j);
    return out;
}

SeriesSplit split(const WorkloadSeries& series, double train_frac, double valid_frac) {
    if (train_frac <= 0 || valid_frac <= 0 || train_frac + valid_frac >= 1.0)
        throw ConfigError("split: require 0 < train_frac, valid_frac and train+valid < 1");
    size_t T = series.length();
    size_t n_train = static_cast<size_t>(std::floor(train_frac * T));
    size_t n_valid = static_cast<size_t>(std::floor(valid_frac * T));
    size_t n_test = T - n_train - n_valid;
    if (n_train == 0 || n_valid == 0 || n_test == 0)
        throw DataError("split: empty segment (T=" + std::to_string(T) + ")");
    SeriesSplit out;
    out.train = slice_series(series, 0, n_train);
    out.valid = slice_series(series, n_train, n_train + n_valid);
    out.test = slice_series(series, n_train + n_valid, T);
    return out;
}

std::pair<WorkloadSeries, ScalerParams> standardize(const WorkloadSeries& series,
                                                    std::optional<ScalerParams> params) {
    ScalerParams p;
    if (params) {
        p = *params;
    } else {
        double sum = 0.0;
        for (double v : series.values) sum += v;
        p.mean = sum / series.values.size();
        double ss = 0.0;
        for (double v : series.values) ss += (v - p.mean) * (v - p.mean);
        p.std = std::max(std::sqrt(ss / series.values.size()), 1e-8);
    }
    WorkloadSeries out = series;
    for (auto& v : out.values) v = (v - p.mean) / p.std;
    return {out, p};
}

WorkloadSeries destandardize(const WorkloadSeries& series, const ScalerParams& params) {
    WorkloadSeries out = series;
    for (auto& v : out.values) v = v * params.std + params.mean;
    return out;
}

}  // namespace fsa
