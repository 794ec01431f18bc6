#include "fsa/forecast.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

#include "fsa/adam.hpp"
#include "fsa/checkpoint.hpp"
#include "fsa/errors.hpp"
#include "fsa/stats.hpp"

namespace fsa::forecast {

using ad::Graph;
using ad::Param;
using ad::Tensor;
using ad::Var;
using ad::concat_cols;
using ad::concat_rows;

void ForecastConfig::validate() const {
    if (L < 1) throw ConfigError("forecast: lookback L must be >= 1");
    if (N < 1) throw ConfigError("forecast: horizon N must be >= 1");
    if (H < 1 || embed_dim < 1) throw ConfigError("forecast: widths must be >= 1");
    if (heads < 1 || H % heads != 0) throw ConfigError("forecast: H must divide by heads");
    if (use_reprs && scales.empty()) throw ConfigError("forecast: no scales configured");
    if (steps < 1 || batch < 1) throw ConfigError("forecast: steps/batch must be >= 1");
    if (!(lr > 0)) throw ConfigError("forecast: lr must be positive");
    for (double q : quantile_levels)
        if (!(q > 0 && q < 1)) throw ConfigError("forecast: quantile level outside (0,1)");
}

ForecastModel::ForecastModel(const ForecastConfig& c, int repr_dim_, std::vector<std::string> ids,
                             Rng& rng)
    : cfg(c), repr_dim(repr_dim_), app_ids(std::move(ids)) {
    cfg.validate();
    if (app_ids.empty()) throw ConfigError("forecast: empty app list");
    if (cfg.use_reprs && repr_dim < 1) throw ConfigError("forecast: repr_dim must be >= 1");
    int A = static_cast<int>(app_ids.size());
    int E = cfg.embed_dim;
    embed = Param("fc.embed", ad::glorot({A, E}, A, E, rng));
    encoder = ad::Gru("fc.enc", 1 + kNumTimeFeatures + E, cfg.H, rng);
    for (repr::Scale sc : repr::all_scales())
        scale_proj.emplace(sc, ad::Dense("fc.proj." + repr::to_string(sc),
                                         std::max(repr_dim, 1), cfg.H, rng));
    ctx_proj = ad::Dense("fc.proj.ctx", cfg.H, cfg.H, rng);
    fusion = ad::MultiHeadAttention("fc.fusion", cfg.H, cfg.heads, rng);
    decoder = ad::Gru("fc.dec", 1 + kNumTimeFeatures + E + cfg.H, cfg.H, rng);
    mu_head = ad::Dense("fc.mu", cfg.H, 1, rng);
    sigma_head = ad::Dense("fc.sigma", cfg.H, 1, rng);
}

std::vector<Param*> ForecastModel::params() {
    std::vector<Param*> out;
    out.push_back(&embed);
    encoder.collect(out);
    for (auto& [sc, d] : scale_proj) d.collect(out);
    ctx_proj.collect(out);
    fusion.collect(out);
    decoder.collect(out);
    mu_head.collect(out);
    sigma_head.collect(out);
    return out;
}

int ForecastModel::app_index(const std::string& app_id) const {
    auto it = std::find(app_ids.begin(), app_ids.end(), app_id);
    if (it == app_ids.end()) throw DataError("forecast: unknown app: " + app_id);
    return static_cast<int>(it - app_ids.begin());
}

Var fuse(const ForecastModel& m, Graph& g, std::optional<Var> context_h,
         const std::map<repr::Scale, std::vector<double>>& reprs) {
    std::vector<Var> tokens;
    for (const auto& [sc, vec] : reprs) {
        if (static_cast<int>(vec.size()) != m.repr_dim)
            throw DataError("fuse: representation width mismatch for scale " +
                            repr::to_string(sc));
        tokens.push_back(m.scale_proj.at(sc)(g.leaf(Tensor::mat(1, m.repr_dim, vec))));
    }
    if (context_h) tokens.push_back(m.ctx_proj(*context_h));
    if (tokens.empty()) throw ConfigError("fuse: no scale tokens and no context token");
    Var x = concat_rows(tokens);
    Var att = m.fusion(x, /*causal=*/false);
    int n = att.val().rows();
    return slice_rows(att, n - 1, n);  // context sits at the last position
}

int min_origin_index(const ForecastConfig& cfg, const WorkloadSeries& s) {
    int64_t lo = cfg.L - 1;
    // both variants share the representation-driven minimum so they see the
    // same window distribution in the ablation comparison
    for (repr::Scale sc : cfg.scales)
        lo = std::max<int64_t>(lo, repr::scale_seconds(sc) / s.step - 1);
    return static_cast<int>(lo);
}

namespace {

std::map<repr::Scale, std::vector<double>> fetch_reprs(const ForecastConfig& cfg,
                                                       const repr::ReprStore& store,
                                                       const std::string& app_id, int64_t at) {
    std::map<repr::Scale, std::vector<double>> out;
    if (!cfg.use_reprs) return out;
    for (repr::Scale sc : cfg.scales) {
        auto v = store.get(app_id, sc, at);
        if (!v)
            throw DataError("forecast: missing " + repr::to_string(sc) +
                            " representation for app " + app_id + " at t=" + std::to_string(at));
        out[sc] = std::move(*v);
    }
    return out;
}

struct DecoderState {
    Var h, embed_row, fused;
};

// shared prefix of training and inference graphs: context encoding + fusion
DecoderState build_context(const ForecastModel& m, Graph& g, const WorkloadSeries& s_std,
                           int origin_idx,
                           const std::map<repr::Scale, std::vector<double>>& reprs) {
    const ForecastConfig& c = m.cfg;
    int a = m.app_index(s_std.app_id);
    Var e = slice_rows(g.param(const_cast<Param&>(m.embed)), a, a + 1);

    Tensor base = Tensor::zeros({c.L, 1 + kNumTimeFeatures});
    for (int i = 0; i < c.L; ++i) {
        int idx = origin_idx - c.L + 1 + i;
        base(i, 0) = s_std.values[idx];
        for (int f = 0; f < kNumTimeFeatures; ++f) base(i, 1 + f) = s_std.covariates(idx, f);
    }
    Var enc_in = concat_cols({g.leaf(base), matmul(g.leaf(Tensor::full({c.L, 1}, 1.0)), e)});
    auto [all_h, h_last] = recurrent_encode_with_last(enc_in, m.encoder);
    (void)all_h;
    Var fused = fuse(m, g, h_last, c.use_reprs ? reprs : std::map<repr::Scale, std::vector<double>>{});
    return {h_last, e, fused};
}

std::pair<Var, Var> decode_step(const ForecastModel& m, Graph& g, DecoderState& st, double prev,
                                const std::vector<double>& timefeat) {
    Var x = concat_cols({g.leaf(Tensor::mat(1, 1, {prev})),
                         g.leaf(Tensor::mat(1, kNumTimeFeatures, timefeat)), st.embed_row,
                         st.fused});
    st.h = m.decoder.step(x, st.h);
    Var mu = m.mu_head(st.h);
    Var sigma = softplus(m.sigma_head(st.h));
    return {mu, sigma};
}

}  // namespace

Var window_nll(const ForecastModel& m, Graph& g, const WorkloadSeries& s_std, int origin_idx,
               const std::map<repr::Scale, std::vector<double>>& reprs) {
    const ForecastConfig& c = m.cfg;
    if (origin_idx < c.L - 1) throw DataError("forecast: history too short for lookback");
    if (origin_idx + c.N >= static_cast<int>(s_std.length()))
        throw DataError("forecast: window runs past end of series");

    DecoderState st = build_context(m, g, s_std, origin_idx, reprs);
    double prev = s_std.values[origin_idx];
    Var total = g.leaf(Tensor::scalar(0.0));
    for (int k = 1; k <= c.N; ++k) {
        int idx = origin_idx + k;
        auto [mu, sigma] =
            decode_step(m, g, st, prev, time_features(s_std.timestamp_at(idx)));
        total = add(total, gaussian_nll(Tensor::mat(1, 1, {s_std.values[idx]}), mu, sigma));
        prev = s_std.values[idx];  // teacher forcing
    }
    return scale(total, 1.0 / c.N);
}

TrainResult train_forecast(ForecastModel& model, const std::vector<WorkloadSeries>& dataset,
                           const repr::ReprStore& store, Rng& rng) {
    const ForecastConfig& c = model.cfg;
    c.validate();
    if (dataset.empty()) throw DataError("train_forecast: empty dataset");

    std::vector<WorkloadSeries> std_series;
    for (const auto& s : dataset) {
        auto [ss, sp] = standardize(s);
        model.scalers[s.app_id] = sp;
        std_series.push_back(std::move(ss));
    }
    for (const auto& s : std_series) {
        int lo = min_origin_index(c, s), hi = static_cast<int>(s.length()) - c.N - 1;
        if (lo > hi)
            throw DataError("train_forecast: series " + s.app_id +
                            " too short for lookback+horizon+scale history");
    }

    auto params = model.params();
    ad::Adam opt(c.lr);
    TrainResult result;
    for (int step = 0; step < c.steps; ++step) {
        Graph g;
        Var loss = g.leaf(Tensor::scalar(0.0));
        for (int b = 0; b < c.batch; ++b) {
            const auto& s = std_series[rng.uniform_int(0, std_series.size())];
            int lo = min_origin_index(c, s), hi = static_cast<int>(s.length()) - c.N - 1;
            int o = lo + static_cast<int>(rng.uniform_int(0, hi - lo + 1));
            auto reprs = fetch_reprs(c, store, s.app_id, s.timestamp_at(o));
            loss = add(loss, window_nll(model, g, s, o, reprs));
        }
        loss = scale(loss, 1.0 / c.batch);
        double lv = loss.val().data[0];
        if (!std::isfinite(lv))
            throw NumericError("train_forecast: non-finite loss at step " + std::to_string(step));
        ad::zero_grad(params);
        g.backward(loss);
        opt.step(params);
        result.nll_curve.push_back(lv);
    }
    return result;
}

ForecastResult predict(const ForecastModel& model, const WorkloadSeries& history, int64_t origin,
                       const std::map<repr::Scale, std::vector<double>>& reprs, int N) {
    const ForecastConfig& c = model.cfg;
    if (N < 1) throw ConfigError("predict: horizon must be >= 1");
    auto sit = model.scalers.find(history.app_id);
    if (sit == model.scalers.end())
        throw DataError("predict: no scaler for app " + history.app_id + " (untrained?)");
    if ((origin - history.start) % history.step != 0)
        throw DataError("predict: origin timestamp off grid");
    int64_t origin_idx = (origin - history.start) / history.step;
    if (origin_idx < c.L - 1 || origin_idx >= static_cast<int64_t>(history.length()))
        throw DataError("predict: history too short for lookback at origin");

    auto [s_std, sp] = standardize(history, sit->second);
    Graph g;
    DecoderState st = build_context(model, g, s_std, static_cast<int>(origin_idx), reprs);

    ForecastResult out;
    out.app_id = history.app_id;
    out.origin = origin;
    out.horizon = N;
    double prev = s_std.values[origin_idx];
    for (int k = 1; k <= N; ++k) {
        auto [mu, sigma] =
            decode_step(model, g, st, prev, time_features(origin + k * history.step));
        double mu_v = mu.val().data[0], sg_v = std::max(sigma.val().data[0], 1e-9);
        prev = mu_v;  // mean propagation
        out.mean.push_back(mu_v * sp.std + sp.mean);
        out.std.push_back(sg_v * sp.std);
    }
    for (double q : c.quantile_levels) {
        double z = normal_quantile(q);
        std::vector<double> curve;
        for (int k = 0; k < N; ++k) curve.push_back(out.mean[k] + z * out.std[k]);
        out.quantiles[q] = std::move(curve);
    }
    return out;
}

ForecastResult predict(const ForecastModel& model, const WorkloadSeries& history, int64_t origin,
                       const repr::ReprStore& store, int N) {
    return predict(model, history, origin,
                   fetch_reprs(model.cfg, store, history.app_id, origin), N);
}

EvalMetrics evaluate(const ForecastModel& model, const std::vector<WorkloadSeries>& test,
                     const repr::ReprStore& store) {
    if (test.empty()) throw DataError("evaluate: empty test set");
    const ForecastConfig& c = model.cfg;
    double abs_sum = 0, sq_sum = 0;
    size_t n = 0;
    for (const auto& s : test) {
        int lo = min_origin_index(c, s);
        for (int o = lo; o + c.N < static_cast<int>(s.length()); o += c.N) {
            ForecastResult r = predict(model, s, s.timestamp_at(o), store, c.N);
            for (int k = 1; k <= c.N; ++k) {
                double err = s.values[o + k] - r.mean[k - 1];
                abs_sum += std::abs(err);
                sq_sum += err * err;
                ++n;
            }
        }
    }
    if (n == 0) throw DataError("evaluate: no evaluable windows in test set");
    return {abs_sum / n, std::sqrt(sq_sum / n), n};
}

// ---------------- persistence ----------------

static nlohmann::json config_to_json(const ForecastConfig& c) {
    nlohmann::json scales = nlohmann::json::array();
    for (repr::Scale s : c.scales) scales.push_back(repr::to_string(s));
    return {{"L", c.L},         {"N", c.N},
            {"H", c.H},         {"embed_dim", c.embed_dim},
            {"heads", c.heads}, {"use_reprs", c.use_reprs},
            {"scales", scales}, {"steps", c.steps},
            {"batch", c.batch}, {"lr", c.lr},
            {"quantile_levels", c.quantile_levels}};
}

static ForecastConfig config_from_json(const nlohmann::json& j) {
    ForecastConfig c;
    c.L = j.at("L");
    c.N = j.at("N");
    c.H = j.at("H");
    c.embed_dim = j.at("embed_dim");
    c.heads = j.at("heads");
    c.use_reprs = j.at("use_reprs");
    c.scales.clear();
    for (const auto& s : j.at("scales")) c.scales.push_back(repr::scale_from_string(s));
    c.steps = j.at("steps");
    c.batch = j.at("batch");
    c.lr = j.at("lr");
    c.quantile_levels = j.at("quantile_levels").get<std::vector<double>>();
    return c;
}

void save_model(const ForecastModel& model, const std::string& path) {
    Checkpoint ck;
    ck.meta["format"] = "fsa-forecast";
    ck.meta["version"] = 1;
    ck.meta["config"] = config_to_json(model.cfg);
    ck.meta["repr_dim"] = model.repr_dim;
    ck.meta["app_ids"] = model.app_ids;
    nlohmann::json scalers = nlohmann::json::object();
    for (const auto& [app, sp] : model.scalers)
        scalers[app] = {{"mean", sp.mean}, {"std", sp.std}};
    ck.meta["scalers"] = scalers;
    for (Param* p : const_cast<ForecastModel&>(model).params()) ck.tensors[p->name] = p->value;
    ck.save(path);
}

ForecastModel load_model(const std::string& path) {
    Checkpoint ck = Checkpoint::load(path);
    if (ck.meta.value("format", "") != "fsa-forecast" || ck.meta.value("version", 0) != 1)
        throw DataError("not a forecast checkpoint: " + path);
    ForecastConfig cfg;
    std::vector<std::string> app_ids;
    try {
        cfg = config_from_json(ck.meta.at("config"));
        app_ids = ck.meta.at("app_ids").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError("corrupt forecast checkpoint metadata: " + std::string(e.what()));
    }
    Rng dummy(0);
    ForecastModel model(cfg, ck.meta.value("repr_dim", 0), app_ids, dummy);
    for (const auto& [app, sp] : ck.meta.at("scalers").items())
        model.scalers[app] = {sp.at("mean").get<double>(), sp.at("std").get<double>()};
    for (Param* p : model.params()) {
        const Tensor& t = ck.get(p->name);
        if (t.shape != p->value.shape)
            throw DataError("forecast checkpoint: shape mismatch for " + p->name);
        p->value = t;
        p->grad = Tensor::zeros(t.shape);
    }
    return model;
}

}  // namespace fsa::forecast
