#include "fsa/repr.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

#include "fsa/adam.hpp"
#include "fsa/checkpoint.hpp"
#include "fsa/errors.hpp"

namespace fsa::repr {

using namespace fsa::ad;

CropPair random_crop_pair(int T, int min_overlap, Rng& rng) {
    if (min_overlap < 1) throw ConfigError("random_crop_pair: min_overlap must be >= 1");
    if (T < min_overlap + 2)
        throw DataError("random_crop_pair: series too short (T=" + std::to_string(T) + ")");
    // need a1 < b1 < a2 <= b2 with a2 - b1 >= min_overlap
    CropPair c;
    c.b1 = static_cast<int>(rng.uniform_int(1, T - min_overlap));
    c.a1 = static_cast<int>(rng.uniform_int(0, c.b1));
    c.a2 = static_cast<int>(rng.uniform_int(c.b1 + min_overlap, T + 1));
    c.b2 = static_cast<int>(rng.uniform_int(c.a2, T + 1));
    return c;
}

const std::vector<Scale>& all_scales() {
    static const std::vector<Scale> s{Scale::daily, Scale::weekly, Scale::monthly,
                                      Scale::quarterly};
    return s;
}

std::string to_string(Scale s) {
    switch (s) {
        case Scale::daily: return "daily";
        case Scale::weekly: return "weekly";
        case Scale::monthly: return "monthly";
        case Scale::quarterly: return "quarterly";
    }
    return "?";
}

Scale scale_from_string(const std::string& s) {
    for (Scale sc : all_scales())
        if (to_string(sc) == s) return sc;
    throw ConfigError("unknown scale: " + s);
}

int64_t scale_seconds(Scale s) {
    switch (s) {
        case Scale::daily: return 86400;
        case Scale::weekly: return 604800;
        case Scale::monthly: return 2592000;
        case Scale::quarterly: return 7776000;
    }
    return 0;
}

void ReprConfig::validate() const {
    if (L < 1) throw ConfigError("repr: L must be >= 1");
    if (K_T < 1 || K_F < 1) throw ConfigError("repr: representation dims must be positive");
    if (D % heads != 0) throw ConfigError("repr: D must be divisible by heads");
    if (mask_p < 0 || mask_p > 1) throw ConfigError("repr: mask_p must be in [0,1]");
    if ((freq_window & (freq_window - 1)) != 0)
        throw ConfigError("repr: freq_window must be a power of two");
    if (min_overlap < 1 || window < min_overlap + 2)
        throw ConfigError("repr: window too small for min_overlap");
}

ReprModel::ReprModel(const ReprConfig& c, Rng& rng) : cfg(c) {
    cfg.validate();
    input_proj = Mlp("repr.proj", cfg.input_dim, cfg.proj_hidden, cfg.D, rng);
    wq = Param("repr.wq", glorot({cfg.qkv_kernel, cfg.D, cfg.D}, cfg.qkv_kernel * cfg.D, cfg.D, rng));
    wk = Param("repr.wk", glorot({cfg.qkv_kernel, cfg.D, cfg.D}, cfg.qkv_kernel * cfg.D, cfg.D, rng));
    wv = Param("repr.wv", glorot({cfg.qkv_kernel, cfg.D, cfg.D}, cfg.qkv_kernel * cfg.D, cfg.D, rng));
    out_proj = Dense("repr.out", cfg.D, cfg.D, rng);
    for (int i = 0; i < cfg.L; ++i) {
        int ksz = 1 << i;
        time_convs.emplace_back("repr.time" + std::to_string(i),
                                glorot({ksz, cfg.D, cfg.K_T}, ksz * cfg.D, cfg.K_T, rng));
    }
    freq_proj = Dense("repr.freqproj", cfg.D, cfg.freq_channels, rng);
    int bins = cfg.freq_window / 2 + 1;
    freq_head = Mlp("repr.freqhead", cfg.freq_channels * bins, cfg.proj_hidden, cfg.K_F, rng);
}

std::vector<Param*> ReprModel::params() {
    std::vector<Param*> out;
    input_proj.collect(out);
    out.push_back(&wq);
    out.push_back(&wk);
    out.push_back(&wv);
    out_proj.collect(out);
    for (auto& p : time_convs) out.push_back(&p);
    freq_proj.collect(out);
    freq_head.collect(out);
    return out;
}

std::vector<const Param*> ReprModel::params() const {
    auto mut = const_cast<ReprModel*>(this)->params();
    return {mut.begin(), mut.end()};
}

std::vector<double> sample_timestamp_mask(int T, double p, Rng& rng) {
    if (p < 0 || p > 1) throw ConfigError("timestamp mask: p must be in [0,1]");
    std::vector<double> m(T);
    for (auto& v : m) v = rng.bernoulli(p) ? 0.0 : 1.0;
    return m;
}

Var apply_timestamp_mask(Var z, const std::vector<double>& mask) {
    const Tensor& Z = z.val();
    if (static_cast<int>(mask.size()) != Z.rows())
        throw NumericError("timestamp mask length mismatch");
    Tensor m = Tensor::zeros(Z.shape);
    for (int i = 0; i < Z.rows(); ++i)
        for (int j = 0; j < Z.cols(); ++j) m(i, j) = mask[i];
    return mul(z, z.g->leaf(std::move(m)));
}

std::pair<Var, Var> ReprModel::forward(Graph& g, Var window,
                                       const std::vector<double>* mask) const {
    const ReprConfig& c = cfg;
    Var z = input_proj(window);
    if (mask) z = apply_timestamp_mask(z, *mask);

    // ConvTrans backbone: dilated-conv Q/K/V, masked multi-head attention,
    // position-wise projection, residual.
    Var q = dilated_causal_conv(z, g.param(const_cast<Param&>(wq)), 1);
    Var k = dilated_causal_conv(z, g.param(const_cast<Param&>(wk)), 1);
    Var v = dilated_causal_conv(z, g.param(const_cast<Param&>(wv)), 1);
    int hd = c.D / c.heads;
    std::vector<Var> heads_out;
    for (int h = 0; h < c.heads; ++h) {
        int c0 = h * hd, c1 = (h + 1) * hd;
        heads_out.push_back(attention(slice_cols(q, c0, c1), slice_cols(k, c0, c1),
                                      slice_cols(v, c0, c1), true));
    }
    Var ctx = add(z, out_proj(concat_cols(heads_out)));

    // time head: L causal convs with kernel sizes 2^i, averaged
    Var rt = dilated_causal_conv(ctx, g.param(const_cast<Param&>(time_convs[0])), 1);
    for (int i = 1; i < c.L; ++i)
        rt = add(rt, dilated_causal_conv(ctx, g.param(const_cast<Param&>(time_convs[i])), 1));
    rt = scale(rt, 1.0 / c.L);

    // freq head: trailing-window magnitude spectrum per channel, then MLP
    int T = window.val().rows();
    int W = c.freq_window;
    Var chans = freq_proj(ctx);  // [T x C_f]
    Var padded = concat_rows({g.leaf(Tensor::zeros({W - 1, c.freq_channels})), chans});
    std::vector<Var> rows;
    rows.reserve(T);
    for (int t = 0; t < T; ++t) {
        Var win = slice_rows(padded, t, t + W);  // trailing window ending at t
        std::vector<Var> specs;
        for (int ch = 0; ch < c.freq_channels; ++ch) {
            Var col = reshape(slice_cols(win, ch, ch + 1), {W});
            specs.push_back(reshape(fft_magnitude(col), {1, W / 2 + 1}));
        }
        rows.push_back(concat_cols(specs));
    }
    Var rf = freq_head(concat_rows(rows));
    return {rt, rf};
}

Tensor encode_window(const ReprModel& model, const Tensor& window) {
    if (window.rows() < 1) throw DataError("encode_window: empty window");
    if (window.cols() != model.cfg.input_dim)
        throw DataError("encode_window: input width mismatch");
    Graph g;
    auto [rt, rf] = model.forward(g, g.leaf(window), nullptr);
    return concat_cols({rt, rf}).val();
}

// shared InfoNCE body: anchor rows of `a`, positives the aligned rows of `b`,
// negatives the remaining rows of both matrices
static Var contrastive_rows(Var a, Var b) {
    const Tensor& A = a.val();
    if (!A.same_shape(b.val())) throw NumericError("contrastive loss: shape mismatch");
    int n = A.rows();
    if (n < 1) throw DataError("contrastive loss: empty set");
    Var cross = matmul(a, transpose(b));  // [n x n]
    Var self = matmul(a, transpose(a));
    std::vector<Var> losses;
    losses.reserve(n);
    for (int i = 0; i < n; ++i) {
        Var crow = slice_rows(cross, i, i + 1);
        std::vector<Var> terms{crow};
        if (i > 0) terms.push_back(slice_cols(slice_rows(self, i, i + 1), 0, i));
        if (i + 1 < n) terms.push_back(slice_cols(slice_rows(self, i, i + 1), i + 1, n));
        Var denom = logsumexp(concat_cols(terms));
        Var pos = slice_cols(crow, i, i + 1);
        losses.push_back(sub(denom, reshape(pos, {1})));
    }
    return scale(sum(concat_rows(losses)), 1.0 / n);
}

Var time_contrastive_loss(Var a, Var b) { return contrastive_rows(a, b); }
Var freq_contrastive_loss(Var a, Var b) { return contrastive_rows(a, b); }

// ---------------- training ----------------

Tensor repr_input_window(const WorkloadSeries& s, const std::vector<int>& indices) {
    int h = static_cast<int>(indices.size());
    Tensor w = Tensor::zeros({h, 1 + kNumTimeFeatures});
    for (int r = 0; r < h; ++r) {
        int i = indices[r];
        w(r, 0) = s.values[i];
        auto tf = time_features(s.timestamp_at(i));
        for (int j = 0; j < kNumTimeFeatures; ++j) w(r, 1 + j) = tf[j];
    }
    return w;
}

static std::vector<int> sample_subset(int n, int k, Rng& rng) {
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    for (int i = 0; i < std::min(k, n); ++i) {
        int j = static_cast<int>(rng.uniform_int(i, n));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(std::min(k, n));
    std::sort(idx.begin(), idx.end());
    return idx;
}

static Var gather_rows(Var m, const std::vector<int>& rows) {
    std::vector<Var> parts;
    parts.reserve(rows.size());
    for (int r : rows) parts.push_back(slice_rows(m, r, r + 1));
    return concat_rows(parts);
}

TrainResult train_repr(ReprModel& model, const std::vector<WorkloadSeries>& dataset, Rng& rng) {
    if (dataset.empty()) throw DataError("train_repr: empty dataset");
    const ReprConfig& c = model.cfg;
    for (const auto& s : dataset)
        if (static_cast<int>(s.length()) < c.window)
            throw DataError("train_repr: series " + s.app_id + " shorter than training window");

    auto params = model.params();
    ad::Adam opt(c.lr);
    TrainResult result;

    for (int step = 0; step < c.steps; ++step) {
        Graph g;
        std::vector<Var> time_losses;
        struct ViewReps { Var rfA, rfB; int overlap; };
        std::vector<ViewReps> freq_batch;

        for (int b = 0; b < c.batch; ++b) {
            const WorkloadSeries& s = dataset[rng.uniform_int(0, dataset.size())];
            int start = static_cast<int>(rng.uniform_int(0, s.length() - c.window + 1));
            std::vector<int> idx(c.window);
            for (int i = 0; i < c.window; ++i) idx[i] = start + i;

            CropPair crop = random_crop_pair(c.window, c.min_overlap, rng);
            std::vector<int> ia(idx.begin() + crop.a1, idx.begin() + crop.a2);
            std::vector<int> ib(idx.begin() + crop.b1, idx.begin() + crop.b2);
            auto maskA = sample_timestamp_mask(static_cast<int>(ia.size()), c.mask_p, rng);
            auto maskB = sample_timestamp_mask(static_cast<int>(ib.size()), c.mask_p, rng);

            auto [rtA, rfA] = model.forward(g, g.leaf(repr_input_window(s, ia)), &maskA);
            auto [rtB, rfB] = model.forward(g, g.leaf(repr_input_window(s, ib)), &maskB);

            // overlap [b1, a2): rows b1-a1.. in view A, rows 0.. in view B
            int m = crop.overlap_len();
            auto offs = sample_subset(m, c.loss_timestamps, rng);
            std::vector<int> rowsA, rowsB;
            for (int o : offs) {
                rowsA.push_back(crop.b1 - crop.a1 + o);
                rowsB.push_back(o);
            }
            time_losses.push_back(
                time_contrastive_loss(gather_rows(rtA, rowsA), gather_rows(rtB, rowsB)));
            freq_batch.push_back({rfA, rfB, m});
        }

        Var loss = scale(sum(concat_rows(time_losses)), 1.0 / time_losses.size());

        // freq loss across the batch at shared overlap offsets
        int min_overlap_len = c.window;
        for (const auto& v : freq_batch) min_overlap_len = std::min(min_overlap_len, v.overlap);
        int nft = std::min(c.freq_timestamps, min_overlap_len);
        std::vector<Var> freq_losses;
        for (int q = 0; q < nft; ++q) {
            int off = static_cast<int>(rng.uniform_int(0, min_overlap_len));
            std::vector<Var> arows, brows;
            for (size_t bi = 0; bi < freq_batch.size(); ++bi) {
                const auto& v = freq_batch[bi];
                int lenA = v.rfA.val().rows();
                int rowA = lenA - v.overlap + off;  // overlap is the tail of view A
                arows.push_back(slice_rows(v.rfA, rowA, rowA + 1));
                brows.push_back(slice_rows(v.rfB, off, off + 1));
            }
            freq_losses.push_back(freq_contrastive_loss(concat_rows(arows), concat_rows(brows)));
        }
        if (!freq_losses.empty())
            loss = add(loss, scale(sum(concat_rows(freq_losses)), 1.0 / freq_losses.size()));

        double lv = loss.val().data[0];
        if (!std::isfinite(lv))
            throw NumericError("train_repr: loss diverged at step " + std::to_string(step));
        result.loss_curve.push_back(lv);

        ad::zero_grad(params);
        g.backward(loss);
        opt.step(params);
    }
    return result;
}

// ---------------- multiscale encoding ----------------

MultiScaleRepr encode_multiscale(const ReprModel& model, const WorkloadSeries& series,
                                 const std::vector<Scale>& scales, int64_t at) {
    if ((at - series.start) % series.step != 0)
        throw DataError("encode_multiscale: timestamp off grid");
    int64_t i_at = (at - series.start) / series.step;
    if (i_at < 0 || i_at >= static_cast<int64_t>(series.length()))
        throw DataError("encode_multiscale: timestamp outside series");

    MultiScaleRepr out;
    out.app_id = series.app_id;
    out.timestamp = at;
    for (Scale sc : scales) {
        int64_t n = scale_seconds(sc) / series.step;
        int64_t lo = i_at - n + 1;
        if (lo < 0) continue;  // not enough history for this scale
        std::vector<int> idx;
        if (n <= model.cfg.max_encode_len) {
            for (int64_t i = lo; i <= i_at; ++i) idx.push_back(static_cast<int>(i));
        } else {
            // end-anchored strided subsample, always includes i_at
            int64_t stride = (n + model.cfg.max_encode_len - 1) / model.cfg.max_encode_len;
            for (int64_t i = i_at; i >= lo; i -= stride) idx.push_back(static_cast<int>(i));
            std::reverse(idx.begin(), idx.end());
        }
        Tensor reps = encode_window(model, repr_input_window(series, idx));
        std::vector<double> pooled(model.cfg.K());
        for (int j = 0; j < reps.cols(); ++j) {
            double best = reps(0, j);
            for (int i = 1; i < reps.rows(); ++i) best = std::max(best, reps(i, j));
            pooled[j] = best;
        }
        out.vectors[sc] = std::move(pooled);
    }
    if (out.vectors.empty())
        throw DataError("encode_multiscale: insufficient history for all requested scales at t=" +
                        std::to_string(at));
    return out;
}

// ---------------- store ----------------

void ReprStore::put(const std::string& app_id, Scale scale, int64_t ts, std::vector<double> vec) {
    data_[app_id][scale][ts] = std::move(vec);
}

void ReprStore::put_all(const MultiScaleRepr& r) {
    for (const auto& [sc, v] : r.vectors) put(r.app_id, sc, r.timestamp, v);
}

std::optional<std::vector<double>> ReprStore::get(const std::string& app_id, Scale scale,
                                                  int64_t at) const {
    auto ai = data_.find(app_id);
    if (ai == data_.end()) return std::nullopt;
    auto si = ai->second.find(scale);
    if (si == ai->second.end()) return std::nullopt;
    auto it = si->second.upper_bound(at);
    if (it == si->second.begin()) return std::nullopt;
    return std::prev(it)->second;
}

MultiScaleRepr ReprStore::get_all(const std::string& app_id, const std::vector<Scale>& scales,
                                  int64_t at) const {
    MultiScaleRepr out;
    out.app_id = app_id;
    out.timestamp = at;
    for (Scale sc : scales) {
        auto v = get(app_id, sc, at);
        if (v) out.vectors[sc] = std::move(*v);
    }
    return out;
}

size_t ReprStore::size() const {
    size_t n = 0;
    for (const auto& [a, per_scale] : data_)
        for (const auto& [s, m] : per_scale) n += m.size();
    return n;
}

void ReprStore::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write repr store: " + path);
    out << nlohmann::json{{"format", "fsa-repr-store"}, {"version", 1}}.dump() << '\n';
    for (const auto& [app, per_scale] : data_)
        for (const auto& [sc, m] : per_scale)
            for (const auto& [ts, vec] : m) {
                nlohmann::json j{{"app", app}, {"scale", to_string(sc)}, {"ts", ts}, {"v", vec}};
                out << j.dump() << '\n';
            }
}

ReprStore ReprStore::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open repr store: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty repr store: " + path);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
        throw DataError("repr store header unreadable: " + path);
    }
    if (header.value("format", "") != "fsa-repr-store" || header.value("version", 0) != 1)
        throw DataError("unsupported repr store format: " + path);

    ReprStore store;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            store.put(j.at("app").get<std::string>(),
                      scale_from_string(j.at("scale").get<std::string>()),
                      j.at("ts").get<int64_t>(), j.at("v").get<std::vector<double>>());
        } catch (const nlohmann::json::exception&) {
            throw DataError("repr store line " + std::to_string(lineno) + " unreadable: " + path);
        }
    }
    return store;
}


// ---------------- persistence ----------------

static nlohmann::json config_to_json(const ReprConfig& c) {
    return {{"input_dim", c.input_dim}, {"proj_hidden", c.proj_hidden},
            {"D", c.D},                 {"K_T", c.K_T},
            {"K_F", c.K_F},             {"L", c.L},
            {"heads", c.heads},         {"qkv_kernel", c.qkv_kernel},
            {"freq_channels", c.freq_channels},
            {"freq_window", c.freq_window},
            {"mask_p", c.mask_p},       {"steps", c.steps},
            {"batch", c.batch},         {"window", c.window},
            {"min_overlap", c.min_overlap},
            {"loss_timestamps", c.loss_timestamps},
            {"freq_timestamps", c.freq_timestamps},
            {"lr", c.lr},               {"max_encode_len", c.max_encode_len}};
}

static ReprConfig config_from_json(const nlohmann::json& j) {
    ReprConfig c;
    c.input_dim = j.at("input_dim");
    c.proj_hidden = j.at("proj_hidden");
    c.D = j.at("D");
    c.K_T = j.at("K_T");
    c.K_F = j.at("K_F");
    c.L = j.at("L");
    c.heads = j.at("heads");
    c.qkv_kernel = j.at("qkv_kernel");
    c.freq_channels = j.at("freq_channels");
    c.freq_window = j.at("freq_window");
    c.mask_p = j.at("mask_p");
    c.steps = j.at("steps");
    c.batch = j.at("batch");
    c.window = j.at("window");
    c.min_overlap = j.at("min_overlap");
    c.loss_timestamps = j.at("loss_timestamps");
    c.freq_timestamps = j.at("freq_timestamps");
    c.lr = j.at("lr");
    c.max_encode_len = j.at("max_encode_len");
    return c;
}

void save_model(const ReprModel& model, const std::string& path, const nlohmann::json& extra) {
    Checkpoint ck;
    ck.meta["format"] = "fsa-repr";
    ck.meta["version"] = 1;
    ck.meta["config"] = config_to_json(model.cfg);
    ck.meta["extra"] = extra;
    for (const Param* p : model.params()) ck.tensors[p->name] = p->value;
    ck.save(path);
}

ReprModel load_model(const std::string& path, nlohmann::json* extra) {
    Checkpoint ck = Checkpoint::load(path);
    if (ck.meta.value("format", "") != "fsa-repr" || ck.meta.value("version", 0) != 1)
        throw DataError("not a representation checkpoint: " + path);
    ReprConfig cfg;
    try {
        cfg = config_from_json(ck.meta.at("config"));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("corrupt representation checkpoint metadata: " + std::string(e.what()));
    }
    Rng dummy(0);
    ReprModel model(cfg, dummy);
    for (Param* p : model.params()) {
        const Tensor& t = ck.get(p->name);
        if (t.shape != p->value.shape)
            throw DataError("representation checkpoint: shape mismatch for " + p->name);
        p->value = t;
        p->grad = Tensor::zeros(t.shape);
    }
    if (extra) *extra = ck.meta.value("extra", nlohmann::json::object());
    return model;
}

}  // namespace fsa::repr

