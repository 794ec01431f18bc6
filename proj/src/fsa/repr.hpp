#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fsa/nn.hpp"
#include "fsa/rng.hpp"
#include "fsa/trace.hpp"

namespace fsa::repr {

// Two overlapping half-open segments [a1,a2) and [b1,b2) of a series of
// length T, with 0 <= a1 < b1 < a2 <= b2 <= T. Overlap is [b1, a2).
struct CropPair {
    int a1 = 0, b1 = 0, a2 = 0, b2 = 0;
    int overlap_len() const { return a2 - b1; }
};

CropPair random_crop_pair(int T, int min_overlap, Rng& rng);

enum class Scale { daily, weekly, monthly, quarterly };

const std::vector<Scale>& all_scales();
std::string to_string(Scale s);
Scale scale_from_string(const std::string& s);
int64_t scale_seconds(Scale s);  // 86400, 604800, 30d, 90d

struct ReprConfig {
    int input_dim = 1 + kNumTimeFeatures;
    int proj_hidden = 32;
    int D = 64;   // backbone width
    int K_T = 32, K_F = 32;
    int L = 4;           // causal conv stack, kernel sizes 2^i
    int heads = 4;
    int qkv_kernel = 3;  // dilation 1 for the Q/K/V transforms
    int freq_channels = 4;
    int freq_window = 32;  // power of two
    double mask_p = 0.5;

    int steps = 200;
    int batch = 8;
    int window = 160;
    int min_overlap = 16;
    int loss_timestamps = 12;  // overlap subsample per pair fed to the losses
    int freq_timestamps = 4;
    double lr = 1e-3;

    // windows longer than this are end-anchored strided subsamples before
    // encoding; keeps long-scale encodes tractable at desk scale
    int max_encode_len = 192;

    int K() const { return K_T + K_F; }
    void validate() const;
};

struct ReprModel {
    ReprConfig cfg;
    ad::Mlp input_proj;
    ad::Param wq, wk, wv;  // [qkv_kernel x D x D]
    ad::Dense out_proj;
    std::vector<ad::Param> time_convs;  // kernel 2^i, [2^i x D x K_T]
    ad::Dense freq_proj;
    ad::Mlp freq_head;

    ReprModel() = default;
    ReprModel(const ReprConfig& cfg, Rng& rng);

    std::vector<ad::Param*> params();
    std::vector<const ad::Param*> params() const;

    // Build the encoder graph over a window leaf [h x F]; mask (optional,
    // length h, 0/1) zeroes latent vectors after the input projection.
    // Returns (time rep [h x K_T], freq rep [h x K_F]).
    std::pair<ad::Var, ad::Var> forward(ad::Graph& g, ad::Var window,
                                        const std::vector<double>* mask) const;
};

// Bernoulli(p) row mask over [T x D] latents; returned as a length-T 0/1 vector.
std::vector<double> sample_timestamp_mask(int T, double p, Rng& rng);
ad::Var apply_timestamp_mask(ad::Var z, const std::vector<double>& mask);

// No-mask encoding of a window [h x F] -> per-timestamp reps [h x (K_T+K_F)].
ad::Tensor encode_window(const ReprModel& model, const ad::Tensor& window);

// Same-timestamp positives across two views of one series; negatives are the
// remaining overlap timestamps of both views. a, b: [n x K_T] aligned rows.
ad::Var time_contrastive_loss(ad::Var a, ad::Var b);
// Same-instance positives at a fixed timestamp; negatives are the other
// instances of the batch. a, b: [B x K_F] aligned rows.
ad::Var freq_contrastive_loss(ad::Var a, ad::Var b);

struct MultiScaleRepr {
    std::string app_id;
    int64_t timestamp = 0;
    std::map<Scale, std::vector<double>> vectors;
};

// Encode trailing windows of each requested scale ending at `at` (inclusive,
// on-grid); scales without enough history are omitted. Per-timestamp reps are
// max-pooled into one K-vector per scale. Series must be standardized with
// the model's training scalers.
MultiScaleRepr encode_multiscale(const ReprModel& model, const WorkloadSeries& series,
                                 const std::vector<Scale>& scales, int64_t at);

// Persistent (app, scale, timestamp) -> K-vector map with at-or-before
// lookup; never returns a representation computed after the query timestamp.
class ReprStore {
  public:
    void put(const std::string& app_id, Scale scale, int64_t ts, std::vector<double> vec);
    void put_all(const MultiScaleRepr& r);
    std::optional<std::vector<double>> get(const std::string& app_id, Scale scale,
                                           int64_t at) const;
    MultiScaleRepr get_all(const std::string& app_id, const std::vector<Scale>& scales,
                           int64_t at) const;
    size_t size() const;

    void save(const std::string& path) const;  // JSON-lines, versioned header
    static ReprStore load(const std::string& path);

  private:
    std::map<std::string, std::map<Scale, std::map<int64_t, std::vector<double>>>> data_;
};

struct TrainResult {
    std::vector<double> loss_curve;
};

// Adam on L_time + L_Freq over random crop pairs with timestamp masking.
TrainResult train_repr(ReprModel& model, const std::vector<WorkloadSeries>& dataset, Rng& rng);

// series window [h x F] input rows for the encoder: value + time features
ad::Tensor repr_input_window(const WorkloadSeries& s, const std::vector<int>& indices);

// `extra` carries caller metadata (e.g. per-app scalers) alongside the config
void save_model(const ReprModel& model, const std::string& path,
                const nlohmann::json& extra = nlohmann::json::object());
ReprModel load_model(const std::string& path, nlohmann::json* extra = nullptr);

}  // namespace fsa::repr
