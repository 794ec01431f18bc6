#pragma once

#include <map>
#include <string>

#include "json.hpp"

#include "fsa/tensor.hpp"

namespace fsa {

// Versioned binary container of named parameter tensors plus a JSON metadata
// blob (model config, app ids, scaler params, config hash). Shared by the
// repr, forecast, and calib checkpoints.
struct Checkpoint {
    nlohmann::json meta;
    std::map<std::string, ad::Tensor> tensors;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

    const ad::Tensor& get(const std::string& name) const;
};

}  // namespace fsa
