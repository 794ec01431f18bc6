#include "fsa/fsa.h"

#include <cstring>
#include <fstream>
#include <string>

#include "json.hpp"

#include "fsa/config.hpp"
#include "fsa/errors.hpp"
#include "fsa/pipeline.hpp"

struct fsa_ctx {
    nlohmann::json doc = nlohmann::json::object();
    std::string last_error;
};

namespace {

// every entry point funnels through here so the error taxonomy maps to the
// same codes no matter which command tripped it
template <typename Fn>
int guarded(fsa_ctx* ctx, Fn&& fn) {
    if (!ctx) return FSA_ERR_CONFIG;
    ctx->last_error.clear();
    try {
        fn();
        return FSA_OK;
    } catch (const fsa::ConfigError& e) {
        ctx->last_error = e.what();
        return FSA_ERR_CONFIG;
    } catch (const fsa::DataError& e) {
        ctx->last_error = e.what();
        return FSA_ERR_DATA;
    } catch (const fsa::NumericError& e) {
        ctx->last_error = e.what();
        return FSA_ERR_NUMERIC;
    } catch (const std::exception& e) {
        ctx->last_error = e.what();
        return FSA_ERR_NUMERIC;
    }
}

fsa::RunConfig materialize(const fsa_ctx* ctx) { return fsa::RunConfig::from_json(ctx->doc); }

void merge_overlay(nlohmann::json& doc, const nlohmann::json& overlay) {
    if (!overlay.is_object()) throw fsa::ConfigError("config document must be a JSON object");
    doc.merge_patch(overlay);
}

}  // namespace

extern "C" {

fsa_ctx* fsa_ctx_create(void) { return new fsa_ctx(); }

void fsa_ctx_destroy(fsa_ctx* ctx) { delete ctx; }

int fsa_load_config_file(fsa_ctx* ctx, const char* path) {
    return guarded(ctx, [&] {
        if (!path) throw fsa::ConfigError("config path is null");
        std::ifstream in(path);
        if (!in) throw fsa::DataError(std::string("cannot open config file: ") + path);
        nlohmann::json overlay;
        try {
            in >> overlay;
        } catch (const nlohmann::json::exception& e) {
            throw fsa::ConfigError(std::string("config file ") + path + " is not valid JSON: " +
                                   e.what());
        }
        merge_overlay(ctx->doc, overlay);
        materialize(ctx);  // reject bad documents at load time
    });
}

int fsa_load_config_json(fsa_ctx* ctx, const char* json_text) {
    return guarded(ctx, [&] {
        if (!json_text) throw fsa::ConfigError("config text is null");
        nlohmann::json overlay = nlohmann::json::parse(json_text, nullptr, false);
        if (overlay.is_discarded()) throw fsa::ConfigError("config text is not valid JSON");
        merge_overlay(ctx->doc, overlay);
        materialize(ctx);
    });
}

int fsa_set(fsa_ctx* ctx, const char* assignment) {
    return guarded(ctx, [&] {
        if (!assignment) throw fsa::ConfigError("override is null");
        nlohmann::json trial = ctx->doc;
        fsa::apply_override(trial, assignment);
        fsa::RunConfig::from_json(trial);  // keep the document valid or unchanged
        ctx->doc = std::move(trial);
    });
}

const char* fsa_last_error(const fsa_ctx* ctx) { return ctx ? ctx->last_error.c_str() : ""; }

int fsa_config_hash(fsa_ctx* ctx, char* buf, int buflen) {
    return guarded(ctx, [&] {
        if (!buf || buflen < 17) throw fsa::ConfigError("hash buffer must hold 17 bytes");
        std::string hex = materialize(ctx).hash_hex();
        std::memcpy(buf, hex.c_str(), hex.size() + 1);
    });
}

int fsa_cmd_generate(fsa_ctx* ctx) {
    return guarded(ctx, [&] { fsa::pipeline::cmd_generate(materialize(ctx)); });
}

int fsa_cmd_train_repr(fsa_ctx* ctx) {
    return guarded(ctx, [&] { fsa::pipeline::cmd_train_repr(materialize(ctx)); });
}

int fsa_cmd_encode(fsa_ctx* ctx) {
    return guarded(ctx, [&] { fsa::pipeline::cmd_encode(materialize(ctx)); });
}

int fsa_cmd_train_forecast(fsa_ctx* ctx) {
    return guarded(ctx, [&] { fsa::pipeline::cmd_train_forecast(materialize(ctx)); });
}

int fsa_cmd_train_calib(fsa_ctx* ctx) {
    return guarded(ctx, [&] { fsa::pipeline::cmd_train_calib(materialize(ctx)); });
}

int fsa_cmd_simulate(fsa_ctx* ctx, const char* const* policies, int n_policies) {
    return guarded(ctx, [&] {
        if (n_policies < 0 || (n_policies > 0 && !policies))
            throw fsa::ConfigError("bad policy list");
        std::vector<std::string> names;
        for (int i = 0; i < n_policies; ++i) {
            if (!policies[i]) throw fsa::ConfigError("null policy name");
            names.emplace_back(policies[i]);
        }
        fsa::pipeline::cmd_simulate(materialize(ctx), names);
    });
}

int fsa_cmd_report(fsa_ctx* ctx) {
    return guarded(ctx, [&] { fsa::pipeline::cmd_report(materialize(ctx)); });
}

}  // extern "C"
