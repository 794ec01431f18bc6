#ifndef FSA_H
#define FSA_H

#ifdef __cplusplus
extern "C" {
#endif

/* Opaque engine handle. A context carries a pending configuration document
 * (defaults, optionally overlaid with a file and key=value overrides) plus
 * the message of the last failed call. Handles are not thread-safe; use one
 * per thread. */
typedef struct fsa_ctx fsa_ctx;

/* Every fallible call returns one of these. */
enum fsa_status {
    FSA_OK = 0,
    FSA_ERR_CONFIG = 1,  /* invalid configuration or arguments */
    FSA_ERR_DATA = 2,    /* missing/malformed input data or artifacts */
    FSA_ERR_NUMERIC = 3  /* non-finite values or failed convergence */
};

fsa_ctx* fsa_ctx_create(void);
void fsa_ctx_destroy(fsa_ctx* ctx);

/* Overlays a JSON config file onto the context's document. Unknown keys are
 * rejected when a command materializes the config. */
int fsa_load_config_file(fsa_ctx* ctx, const char* path);
/* Same, from an in-memory JSON string. */
int fsa_load_config_json(fsa_ctx* ctx, const char* json_text);
/* Applies one "section.key=value" override; the value is parsed as a JSON
 * literal and falls back to a plain string. */
int fsa_set(fsa_ctx* ctx, const char* assignment);

/* Message of the most recent failure on this handle; empty string after a
 * success. The pointer stays valid until the next call on the handle. */
const char* fsa_last_error(const fsa_ctx* ctx);

/* Writes the 16-hex-digit hash of the effective config (defaults + overlays)
 * into buf; needs room for 17 bytes. */
int fsa_config_hash(fsa_ctx* ctx, char* buf, int buflen);

/* Pipeline commands. Artifacts are read and written under the configured
 * artifacts_dir; each emits a <command>_meta.json carrying the config hash. */
int fsa_cmd_generate(fsa_ctx* ctx);
int fsa_cmd_train_repr(fsa_ctx* ctx);
int fsa_cmd_encode(fsa_ctx* ctx);
int fsa_cmd_train_forecast(fsa_ctx* ctx);
int fsa_cmd_train_calib(fsa_ctx* ctx);
/* policies: array of "fsa" / "rule_based" / "autopilot_like" names. */
int fsa_cmd_simulate(fsa_ctx* ctx, const char* const* policies, int n_policies);
/* Prints a human-readable summary of the last simulation to stdout. */
int fsa_cmd_report(fsa_ctx* ctx);

#ifdef __cplusplus
}
#endif

#endif /* FSA_H */
