/* C interface to the architecture-search engine. All functions return a
 * status code; on failure entnas_last_error() carries a message for the
 * calling thread. Strings returned through out-parameters are heap copies
 * owned by the caller; release them with entnas_string_free. */

#ifndef ENTNAS_H
#define ENTNAS_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum entnas_status {
  ENTNAS_OK = 0,
  ENTNAS_E_CONTRACT = 1, /* an API precondition was violated */
  ENTNAS_E_NUMERIC = 2,  /* a non-finite value appeared during compute */
  ENTNAS_E_CONFIG = 3,   /* invalid run configuration */
  ENTNAS_E_FORMAT = 4,   /* malformed file contents */
  ENTNAS_E_IO = 5,       /* file system failure */
  ENTNAS_E_UNKNOWN = 6
} entnas_status;

/* Message of the most recent failing call on this thread, never NULL. */
const char* entnas_last_error(void);

const char* entnas_version(void);

/* Handle to a finished search or retrain run. */
typedef struct entnas_run entnas_run;

/* Runs a search described by a JSON config file. out_root is the directory
 * for runs whose config has no out_dir; pass "" for the default ("runs").
 * Writes checkpoint.bin, genotype.json, metrics.jsonl, summary.json and
 * manifest.json into the run directory. */
entnas_status entnas_search_run(const char* config_path, const char* out_root, entnas_run** out_run);

/* Trains a derived topology from scratch per the config, evaluating on the
 * config's held-out stream. Writes retrain_metrics.jsonl,
 * retrain_report.json and retrain_manifest.json. */
entnas_status entnas_retrain_run(const char* genotype_path, const char* config_path, const char* out_root,
                                 entnas_run** out_run);

/* Field of a finished run, NULL for unknown names. Valid until
 * entnas_run_free. Common: "out_dir", "run_id". Search runs: "checkpoint",
 * "genotype", "metrics", "summary", "manifest", "summary_json". Retrain
 * runs: "metrics", "report", "manifest", "report_json". */
const char* entnas_run_field(const entnas_run* run, const char* name);

void entnas_run_free(entnas_run* run);

/* Measures a checkpoint's discretization gap under a group preset, writing
 * gap_<preset>.json next to the checkpoint. If out_record is non-NULL it
 * receives the JSON record. */
entnas_status entnas_gap_probe(const char* checkpoint_path, const char* preset, char** out_record);

/* Renders losses.svg, alpha_evolution.svg and beta_evolution.svg from a
 * metrics stream. If out_listing is non-NULL it receives the written paths,
 * newline-separated. */
entnas_status entnas_export_plots(const char* metrics_path, const char* out_dir, char** out_listing);

void entnas_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* ENTNAS_H */
