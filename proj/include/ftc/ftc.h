/* Fault-tolerant quadrotor control laboratory — public C API.
 *
 * Every function returns 0 on success or a nonzero status:
 *   1 internal/unclassified error
 *   2 configuration error (parse, validation, unknown field, bad value)
 *   3 missing artifact (checkpoint, config file, trajectory log)
 *   4 numerical failure (non-finite state or loss)
 * ftc_last_error() describes the most recent failure on the calling thread.
 * Strings returned through char** are owned by the caller; release them with
 * ftc_string_free().
 */
#ifndef FTC_H
#define FTC_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define FTC_OK 0
#define FTC_ERR_INTERNAL 1
#define FTC_ERR_CONFIG 2
#define FTC_ERR_MISSING_ARTIFACT 3
#define FTC_ERR_NUMERIC 4

const char* ftc_version(void);
const char* ftc_last_error(void);
void ftc_string_free(char* s);

/* ---- configuration ----------------------------------------------------- */

typedef struct ftc_config ftc_config;

/* json_text NULL or "" loads the documented defaults */
int ftc_config_create(const char* json_text, ftc_config** out);
int ftc_config_load(const char* path, ftc_config** out);
/* one "key.path=value" override, applied before validation */
int ftc_config_set(ftc_config* cfg, const char* assignment);
/* effective config (all defaults applied) as a JSON document */
int ftc_config_json(const ftc_config* cfg, char** out_json);
void ftc_config_free(ftc_config* cfg);

/* ---- training ----------------------------------------------------------- */

/* run_dir "" derives a timestamped directory under the config's output_dir.
 * out_checkpoint_prefix receives the path prefix of the written checkpoint
 * (<prefix>.json + <prefix>.bin). */
int ftc_train_phase1(const ftc_config* cfg, const char* run_dir, int threads,
                     char** out_checkpoint_prefix);
int ftc_train_phase2(const ftc_config* cfg, const char* phase1_prefix, const char* run_dir,
                     int threads, char** out_checkpoint_prefix);

/* ---- evaluation ---------------------------------------------------------- */

/* mode: "pid" | "transformer" | "cnn" | "privileged" | "zero_latent".
 * checkpoint_prefix may be "" for pid. out_summary_json reports episode
 * counts, success rate and RMSE statistics; per-episode CSV and trajectory
 * logs land in run_dir. */
int ftc_eval(const ftc_config* cfg, const char* mode, const char* checkpoint_prefix,
             const char* run_dir, int threads, char** out_summary_json);

/* grid_path "" sweeps the single configured cell; modes_csv like
 * "pid,transformer". Unused checkpoint prefixes may be "". out_csv_path
 * receives the written table's path. */
int ftc_sweep(const ftc_config* cfg, const char* grid_path, const char* modes_csv,
              const char* phase1_prefix, const char* transformer_prefix,
              const char* cnn_prefix, const char* run_dir, int threads, char** out_csv_path);

/* re-simulates a trajectory log from its logged actions; fails with
 * FTC_ERR_NUMERIC unless every logged state matches bit-for-bit.
 * out_summary_json reports rows and max deviation. */
int ftc_replay(const char* log_path, char** out_summary_json);

/* ---- direct simulation handle -------------------------------------------- */

typedef struct ftc_sim ftc_sim;

/* one closed-loop episode environment drawn from the config's task
 * distribution with the given seed */
int ftc_sim_create(const ftc_config* cfg, uint64_t seed, ftc_sim** out);
int ftc_sim_reset(ftc_sim* sim);
/* action: 4 normalized motor commands in [0,1].
 * status_out: 0 running, 1 crashed, 2 time limit. */
int ftc_sim_step(ftc_sim* sim, const double action[4], double* reward_out, int* status_out);
/* observation (22), state position/velocity/quaternion(wxyz)/body_rates */
int ftc_sim_observation(const ftc_sim* sim, double obs_out[22]);
int ftc_sim_state(const ftc_sim* sim, double pos_out[3], double vel_out[3], double quat_out[4],
                  double rates_out[3]);
int ftc_sim_time(const ftc_sim* sim, double* t_out);
void ftc_sim_free(ftc_sim* sim);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* FTC_H */
