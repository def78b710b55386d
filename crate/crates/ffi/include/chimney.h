#ifndef CHIMNEY_H
#define CHIMNEY_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define CHIMNEY_ACTION_DIM 5

#define CHIMNEY_ACTOR_OBS_DIM 17

#define CHIMNEY_CRITIC_OBS_DIM 53

/**
 * Entries of the generalized coordinate vector written by [`chimney_env_q`].
 */
#define CHIMNEY_Q_DIM 8

/**
 * Result of every fallible call.
 */
typedef enum {
  CHIMNEY_STATUS_OK = 0,
  CHIMNEY_STATUS_NULL_POINTER = 1,
  CHIMNEY_STATUS_INVALID_ARGUMENT = 2,
  CHIMNEY_STATUS_NON_FINITE = 3,
  CHIMNEY_STATUS_EPISODE_DONE = 4,
  CHIMNEY_STATUS_IO = 5,
  CHIMNEY_STATUS_CHECKPOINT = 6,
  CHIMNEY_STATUS_CONFIG = 7,
  CHIMNEY_STATUS_UNREACHABLE = 8,
  CHIMNEY_STATUS_PANIC = 9,
} ChimneyStatus;

/**
 * Episode state reported by [`chimney_env_step`].
 */
typedef enum {
  CHIMNEY_DONE_RUNNING = 0,
  CHIMNEY_DONE_FELL = 1,
  CHIMNEY_DONE_SUCCESS = 2,
  CHIMNEY_DONE_TIMEOUT = 3,
} ChimneyDone;

/**
 * Opaque simulation environment.
 */
typedef struct ChimneyEnv ChimneyEnv;

/**
 * Opaque trained policy.
 */
typedef struct ChimneyPolicy ChimneyPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
uintptr_t chimney_last_error(char *buf, uintptr_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *chimney_version(void);

/**
 * Creates an environment. `config_toml` is the text of a full configuration
 * file (only `[env]` is used) or null for defaults.
 *
 * # Safety
 * `config_toml` must be null or a NUL-terminated string; `out` must be a
 * valid pointer.
 */
ChimneyStatus chimney_env_new(const char *config_toml, uint64_t seed, ChimneyEnv **out);

/**
 * # Safety
 * `env` must be null or a handle from [`chimney_env_new`] not yet freed.
 */
void chimney_env_free(ChimneyEnv *env);

/**
 * Resets to curriculum `level` and writes the actor observation
 * (`CHIMNEY_ACTOR_OBS_DIM` values) to `obs_out` if non-null.
 *
 * # Safety
 * `env` must be a live handle; `obs_out` null or sized as above.
 */
ChimneyStatus chimney_env_reset(ChimneyEnv *env, uint32_t level, double *obs_out);

/**
 * Advances one control step with `action` (`CHIMNEY_ACTION_DIM` values).
 * Outputs are written only where the pointer is non-null.
 *
 * # Safety
 * `env` must be a live handle; `action` must hold `action_len` values;
 * `obs_out` holds `CHIMNEY_ACTOR_OBS_DIM` values.
 */
ChimneyStatus chimney_env_step(ChimneyEnv *env,
                               const double *action,
                               uintptr_t action_len,
                               double *obs_out,
                               double *reward_out,
                               ChimneyDone *done_out);

/**
 * Writes the privileged critic observation (`CHIMNEY_CRITIC_OBS_DIM` values).
 *
 * # Safety
 * `env` must be a live handle; `out` must hold the values.
 */
ChimneyStatus chimney_env_critic_obs(const ChimneyEnv *env, double *out);

/**
 * Writes `x, z, pitch, waist, hip_f, knee_f, hip_b, knee_b`
 * (`CHIMNEY_Q_DIM` values) and returns the simulated time through `time_out`.
 *
 * # Safety
 * `env` must be a live handle; `q_out` must hold the values.
 */
ChimneyStatus chimney_env_q(const ChimneyEnv *env, double *q_out, double *time_out);

/**
 * Loads a policy checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
ChimneyStatus chimney_policy_load(const char *path, ChimneyPolicy **out);

/**
 * # Safety
 * `policy` must be null or a handle from [`chimney_policy_load`] not yet freed.
 */
void chimney_policy_free(ChimneyPolicy *policy);

/**
 * Mean action for one actor observation.
 *
 * # Safety
 * `policy` must be a live handle; `obs` must hold `obs_len` values and
 * `action_out` `CHIMNEY_ACTION_DIM` values.
 */
ChimneyStatus chimney_policy_act(const ChimneyPolicy *policy,
                                 const double *obs,
                                 uintptr_t obs_len,
                                 double *action_out);

/**
 * Joint torques `-Jᵀ f` (collar, hip, knee) that hold `force` at the foot of
 * a leg with the given link lengths, angles in radians.
 *
 * # Safety
 * `angles`, `force` and `torques_out` must each point to 3 values.
 */
ChimneyStatus chimney_leg_torques(double thigh_length,
                                  double calf_length,
                                  const double *angles,
                                  const double *force,
                                  double *torques_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHIMNEY_H */
